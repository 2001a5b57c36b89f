// Copyright 2026 The rae-toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rae/nn.hpp"

#include <algorithm>
#include <cmath>

#include "rae/error.hpp"

namespace rae {

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t hash) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

void ParamList::append(const std::string& prefix, const ParamList& other) {
  for (const auto& [name, t] : other.items_) items_.emplace_back(prefix + name, t);
}

std::vector<Tensor> ParamList::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& [name, t] : items_) out.push_back(t);
  return out;
}

std::size_t ParamList::count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

void ParamList::save(Checkpoint& ckpt, const std::string& prefix) const {
  for (const auto& [name, t] : items_) ckpt.put(prefix + name, t);
}

void ParamList::load(const Checkpoint& ckpt, const std::string& prefix) {
  for (auto& [name, t] : items_) {
    const Tensor& src = ckpt.get(prefix + name);
    if (src.shape() != t.shape()) {
      throw DimensionError("load: '" + prefix + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                           shape_str(t.shape()));
    }
    std::copy(src.values().begin(), src.values().end(), t.mutable_values().begin());
  }
}

std::uint64_t ParamList::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : items_) {
    h = fnv1a(name.data(), name.size(), h);
    for (auto e : t.shape()) h = fnv1a(&e, sizeof(e), h);
    h = fnv1a(t.values().data(), t.values().size_bytes(), h);
  }
  return h;
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, Init init) {
  std::vector<double> w(in * out, 0.0);
  if (init == Init::kXavier) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& v : w) v = (2.0 * rng.uniform() - 1.0) * limit;
  }
  weight = Tensor::from({in, out}, std::move(w), true);
  bias = Tensor::zeros({out}, true);
}

ParamList Linear::params() const {
  ParamList p;
  p.add("weight", weight);
  p.add("bias", bias);
  return p;
}

}  // namespace rae
