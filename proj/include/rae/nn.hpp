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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rae/checkpoint.hpp"
#include "rae/rng.hpp"
#include "rae/tensor.hpp"

namespace rae {

/// Ordered (name, parameter) list. Tensors are shared handles, so updating a
/// listed tensor updates the owning layer.
class ParamList {
 public:
  void add(std::string name, Tensor param) { items_.emplace_back(std::move(name), std::move(param)); }
  void append(const std::string& prefix, const ParamList& other);

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<Tensor> tensors() const;
  std::size_t count() const;

  void save(Checkpoint& ckpt, const std::string& prefix) const;
  /// Copies values in place; throws on missing entries or shape mismatch.
  void load(const Checkpoint& ckpt, const std::string& prefix);
  /// FNV-1a over names, shapes and value bits.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

enum class Init { kXavier, kZero };

/// Affine map y = x W + b over the last axis. W is [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, Init init = Init::kXavier);

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
  ParamList params() const;

  static std::size_t count(std::size_t in, std::size_t out) { return in * out + out; }
};

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace rae
