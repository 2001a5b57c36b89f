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

#include "rae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rae/error.hpp"

namespace rae {
namespace {

constexpr char kMagic[4] = {'R', 'A', 'E', 'T'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return value;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint: truncated data");
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(std::string name, const Tensor& tensor, DType dtype) {
  if (name.size() > 0xffff) throw ArgumentError("checkpoint: entry name too long");
  if (tensor.rank() > 0xff) throw ArgumentError("checkpoint: rank too large");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first == name) {
      entries_[i].second = tensor.clone();
      dtypes_[i] = dtype;
      return;
    }
  }
  entries_.emplace_back(std::move(name), tensor.clone());
  dtypes_.push_back(dtype);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ArgumentError("checkpoint: no entry named '" + name + "'");
}

DType Checkpoint::dtype(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first == name) return dtypes_[i];
  }
  throw ArgumentError("checkpoint: no entry named '" + name + "'");
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (std::size_t e = 0; e < entries_.size(); ++e) {
    const auto& [name, tensor] = entries_[e];
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(dtypes_[e]));
    out.push_back(static_cast<std::uint8_t>(tensor.rank()));
    for (auto extent : tensor.shape()) put_le<std::uint64_t>(out, extent);
    for (double v : tensor.values()) {
      if (dtypes_[e] == DType::kF32) {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw IoError("checkpoint: bad magic");
  const auto version = r.le<std::uint32_t>();
  if (version != kVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.le<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = r.le<std::uint16_t>();
    std::string name = r.str(name_len);
    const auto code = r.le<std::uint8_t>();
    if (code > 1) throw IoError("checkpoint: unknown dtype code " + std::to_string(code));
    const auto rank = r.le<std::uint8_t>();
    Shape shape(rank);
    for (auto& extent : shape) extent = static_cast<std::size_t>(r.le<std::uint64_t>());
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) {
      if (code == 0) {
        v = static_cast<double>(std::bit_cast<float>(r.le<std::uint32_t>()));
      } else {
        v = std::bit_cast<double>(r.le<std::uint64_t>());
      }
    }
    ckpt.entries_.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    ckpt.dtypes_.push_back(static_cast<DType>(code));
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("checkpoint: write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace rae
