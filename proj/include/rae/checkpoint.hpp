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

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rae/tensor.hpp"

namespace rae {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

/// Named tensors in RAET layout, all integers little-endian:
///
///   "RAET" | version u32 | count u32 |
///   count x { name_len u16 | name utf-8 | dtype u8 | rank u8 |
///             extents u64[rank] | payload }
///
/// f64 entries round-trip bit-exactly; f32 entries round-trip bit-exactly for
/// values that are representable in f32.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(std::string name, const Tensor& tensor, DType dtype = DType::kF64);
  bool contains(const std::string& name) const;
  /// Throws ArgumentError when absent.
  const Tensor& get(const std::string& name) const;
  DType dtype(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::vector<DType> dtypes_;
};

}  // namespace rae
