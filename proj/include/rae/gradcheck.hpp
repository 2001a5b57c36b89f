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
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rae/tensor.hpp"

namespace rae {

inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kOpsTolerance = 1e-5;
inline constexpr double kDenoiserTolerance = 1e-4;

/// Relative error ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||, 1e-10)
/// in the Euclidean norm, per named input, using central differences.
/// `loss` must return a scalar and read the current values of `inputs`.
std::vector<std::pair<std::string, double>> gradient_errors(
    const std::function<Tensor()>& loss, const std::vector<std::pair<std::string, Tensor>>& inputs,
    double h = kFiniteDifferenceStep);

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::string scope;
  std::vector<GradcheckEntry> entries;
  bool passed() const;
  /// One line per entry plus a verdict line.
  std::string to_text() const;
};

/// scope is "ops", "denoiser" or "losses"; throws ArgumentError otherwise.
GradcheckReport gradcheck(std::string_view scope, std::uint64_t seed = 0);

}  // namespace rae
