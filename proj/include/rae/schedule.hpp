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
#include <vector>

#include "rae/rng.hpp"

namespace rae {

inline constexpr std::uint64_t kDefaultBaseDim = 4096;

/// Dimension-dependent timestep shift.
///
/// A base timestep t_n, tuned for data of dimension n, is remapped for data
/// of effective dimension m = N*d through the Moebius map
///
///     t_m = alpha*t_n / (1 + (alpha - 1)*t_n),   alpha = sqrt(m / n).
///
/// The map fixes 0 and 1, is strictly increasing, and composes
/// multiplicatively in alpha. With alpha > 1 it moves mass toward t = 1
/// (more noise), which is what high-dimensional latents need.
class ShiftedSchedule {
 public:
  ShiftedSchedule(std::uint64_t base_dim, std::uint64_t effective_dim);

  /// Explicit alpha, for ablations. alpha must be positive and finite.
  static ShiftedSchedule with_alpha(double alpha);
  /// alpha = 1; the shift is the identity.
  static ShiftedSchedule identity();

  std::uint64_t base_dim() const { return base_dim_; }
  std::uint64_t effective_dim() const { return effective_dim_; }
  double alpha() const { return alpha_; }

 private:
  ShiftedSchedule(std::uint64_t n, std::uint64_t m, double alpha) : base_dim_(n), effective_dim_(m), alpha_(alpha) {}

  std::uint64_t base_dim_;
  std::uint64_t effective_dim_;
  double alpha_;
};

/// Throws DomainError for t_n outside [0, 1].
double shift_timestep(const ShiftedSchedule& sched, double t_n);
double inverse_shift(const ShiftedSchedule& sched, double t_m);

/// steps+1 strictly decreasing timesteps from 1 to 0: the uniform grid
/// {1, (steps-1)/steps, ..., 0} pushed through the shift.
std::vector<double> sampler_grid(const ShiftedSchedule& sched, std::size_t steps);

/// Training timestep: t_n ~ Uniform(0, 1), then shifted.
double sample_train_timestep(const ShiftedSchedule& sched, Rng& rng);

}  // namespace rae
