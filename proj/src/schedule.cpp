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

#include "rae/schedule.hpp"

#include <cmath>
#include <string>

#include "rae/error.hpp"

namespace rae {
namespace {

double moebius(double alpha, double t) {
  if (alpha == 1.0) return t;
  const double num = alpha * t;
  return num / (num + (1.0 - t));
}

void check_unit(double t, const char* op) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError(std::string(op) + ": timestep " + std::to_string(t) + " outside [0, 1]");
}

}  // namespace

ShiftedSchedule::ShiftedSchedule(std::uint64_t base_dim, std::uint64_t effective_dim)
    : base_dim_(base_dim), effective_dim_(effective_dim), alpha_(0.0) {
  if (base_dim == 0) throw ConfigError("schedule.base_dim", "must be positive");
  if (effective_dim == 0) throw ConfigError("schedule.effective_dim", "must be positive");
  alpha_ = std::sqrt(static_cast<double>(effective_dim) / static_cast<double>(base_dim));
}

ShiftedSchedule ShiftedSchedule::with_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("schedule.alpha", "must be positive and finite");
  return ShiftedSchedule(0, 0, alpha);
}

ShiftedSchedule ShiftedSchedule::identity() { return with_alpha(1.0); }

double shift_timestep(const ShiftedSchedule& sched, double t_n) {
  check_unit(t_n, "shift_timestep");
  return moebius(sched.alpha(), t_n);
}

double inverse_shift(const ShiftedSchedule& sched, double t_m) {
  check_unit(t_m, "inverse_shift");
  return moebius(1.0 / sched.alpha(), t_m);
}

std::vector<double> sampler_grid(const ShiftedSchedule& sched, std::size_t steps) {
  if (steps == 0) throw ArgumentError("sampler_grid: steps must be at least 1");
  std::vector<double> grid(steps + 1);
  const double inv = 1.0 / static_cast<double>(steps);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(steps - k) * inv;
    grid[k] = shift_timestep(sched, t);
  }
  grid.front() = 1.0;
  grid.back() = 0.0;
  return grid;
}

double sample_train_timestep(const ShiftedSchedule& sched, Rng& rng) {
  return shift_timestep(sched, rng.uniform());
}

}  // namespace rae
