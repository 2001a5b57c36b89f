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
#include <span>
#include <vector>

#include "rae/latent.hpp"
#include "rae/schedule.hpp"
#include "rae/tensor.hpp"

namespace rae {

/// A velocity field v(x_t, t | condition) over B x N x d latents.
class VelocityModel {
 public:
  virtual ~VelocityModel() = default;
  virtual Tensor velocity(const Tensor& x_t, std::span<const double> t,
                          std::span<const std::size_t> conditions) const = 0;
};

/// One flow-matching training example set.
///   x_t = (1 - t) x + t eps,   v_target = eps - x.
struct FlowSample {
  Tensor x;
  Tensor eps;
  std::vector<double> t;  // one per batch row
  Tensor x_t;
  Tensor v_target;
};

FlowSample interpolate(const Tensor& x, const Tensor& eps, std::span<const double> t);

/// Mean squared velocity error over batch and elements.
Tensor fm_loss(const VelocityModel& model, const FlowSample& sample, std::span<const std::size_t> conditions);

/// Deterministic Euler integration from t = 1 to t = 0 on `sampler_grid`.
/// Row i starts from seeded_normal({N, d}, derive_seed(seed, i)).
LatentBatch euler_sample(const VelocityModel& model, const ShiftedSchedule& sched, std::size_t steps,
                         std::size_t batch, std::uint64_t seed, std::span<const std::size_t> conditions,
                         LatentShape shape);

/// Same integration from caller-supplied starting noise.
Tensor euler_integrate(const VelocityModel& model, const ShiftedSchedule& sched, std::size_t steps,
                       const Tensor& noise, std::span<const std::size_t> conditions);

/// Coefficient of the exact velocity E[eps - x | x_t] for x ~ N(0, s^2 I):
///   c(t) = (t - (1 - t) s^2) / ((1 - t)^2 s^2 + t^2).
double gaussian_oracle_coefficient(double t, double s);

/// c(t) * x_t per batch row.
Tensor gaussian_oracle_velocity(const Tensor& x_t, std::span<const double> t, double s);

/// The closed-form field above as a VelocityModel (condition ignored).
class GaussianOracleField : public VelocityModel {
 public:
  explicit GaussianOracleField(double data_std);
  Tensor velocity(const Tensor& x_t, std::span<const double> t, std::span<const std::size_t>) const override;

 private:
  double data_std_;
};

}  // namespace rae
