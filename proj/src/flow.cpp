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

#include "rae/flow.hpp"

#include <algorithm>
#include <string>

#include "rae/error.hpp"
#include "rae/rng.hpp"

namespace rae {

Tensor batch_row(const Tensor& batch, std::size_t i) {
  const auto& s = batch.shape();
  if (s.empty() || i >= s[0]) throw DimensionError("batch_row: index out of range");
  const std::size_t width = batch.numel() / s[0];
  const auto v = batch.values();
  return Tensor::from(Shape(s.begin() + 1, s.end()),
                      std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(i * width),
                                          v.begin() + static_cast<std::ptrdiff_t>((i + 1) * width)));
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ArgumentError("stack_rows: no rows");
  Shape shape = rows[0].shape();
  std::vector<double> values;
  values.reserve(rows.size() * rows[0].numel());
  for (const auto& r : rows) {
    if (r.shape() != shape) throw DimensionError("stack_rows: row shapes differ");
    values.insert(values.end(), r.values().begin(), r.values().end());
  }
  shape.insert(shape.begin(), rows.size());
  return Tensor::from(std::move(shape), std::move(values));
}

FlowSample interpolate(const Tensor& x, const Tensor& eps, std::span<const double> t) {
  if (x.shape() != eps.shape()) {
    throw DimensionError("interpolate: x " + shape_str(x.shape()) + " vs eps " + shape_str(eps.shape()));
  }
  if (x.rank() == 0 || t.size() != x.dim(0)) throw DimensionError("interpolate: need one timestep per batch row");
  for (double ti : t) {
    if (!(ti >= 0.0 && ti <= 1.0)) throw DomainError("interpolate: timestep outside [0, 1]");
  }
  const std::size_t rows = x.dim(0);
  const std::size_t width = x.numel() / rows;
  const auto xv = x.values();
  const auto ev = eps.values();
  std::vector<double> xt(xv.size()), vt(xv.size());
  for (std::size_t b = 0; b < rows; ++b) {
    for (std::size_t k = b * width; k < (b + 1) * width; ++k) {
      xt[k] = (1.0 - t[b]) * xv[k] + t[b] * ev[k];
      vt[k] = ev[k] - xv[k];
    }
  }
  FlowSample s;
  s.x = x.detach();
  s.eps = eps.detach();
  s.t.assign(t.begin(), t.end());
  s.x_t = Tensor::from(x.shape(), std::move(xt));
  s.v_target = Tensor::from(x.shape(), std::move(vt));
  return s;
}

Tensor fm_loss(const VelocityModel& model, const FlowSample& sample, std::span<const std::size_t> conditions) {
  const Tensor predicted = model.velocity(sample.x_t, sample.t, conditions);
  return mean(square(sub(predicted, sample.v_target)));
}

Tensor euler_integrate(const VelocityModel& model, const ShiftedSchedule& sched, std::size_t steps,
                       const Tensor& noise, std::span<const std::size_t> conditions) {
  NoGradGuard no_grad;
  const auto grid = sampler_grid(sched, steps);
  const std::size_t rows = noise.dim(0);
  Tensor x = noise.clone();
  std::vector<double> t(rows);
  for (std::size_t k = 0; k < steps; ++k) {
    std::fill(t.begin(), t.end(), grid[k]);
    const Tensor v = model.velocity(x, t, conditions);
    if (v.shape() != x.shape()) throw DimensionError("euler_sample: velocity shape mismatch");
    const double dt = grid[k + 1] - grid[k];
    auto xv = x.mutable_values();
    const auto vv = v.values();
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += dt * vv[i];
  }
  return x;
}

LatentBatch euler_sample(const VelocityModel& model, const ShiftedSchedule& sched, std::size_t steps,
                         std::size_t batch, std::uint64_t seed, std::span<const std::size_t> conditions,
                         LatentShape shape) {
  if (steps == 0) throw ArgumentError("euler_sample: steps must be at least 1");
  if (!conditions.empty() && conditions.size() != batch) {
    throw DimensionError("euler_sample: need one condition per sample");
  }
  std::vector<Tensor> rows;
  rows.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    rows.push_back(seeded_normal({shape.tokens, shape.width}, derive_seed(seed, i)));
  }
  LatentBatch out;
  out.latents = euler_integrate(model, sched, steps, stack_rows(rows), conditions);
  out.conditions.assign(conditions.begin(), conditions.end());
  return out;
}

double gaussian_oracle_coefficient(double t, double s) {
  const double s2 = s * s;
  return (t - (1.0 - t) * s2) / ((1.0 - t) * (1.0 - t) * s2 + t * t);
}

Tensor gaussian_oracle_velocity(const Tensor& x_t, std::span<const double> t, double s) {
  if (!(s > 0.0)) throw DomainError("gaussian_oracle_velocity: data std must be positive");
  if (x_t.rank() == 0 || t.size() != x_t.dim(0)) {
    throw DimensionError("gaussian_oracle_velocity: need one timestep per batch row");
  }
  const std::size_t rows = x_t.dim(0);
  const std::size_t width = x_t.numel() / rows;
  const auto xv = x_t.values();
  std::vector<double> out(xv.size());
  for (std::size_t b = 0; b < rows; ++b) {
    if (!(t[b] >= 0.0 && t[b] <= 1.0)) throw DomainError("gaussian_oracle_velocity: timestep outside [0, 1]");
    const double c = gaussian_oracle_coefficient(t[b], s);
    for (std::size_t k = b * width; k < (b + 1) * width; ++k) out[k] = c * xv[k];
  }
  return Tensor::from(x_t.shape(), std::move(out));
}

GaussianOracleField::GaussianOracleField(double data_std) : data_std_(data_std) {
  if (!(data_std > 0.0)) throw DomainError("GaussianOracleField: data std must be positive");
}

Tensor GaussianOracleField::velocity(const Tensor& x_t, std::span<const double> t,
                                     std::span<const std::size_t>) const {
  return gaussian_oracle_velocity(x_t, t, data_std_);
}

}  // namespace rae
