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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "rae/error.hpp"
#include "rae/flow.hpp"

namespace rae {
namespace {

class ConstantModel : public VelocityModel {
 public:
  explicit ConstantModel(Tensor out) : out_(std::move(out)) {}
  Tensor velocity(const Tensor& x_t, std::span<const double>, std::span<const std::size_t>) const override {
    return out_.defined() ? out_ : Tensor::zeros(x_t.shape());
  }

 private:
  Tensor out_;
};

double c_closed_form(double t, double s) { return (t - (1 - t) * s * s) / ((1 - t) * (1 - t) * s * s + t * t); }

// The oracle field is linear in x_t, so Euler on the uniform grid scales
// every sample by prod_k (1 - dt * c(t_k)).
double euler_gain(std::size_t steps, double s) {
  double g = 1.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = 1.0 - static_cast<double>(k) / static_cast<double>(steps);
    g *= 1.0 - c_closed_form(t, s) / static_cast<double>(steps);
  }
  return g;
}

double transport_error(std::size_t steps, std::size_t batch) {
  const GaussianOracleField field(2.0);
  const Tensor noise = seeded_normal({batch, 4, 4}, 77);
  const std::vector<std::size_t> conds(batch, 0);
  const Tensor out = euler_integrate(field, ShiftedSchedule::identity(), steps, noise, conds);
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    err += std::pow(out.at(i) - 2.0 * noise.at(i), 2);
    ref += std::pow(2.0 * noise.at(i), 2);
  }
  return std::sqrt(err / ref);
}

TEST(Interpolate, Endpoints) {
  const Tensor x = seeded_normal({2, 3, 4}, 1);
  const Tensor eps = seeded_normal({2, 3, 4}, 2);
  const auto at0 = interpolate(x, eps, std::vector<double>{0.0, 0.0});
  const auto at1 = interpolate(x, eps, std::vector<double>{1.0, 1.0});
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(at0.x_t.at(i), x.at(i));
    EXPECT_EQ(at1.x_t.at(i), eps.at(i));
    EXPECT_EQ(at0.v_target.at(i), eps.at(i) - x.at(i));
  }
}

TEST(Interpolate, ZeroData) {
  const Tensor eps = seeded_normal({2, 3}, 5);
  const auto fs = interpolate(Tensor::zeros({2, 3}), eps, std::vector<double>{0.25, 0.5});
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_DOUBLE_EQ(fs.x_t.at(i), (i < 3 ? 0.25 : 0.5) * eps.at(i));
    EXPECT_EQ(fs.v_target.at(i), eps.at(i));
  }
}

TEST(Interpolate, AffineInT) {
  const Tensor x = seeded_normal({1, 8}, 3);
  const Tensor eps = seeded_normal({1, 8}, 4);
  const double t1 = 0.2, t2 = 0.7;
  const auto a = interpolate(x, eps, std::vector<double>{t1});
  const auto b = interpolate(x, eps, std::vector<double>{t2});
  const auto mid = interpolate(x, eps, std::vector<double>{(t1 + t2) / 2});
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(mid.x_t.at(i), (a.x_t.at(i) + b.x_t.at(i)) / 2, 1e-15);
}

TEST(Interpolate, RejectsBadTimesteps) {
  const Tensor x = Tensor::zeros({2, 3});
  EXPECT_THROW(interpolate(x, x, std::vector<double>{0.5}), DimensionError);
  EXPECT_THROW(interpolate(x, x, std::vector<double>{0.5, 1.5}), DomainError);
}

TEST(FmLoss, ExactModelGivesZero) {
  const auto fs = interpolate(seeded_normal({4, 2, 3}, 1), seeded_normal({4, 2, 3}, 2),
                              std::vector<double>{0.1, 0.4, 0.6, 0.9});
  const std::vector<std::size_t> conds(4, 0);
  EXPECT_EQ(fm_loss(ConstantModel(fs.v_target), fs, conds).item(), 0.0);
}

TEST(FmLoss, ZeroModelOnZeroDataIsSecondMoment) {
  const std::size_t b = 2000;
  const auto fs = interpolate(Tensor::zeros({b, 4, 8}), seeded_normal({b, 4, 8}, 9), std::vector<double>(b, 0.5));
  const std::vector<std::size_t> conds(b, 0);
  EXPECT_NEAR(fm_loss(ConstantModel(Tensor()), fs, conds).item(), 1.0, 0.02);
}

TEST(FmLoss, InvariantToBatchPermutation) {
  const Tensor x = seeded_normal({3, 2, 2}, 1);
  const Tensor eps = seeded_normal({3, 2, 2}, 2);
  const Tensor v = seeded_normal({3, 2, 2}, 3);
  const auto fs = interpolate(x, eps, std::vector<double>{0.1, 0.5, 0.8});
  const std::vector<std::size_t> perm{2, 0, 1};
  std::vector<Tensor> xs, es, vs;
  for (auto i : perm) {
    xs.push_back(batch_row(x, i));
    es.push_back(batch_row(eps, i));
    vs.push_back(batch_row(v, i));
  }
  const auto fp = interpolate(stack_rows(xs), stack_rows(es), std::vector<double>{0.8, 0.1, 0.5});
  const std::vector<std::size_t> conds(3, 0);
  EXPECT_NEAR(fm_loss(ConstantModel(v), fs, conds).item(), fm_loss(ConstantModel(stack_rows(vs)), fp, conds).item(),
              1e-15);
}

TEST(EulerSample, ZeroFieldKeepsNoise) {
  const std::vector<std::size_t> conds{0, 1, 2};
  const auto out = euler_sample(ConstantModel(Tensor()), ShiftedSchedule::identity(), 1, 3, 42, conds, {2, 3});
  EXPECT_EQ(out.conditions, conds);
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor expected = seeded_normal({2, 3}, derive_seed(42, i));
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(out.latents.at(i * 6 + j), expected.at(j));
  }
}

TEST(EulerSample, RequiresOneConditionPerSample) {
  const std::vector<std::size_t> conds{0};
  EXPECT_THROW(euler_sample(ConstantModel(Tensor()), ShiftedSchedule::identity(), 5, 2, 0, conds, {2, 3}),
               DimensionError);
}

TEST(GaussianOracle, CoefficientAnchors) {
  EXPECT_DOUBLE_EQ(gaussian_oracle_coefficient(0.5, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(gaussian_oracle_coefficient(1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(gaussian_oracle_coefficient(0.0, 2.0), -1.0);
  for (double t : {0.1, 0.3, 0.7}) EXPECT_NEAR(gaussian_oracle_coefficient(t, 1.7), c_closed_form(t, 1.7), 1e-15);
  const Tensor x = seeded_normal({2, 3}, 1);
  const Tensor v = gaussian_oracle_velocity(x, std::vector<double>{0.5, 1.0}, 1.0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(v.at(i), 0.0);
    EXPECT_EQ(v.at(3 + i), x.at(3 + i));
  }
}

TEST(GaussianOracle, EulerTransportConverges) {
  const double e50 = transport_error(50, 64);
  const double e100 = transport_error(100, 64);
  const double e500 = transport_error(500, 64);
  EXPECT_NEAR(e50, std::fabs(euler_gain(50, 2.0) - 2.0) / 2.0, 1e-12);
  EXPECT_NEAR(e500, std::fabs(euler_gain(500, 2.0) - 2.0) / 2.0, 1e-12);
  EXPECT_LE(e50, 0.03);
  EXPECT_LE(e500, 0.003);
  EXPECT_LE(e100, 0.55 * e50);
}

TEST(GaussianOracle, TransportedStdMatchesScale) {
  const GaussianOracleField field(2.0);
  const std::size_t b = 4096;
  const std::vector<std::size_t> conds(b, 0);
  const auto out = euler_sample(field, ShiftedSchedule::identity(), 50, b, 5, conds, {4, 4});
  double ss = 0.0;
  for (double v : out.latents.values()) ss += v * v;
  const double expected = euler_gain(50, 2.0);
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(out.latents.numel())), expected, 0.02 * expected);
  EXPECT_NEAR(expected, 2.0, 0.06);
}

}  // namespace
}  // namespace rae
