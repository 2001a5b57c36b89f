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
#include "rae/schedule.hpp"

namespace rae {
namespace {

// Closed form evaluated independently of the implementation.
double moebius(double alpha, double t) { return alpha * t / (1.0 + (alpha - 1.0) * t); }

TEST(ShiftedSchedule, AlphaIsSqrtOfDimensionRatio) {
  const ShiftedSchedule s(4096, 294912);
  EXPECT_DOUBLE_EQ(s.alpha(), std::sqrt(72.0));
  EXPECT_NEAR(s.alpha(), 8.485281, 1e-6);
  EXPECT_EQ(ShiftedSchedule(64, 64).alpha(), 1.0);
  EXPECT_NE(ShiftedSchedule(64, 65).alpha(), 1.0);
}

TEST(ShiftedSchedule, RejectsBadInputs) {
  EXPECT_THROW(ShiftedSchedule(0, 16), ConfigError);
  EXPECT_THROW(ShiftedSchedule::with_alpha(0.0), ConfigError);
  EXPECT_THROW(ShiftedSchedule::with_alpha(std::nan("")), ConfigError);
  EXPECT_THROW(shift_timestep(ShiftedSchedule::identity(), 1.5), DomainError);
  EXPECT_THROW(shift_timestep(ShiftedSchedule::identity(), -0.1), DomainError);
}

TEST(ShiftTimestep, HighDimensionalAnchor) {
  const ShiftedSchedule s(4096, 256 * 1152);
  const double expected = moebius(std::sqrt(72.0), 0.5);
  EXPECT_NEAR(shift_timestep(s, 0.5), expected, 1e-15);
  EXPECT_NEAR(shift_timestep(s, 0.5), std::sqrt(72.0) / (1.0 + std::sqrt(72.0)), 1e-15);
}

TEST(ShiftTimestep, EndpointsAndIdentity) {
  for (double a : {1e-3, 0.5, 1.0, 3.0, 1e3}) {
    const auto s = ShiftedSchedule::with_alpha(a);
    EXPECT_EQ(shift_timestep(s, 0.0), 0.0);
    EXPECT_EQ(shift_timestep(s, 1.0), 1.0);
  }
  for (int i = 0; i <= 100; ++i) {
    const double t = i / 100.0;
    EXPECT_EQ(shift_timestep(ShiftedSchedule::identity(), t), t);
  }
}

TEST(ShiftTimestep, CompositionMultipliesAlpha) {
  const double pairs[][2] = {{2.0, 3.0}, {0.5, 8.0}, {std::sqrt(72.0), 0.1}, {1e-3, 1e3}};
  for (const auto& p : pairs) {
    const auto a = ShiftedSchedule::with_alpha(p[0]);
    const auto b = ShiftedSchedule::with_alpha(p[1]);
    const auto ab = ShiftedSchedule::with_alpha(p[0] * p[1]);
    for (int i = 0; i <= 1000; ++i) {
      const double t = i / 1000.0;
      EXPECT_NEAR(shift_timestep(b, shift_timestep(a, t)), shift_timestep(ab, t), 1e-12);
    }
  }
}

TEST(ShiftTimestep, MonotoneAndOnCorrectSide) {
  for (double a : {1e-3, 0.3, 2.0, 1e3}) {
    const auto s = ShiftedSchedule::with_alpha(a);
    double prev = -1.0;
    for (int i = 1; i < 1000; ++i) {
      const double t = i / 1000.0;
      const double m = shift_timestep(s, t);
      EXPECT_GT(m, prev);
      if (a > 1.0) {
        EXPECT_GT(m, t);
      }
      if (a < 1.0) {
        EXPECT_LT(m, t);
      }
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, 1.0);
      prev = m;
    }
  }
}

TEST(InverseShift, Examples) {
  const auto s = ShiftedSchedule::with_alpha(std::sqrt(72.0));
  EXPECT_NEAR(inverse_shift(s, shift_timestep(s, 0.25)), 0.25, 1e-12);
  EXPECT_NEAR(inverse_shift(ShiftedSchedule::with_alpha(2.0), 2.0 / 3.0), 0.5, 1e-15);
  EXPECT_EQ(inverse_shift(ShiftedSchedule::identity(), 0.3), 0.3);
}

TEST(InverseShift, RoundTripGrid) {
  for (double a : {1e-3, 0.2, 5.0, 1e3}) {
    const auto s = ShiftedSchedule::with_alpha(a);
    for (int i = 0; i <= 1000; ++i) {
      const double t = i / 1000.0;
      EXPECT_NEAR(inverse_shift(s, shift_timestep(s, t)), t, 1e-12);
    }
  }
}

TEST(SamplerGrid, Examples) {
  EXPECT_EQ(sampler_grid(ShiftedSchedule::identity(), 1), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(sampler_grid(ShiftedSchedule::identity(), 2), (std::vector<double>{1.0, 0.5, 0.0}));
  const auto g = sampler_grid(ShiftedSchedule::with_alpha(std::sqrt(72.0)), 2);
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g[0], 1.0);
  EXPECT_NEAR(g[1], 0.8945735, 1e-7);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_THROW(sampler_grid(ShiftedSchedule::identity(), 0), ArgumentError);
}

TEST(SamplerGrid, StrictlyDecreasing) {
  const auto g = sampler_grid(ShiftedSchedule(64, 1024), 50);
  ASSERT_EQ(g.size(), 51u);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LT(g[i], g[i - 1]);
}

TEST(SampleTrainTimestep, UniformMeanAtIdentity) {
  Rng rng(3);
  double acc = 0.0;
  for (int i = 0; i < 100000; ++i) acc += sample_train_timestep(ShiftedSchedule::identity(), rng);
  EXPECT_NEAR(acc / 1e5, 0.5, 0.01);
}

TEST(SampleTrainTimestep, ShiftMovesMassTowardNoise) {
  Rng rng(3);
  const auto s = ShiftedSchedule::with_alpha(std::sqrt(72.0));
  double acc = 0.0;
  for (int i = 0; i < 100000; ++i) acc += sample_train_timestep(s, rng);
  EXPECT_GT(acc / 1e5, 0.5);
}

TEST(SampleTrainTimestep, Deterministic) {
  Rng a(17), b(17);
  const ShiftedSchedule s(64, 1024);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_train_timestep(s, a), sample_train_timestep(s, b));
}

}  // namespace
}  // namespace rae
