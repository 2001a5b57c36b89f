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
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "rae/error.hpp"
#include "rae/gradcheck.hpp"
#include "rae/optim.hpp"
#include "rae/rng.hpp"
#include "rae/tensor.hpp"

namespace rae {
namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

TEST(Matmul, HandExamples) {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(vals(matmul(eye, Tensor::from({2, 1}, {3, 4}))), (std::vector<double>{3, 4}));
  EXPECT_EQ(vals(matmul(Tensor::from({1, 2}, {1, 2}), Tensor::zeros({2, 1}))), (std::vector<double>{0}));
  const Tensor c = matmul(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2, 2}, {5, 6, 7, 8}));
  EXPECT_EQ(vals(c), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Matmul, BatchedLeftFactor) {
  const Tensor a = Tensor::from({2, 1, 2}, {1, 2, 3, 4});
  const Tensor c = matmul(a, Tensor::from({2, 1}, {1, 1}));
  EXPECT_EQ(c.shape(), (Shape{2, 1, 1}));
  EXPECT_EQ(vals(c), (std::vector<double>{3, 7}));
}

TEST(Matmul, InnerMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST(Softmax, Examples) {
  EXPECT_EQ(vals(softmax(Tensor::from({2}, {0, 0}), 0)), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(vals(softmax(Tensor::from({2}, {1000, 1000}), 0)), (std::vector<double>{0.5, 0.5}));
  const auto p = vals(softmax(Tensor::from({2}, {0, std::log(3.0)}), 0));
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor x = scale(seeded_normal({3, 5, 7}, seed), 1.0 + 10.0 * static_cast<double>(seed));
    for (std::size_t axis = 0; axis < 3; ++axis) {
      const Tensor s = sum_axis(softmax(x, axis), axis);
      for (double v : s.values()) EXPECT_NEAR(v, 1.0, 1e-12);
    }
  }
}

TEST(LayerNorm, Examples) {
  const Tensor ones = Tensor::full({2}, 1.0);
  const Tensor zeros = Tensor::zeros({2});
  const Tensor flat = layer_norm(Tensor::full({3, 2}, 4.0), ones, zeros);
  for (double v : flat.values()) EXPECT_EQ(v, 0.0);
  const auto y = vals(layer_norm(Tensor::from({2}, {1, -1}), ones, zeros, 0.0));
  EXPECT_NEAR(y[0], 1.0, 1e-15);
  EXPECT_NEAR(y[1], -1.0, 1e-15);
  const Tensor shifted = layer_norm(seeded_normal({4, 2}, 3), zeros, Tensor::full({2}, 0.7));
  for (double v : shifted.values()) EXPECT_DOUBLE_EQ(v, 0.7);
}

TEST(Backward, SumGivesOnes) {
  Tensor w = seeded_normal({2, 3, 2}, 1);
  w.set_requires_grad(true);
  backward(sum(w));
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwiceInput) {
  Tensor w = Tensor::from({1}, {3.0}, true);
  backward(sum(mul(w, w)));
  EXPECT_EQ(w.grad()[0], 6.0);
}

TEST(Backward, MatmulMatchesFiniteDifferences) {
  Tensor w = seeded_normal({3, 3}, 5);
  const Tensor x = seeded_normal({3, 3}, 6);
  w.set_requires_grad(true);
  const auto errs = gradient_errors([&] { return sum(matmul(w, x)); }, {{"w", w}});
  EXPECT_LE(errs[0].second, 1e-6);
}

TEST(Backward, AccumulatesAcrossUses) {
  Tensor w = Tensor::from({2}, {1.0, 2.0}, true);
  backward(sum(add(mul(w, w), w)));
  EXPECT_EQ(vals(Tensor::from({2}, {w.grad()[0], w.grad()[1]})), (std::vector<double>{3.0, 5.0}));
}

TEST(Backward, NonScalarLossThrows) {
  Tensor w = Tensor::zeros({2}, true);
  EXPECT_THROW(backward(w), ContractError);
}

TEST(Backward, NoGradGuardBuildsNoTape) {
  Tensor w = Tensor::from({1}, {2.0}, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = mul(w, w);
  }
  EXPECT_FALSE(y.requires_grad());
}

TEST(Ops, DomainErrors) {
  EXPECT_THROW(log(Tensor::from({1}, {-1.0})), DomainError);
  EXPECT_THROW(sqrt(Tensor::from({1}, {-1.0})), DomainError);
  EXPECT_THROW(div(Tensor::from({1}, {1.0}), Tensor::from({1}, {0.0})), DomainError);
}

TEST(Ops, ShapeInvariants) {
  const Tensor x = seeded_normal({2, 3, 4}, 9);
  EXPECT_EQ(permute(x, {2, 0, 1}).shape(), (Shape{4, 2, 3}));
  EXPECT_EQ(transpose_last(x).shape(), (Shape{2, 4, 3}));
  EXPECT_EQ(slice(x, 1, 1, 2).shape(), (Shape{2, 2, 4}));
  EXPECT_EQ(concat({x, x}, 2).shape(), (Shape{2, 3, 8}));
  EXPECT_EQ(mean_axis(x, 1, true).shape(), (Shape{2, 1, 4}));
  EXPECT_THROW(reshape(x, {5, 5}), DimensionError);
  for (const Tensor& t : {permute(x, {1, 2, 0}), softmax(x, 2), gelu(x), tanh(x)}) {
    EXPECT_EQ(shape_numel(t.shape()), t.values().size());
    for (double v : t.values()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Gradcheck, OpsScopePasses) {
  const auto report = gradcheck("ops", 0);
  for (const auto& e : report.entries) {
    EXPECT_LE(e.max_rel_error, kOpsTolerance) << e.name;
  }
  EXPECT_TRUE(report.passed());
}

TEST(Gradcheck, UnknownScopeThrows) { EXPECT_THROW(gradcheck("nope"), ArgumentError); }

TEST(AdamW, ZeroGradientNoDecayIsIdentity) {
  Tensor w = seeded_normal({4, 3}, 11);
  w.set_requires_grad(true);
  const auto before = vals(w);
  AdamW opt({w}, AdamWOptions{0.1, 0.9, 0.999, 0.0, 1e-8});
  for (int i = 0; i < 5; ++i) {
    opt.zero_grad();
    backward(scale(sum(w), 0.0));
    opt.step();
  }
  EXPECT_EQ(vals(w), before);
}

TEST(AdamW, FirstStepMovesBySignTimesLr) {
  Tensor w = Tensor::from({1}, {1.0}, true);
  AdamW opt({w}, AdamWOptions{0.1, 0.9, 0.999, 0.0, 0.0});
  backward(sum(w));
  opt.step();
  EXPECT_NEAR(w.values()[0], 0.9, 1e-12);
}

TEST(AdamW, DecoupledDecay) {
  Tensor w = Tensor::from({1}, {2.0}, true);
  AdamW opt({w}, AdamWOptions{0.1, 0.9, 0.999, 0.1, 1e-8});
  backward(scale(sum(w), 0.0));
  opt.step();
  EXPECT_NEAR(w.values()[0], 2.0 * (1.0 - 0.01), 1e-12);
}

TEST(CosineWarmup, ShapeOfSchedule) {
  const CosineWarmupSchedule s(1e-3, 1e-4, 1000, 0.1);
  EXPECT_LT(s.lr_at(0), 1e-3);
  EXPECT_NEAR(s.lr_at(s.warmup_steps()), 1e-3, 1e-12);
  EXPECT_NEAR(s.lr_at(1000), 1e-4, 1e-12);
  for (std::int64_t t = s.warmup_steps(); t < 1000; ++t) EXPECT_GE(s.lr_at(t), s.lr_at(t + 1));
}

TEST(SeededNormal, Moments) {
  const Tensor x = seeded_normal({1000000}, 42);
  const auto v = x.values();
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / 1e6;
  double var = 0.0;
  for (double e : v) var += (e - mean) * (e - mean);
  var /= 1e6;
  EXPECT_NEAR(mean, 0.0, 4e-3);
  EXPECT_NEAR(var, 1.0, 0.01);
}

TEST(SeededNormal, PureFunctionOfShapeAndSeed) {
  EXPECT_EQ(vals(seeded_normal({3, 4}, 7)), vals(seeded_normal({3, 4}, 7)));
  EXPECT_NE(vals(seeded_normal({3, 4}, 7)), vals(seeded_normal({3, 4}, 8)));
}

TEST(Rng, DeriveSeedSeparatesStreams) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(5, 9), derive_seed(5, 9));
}

}  // namespace
}  // namespace rae
