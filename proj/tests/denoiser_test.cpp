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

#include <vector>

#include <gtest/gtest.h>

#include "rae/checkpoint.hpp"
#include "rae/conditioning.hpp"
#include "rae/denoiser.hpp"
#include "rae/error.hpp"
#include "rae/flow.hpp"
#include "rae/gradcheck.hpp"
#include "rae/optim.hpp"

namespace rae {
namespace {

DenoiserConfig small() {
  DenoiserConfig c;
  c.hidden = 16;
  c.depth = 1;
  c.heads = 2;
  c.latent = {4, 8};
  c.cond_dim = 8;
  c.mlp_ratio = 2;
  c.freq_dim = 8;
  return c;
}

Tensor forward_random(const Denoiser& m, std::size_t b, std::uint64_t seed) {
  const auto& c = m.config();
  std::vector<double> t(b);
  for (std::size_t i = 0; i < b; ++i) t[i] = (i + 0.5) / static_cast<double>(b);
  return m.forward(seeded_normal({b, c.latent.tokens, c.latent.width}, seed), t,
                   seeded_normal({b, c.cond_dim}, seed + 1));
}

TEST(DenoiserConfig, Validation) {
  DenoiserConfig c;
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DenoiserConfig{};
  c.ddt_head_width = c.hidden;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "denoiser.ddt_head_width");
  }
  c.ddt_head_width = 160;
  EXPECT_NO_THROW(c.validate());
}

TEST(Denoiser, BuildIsDeterministic) {
  const auto a = Denoiser::build(DenoiserConfig{}, 3);
  const auto b = Denoiser::build(DenoiserConfig{}, 3);
  EXPECT_EQ(a.params().fingerprint(), b.params().fingerprint());
  EXPECT_NE(a.params().fingerprint(), Denoiser::build(DenoiserConfig{}, 4).params().fingerprint());
}

TEST(Denoiser, ZeroInitOutputAndShape) {
  DenoiserConfig c;
  c.ddt_head_width = 160;
  for (const auto& cfg : {DenoiserConfig{}, c}) {
    const auto m = Denoiser::build(cfg, 1);
    const Tensor y = forward_random(m, 3, 10);
    EXPECT_EQ(y.shape(), (Shape{3, 8, 16}));
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Denoiser, ForwardRejectsWrongShapes) {
  const auto m = Denoiser::build(small(), 1);
  EXPECT_THROW(m.forward(Tensor::zeros({2, 4, 7}), std::vector<double>{0.1, 0.2}, Tensor::zeros({2, 8})),
               DimensionError);
  EXPECT_THROW(m.forward(Tensor::zeros({2, 4, 8}), std::vector<double>{0.1}, Tensor::zeros({2, 8})), DimensionError);
}

TEST(ParamCount, HeadIncreasesCountAndSeedDoesNot) {
  DenoiserConfig base;
  base.hidden = 64;
  base.depth = 2;
  DenoiserConfig head = base;
  head.ddt_head_width = 160;
  EXPECT_LT(param_count(base), param_count(head));
  EXPECT_EQ(Denoiser::build(base, 1).param_count(), param_count(base));
  EXPECT_EQ(Denoiser::build(base, 2).param_count(), param_count(base));
  EXPECT_EQ(Denoiser::build(head, 1).param_count(), param_count(head));
}

TEST(ParamCount, AffineMapCount) { EXPECT_EQ(Linear::count(16, 16), 16u * 16u + 16u); }

TEST(Denoiser, BackboneStaysWithinHidden) {
  DenoiserConfig c;
  c.hidden = 48;
  c.heads = 4;
  c.latent = {8, 64};
  c.ddt_head_width = 160;
  const auto m = Denoiser::build(c, 1);
  bool in_head = false;
  for (const auto& s : m.stage_shapes()) {
    if (s.name.rfind("head", 0) == 0) in_head = true;
    if (!in_head && s.name != "final_out") {
      EXPECT_LE(s.out_width, c.hidden) << s.name;
    }
    if (s.name.rfind("head_block", 0) == 0) {
      EXPECT_EQ(s.in_width, 160u);
    }
  }
  EXPECT_TRUE(in_head);
}

TEST(Denoiser, BatchPermutationEquivariant) {
  auto m = Denoiser::build(small(), 2);
  m.perturb(5, 0.2);
  const Tensor x = seeded_normal({3, 4, 8}, 1);
  const Tensor cond = seeded_normal({3, 8}, 2);
  const std::vector<double> t{0.2, 0.5, 0.9};
  const Tensor y = m.forward(x, t, cond);
  const std::vector<std::size_t> perm{2, 0, 1};
  std::vector<Tensor> xs, cs;
  std::vector<double> tp;
  for (auto i : perm) {
    xs.push_back(batch_row(x, i));
    cs.push_back(batch_row(cond, i));
    tp.push_back(t[i]);
  }
  const Tensor yp = m.forward(stack_rows(xs), tp, stack_rows(cs));
  const std::size_t row = 32;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t j = 0; j < row; ++j) EXPECT_NEAR(yp.at(r * row + j), y.at(perm[r] * row + j), 1e-12);
  }
}

TEST(Denoiser, GradcheckScopePasses) {
  const auto report = gradcheck("denoiser", 0);
  for (const auto& e : report.entries) EXPECT_LE(e.max_rel_error, kDenoiserTolerance) << e.name;
  EXPECT_TRUE(report.passed());
}

TEST(Denoiser, CheckpointRoundTrip) {
  auto m = Denoiser::build(small(), 2);
  m.perturb(9, 0.1);
  Checkpoint ckpt;
  m.save(ckpt);
  auto n = Denoiser::build(small(), 3);
  n.load(Checkpoint::deserialize(ckpt.serialize()));
  EXPECT_EQ(m.params().fingerprint(), n.params().fingerprint());
}

// Smoke property: loss falls over the first 200 steps on a fixed Gaussian
// task, for the plain and the head config.
TEST(Denoiser, LossDecreasesOnGaussianTask) {
  DenoiserConfig with_head = small();
  with_head.ddt_head_width = 32;
  with_head.ddt_head_depth = 1;
  for (const auto& cfg : {small(), with_head}) {
    ConditionerConfig cc;
    cc.num_conditions = 2;
    cc.cond_dim = cfg.cond_dim;
    ConditionalDenoiser model(cfg, cc, 4);
    AdamW opt(model.params().tensors(), AdamWOptions{2e-3, 0.9, 0.95, 0.0, 1e-8});
    const std::vector<std::size_t> conds{0, 1, 0, 1, 0, 1, 0, 1};
    const Tensor mean = scale(seeded_normal({1, 4, 8}, 99), 1.5);
    auto loss_at = [&](std::size_t step) {
      Rng rng(derive_seed(7, step));
      std::vector<double> t(8);
      for (auto& v : t) v = rng.uniform();
      const Tensor x = add(mean, scale(seeded_normal({8, 4, 8}, derive_seed(8, step)), 0.3));
      return fm_loss(model, interpolate(x, seeded_normal({8, 4, 8}, derive_seed(9, step)), t), conds);
    };
    double first = 0.0, last = 0.0;
    for (std::size_t s = 0; s < 200; ++s) {
      opt.zero_grad();
      const Tensor loss = loss_at(s);
      backward(loss);
      opt.step();
      if (s < 20) first += loss.item() / 20;
      if (s >= 180) last += loss.item() / 20;
    }
    EXPECT_LT(last, first);
  }
}

}  // namespace
}  // namespace rae
