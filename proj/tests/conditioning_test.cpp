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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "rae/autoencoder.hpp"
#include "rae/conditioning.hpp"
#include "rae/error.hpp"
#include "rae/experiments.hpp"
#include "rae/flow.hpp"
#include "rae/optim.hpp"

namespace rae {
namespace {

MixtureSpec unit_gaussian() {
  MixtureSpec s;
  s.shape = {2, 3};
  s.conditions = {{MixtureComponent{1.0, seeded_normal({2, 3}, 1), 1.0}}};
  return s;
}

DenoiserConfig tiny_denoiser() {
  DenoiserConfig c;
  c.hidden = 16;
  c.depth = 1;
  c.heads = 2;
  c.cond_dim = 32;
  return c;
}

TEST(Conditioner, EmbeddingsAreStableAndDistinct) {
  const Conditioner c(ConditionerConfig{}, 3);
  const Tensor a = embed_condition(1, c), b = embed_condition(1, c), other = embed_condition(2, c);
  EXPECT_EQ(a.shape(), (Shape{32}));
  bool differ = false;
  for (std::size_t i = 0; i < 32; ++i) {
    EXPECT_EQ(a.at(i), b.at(i));
    differ = differ || a.at(i) != other.at(i);
  }
  EXPECT_TRUE(differ);
  EXPECT_THROW(embed_condition(4, c), ArgumentError);
}

TEST(Conditioner, EmbeddingRowsReceiveGradient) {
  ConditionalDenoiser model(tiny_denoiser(), ConditionerConfig{}, 5);
  model.denoiser().perturb(1, 0.1);
  const Tensor before = model.conditioner().table().clone();
  AdamW opt(model.params().tensors(), AdamWOptions{1e-2, 0.9, 0.95, 0.0, 1e-8});
  const std::vector<std::size_t> conds{0, 1};
  const auto fs = interpolate(seeded_normal({2, 8, 16}, 2), seeded_normal({2, 8, 16}, 3), std::vector<double>{0.3, 0.7});
  backward(fm_loss(model, fs, conds));
  opt.step();
  const Tensor& after = model.conditioner().table();
  auto row_changed = [&](std::size_t r) {
    for (std::size_t j = 0; j < 32; ++j) {
      if (after.at(r * 32 + j) != before.at(r * 32 + j)) return true;
    }
    return false;
  };
  EXPECT_TRUE(row_changed(0));
  EXPECT_TRUE(row_changed(1));
  EXPECT_FALSE(row_changed(3));
}

TEST(ConditionalDenoiser, CondDimMismatchIsConfigError) {
  ConditionerConfig cc;
  cc.cond_dim = 8;
  EXPECT_THROW(ConditionalDenoiser(tiny_denoiser(), cc, 1), ConfigError);
}

TEST(OracleVerifier, LogDensityAtMean) {
  const auto spec = unit_gaussian();
  const Tensor mean = spec.conditions[0][0].mean;
  const auto s = oracle_verifier(mean, 0, spec);
  EXPECT_NEAR(s.score, -(6.0 / 2.0) * std::log(2.0 * M_PI), 1e-12);
  EXPECT_EQ(s.verifier, "oracle");
  EXPECT_EQ(oracle_verifier(mean, 0, spec).score, s.score);
}

TEST(OracleVerifier, DecreasesAwayFromMean) {
  const auto spec = unit_gaussian();
  const Tensor mean = spec.conditions[0][0].mean;
  const Tensor dir = seeded_normal({2, 3}, 9);
  double prev = oracle_verifier(mean, 0, spec).score;
  for (int i = 1; i <= 5; ++i) {
    const double s = oracle_verifier(add(mean, scale(dir, 0.5 * i)), 0, spec).score;
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(ConfidenceVerifier, UniformProbeScoresLogC) {
  const auto probe = Probe::uniform({8, 16}, 4);
  for (std::uint64_t s = 0; s < 3; ++s) {
    EXPECT_NEAR(confidence_verifier(seeded_normal({8, 16}, s), s % 4, probe).score, -std::log(4.0), 1e-12);
  }
}

TEST(ConfidenceVerifier, UntrainedProbeIsRejected) {
  const Probe probe({8, 16}, 4, 8, 1);
  EXPECT_THROW(ConfidenceVerifier{probe}, ContractError);
}

TEST(ConfidenceVerifier, TrainedProbePrefersTrueCondition) {
  const auto spec = MixtureSpec::default_task();
  Probe probe(spec.shape, 4, 32, 3);
  const auto stats = probe.fit(spec, 300, 128, 2e-3, 4);
  EXPECT_GT(stats.val_accuracy, 0.25);
  const ConfidenceVerifier v(probe);
  double right = 0.0, wrong = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    const auto batch = sample_latents(spec, c, 25, 100 + c);
    for (std::size_t i = 0; i < 25; ++i) {
      const Tensor z = batch_row(batch.latents, i);
      right += v.score(z, c);
      wrong += v.score(z, (c + 1) % 4);
    }
  }
  EXPECT_GT(right, wrong);
}

TEST(SelectTopK, Examples) {
  EXPECT_EQ(select_top_k(std::vector<double>{3, 1, 2}, 2), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(select_top_k(std::vector<double>{5}, 1), (std::vector<std::size_t>{0}));
  EXPECT_EQ(select_top_k(std::vector<double>{1, 2, 2, 0}, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_THROW(select_top_k(std::vector<double>{1}, 0), ArgumentError);
  EXPECT_THROW(select_top_k(std::vector<double>{1}, 2), ArgumentError);
}

TEST(BestKOfN, IdentityWhenKEqualsN) {
  const auto spec = MixtureSpec::default_task();
  const OracleVerifier v(spec);
  std::vector<Tensor> cands;
  for (std::uint64_t i = 0; i < 4; ++i) cands.push_back(seeded_normal({8, 16}, i));
  const auto sel = best_k_of_n(cands, v, 0, 4);
  std::vector<std::size_t> sorted = sel.indices;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(BestKOfN, PermutationInvariantAndNonMutating) {
  const auto spec = MixtureSpec::default_task();
  const OracleVerifier v(spec);
  std::vector<Tensor> cands;
  for (std::uint64_t i = 0; i < 8; ++i) cands.push_back(seeded_normal({8, 16}, i));
  const auto sel = best_k_of_n(cands, v, 1, 3);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(sel.latents[j].node(), cands[sel.indices[j]].node());
  std::vector<Tensor> rev(cands.rbegin(), cands.rend());
  const auto sel_rev = best_k_of_n(rev, v, 1, 3);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(rev[sel_rev.indices[j]].node(), cands[sel.indices[j]].node());
}

TEST(TtsExperiment, ReportShapeAndOracleMonotone) {
  const auto spec = MixtureSpec::default_task();
  DenoiserConfig dc = tiny_denoiser();
  ConditionalDenoiser model(dc, ConditionerConfig{}, 2);
  model.denoiser().perturb(3, 0.05);
  TtsConfig cfg;
  cfg.trials = 3;
  cfg.sampler_steps = 4;
  const OracleVerifier v(spec);
  const std::size_t decodes = decode_call_count();
  const auto r = tts_experiment(model, ShiftedSchedule(64, 128), spec.shape, v, spec, cfg, 7);
  EXPECT_EQ(decode_call_count(), decodes);
  for (std::size_t n : cfg.n_grid) {
    EXPECT_EQ(r.report.series("tts/n" + std::to_string(n) + "/quality").size(), cfg.trials);
  }
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    EXPECT_LE(r.selected_score[0][t], r.selected_score[1][t]);
    EXPECT_LE(r.selected_score[1][t], r.selected_score[2][t]);
  }
}

// Max of a superset: with k = 1 the oracle-selected score never falls as n
// grows, and across trials the sign test rejects "no improvement".
TEST(TtsExperiment, KEqualsOneSignTest) {
  const auto spec = MixtureSpec::default_task();
  ConditionalDenoiser model(tiny_denoiser(), ConditionerConfig{}, 2);
  TtsConfig cfg;
  cfg.k = 1;
  cfg.n_grid = {2, 8};
  cfg.trials = 200;
  cfg.sampler_steps = 1;
  const OracleVerifier v(spec);
  const auto r = tts_experiment(model, ShiftedSchedule::identity(), spec.shape, v, spec, cfg, 11);
  std::size_t pos = 0, neg = 0;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    EXPECT_GE(r.selected_score[1][t], r.selected_score[0][t]);
    pos += r.selected_score[1][t] > r.selected_score[0][t];
    neg += r.selected_score[1][t] < r.selected_score[0][t];
  }
  EXPECT_LT(sign_test_p(pos, neg), 0.01);
}

TEST(TtsExperiment, RejectsBadGrid) {
  const auto spec = MixtureSpec::default_task();
  ConditionalDenoiser model(tiny_denoiser(), ConditionerConfig{}, 2);
  const OracleVerifier v(spec);
  TtsConfig cfg;
  cfg.n_grid = {8, 2};
  EXPECT_THROW(tts_experiment(model, ShiftedSchedule::identity(), spec.shape, v, spec, cfg, 1), ArgumentError);
}

}  // namespace
}  // namespace rae
