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
#include <numbers>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "rae/autoencoder.hpp"
#include "rae/datagen.hpp"
#include "rae/error.hpp"
#include "rae/gradcheck.hpp"

namespace rae {
namespace {

Tensor images(std::size_t n, std::uint64_t seed) { return sample_domain_images(DomainMix{}, n, seed).images; }

TEST(Patchify, RoundTrip) {
  const Tensor x = images(3, 1);
  const Tensor p = patchify(x, 8);
  EXPECT_EQ(p.shape(), (Shape{3, 16, 64}));
  const Tensor back = unpatchify(p, 8, 32, 32);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(back.at(i), x.at(i));
}

TEST(FrozenEncoder, ZeroCenteredImageGivesZeroTokens) {
  const FrozenEncoder enc(EncoderConfig{});
  const Tensor z = enc.encode(Tensor::full({1, 1, 32, 32}, 0.5));
  EXPECT_EQ(z.shape(), (Shape{1, 16, 64}));
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(FrozenEncoder, InjectiveOnPatches) {
  const FrozenEncoder enc(EncoderConfig{});
  Tensor a = images(1, 3);
  Tensor b = a.clone();
  b.mutable_values()[0] += 0.1;
  const Tensor za = enc.encode(a), zb = enc.encode(b);
  double diff = 0.0;
  for (std::size_t j = 0; j < 64; ++j) diff += std::fabs(za.at(j) - zb.at(j));
  EXPECT_GT(diff, 0.0);
  for (std::size_t j = 64; j < za.numel(); ++j) EXPECT_EQ(za.at(j), zb.at(j));
}

TEST(FrozenEncoder, DeterministicAndFrozen) {
  const FrozenEncoder a(EncoderConfig{}), b(EncoderConfig{});
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  const Tensor x = images(2, 4);
  const Tensor za = a.encode(x), zb = b.encode(x);
  for (std::size_t i = 0; i < za.numel(); ++i) EXPECT_EQ(za.at(i), zb.at(i));
  DecoderTrainConfig cfg;
  cfg.train_count = 32;
  cfg.val_count = 4;
  train_decoder(cfg, 1, 1);
  EXPECT_EQ(FrozenEncoder(cfg.encoder).fingerprint(), a.fingerprint());
}

TEST(Decoder, OutputShape) {
  const Decoder dec(DecoderConfig{}, 64, 8, 32, 1);
  EXPECT_EQ(dec.decode(Tensor::zeros({2, 16, 64})).shape(), (Shape{2, 1, 32, 32}));
  EXPECT_THROW(dec.decode(Tensor::zeros({2, 16, 63})), DimensionError);
}

// The linearized encoder is x -> g (patch - 0.5) Q with orthonormal Q, so an
// affine decoder with weight Q^T / g and bias 0.5 inverts it exactly.
TEST(Decoder, AffineDecoderInvertsLinearizedEncoder) {
  EncoderConfig ecfg;
  ecfg.tanh = false;
  const FrozenEncoder enc(ecfg);
  Decoder dec(DecoderConfig{128, 0}, 64, 8, 32, 1);
  const Tensor& q = enc.projection();
  for (const auto& [name, t] : dec.params().items()) {
    Tensor h = t;
    auto v = h.mutable_values();
    if (name == "skip/weight") {
      for (std::size_t i = 0; i < 64; ++i) {
        for (std::size_t j = 0; j < 64; ++j) v[i * 64 + j] = q.at(j * 64 + i) / ecfg.gain;
      }
    } else {
      std::fill(v.begin(), v.end(), 0.5);
    }
  }
  EXPECT_LE(reconstruction_l1(enc, dec, images(16, 5)), 1e-3);
}

TEST(Decoder, TrainingReducesError) {
  DecoderTrainConfig cfg;
  cfg.train_count = 96;
  cfg.val_count = 8;
  const auto run = train_decoder(cfg, 5, 3);
  const auto loss = run.report.series("train/loss");
  ASSERT_EQ(loss.size(), 6u);
  EXPECT_LT(loss.back().second, loss.front().second);
  const auto val = run.report.series("val/l1/all");
  EXPECT_LT(val.back().second, val.front().second);
}

TEST(Decoder, ZeroEpochsIsInitialDecoder) {
  DecoderTrainConfig cfg;
  cfg.train_count = 32;
  cfg.val_count = 4;
  const auto run = train_decoder(cfg, 0, 3);
  for (const auto& r : run.report.records()) EXPECT_EQ(r.step, 0);
  const Decoder init(cfg.decoder, cfg.encoder.width, cfg.encoder.patch, kImageSize, derive_seed(3, 0));
  EXPECT_EQ(run.decoder.params().fingerprint(), init.params().fingerprint());
}

TEST(DecoderTrainConfig, ErrorsNameTheKey) {
  DecoderTrainConfig cfg;
  cfg.mix.ratios = {0.5, 0.6, -0.1};
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "data.mix.glyph");
  }
  cfg = DecoderTrainConfig{};
  cfg.weights.gram = -1.0;
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "loss.omega_G");
  }
}

TEST(GramLoss, HandAnchors) {
  const Tensor eye = Tensor::from({1, 2, 2}, {1, 0, 0, 1});
  const Tensor swap = Tensor::from({1, 2, 2}, {0, 1, 1, 0});
  EXPECT_EQ(gram_loss(eye, eye).item(), 0.0);
  EXPECT_EQ(gram_loss(eye, swap).item(), 0.0);
  EXPECT_EQ(gram_loss(Tensor::from({1, 2, 2}, {1, 0, 0, 0}), Tensor::zeros({1, 2, 2})).item(), 1.0 / 16.0);
}

TEST(GramLoss, SymmetricNonnegativeAndTokenPermutationInvariant) {
  const Tensor a = seeded_normal({2, 5, 3}, 1);
  const Tensor b = seeded_normal({2, 5, 3}, 2);
  const double ab = gram_loss(a, b).item();
  EXPECT_EQ(ab, gram_loss(b, a).item());
  EXPECT_GE(ab, 0.0);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<Tensor> pa, pb;
  for (auto i : perm) {
    pa.push_back(slice(a, 1, i, 1));
    pb.push_back(slice(b, 1, i, 1));
  }
  EXPECT_NEAR(gram_loss(concat(pa, 1), concat(pb, 1)).item(), ab, 1e-12);
}

TEST(ReconLoss, Anchors) {
  const FrozenEncoder enc(EncoderConfig{});
  const EncoderFeatures feats(enc);
  const ZeroAdversary adv;
  const Tensor x = images(2, 7);
  const auto same = recon_loss(x, x, LossWeights{}, feats, adv);
  EXPECT_EQ(same.total.item(), 0.0);
  EXPECT_EQ(same.l1, 0.0);
  EXPECT_EQ(same.perceptual, 0.0);
  EXPECT_EQ(same.gram, 0.0);
  EXPECT_EQ(same.adversarial, 0.0);
  const auto l1_only =
      recon_loss(Tensor::zeros({1, 1, 32, 32}), Tensor::full({1, 1, 32, 32}, 0.5), LossWeights{0, 0, 0}, feats, adv);
  EXPECT_EQ(l1_only.total.item(), 0.5);
}

TEST(ReconLoss, BreakdownSumsToTotal) {
  const FrozenEncoder enc(EncoderConfig{});
  const EncoderFeatures feats(enc);
  const ZeroAdversary adv;
  const LossWeights w;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor x = images(3, s);
    const Tensor y = add(x, scale(seeded_normal(x.shape(), s + 100), 0.1));
    const auto r = recon_loss(x, y, w, feats, adv);
    EXPECT_GE(r.l1, 0.0);
    EXPECT_GE(r.perceptual, 0.0);
    EXPECT_GE(r.gram, 0.0);
    EXPECT_GE(r.adversarial, 0.0);
    const double sum = r.l1 + w.perceptual * r.perceptual + w.gram * r.gram + w.adversarial * r.adversarial;
    EXPECT_NEAR(r.total.item(), sum, 1e-12);
  }
}

TEST(Gradcheck, LossesScopePasses) {
  const auto report = gradcheck("losses", 0);
  for (const auto& e : report.entries) EXPECT_LE(e.max_rel_error, kOpsTolerance) << e.name;
  EXPECT_TRUE(report.passed());
}

TEST(NoiseAugment, ZeroTauIsIdentity) {
  const Tensor z = seeded_normal({4, 16, 64}, 1);
  Rng rng(1);
  const Tensor out = noise_augment(z, {0.0, true}, rng);
  for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_EQ(out.at(i), z.at(i));
}

TEST(NoiseAugment, HalfNormalSigmaAndUnbiasedNoise) {
  constexpr std::size_t kDraws = 100000;
  Rng rng(2);
  std::vector<double> sigmas;
  const Tensor z = Tensor::full({kDraws, 1, 1}, 3.0);
  const Tensor out = noise_augment(z, {0.2, true}, rng, &sigmas);
  auto mean_se = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double e : v) var += (e - m) * (e - m);
    return std::pair{m, std::sqrt(var / (v.size() - 1) / v.size())};
  };
  const auto [sm, sse] = mean_se(sigmas);
  EXPECT_LE(std::fabs(sm - 0.2 * std::sqrt(2.0 / std::numbers::pi)), 3 * sse);
  std::vector<double> d(kDraws);
  for (std::size_t i = 0; i < kDraws; ++i) d[i] = out.at(i) - 3.0;
  const auto [dm, dse] = mean_se(d);
  EXPECT_LE(std::fabs(dm), 4 * dse);
  double second = 0.0;
  for (double e : d) second += e * e;
  EXPECT_NEAR(second / kDraws, 0.04, 0.05 * 0.04);
}

TEST(Frechet, IdenticalSetsAndSymmetry) {
  const Tensor a = seeded_normal({200, 6}, 1);
  const Tensor b = add_scalar(seeded_normal({200, 6}, 2), 0.3);
  EXPECT_NEAR(frechet_feature_distance(a, a), 0.0, 1e-8);
  EXPECT_EQ(frechet_feature_distance(a, b), frechet_feature_distance(b, a));
  EXPECT_GE(frechet_feature_distance(a, b), 0.0);
}

TEST(Frechet, MeanShiftClosedForm) {
  const std::size_t n = 10000, dim = 4;
  const double delta = 2.0;
  Tensor b = seeded_normal({n, dim}, 4);
  for (std::size_t i = 0; i < n; ++i) b.mutable_values()[i * dim] += delta;
  EXPECT_NEAR(frechet_feature_distance(seeded_normal({n, dim}, 3), b), delta * delta, 0.2);
}

TEST(Frechet, InvariantToSampleOrder) {
  const Tensor a = seeded_normal({50, 3}, 1);
  const Tensor b = seeded_normal({50, 3}, 2);
  std::vector<Tensor> rows;
  for (std::size_t i = 50; i-- > 0;) rows.push_back(slice(a, 0, i, 1));
  EXPECT_NEAR(frechet_feature_distance(concat(rows, 0), b), frechet_feature_distance(a, b), 1e-10);
}

TEST(Frechet, NeedsTwoRows) {
  EXPECT_THROW(frechet_feature_distance(Tensor::zeros({1, 3}), Tensor::zeros({4, 3})), ArgumentError);
}

TEST(CompressedAutoencoder, FitReducesError) {
  CompressedAutoencoder ae(8, 4, 1);
  const Tensor x = images(64, 9);
  auto err = [&] {
    NoGradGuard g;
    return mean(abs(sub(ae.decode(ae.encode(x)), x))).item();
  };
  const double before = err();
  ae.fit(x, 5, 16, 3e-3, 2);
  EXPECT_EQ(ae.encode(x).shape(), (Shape{64, 16, 4}));
  EXPECT_LT(err(), before);
}

}  // namespace
}  // namespace rae
