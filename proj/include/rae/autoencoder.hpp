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
#include <memory>
#include <vector>

#include "rae/datagen.hpp"
#include "rae/latent.hpp"
#include "rae/nn.hpp"
#include "rae/report.hpp"
#include "rae/rng.hpp"
#include "rae/tensor.hpp"

namespace rae {

/// [B, 1, H, W] -> [B, (H/p)(W/p), p*p], raster order of patches.
Tensor patchify(const Tensor& images, std::size_t patch);
/// Inverse of patchify.
Tensor unpatchify(const Tensor& patches, std::size_t patch, std::size_t height, std::size_t width);

struct EncoderConfig {
  std::size_t patch = 8;
  std::size_t width = 64;  // token dimension d
  double gain = 2.0;
  bool tanh = true;  // false gives the linearized encoder
  std::uint64_t seed = 1234;
};

/// Frozen stand-in for a pretrained representation encoder.
///
/// Non-overlapping patches are centred (pixel - 0.5), multiplied by a fixed
/// random orthogonal matrix, scaled by `gain` and squashed with tanh. The
/// projection is drawn once from the seed and never trained. Gradients do
/// flow through it to the input image, which is what lets it serve as the
/// perceptual feature map.
class FrozenEncoder {
 public:
  explicit FrozenEncoder(const EncoderConfig& config);

  /// images [B, 1, H, W] with H, W divisible by the patch size; returns
  /// [B, N, d]. Throws DimensionError otherwise.
  Tensor encode(const Tensor& images) const;

  const EncoderConfig& config() const { return config_; }
  /// [p*p, d] projection; orthonormal rows when d >= p*p, columns otherwise.
  const Tensor& projection() const { return projection_; }
  std::uint64_t fingerprint() const;

 private:
  EncoderConfig config_;
  Tensor projection_;
};

struct DecoderConfig {
  std::size_t hidden = 128;
  std::size_t layers = 2;  // hidden layers; 0 makes the decoder affine
  bool operator==(const DecoderConfig&) const = default;
};

/// Per-token MLP (plus an affine skip path) from latent tokens to pixel
/// patches, followed by patch reassembly.
class Decoder {
 public:
  Decoder(const DecoderConfig& config, std::size_t latent_width, std::size_t patch, std::size_t image_size,
          std::uint64_t seed);

  /// latents [B, N, d] -> images [B, 1, H, W].
  Tensor decode(const Tensor& latents) const;

  const ParamList& params() const { return params_; }
  ParamList& params() { return params_; }
  std::size_t latent_width() const { return latent_width_; }
  std::size_t patch() const { return patch_; }
  std::size_t image_size() const { return image_size_; }
  const DecoderConfig& config() const { return config_; }

 private:
  DecoderConfig config_;
  std::size_t latent_width_;
  std::size_t patch_;
  std::size_t image_size_;
  Linear skip_;
  std::vector<Linear> hidden_;
  Linear out_;
  ParamList params_;
};

/// Number of Decoder::decode calls made by this process.
std::size_t decode_call_count();

/// Token features used by the perceptual and Gram terms.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  /// images [B, 1, H, W] -> [B, N, d]; differentiable w.r.t. the images.
  virtual Tensor features(const Tensor& images) const = 0;
};

/// Default extractor: the frozen encoder's own tokens.
class EncoderFeatures : public FeatureExtractor {
 public:
  explicit EncoderFeatures(const FrozenEncoder& encoder) : encoder_(encoder) {}
  Tensor features(const Tensor& images) const override { return encoder_.encode(images); }

 private:
  const FrozenEncoder& encoder_;
};

/// Generator-side adversarial loss.
class Adversary {
 public:
  virtual ~Adversary() = default;
  virtual Tensor generator_loss(const Tensor& reconstruction) const = 0;
};

/// Shipped stub; contributes exactly zero.
class ZeroAdversary : public Adversary {
 public:
  Tensor generator_loss(const Tensor&) const override { return Tensor::scalar(0.0); }
};

struct LossWeights {
  double perceptual = 1.0;    // omega_L
  double gram = 100.0;        // omega_G
  double adversarial = 10.0;  // omega_A
  /// Throws ConfigError on negative weights.
  void validate() const;
};

struct ReconLoss {
  Tensor total;
  double l1 = 0.0;
  double perceptual = 0.0;
  double gram = 0.0;
  double adversarial = 0.0;
};

/// Mean over batch of ||G(a) - G(b)||_F^2 with G(F) = F^T F / (N d).
Tensor gram_loss(const Tensor& feat_a, const Tensor& feat_b);

/// l1 + w_L * perceptual + w_G * gram + w_A * adversarial. The perceptual term
/// is the mean squared feature difference. `adversarial_active` gates the
/// adversarial term (start-epoch schedule).
ReconLoss recon_loss(const Tensor& x, const Tensor& x_hat, const LossWeights& weights,
                     const FeatureExtractor& features, const Adversary& adversary, bool adversarial_active = true);

struct NoiseAugConfig {
  double tau = 0.2;
  bool enabled = true;
};

/// z' = z + sigma * eps with one sigma ~ |N(0, tau^2)| per batch row.
/// `sigmas`, when non-null, receives the drawn sigmas.
Tensor noise_augment(const Tensor& latents, const NoiseAugConfig& config, Rng& rng,
                     std::vector<double>* sigmas = nullptr);

inline constexpr double kFrechetShrinkage = 1e-6;

/// Frechet distance between Gaussians fitted to the flattened rows of two
/// sets: |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with
/// S <- S + 1e-6 I. Needs at least 2 rows per set.
double frechet_feature_distance(const Tensor& set_a, const Tensor& set_b);

/// Linear per-patch autoencoder to a narrow token width, the compressed-latent
/// baseline.
class CompressedAutoencoder {
 public:
  CompressedAutoencoder(std::size_t patch, std::size_t width, std::uint64_t seed);

  Tensor encode(const Tensor& images) const;   // [B, N, width]
  Tensor decode(const Tensor& latents) const;  // [B, 1, H, W]
  const ParamList& params() const { return params_; }
  std::size_t width() const { return width_; }

  /// Minimizes l1 reconstruction with AdamW over `images`.
  void fit(const Tensor& images, std::size_t epochs, std::size_t batch, double lr, std::uint64_t seed);

 private:
  std::size_t patch_;
  std::size_t width_;
  Linear enc_;
  Linear dec_;
  ParamList params_;
};

struct DecoderTrainConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  DomainMix mix;
  std::size_t train_count = 384;
  std::size_t val_count = 48;  // per domain
  std::size_t batch = 32;
  double lr = 2e-3;
  double min_lr = 2e-4;
  double warmup_ratio = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  LossWeights weights;
  NoiseAugConfig noise{0.2, false};
  std::size_t adv_start_epoch = 8;
  std::uint64_t val_seed = 0x5eed0001;

  void validate() const;
};

struct DecoderTrainResult {
  Decoder decoder;
  ExperimentReport report;
};

/// Trains a decoder on frozen-encoder latents of a synthetic domain mixture.
/// Logs step-0 metrics, then per epoch: train/loss and val/l1/<domain> plus
/// val/l1/all on fixed validation sets.
DecoderTrainResult train_decoder(const DecoderTrainConfig& config, std::size_t epochs, std::uint64_t seed);

/// Mean absolute pixel error of decode(encode(x) [+ sigma*eps]) over `images`.
/// With perturb_sigma > 0 each latent gets N(0, sigma^2) noise from `seed`.
double reconstruction_l1(const FrozenEncoder& encoder, const Decoder& decoder, const Tensor& images,
                         double perturb_sigma = 0.0, std::uint64_t seed = 0);

}  // namespace rae
