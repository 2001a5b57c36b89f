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

#include "rae/autoencoder.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>

#include "rae/error.hpp"
#include "rae/optim.hpp"

namespace rae {
namespace {

std::atomic<std::size_t> g_decode_calls{0};

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_images(const Tensor& images, std::size_t patch, const char* op) {
  if (images.rank() != 4 || images.dim(1) != 1) {
    throw DimensionError(std::string(op) + ": expected [B, 1, H, W], got " + shape_str(images.shape()));
  }
  if (images.dim(2) % patch != 0 || images.dim(3) % patch != 0) {
    throw DimensionError(std::string(op) + ": image extents " + shape_str(images.shape()) +
                         " not divisible by patch " + std::to_string(patch));
  }
}

// Rows [begin, end) of a batch-major tensor.
Tensor rows_of(const Tensor& t, std::span<const std::size_t> idx) {
  const std::size_t width = t.numel() / t.dim(0);
  std::vector<double> out;
  out.reserve(idx.size() * width);
  const auto v = t.values();
  for (auto i : idx) out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>(i * width), v.begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
  Shape shape = t.shape();
  shape[0] = idx.size();
  return Tensor::from(std::move(shape), std::move(out));
}

struct Gaussian {
  Eigen::VectorXd mean;
  Mat cov;
};

Gaussian fit_gaussian(const Tensor& set) {
  const auto n = static_cast<Eigen::Index>(set.dim(0));
  const auto dim = static_cast<Eigen::Index>(set.numel() / set.dim(0));
  const Eigen::Map<const RowMat> x(set.values().data(), n, dim);
  Gaussian g;
  g.mean = x.colwise().mean().transpose();
  const RowMat centered = x.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  g.cov.diagonal().array() += kFrechetShrinkage;
  return g;
}

// Square root of a symmetric PSD matrix; negative eigenvalues clamp to 0.
Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (m + m.transpose()));
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

// tr((A B)^(1/2)) via the symmetric form A^(1/2) B A^(1/2).
double trace_sqrt_product(const Mat& a, const Mat& b) {
  const Mat ra = psd_sqrt(a);
  const Mat m = ra * b * ra;
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

bool lexicographically_less(const Gaussian& a, const Gaussian& b) {
  const auto* ma = a.mean.data();
  const auto* mb = b.mean.data();
  if (!std::equal(ma, ma + a.mean.size(), mb)) return std::lexicographical_compare(ma, ma + a.mean.size(), mb, mb + b.mean.size());
  return std::lexicographical_compare(a.cov.data(), a.cov.data() + a.cov.size(), b.cov.data(), b.cov.data() + b.cov.size());
}

}  // namespace

Tensor patchify(const Tensor& images, std::size_t patch) {
  check_images(images, patch, "patchify");
  const std::size_t b = images.dim(0);
  const std::size_t gh = images.dim(2) / patch;
  const std::size_t gw = images.dim(3) / patch;
  const Tensor grid = permute(reshape(images, {b, gh, patch, gw, patch}), {0, 1, 3, 2, 4});
  return reshape(grid, {b, gh * gw, patch * patch});
}

Tensor unpatchify(const Tensor& patches, std::size_t patch, std::size_t height, std::size_t width) {
  const std::size_t gh = height / patch;
  const std::size_t gw = width / patch;
  if (patches.rank() != 3 || patches.dim(1) != gh * gw || patches.dim(2) != patch * patch) {
    throw DimensionError("unpatchify: patches " + shape_str(patches.shape()) + " do not tile " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t b = patches.dim(0);
  const Tensor grid = permute(reshape(patches, {b, gh, gw, patch, patch}), {0, 1, 3, 2, 4});
  return reshape(grid, {b, 1, height, width});
}

// ---- encoder ----------------------------------------------------------------

FrozenEncoder::FrozenEncoder(const EncoderConfig& config) : config_(config) {
  if (config.patch == 0 || config.width == 0) throw ConfigError("encoder", "patch and width must be positive");
  const auto p2 = static_cast<Eigen::Index>(config.patch * config.patch);
  const auto d = static_cast<Eigen::Index>(config.width);
  Rng rng(config.seed);
  Mat g(p2, d);
  for (Eigen::Index i = 0; i < p2; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = rng.normal();
  }
  Mat q;
  if (d >= p2) {
    Eigen::HouseholderQR<Mat> qr(g.transpose());  // d x p2
    q = (qr.householderQ() * Mat::Identity(d, p2)).transpose();
  } else {
    Eigen::HouseholderQR<Mat> qr(g);
    q = qr.householderQ() * Mat::Identity(p2, d);
  }
  std::vector<double> values(static_cast<std::size_t>(p2 * d));
  Eigen::Map<RowMat>(values.data(), p2, d) = q;
  projection_ = Tensor::from({static_cast<std::size_t>(p2), config.width}, std::move(values));
}

Tensor FrozenEncoder::encode(const Tensor& images) const {
  check_images(images, config_.patch, "encode");
  const Tensor tokens = scale(matmul(add_scalar(patchify(images, config_.patch), -0.5), projection_), config_.gain);
  return config_.tanh ? tanh(tokens) : tokens;
}

std::uint64_t FrozenEncoder::fingerprint() const {
  return fnv1a(projection_.values().data(), projection_.values().size_bytes());
}

// ---- decoder ----------------------------------------------------------------

Decoder::Decoder(const DecoderConfig& config, std::size_t latent_width, std::size_t patch, std::size_t image_size,
                 std::uint64_t seed)
    : config_(config), latent_width_(latent_width), patch_(patch), image_size_(image_size) {
  if (image_size % patch != 0) throw ConfigError("decoder.patch", "image size must be divisible by the patch");
  Rng rng(seed);
  const std::size_t p2 = patch * patch;
  skip_ = Linear(latent_width, p2, rng);
  std::fill(skip_.bias.mutable_values().begin(), skip_.bias.mutable_values().end(), 0.5);
  params_.append("skip/", skip_.params());
  std::size_t in = latent_width;
  for (std::size_t i = 0; i < config.layers; ++i) {
    hidden_.emplace_back(in, config.hidden, rng);
    params_.append("hidden" + std::to_string(i) + "/", hidden_.back().params());
    in = config.hidden;
  }
  if (config.layers > 0) {
    out_ = Linear(config.hidden, p2, rng);
    params_.append("out/", out_.params());
  }
}

Tensor Decoder::decode(const Tensor& latents) const {
  if (latents.rank() != 3 || latents.dim(2) != latent_width_ ||
      latents.dim(1) != (image_size_ / patch_) * (image_size_ / patch_)) {
    throw DimensionError("decode: latents " + shape_str(latents.shape()) + " do not match the decoder");
  }
  g_decode_calls.fetch_add(1, std::memory_order_relaxed);
  Tensor patches = skip_(latents);
  if (!hidden_.empty()) {
    Tensor h = latents;
    for (const auto& layer : hidden_) h = gelu(layer(h));
    patches = add(patches, out_(h));
  }
  return unpatchify(patches, patch_, image_size_, image_size_);
}

std::size_t decode_call_count() { return g_decode_calls.load(std::memory_order_relaxed); }

// ---- losses -----------------------------------------------------------------

void LossWeights::validate() const {
  if (perceptual < 0.0) throw ConfigError("loss.omega_L", "must be nonnegative");
  if (gram < 0.0) throw ConfigError("loss.omega_G", "must be nonnegative");
  if (adversarial < 0.0) throw ConfigError("loss.omega_A", "must be nonnegative");
}

Tensor gram_loss(const Tensor& feat_a, const Tensor& feat_b) {
  if (feat_a.shape() != feat_b.shape() || feat_a.rank() != 3) {
    throw DimensionError("gram_loss: feature shapes " + shape_str(feat_a.shape()) + " and " +
                         shape_str(feat_b.shape()) + " differ or are not [B, N, d]");
  }
  const double norm = 1.0 / static_cast<double>(feat_a.dim(1) * feat_a.dim(2));
  const Tensor ga = scale(bmm(transpose_last(feat_a), feat_a), norm);
  const Tensor gb = scale(bmm(transpose_last(feat_b), feat_b), norm);
  return scale(sum(square(sub(ga, gb))), 1.0 / static_cast<double>(feat_a.dim(0)));
}

ReconLoss recon_loss(const Tensor& x, const Tensor& x_hat, const LossWeights& weights,
                     const FeatureExtractor& features, const Adversary& adversary, bool adversarial_active) {
  weights.validate();
  if (x.shape() != x_hat.shape()) {
    throw DimensionError("recon_loss: " + shape_str(x.shape()) + " vs " + shape_str(x_hat.shape()));
  }
  ReconLoss out;
  Tensor total = mean(abs(sub(x_hat, x)));
  out.l1 = total.item();
  if (weights.perceptual > 0.0 || weights.gram > 0.0) {
    const Tensor fx = features.features(x.detach());
    const Tensor fy = features.features(x_hat);
    if (weights.perceptual > 0.0) {
      const Tensor p = mean(square(sub(fy, fx)));
      out.perceptual = p.item();
      total = add(total, scale(p, weights.perceptual));
    }
    if (weights.gram > 0.0) {
      const Tensor g = gram_loss(fy, fx);
      out.gram = g.item();
      total = add(total, scale(g, weights.gram));
    }
  }
  if (weights.adversarial > 0.0 && adversarial_active) {
    const Tensor a = adversary.generator_loss(x_hat);
    out.adversarial = a.item();
    total = add(total, scale(a, weights.adversarial));
  }
  out.total = total;
  return out;
}

Tensor noise_augment(const Tensor& latents, const NoiseAugConfig& config, Rng& rng, std::vector<double>* sigmas) {
  if (config.tau < 0.0) throw ConfigError("noise.tau", "must be nonnegative");
  const std::size_t rows = latents.rank() > 0 ? latents.dim(0) : 1;
  if (sigmas) sigmas->assign(rows, 0.0);
  if (!config.enabled || config.tau == 0.0) return latents.detach();
  const std::size_t width = latents.numel() / rows;
  std::vector<double> out(latents.values().begin(), latents.values().end());
  for (std::size_t b = 0; b < rows; ++b) {
    const double sigma = std::fabs(config.tau * rng.normal());
    if (sigmas) (*sigmas)[b] = sigma;
    for (std::size_t i = b * width; i < (b + 1) * width; ++i) out[i] += sigma * rng.normal();
  }
  return Tensor::from(latents.shape(), std::move(out));
}

double frechet_feature_distance(const Tensor& set_a, const Tensor& set_b) {
  if (!set_a.defined() || !set_b.defined() || set_a.rank() == 0 || set_b.rank() == 0 || set_a.dim(0) < 2 ||
      set_b.dim(0) < 2) {
    throw ArgumentError("frechet_feature_distance: each set needs at least 2 samples");
  }
  if (set_a.numel() / set_a.dim(0) != set_b.numel() / set_b.dim(0)) {
    throw DimensionError("frechet_feature_distance: feature dimensions differ");
  }
  Gaussian a = fit_gaussian(set_a);
  Gaussian b = fit_gaussian(set_b);
  // Fixed evaluation order so d(a, b) and d(b, a) are bitwise equal.
  if (lexicographically_less(b, a)) std::swap(a, b);
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double trace_term = a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt_product(a.cov, b.cov);
  return std::max(0.0, mean_term + trace_term);
}

// ---- compressed baseline ----------------------------------------------------

CompressedAutoencoder::CompressedAutoencoder(std::size_t patch, std::size_t width, std::uint64_t seed)
    : patch_(patch), width_(width) {
  Rng rng(seed);
  enc_ = Linear(patch * patch, width, rng);
  dec_ = Linear(width, patch * patch, rng);
  params_.append("enc/", enc_.params());
  params_.append("dec/", dec_.params());
}

Tensor CompressedAutoencoder::encode(const Tensor& images) const {
  return enc_(add_scalar(patchify(images, patch_), -0.5));
}

Tensor CompressedAutoencoder::decode(const Tensor& latents) const {
  const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(latents.dim(1))))) * patch_;
  return unpatchify(add_scalar(dec_(latents), 0.5), patch_, side, side);
}

void CompressedAutoencoder::fit(const Tensor& images, std::size_t epochs, std::size_t batch, double lr,
                                std::uint64_t seed) {
  const std::size_t n = images.dim(0);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  AdamW opt(params_.tensors(), {lr, 0.9, 0.95, 0.0, kAdamEps});
  CosineWarmupSchedule sched(lr, 0.1 * lr, static_cast<std::int64_t>(epochs * steps_per_epoch), 0.05);
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t lo = s * batch;
      const std::size_t hi = std::min(n, lo + batch);
      const Tensor x = rows_of(images, std::span(order).subspan(lo, hi - lo));
      opt.zero_grad();
      opt.set_lr(sched.lr_at(step++));
      const Tensor loss = mean(abs(sub(decode(encode(x)), x)));
      backward(loss);
      opt.step();
    }
  }
}

// ---- decoder training -------------------------------------------------------

void DecoderTrainConfig::validate() const {
  mix.validate();
  weights.validate();
  if (train_count == 0) throw ConfigError("decoder.train_count", "must be positive");
  if (val_count == 0) throw ConfigError("decoder.val_count", "must be positive");
  if (batch == 0) throw ConfigError("decoder.batch", "must be positive");
  if (!(lr > 0.0)) throw ConfigError("decoder.lr", "must be positive");
  if (noise.tau < 0.0) throw ConfigError("decoder.noise_tau", "must be nonnegative");
  if (kImageSize % encoder.patch != 0) throw ConfigError("encoder.patch", "must divide the image size");
}

double reconstruction_l1(const FrozenEncoder& encoder, const Decoder& decoder, const Tensor& images,
                         double perturb_sigma, std::uint64_t seed) {
  NoGradGuard no_grad;
  const std::size_t n = images.dim(0);
  constexpr std::size_t kChunk = 128;
  double total = 0.0;
  Rng rng(seed);
  std::vector<std::size_t> idx;
  for (std::size_t lo = 0; lo < n; lo += kChunk) {
    idx.resize(std::min(kChunk, n - lo));
    std::iota(idx.begin(), idx.end(), lo);
    const Tensor x = rows_of(images, idx);
    Tensor z = encoder.encode(x);
    if (perturb_sigma > 0.0) {
      auto zv = z.mutable_values();
      for (auto& v : zv) v += perturb_sigma * rng.normal();
    }
    const Tensor y = decoder.decode(z);
    total += sum(abs(sub(y, x))).item();
  }
  return total / static_cast<double>(images.numel());
}

DecoderTrainResult train_decoder(const DecoderTrainConfig& config, std::size_t epochs, std::uint64_t seed) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const FrozenEncoder encoder(config.encoder);
  const EncoderFeatures features(encoder);
  const ZeroAdversary adversary;
  DecoderTrainResult result{Decoder(config.decoder, config.encoder.width, config.encoder.patch, kImageSize,
                                    derive_seed(seed, 0)),
                            ExperimentReport()};
  auto& decoder = result.decoder;
  auto& report = result.report;

  const ImageSet train = sample_domain_images(config.mix, config.train_count, derive_seed(seed, 1));
  std::vector<ImageSet> val;
  for (auto d : kAllDomains) {
    val.push_back(sample_domain_images(DomainMix::only(d), config.val_count, derive_seed(config.val_seed, static_cast<std::uint64_t>(d))));
  }
  Tensor train_latents;
  {
    NoGradGuard no_grad;
    train_latents = encoder.encode(train.images);
  }

  auto log_validation = [&](std::int64_t step, std::int64_t epoch) {
    double all = 0.0;
    for (auto d : kAllDomains) {
      const double v = reconstruction_l1(encoder, decoder, val[static_cast<std::size_t>(d)].images);
      report.add(step, epoch, "val/l1/" + std::string(domain_name(d)), v);
      all += v;
    }
    report.add(step, epoch, "val/l1/all", all / 3.0);
  };

  const std::size_t n = config.train_count;
  const std::size_t steps_per_epoch = (n + config.batch - 1) / config.batch;
  AdamW opt(decoder.params().tensors(), {config.lr, config.beta1, config.beta2, 0.0, kAdamEps});
  CosineWarmupSchedule sched(config.lr, config.min_lr, static_cast<std::int64_t>(epochs * steps_per_epoch),
                             config.warmup_ratio);
  Rng rng(derive_seed(seed, 2));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  // Step-0 training loss over the full set, then validation.
  {
    NoGradGuard no_grad;
    const Tensor x_hat = decoder.decode(train_latents);
    const auto l = recon_loss(train.images, x_hat, config.weights, features, adversary, config.adv_start_epoch == 0);
    report.add(0, 0, "train/loss", l.total.item());
  }
  log_validation(0, 0);

  std::int64_t step = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t lo = s * config.batch;
      const std::size_t hi = std::min(n, lo + config.batch);
      const auto idx = std::span(order).subspan(lo, hi - lo);
      const Tensor x = rows_of(train.images, idx);
      const Tensor z = noise_augment(rows_of(train_latents, idx), config.noise, rng);
      opt.zero_grad();
      opt.set_lr(sched.lr_at(step));
      const auto l = recon_loss(x, decoder.decode(z), config.weights, features, adversary, e >= config.adv_start_epoch);
      backward(l.total);
      opt.step();
      ++step;
      epoch_loss += l.total.item() * static_cast<double>(hi - lo);
    }
    report.add(step, static_cast<std::int64_t>(e + 1), "train/loss", epoch_loss / static_cast<double>(n));
    log_validation(step, static_cast<std::int64_t>(e + 1));
  }
  report.add_phase_time("train_decoder",
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return result;
}

}  // namespace rae
