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

#include "rae/training.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <numeric>

#include "rae/checkpoint.hpp"
#include "rae/error.hpp"
#include "rae/flow.hpp"
#include "rae/optim.hpp"
#include "rae/rng.hpp"

namespace rae {
namespace {

constexpr std::uint64_t kTimestepStream = 0x7115;
constexpr std::uint64_t kNoiseStream = 0x4e01;
constexpr std::uint64_t kDataStream = 0xda7a;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

LatentBatch MixtureSource::batch(std::size_t step, std::size_t size, std::uint64_t seed) const {
  return sample_conditional_batch(spec_, size, derive_seed(seed, step));
}

FixedLatentSource::FixedLatentSource(Tensor latents, std::vector<std::size_t> conditions)
    : latents_(std::move(latents)), conditions_(std::move(conditions)) {
  if (latents_.rank() != 3 || latents_.dim(0) != conditions_.size()) {
    throw DimensionError("FixedLatentSource: need [K, N, d] latents and K conditions");
  }
}

LatentBatch FixedLatentSource::batch(std::size_t step, std::size_t size, std::uint64_t seed) const {
  const std::size_t k = latents_.dim(0);
  if (size >= k) return {latents_.detach(), conditions_};
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, step));
  for (std::size_t i = 0; i < size; ++i) std::swap(order[i], order[i + rng.uniform_int(k - i)]);
  std::vector<Tensor> rows;
  LatentBatch out;
  for (std::size_t i = 0; i < size; ++i) {
    rows.push_back(batch_row(latents_, order[i]));
    out.conditions.push_back(conditions_[order[i]]);
  }
  out.latents = stack_rows(rows);
  return out;
}

Evaluator sliced_wasserstein_evaluator(const ExperimentConfig& config, const MixtureSpec& truth) {
  const std::size_t c = truth.num_conditions();
  const std::size_t per = std::max<std::size_t>(2, config.train.eval_samples / c);
  std::vector<Tensor> reference;
  for (std::size_t k = 0; k < c; ++k) {
    reference.push_back(sample_latents(truth, k, per, derive_seed(config.train.eval_seed, 2 + k)).latents);
  }
  const ShiftedSchedule sched = config.make_schedule();
  const LatentShape shape = config.latent_shape();
  const std::size_t steps = config.schedule.sampler_steps;
  const std::size_t projections = config.train.sw_projections;
  const std::uint64_t eval_seed = config.train.eval_seed;
  return [=](std::int64_t step, const ConditionalDenoiser& model, ExperimentReport& report) {
    std::vector<std::size_t> conds(per * c);
    for (std::size_t i = 0; i < conds.size(); ++i) conds[i] = i / per;
    const LatentBatch gen = euler_sample(model, sched, steps, conds.size(), derive_seed(eval_seed, 1), conds, shape);
    double sw = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      sw += sliced_wasserstein(slice(gen.latents, 0, k * per, per), reference[k], projections,
                               derive_seed(eval_seed, 0));
    }
    report.add(step, 0, "eval/sw", sw / static_cast<double>(c));
  };
}

TrainDitResult train_dit(const ExperimentConfig& config, const LatentSource& data, const Evaluator& eval,
                         const ConditionalDenoiser* init) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainDitResult result{ConditionalDenoiser(config.resolved_denoiser(), config.conditioner(), config.seed),
                        ExperimentReport(config.hash(), config.seed)};
  auto& model = result.model;
  auto& report = result.report;
  if (init) {
    const auto& src = init->params().items();
    const auto& dst = model.params().items();
    if (src.size() != dst.size()) throw ArgumentError("train_dit: initial model has a different layout");
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i].second.shape() != dst[i].second.shape()) {
        throw ArgumentError("train_dit: initial model has a different layout");
      }
      Tensor handle = dst[i].second;
      auto out = handle.mutable_values();
      const auto in = src[i].second.values();
      std::copy(in.begin(), in.end(), out.begin());
    }
  }

  const ShiftedSchedule sched = config.make_schedule();
  const auto steps = static_cast<std::int64_t>(config.train.steps);
  AdamW opt(model.params().tensors(),
            {config.optim.lr, config.optim.beta1, config.optim.beta2, config.optim.weight_decay, kAdamEps});
  const CosineWarmupSchedule lr(config.optim.lr, config.optim.min_lr, std::max<std::int64_t>(steps, 1),
                                config.optim.warmup_ratio);
  const auto log_every = static_cast<std::int64_t>(config.train.log_interval);
  const auto eval_every = static_cast<std::int64_t>(config.train.eval_interval);

  double eval_seconds = 0.0;
  auto run_eval = [&](std::int64_t step) {
    if (!eval) return;
    const auto te = std::chrono::steady_clock::now();
    eval(step, model, report);
    eval_seconds += seconds_since(te);
  };

  double window = 0.0;
  std::int64_t window_count = 0;
  for (std::int64_t s = 0; s < steps; ++s) {
    if (s % eval_every == 0) run_eval(s);
    const LatentBatch batch =
        data.batch(static_cast<std::size_t>(s), config.train.batch, derive_seed(config.seed ^ kDataStream, 0));
    const std::size_t b = batch.size();
    Rng trng(derive_seed(config.seed ^ kTimestepStream, static_cast<std::uint64_t>(s)));
    std::vector<double> t(b);
    for (auto& v : t) v = sample_train_timestep(sched, trng);
    const Tensor eps = seeded_normal(batch.latents.shape(), derive_seed(config.seed ^ kNoiseStream, static_cast<std::uint64_t>(s)));
    const FlowSample fs = interpolate(batch.latents, eps, t);

    opt.zero_grad();
    opt.set_lr(lr.lr_at(s));
    const Tensor loss = fm_loss(model, fs, batch.conditions);
    backward(loss);
    opt.step();

    window += loss.item();
    ++window_count;
    if (s % log_every == 0) {
      report.add(s, 0, "train/loss", window / static_cast<double>(window_count));
      window = 0.0;
      window_count = 0;
    }
  }
  run_eval(steps);
  report.add_phase_time("train", seconds_since(t0) - eval_seconds);
  report.add_phase_time("eval", eval_seconds);
  return result;
}

TrainDitResult train_dit(const ExperimentConfig& config) {
  const MixtureSpec spec = config.data.resolve();
  if (spec.num_conditions() != config.data.num_conditions || !(spec.shape == config.latent_shape())) {
    throw ConfigError("data.spec", "mixture spec disagrees with data.num_conditions/tokens/width");
  }
  const MixtureSource source(spec);
  return train_dit(config, source, sliced_wasserstein_evaluator(config, spec));
}

void write_run(const std::filesystem::path& dir, const ExperimentConfig& config, const ConditionalDenoiser& model,
               const ExperimentReport& report) {
  std::filesystem::create_directories(dir);
  Checkpoint ckpt;
  model.save(ckpt);
  ckpt.save(dir / "checkpoint.raet");
  report.write(dir);
  std::ofstream lock(dir / "config.lock", std::ios::binary);
  lock << config.canonical();
  if (!lock) throw IoError("cannot write " + (dir / "config.lock").string());
}

ConditionalDenoiser load_model(const ExperimentConfig& config, const std::filesystem::path& checkpoint) {
  ConditionalDenoiser model(config.resolved_denoiser(), config.conditioner(), config.seed);
  model.load(Checkpoint::load(checkpoint));
  return model;
}

ExperimentReport evaluate(const ExperimentConfig& config, const ConditionalDenoiser* model, const Decoder* decoder,
                          const std::vector<std::string>& metrics, std::uint64_t eval_seed) {
  for (const auto& m : metrics) {
    if (std::find(eval_metric_names().begin(), eval_metric_names().end(), m) == eval_metric_names().end()) {
      throw ArgumentError("unknown metric '" + m + "'");
    }
  }
  ExperimentReport report(config.hash(), eval_seed);
  const auto t0 = std::chrono::steady_clock::now();
  NoGradGuard no_grad;
  const bool need_samples = std::count(metrics.begin(), metrics.end(), "sliced_wasserstein") +
                                std::count(metrics.begin(), metrics.end(), "frechet_feature_distance") >
                            0;
  Tensor generated, truth;
  if (need_samples) {
    if (!model) throw ArgumentError("evaluate: latent metrics need a model checkpoint");
    const MixtureSpec spec = config.data.resolve();
    const std::size_t c = spec.num_conditions();
    const std::size_t per = std::max<std::size_t>(2, config.train.eval_samples / c);
    std::vector<std::size_t> conds(per * c);
    for (std::size_t i = 0; i < conds.size(); ++i) conds[i] = i / per;
    generated = euler_sample(*model, config.make_schedule(), config.schedule.sampler_steps, conds.size(),
                             derive_seed(eval_seed, 1), conds, config.latent_shape())
                    .latents;
    std::vector<Tensor> parts;
    for (std::size_t k = 0; k < c; ++k) {
      parts.push_back(sample_latents(spec, k, per, derive_seed(eval_seed, 2 + k)).latents);
    }
    truth = concat(parts, 0);
  }
  for (const auto& m : metrics) {
    if (m == "sliced_wasserstein") {
      report.add(0, 0, "eval/sliced_wasserstein",
                 sliced_wasserstein(generated, truth, config.train.sw_projections, derive_seed(eval_seed, 0)));
    } else if (m == "frechet_feature_distance") {
      report.add(0, 0, "eval/frechet_feature_distance", frechet_feature_distance(generated, truth));
    } else if (m == "recon_l1") {
      if (!decoder) throw ArgumentError("evaluate: recon_l1 needs a decoder checkpoint");
      const FrozenEncoder encoder(config.decoder.encoder);
      const ImageSet images = sample_domain_images(config.decoder.mix, config.decoder.val_count, eval_seed);
      report.add(0, 0, "eval/recon_l1", reconstruction_l1(encoder, *decoder, images.images));
    }
  }
  report.add_phase_time("eval", seconds_since(t0));
  return report;
}

DirLock::DirLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
  std::filesystem::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) throw IoError("output directory is locked by another run: " + path_.string());
    throw IoError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
  }
  ::close(fd);
}

DirLock::~DirLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace rae
