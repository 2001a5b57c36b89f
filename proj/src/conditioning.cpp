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

#include "rae/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rae/error.hpp"
#include "rae/optim.hpp"
#include "rae/rng.hpp"

namespace rae {

void ConditionerConfig::validate() const {
  if (num_conditions == 0) throw ConfigError("conditioner.num_conditions", "must be at least 1");
  if (cond_dim == 0) throw ConfigError("conditioner.cond_dim", "must be at least 1");
}

Conditioner::Conditioner(const ConditionerConfig& config, std::uint64_t seed) : config_(config) {
  config.validate();
  Rng rng(seed);
  std::vector<double> v(config.num_conditions * config.cond_dim);
  for (auto& x : v) x = rng.normal();
  table_ = Tensor::from({config.num_conditions, config.cond_dim}, std::move(v), true);
}

Tensor Conditioner::embed(std::span<const std::size_t> ids) const {
  for (std::size_t id : ids) {
    if (id >= config_.num_conditions) {
      throw ArgumentError("condition id " + std::to_string(id) + " out of range [0, " +
                          std::to_string(config_.num_conditions) + ")");
    }
  }
  return embedding(table_, ids);
}

ParamList Conditioner::params() const {
  ParamList p;
  p.add("table", table_);
  return p;
}

Tensor embed_condition(std::size_t id, const Conditioner& conditioner) {
  const std::size_t ids[] = {id};
  return reshape(conditioner.embed(ids), {conditioner.config().cond_dim});
}

ConditionalDenoiser::ConditionalDenoiser(const DenoiserConfig& denoiser, const ConditionerConfig& conditioner,
                                         std::uint64_t seed)
    : denoiser_(Denoiser::build(denoiser, derive_seed(seed, 0))), conditioner_(conditioner, derive_seed(seed, 1)) {
  if (denoiser.cond_dim != conditioner.cond_dim) {
    throw ConfigError("conditioner.cond_dim", "must match denoiser.cond_dim");
  }
}

Tensor ConditionalDenoiser::velocity(const Tensor& x_t, std::span<const double> t,
                                     std::span<const std::size_t> conditions) const {
  if (conditions.size() != x_t.dim(0)) {
    throw DimensionError("ConditionalDenoiser: need one condition per batch row");
  }
  return denoiser_.forward(x_t, t, conditioner_.embed(conditions));
}

ParamList ConditionalDenoiser::params() const {
  ParamList p;
  p.append("denoiser/", denoiser_.params());
  p.append("conditioner/", conditioner_.params());
  return p;
}

double OracleVerifier::score(const Tensor& latent, std::size_t cond) const {
  return mixture_log_density(spec_, cond, latent.values());
}

VerifierScore oracle_verifier(const Tensor& latent, std::size_t cond, const MixtureSpec& spec,
                              std::size_t candidate) {
  return {candidate, OracleVerifier(spec).score(latent, cond), "oracle"};
}

Probe::Probe(LatentShape shape, std::size_t num_conditions, std::size_t hidden, std::uint64_t seed)
    : shape_(shape), num_conditions_(num_conditions) {
  if (num_conditions == 0) throw ArgumentError("Probe: need at least one condition");
  Rng rng(seed);
  fc1_ = Linear(shape.width, hidden, rng);
  fc2_ = Linear(hidden, num_conditions, rng);
}

Probe Probe::uniform(LatentShape shape, std::size_t num_conditions) {
  Probe p(shape, num_conditions, 1, 0);
  Rng rng(0);
  p.fc1_ = Linear(shape.width, 1, rng, Init::kZero);
  p.fc2_ = Linear(1, num_conditions, rng, Init::kZero);
  p.trained_ = true;
  return p;
}

Tensor Probe::log_probs(const Tensor& latents) const {
  if (latents.rank() != 3 || latents.dim(2) != shape_.width) {
    throw DimensionError("Probe: expected [B, N, " + std::to_string(shape_.width) + "], got " +
                         shape_str(latents.shape()));
  }
  return log_softmax(fc2_(gelu(fc1_(mean_axis(latents, 1)))), 1);
}

ParamList Probe::params() const {
  ParamList p;
  p.append("fc1/", fc1_.params());
  p.append("fc2/", fc2_.params());
  return p;
}

namespace {

double accuracy(const Tensor& log_probs, std::span<const std::size_t> labels) {
  const std::size_t c = log_probs.dim(1);
  const auto& v = log_probs.values();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = v.begin() + static_cast<std::ptrdiff_t>(i * c);
    const auto best = static_cast<std::size_t>(std::max_element(row, row + static_cast<std::ptrdiff_t>(c)) - row);
    hits += best == labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  std::vector<double> v(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) v[i * classes + labels[i]] = 1.0;
  return Tensor::from({labels.size(), classes}, std::move(v));
}

}  // namespace

Probe::FitStats Probe::fit(const MixtureSpec& spec, std::size_t steps, std::size_t batch, double lr,
                           std::uint64_t seed) {
  if (spec.num_conditions() != num_conditions_ || spec.shape.width != shape_.width) {
    throw ArgumentError("Probe::fit: mixture does not match the probe shape");
  }
  AdamW opt(params().tensors(), AdamWOptions{lr, 0.9, 0.95, 0.0, kAdamEps});
  FitStats stats;
  for (std::size_t s = 0; s < steps; ++s) {
    const LatentBatch data = sample_conditional_batch(spec, batch, derive_seed(seed, s));
    opt.zero_grad();
    const Tensor lp = log_probs(data.latents);
    const Tensor loss = neg(mean(sum_axis(mul(lp, one_hot(data.conditions, num_conditions_)), 1)));
    backward(loss);
    opt.step();
  }
  NoGradGuard ng;
  const LatentBatch train = sample_conditional_batch(spec, 256, derive_seed(seed, steps));
  stats.train_accuracy = accuracy(log_probs(train.latents), train.conditions);
  const LatentBatch val = sample_conditional_batch(spec, 256, derive_seed(seed ^ 0x9e3779b97f4a7c15ULL, 0));
  stats.val_accuracy = accuracy(log_probs(val.latents), val.conditions);
  trained_ = true;
  return stats;
}

ConfidenceVerifier::ConfidenceVerifier(const Probe& probe) : probe_(probe) {
  if (!probe.trained()) throw ContractError("confidence verifier needs a trained probe");
}

double ConfidenceVerifier::score(const Tensor& latent, std::size_t cond) const {
  if (cond >= probe_.num_conditions()) throw ArgumentError("condition id out of range");
  NoGradGuard ng;
  Shape s = latent.shape();
  if (s.size() == 2) s.insert(s.begin(), 1);
  const Tensor lp = probe_.log_probs(reshape(latent, s));
  return lp.values()[cond];
}

VerifierScore confidence_verifier(const Tensor& latent, std::size_t cond, const Probe& probe,
                                  std::size_t candidate) {
  return {candidate, ConfidenceVerifier(probe).score(latent, cond), "confidence"};
}

std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t k) {
  if (k == 0) throw ArgumentError("best_k_of_n: k must be at least 1");
  if (k > scores.size()) {
    throw ArgumentError("best_k_of_n: k = " + std::to_string(k) + " exceeds n = " + std::to_string(scores.size()));
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(k);
  return idx;
}

Selection best_k_of_n(const std::vector<Tensor>& candidates, const Verifier& verifier, std::size_t cond,
                      std::size_t k) {
  Selection sel;
  std::vector<double> raw;
  raw.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = verifier.score(candidates[i], cond);
    raw.push_back(s);
    sel.scores.push_back({i, s, verifier.name()});
  }
  sel.indices = select_top_k(raw, k);
  for (std::size_t i : sel.indices) sel.latents.push_back(candidates[i]);
  return sel;
}

TtsResult tts_experiment(const VelocityModel& model, const ShiftedSchedule& sched, LatentShape shape,
                         const Verifier& verifier, const MixtureSpec& truth, const TtsConfig& config,
                         std::uint64_t seed) {
  if (config.n_grid.empty()) throw ArgumentError("tts: empty n grid");
  for (std::size_t g = 0; g < config.n_grid.size(); ++g) {
    if (config.n_grid[g] < config.k) throw ArgumentError("tts: every n must be at least k");
    if (g > 0 && config.n_grid[g] <= config.n_grid[g - 1]) throw ArgumentError("tts: n grid must ascend");
  }
  const std::size_t max_n = config.n_grid.back();
  const OracleVerifier oracle(truth);

  TtsResult out;
  out.report = ExperimentReport("", seed);
  out.selected_quality.assign(config.n_grid.size(), {});
  out.selected_score.assign(config.n_grid.size(), {});
  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    const std::size_t cond = trial % truth.num_conditions();
    const std::vector<std::size_t> conds(max_n, cond);
    const LatentBatch pool =
        euler_sample(model, sched, config.sampler_steps, max_n, derive_seed(seed, trial), conds, shape);
    std::vector<Tensor> candidates;
    std::vector<double> scores, quality;
    for (std::size_t i = 0; i < max_n; ++i) {
      candidates.push_back(batch_row(pool.latents, i));
      scores.push_back(verifier.score(candidates.back(), cond));
      quality.push_back(oracle.score(candidates.back(), cond));
    }
    for (std::size_t g = 0; g < config.n_grid.size(); ++g) {
      const std::size_t n = config.n_grid[g];
      const auto picked = select_top_k(std::span<const double>(scores.data(), n), config.k);
      double q = 0.0, s = 0.0;
      for (std::size_t i : picked) {
        q += quality[i];
        s += scores[i];
      }
      q /= static_cast<double>(config.k);
      s /= static_cast<double>(config.k);
      out.selected_quality[g].push_back(q);
      out.selected_score[g].push_back(s);
      out.report.add(static_cast<std::int64_t>(trial), 0, "tts/n" + std::to_string(n) + "/quality", q);
    }
  }
  for (std::size_t g = 0; g < config.n_grid.size(); ++g) {
    const auto& q = out.selected_quality[g];
    const auto& s = out.selected_score[g];
    const double nq = q.empty() ? 0.0 : static_cast<double>(q.size());
    const std::string stem = "tts/n" + std::to_string(config.n_grid[g]);
    out.report.add(static_cast<std::int64_t>(config.trials), 0, stem + "/mean_quality",
                   nq > 0 ? std::accumulate(q.begin(), q.end(), 0.0) / nq : 0.0);
    out.report.add(static_cast<std::int64_t>(config.trials), 0, stem + "/mean_" + verifier.name() + "_score",
                   nq > 0 ? std::accumulate(s.begin(), s.end(), 0.0) / nq : 0.0);
  }
  return out;
}

}  // namespace rae
