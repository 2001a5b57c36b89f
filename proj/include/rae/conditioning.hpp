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
#include <span>
#include <string>
#include <vector>

#include "rae/datagen.hpp"
#include "rae/denoiser.hpp"
#include "rae/flow.hpp"
#include "rae/nn.hpp"
#include "rae/report.hpp"
#include "rae/schedule.hpp"

namespace rae {

struct ConditionerConfig {
  std::size_t num_conditions = 4;
  std::size_t cond_dim = 32;
  /// Metadata only: the query-token count a language-model conditioner would use.
  std::size_t num_query_tokens = 256;

  void validate() const;
};

/// Learned condition-embedding table, trained jointly with the denoiser.
class Conditioner {
 public:
  Conditioner(const ConditionerConfig& config, std::uint64_t seed);

  /// [len(ids), cond_dim]. Throws ArgumentError for ids out of range.
  Tensor embed(std::span<const std::size_t> ids) const;
  const ConditionerConfig& config() const { return config_; }
  const Tensor& table() const { return table_; }
  ParamList params() const;

 private:
  ConditionerConfig config_;
  Tensor table_;
};

/// Returns the embedding row for one condition id.
Tensor embed_condition(std::size_t id, const Conditioner& conditioner);

/// Denoiser driven by condition ids through a Conditioner.
class ConditionalDenoiser : public VelocityModel {
 public:
  ConditionalDenoiser(const DenoiserConfig& denoiser, const ConditionerConfig& conditioner, std::uint64_t seed);

  Tensor velocity(const Tensor& x_t, std::span<const double> t,
                  std::span<const std::size_t> conditions) const override;

  Denoiser& denoiser() { return denoiser_; }
  const Denoiser& denoiser() const { return denoiser_; }
  const Conditioner& conditioner() const { return conditioner_; }
  /// Denoiser parameters under "denoiser/", the table under "conditioner/".
  ParamList params() const;

  void save(Checkpoint& ckpt) const { params().save(ckpt, ""); }
  void load(const Checkpoint& ckpt) {
    auto p = params();
    p.load(ckpt, "");
  }

 private:
  Denoiser denoiser_;
  Conditioner conditioner_;
};

struct VerifierScore {
  std::size_t candidate = 0;
  double score = 0.0;
  std::string verifier;
};

/// Scores a single [N, d] latent for a condition; higher is better. Scores
/// are comparable within one verifier only.
class Verifier {
 public:
  virtual ~Verifier() = default;
  virtual std::string name() const = 0;
  virtual double score(const Tensor& latent, std::size_t cond) const = 0;
};

/// Log-density under the condition's true mixture.
class OracleVerifier : public Verifier {
 public:
  explicit OracleVerifier(const MixtureSpec& spec) : spec_(spec) {}
  std::string name() const override { return "oracle"; }
  double score(const Tensor& latent, std::size_t cond) const override;

 private:
  const MixtureSpec& spec_;
};

VerifierScore oracle_verifier(const Tensor& latent, std::size_t cond, const MixtureSpec& spec,
                              std::size_t candidate = 0);

/// Condition classifier over token-mean-pooled latents:
/// mean over tokens -> Linear -> GELU -> Linear -> logits.
class Probe {
 public:
  Probe(LatentShape shape, std::size_t num_conditions, std::size_t hidden, std::uint64_t seed);
  /// All-zero probe (uniform outputs), marked trained.
  static Probe uniform(LatentShape shape, std::size_t num_conditions);

  /// latents [B, N, d] -> log-probabilities [B, C].
  Tensor log_probs(const Tensor& latents) const;

  struct FitStats {
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
  };
  /// Fits on fresh mixture samples; validation accuracy on a held-out draw.
  FitStats fit(const MixtureSpec& spec, std::size_t steps, std::size_t batch, double lr, std::uint64_t seed);

  bool trained() const { return trained_; }
  std::size_t num_conditions() const { return num_conditions_; }
  ParamList params() const;

 private:
  LatentShape shape_;
  std::size_t num_conditions_;
  Linear fc1_, fc2_;
  bool trained_ = false;
};

/// Log-probability the probe assigns to the queried condition.
class ConfidenceVerifier : public Verifier {
 public:
  /// Throws ContractError if the probe is untrained.
  explicit ConfidenceVerifier(const Probe& probe);
  std::string name() const override { return "confidence"; }
  double score(const Tensor& latent, std::size_t cond) const override;

 private:
  const Probe& probe_;
};

VerifierScore confidence_verifier(const Tensor& latent, std::size_t cond, const Probe& probe,
                                  std::size_t candidate = 0);

/// Indices of the k highest scores, descending; ties go to the lower index.
std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t k);

struct Selection {
  std::vector<std::size_t> indices;
  std::vector<VerifierScore> scores;  // all candidates, input order
  std::vector<Tensor> latents;        // selected, same handles as the inputs
};

/// Best k of n candidates under a verifier. Throws ArgumentError unless
/// 1 <= k <= n.
Selection best_k_of_n(const std::vector<Tensor>& candidates, const Verifier& verifier, std::size_t cond,
                      std::size_t k);

struct TtsConfig {
  std::size_t k = 4;
  std::vector<std::size_t> n_grid{8, 16, 32};
  std::size_t trials = 50;
  std::size_t sampler_steps = 50;
};

struct TtsResult {
  ExperimentReport report;
  /// selected_quality[g][trial]: mean oracle score of the k selected
  /// candidates at n_grid[g].
  std::vector<std::vector<double>> selected_quality;
  std::vector<std::vector<double>> selected_score;
};

/// Best-k-of-n test-time scaling over generated latents. Each trial draws
/// max(n_grid) candidates for condition (trial mod C) from one trial seed, so
/// the candidate pool for a smaller n is a prefix of the pool for a larger n.
/// Works purely in latent space.
TtsResult tts_experiment(const VelocityModel& model, const ShiftedSchedule& sched, LatentShape shape,
                         const Verifier& verifier, const MixtureSpec& truth, const TtsConfig& config,
                         std::uint64_t seed);

}  // namespace rae
