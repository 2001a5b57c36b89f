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
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rae/autoencoder.hpp"
#include "rae/conditioning.hpp"
#include "rae/config.hpp"
#include "rae/report.hpp"

namespace rae {

/// Supplies training batches of latents. Must be deterministic in
/// (step, size, seed).
class LatentSource {
 public:
  virtual ~LatentSource() = default;
  virtual LatentBatch batch(std::size_t step, std::size_t size, std::uint64_t seed) const = 0;
};

/// Fresh mixture samples every step.
class MixtureSource : public LatentSource {
 public:
  explicit MixtureSource(const MixtureSpec& spec) : spec_(spec) {}
  LatentBatch batch(std::size_t step, std::size_t size, std::uint64_t seed) const override;

 private:
  const MixtureSpec& spec_;
};

/// A fixed latent dataset. Batches are drawn without replacement; a batch
/// at least as large as the dataset is the whole dataset in order.
class FixedLatentSource : public LatentSource {
 public:
  FixedLatentSource(Tensor latents, std::vector<std::size_t> conditions);
  LatentBatch batch(std::size_t step, std::size_t size, std::uint64_t seed) const override;
  std::size_t size() const { return latents_.dim(0); }

 private:
  Tensor latents_;
  std::vector<std::size_t> conditions_;
};

/// Called with the number of completed updates.
using Evaluator = std::function<void(std::int64_t step, const ConditionalDenoiser& model, ExperimentReport& report)>;

/// Logs eval/sw: mean over conditions of the sliced Wasserstein distance
/// between generated and fresh ground-truth latents. Uses only the eval seed.
Evaluator sliced_wasserstein_evaluator(const ExperimentConfig& config, const MixtureSpec& truth);

struct TrainDitResult {
  ConditionalDenoiser model;
  ExperimentReport report;
};

/// Flow-matching training. Logs train/loss at step 0 and then the mean loss
/// of each log_interval window; calls `eval` at step 0, every eval_interval
/// updates and after the last update. `init`, when given, is copied as the
/// starting point.
TrainDitResult train_dit(const ExperimentConfig& config, const LatentSource& data, const Evaluator& eval,
                         const ConditionalDenoiser* init = nullptr);

/// Default task: fresh samples from the configured mixture, eval/sw.
TrainDitResult train_dit(const ExperimentConfig& config);

/// Writes checkpoint.raet, metrics.jsonl, timing.json and config.lock.
void write_run(const std::filesystem::path& dir, const ExperimentConfig& config, const ConditionalDenoiser& model,
               const ExperimentReport& report);

ConditionalDenoiser load_model(const ExperimentConfig& config, const std::filesystem::path& checkpoint);

inline const std::vector<std::string>& eval_metric_names() {
  static const std::vector<std::string> names{"frechet_feature_distance", "recon_l1", "sliced_wasserstein"};
  return names;
}

/// Computes the requested metrics on freshly generated data drawn from
/// `eval_seed` only. sliced_wasserstein and frechet_feature_distance
/// compare model samples with ground-truth latents (need `model`); recon_l1
/// is the decoder's validation reconstruction error (needs `decoder`).
/// Throws ArgumentError for unknown names or a missing model/decoder.
ExperimentReport evaluate(const ExperimentConfig& config, const ConditionalDenoiser* model, const Decoder* decoder,
                          const std::vector<std::string>& metrics, std::uint64_t eval_seed);

/// Exclusive per-directory lock (O_EXCL lock file), released on destruction.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace rae
