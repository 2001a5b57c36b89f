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
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rae/autoencoder.hpp"
#include "rae/conditioning.hpp"
#include "rae/datagen.hpp"
#include "rae/denoiser.hpp"
#include "rae/schedule.hpp"

namespace rae {

/// Flat `key = value` configuration. `#` starts a comment; blank lines are
/// ignored. Keys are dotted paths.
class Config {
 public:
  /// Throws ConfigError on malformed lines or duplicate keys.
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// One `key = value` line per entry, keys in lexicographic order.
  std::string canonical() const;

 private:
  std::map<std::string, std::string> entries_;
};

struct ScheduleSettings {
  std::uint64_t base_dim = 64;
  bool shift = true;
  /// 0 selects alpha = sqrt(m / base_dim).
  double alpha = 0.0;
  std::size_t sampler_steps = 50;

  ShiftedSchedule make(LatentShape shape) const;
};

struct OptimizerSettings {
  double lr = 5e-4;
  double min_lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.0;
  double warmup_ratio = 0.0134;
};

struct TrainSettings {
  std::size_t batch = 128;
  std::size_t steps = 3000;
  std::size_t log_interval = 10;
  std::size_t eval_interval = 1000;
  std::size_t eval_samples = 4096;
  std::size_t sw_projections = 64;
  std::uint64_t eval_seed = 0xe7a1;
};

struct DataSettings {
  /// JSON mixture spec; empty means the prior form below.
  std::string spec_path;
  std::size_t num_conditions = 4;
  std::size_t components = 2;
  std::size_t tokens = 8;
  std::size_t width = 16;
  double std = 0.3;
  double mean_scale = 1.0;
  std::uint64_t prior_seed = 7;

  MixtureSpec resolve() const;
};

struct TtsSettings {
  std::size_t k = 4;
  std::vector<std::size_t> n_grid{8, 16, 32};
  std::size_t trials = 50;
  std::string verifier = "confidence";
  std::size_t probe_hidden = 32;
  std::size_t probe_steps = 300;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ScheduleSettings schedule;
  DenoiserConfig denoiser;
  OptimizerSettings optim;
  TrainSettings train;
  DataSettings data;
  std::size_t num_query_tokens = 256;
  DecoderTrainConfig decoder;
  std::size_t decoder_epochs = 12;
  TtsSettings tts;

  /// Unset keys keep their defaults. Throws ConfigError on unknown keys,
  /// unparsable values or failed validation.
  static ExperimentConfig from_config(const Config& config);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Every field, so the canonical text fully determines the config.
  Config to_config() const;
  std::string canonical() const { return to_config().canonical(); }
  /// 16 hex digits of FNV-1a over the canonical text.
  std::string hash() const;

  /// Throws ConfigError naming the offending key.
  void validate() const;

  /// Denoiser config with the latent shape taken from the data settings.
  DenoiserConfig resolved_denoiser() const;
  ConditionerConfig conditioner() const;
  LatentShape latent_shape() const { return {data.tokens, data.width}; }
  ShiftedSchedule make_schedule() const { return schedule.make(latent_shape()); }
};

/// All keys understood by ExperimentConfig, sorted.
std::vector<std::string> config_keys();

std::string hex64(std::uint64_t v);

}  // namespace rae
