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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rae {

struct MetricRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::string name;
  double value = 0.0;
};

/// Ordered metric log for one run.
///
/// Steps never decrease within a metric name. Wall-clock phase timings are
/// kept apart from the records so `metrics.jsonl` is byte-stable across
/// reruns.
class ExperimentReport {
 public:
  ExperimentReport() = default;
  ExperimentReport(std::string config_hash, std::uint64_t seed)
      : config_hash_(std::move(config_hash)), seed_(seed) {}

  /// Throws ContractError if `step` is below the last step logged for `name`.
  void add(std::int64_t step, std::int64_t epoch, const std::string& name, double value);
  void add_phase_time(const std::string& phase, double seconds);
  /// Appends all records of `other`, prefixing names.
  void merge(const ExperimentReport& other, const std::string& prefix);

  const std::vector<MetricRecord>& records() const { return records_; }
  const std::string& config_hash() const { return config_hash_; }
  std::uint64_t seed() const { return seed_; }
  void set_config_hash(std::string hash) { config_hash_ = std::move(hash); }

  /// (step, value) pairs for one metric, in log order.
  std::vector<std::pair<std::int64_t, double>> series(const std::string& name) const;
  std::optional<double> last(const std::string& name) const;
  /// Throws ArgumentError when the metric was never logged.
  double last_value(const std::string& name) const;

  /// One JSON object per line: {step, epoch, name, value, config_hash}.
  std::string to_jsonl() const;
  /// Writes metrics.jsonl and timing.json into `dir`.
  void write(const std::filesystem::path& dir) const;

 private:
  std::string config_hash_;
  std::uint64_t seed_ = 0;
  std::vector<MetricRecord> records_;
  std::vector<std::pair<std::string, double>> phases_;
};

}  // namespace rae
