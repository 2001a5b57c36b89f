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
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rae/report.hpp"

namespace rae {

struct ExperimentInfo {
  std::string name;
  /// Short statement of the trend the experiment checks.
  std::string anchor;
  std::uint64_t registered_seed;
};

/// The seven scripted experiments, in a fixed order.
const std::vector<ExperimentInfo>& experiment_registry();
/// Throws ArgumentError for unknown names.
const ExperimentInfo& experiment_info(std::string_view name);

struct ExperimentOptions {
  /// Multiplies every step and epoch budget; below 1 gives smoke runs.
  double scale = 1.0;
};

struct ExperimentOutcome {
  std::string name;
  std::string anchor;
  std::uint64_t seed = 0;
  /// All sub-runs merged, names prefixed with "<run>/".
  ExperimentReport report;
  /// Per-run reports in execution order.
  std::vector<std::pair<std::string, ExperimentReport>> runs;
  /// Headline numbers, in insertion order.
  std::vector<std::pair<std::string, double>> results;
  bool direction_ok = false;
  std::string observed;

  double result(const std::string& key) const;
  std::string summary() const;
};

ExperimentOutcome run_experiment(std::string_view name, std::uint64_t seed, const ExperimentOptions& options = {});

/// metrics.jsonl, timing.json and summary.txt, plus one sub-directory per run.
void write_experiment(const ExperimentOutcome& outcome, const std::filesystem::path& dir);

/// One-sided sign test: P(X >= positives) for X ~ Binomial(positives +
/// negatives, 1/2).
double sign_test_p(std::size_t positives, std::size_t negatives);

/// First logged step whose value is at or below `threshold`, or -1.
std::int64_t first_step_at_or_below(const std::vector<std::pair<std::int64_t, double>>& series, double threshold);

}  // namespace rae
