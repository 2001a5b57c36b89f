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

#include "rae/report.hpp"

#include <fstream>

#include <json.hpp>

#include "rae/error.hpp"

namespace rae {

void ExperimentReport::add(std::int64_t step, std::int64_t epoch, const std::string& name, double value) {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->name == name) {
      if (step < it->step) {
        throw ContractError("report: step " + std::to_string(step) + " for '" + name + "' precedes step " +
                            std::to_string(it->step));
      }
      break;
    }
  }
  records_.push_back({step, epoch, name, value});
}

void ExperimentReport::add_phase_time(const std::string& phase, double seconds) { phases_.emplace_back(phase, seconds); }

void ExperimentReport::merge(const ExperimentReport& other, const std::string& prefix) {
  for (const auto& r : other.records_) add(r.step, r.epoch, prefix + r.name, r.value);
  for (const auto& [p, s] : other.phases_) phases_.emplace_back(prefix + p, s);
}

std::vector<std::pair<std::int64_t, double>> ExperimentReport::series(const std::string& name) const {
  std::vector<std::pair<std::int64_t, double>> out;
  for (const auto& r : records_) {
    if (r.name == name) out.emplace_back(r.step, r.value);
  }
  return out;
}

std::optional<double> ExperimentReport::last(const std::string& name) const {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->name == name) return it->value;
  }
  return std::nullopt;
}

double ExperimentReport::last_value(const std::string& name) const {
  auto v = last(name);
  if (!v) throw ArgumentError("report: metric '" + name + "' was never logged");
  return *v;
}

std::string ExperimentReport::to_jsonl() const {
  std::string out;
  for (const auto& r : records_) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["name"] = r.name;
    j["value"] = r.value;
    j["config_hash"] = config_hash_;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void ExperimentReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("report: cannot write " + (dir / "metrics.jsonl").string());
    out << to_jsonl();
  }
  nlohmann::ordered_json timing = nlohmann::ordered_json::object();
  for (const auto& [phase, seconds] : phases_) timing[phase] = seconds;
  std::ofstream out(dir / "timing.json", std::ios::binary | std::ios::trunc);
  out << timing.dump(2) << '\n';
}

}  // namespace rae
