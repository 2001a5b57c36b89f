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

#include "rae/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "rae/error.hpp"
#include "rae/nn.hpp"

namespace rae {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_integer(const std::string& key, std::string_view text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(key, "expected a nonnegative integer, got '" + std::string(text) + "'");
  }
  return v;
}

// Field codecs used by the visitor below.
std::string encode(std::size_t v) { return std::to_string(v); }
std::string encode(double v) { return format_double(v); }
std::string encode(bool v) { return v ? "true" : "false"; }
std::string encode(const std::string& v) { return v; }
std::string encode(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "none"; }
std::string encode(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}
struct U64 {
  std::uint64_t& ref;
};
struct CU64 {
  const std::uint64_t& ref;
};
std::string encode(CU64 v) { return std::to_string(v.ref); }

void decode(const std::string& key, const std::string& text, std::size_t& v) {
  v = parse_integer<std::size_t>(key, text);
}
void decode(const std::string& key, const std::string& text, U64 v) { v.ref = parse_integer<std::uint64_t>(key, text); }
void decode(const std::string& key, const std::string& text, double& v) {
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError(key, "expected a finite number, got '" + text + "'");
  }
}
void decode(const std::string& key, const std::string& text, bool& v) {
  if (text == "true") {
    v = true;
  } else if (text == "false") {
    v = false;
  } else {
    throw ConfigError(key, "expected true or false, got '" + text + "'");
  }
}
void decode(const std::string&, const std::string& text, std::string& v) { v = text; }
void decode(const std::string& key, const std::string& text, std::optional<std::size_t>& v) {
  if (text == "none") {
    v.reset();
  } else {
    v = parse_integer<std::size_t>(key, text);
  }
}
void decode(const std::string& key, const std::string& text, std::vector<std::size_t>& v) {
  v.clear();
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    v.push_back(parse_integer<std::size_t>(key, trim(rest.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  if (v.empty()) throw ConfigError(key, "expected a comma-separated list");
}

template <class C>
auto u64(C& field) {
  if constexpr (std::is_const_v<C>) {
    return CU64{field};
  } else {
    return U64{field};
  }
}

// Single source of truth for the key <-> field mapping.
template <class Self, class F>
void visit_fields(Self& c, F&& f) {
  f("seed", u64(c.seed));
  f("schedule.base_dim", u64(c.schedule.base_dim));
  f("schedule.shift", c.schedule.shift);
  f("schedule.alpha", c.schedule.alpha);
  f("schedule.sampler_steps", c.schedule.sampler_steps);

  f("denoiser.hidden", c.denoiser.hidden);
  f("denoiser.depth", c.denoiser.depth);
  f("denoiser.heads", c.denoiser.heads);
  f("denoiser.ddt_head_width", c.denoiser.ddt_head_width);
  f("denoiser.ddt_head_depth", c.denoiser.ddt_head_depth);
  f("denoiser.cond_dim", c.denoiser.cond_dim);
  f("denoiser.mlp_ratio", c.denoiser.mlp_ratio);
  f("denoiser.freq_dim", c.denoiser.freq_dim);
  f("conditioner.num_query_tokens", c.num_query_tokens);

  f("optim.lr", c.optim.lr);
  f("optim.min_lr", c.optim.min_lr);
  f("optim.beta1", c.optim.beta1);
  f("optim.beta2", c.optim.beta2);
  f("optim.weight_decay", c.optim.weight_decay);
  f("optim.warmup_ratio", c.optim.warmup_ratio);

  f("train.batch", c.train.batch);
  f("train.steps", c.train.steps);
  f("train.log_interval", c.train.log_interval);
  f("train.eval_interval", c.train.eval_interval);
  f("train.eval_samples", c.train.eval_samples);
  f("train.sw_projections", c.train.sw_projections);
  f("train.eval_seed", u64(c.train.eval_seed));

  f("data.spec", c.data.spec_path);
  f("data.num_conditions", c.data.num_conditions);
  f("data.components", c.data.components);
  f("data.tokens", c.data.tokens);
  f("data.width", c.data.width);
  f("data.std", c.data.std);
  f("data.mean_scale", c.data.mean_scale);
  f("data.prior_seed", u64(c.data.prior_seed));
  f("data.mix.smooth", c.decoder.mix.ratios[0]);
  f("data.mix.texture", c.decoder.mix.ratios[1]);
  f("data.mix.glyph", c.decoder.mix.ratios[2]);

  f("encoder.patch", c.decoder.encoder.patch);
  f("encoder.width", c.decoder.encoder.width);
  f("encoder.gain", c.decoder.encoder.gain);
  f("encoder.tanh", c.decoder.encoder.tanh);
  f("encoder.seed", u64(c.decoder.encoder.seed));

  f("decoder.hidden", c.decoder.decoder.hidden);
  f("decoder.layers", c.decoder.decoder.layers);
  f("decoder.epochs", c.decoder_epochs);
  f("decoder.train_count", c.decoder.train_count);
  f("decoder.val_count", c.decoder.val_count);
  f("decoder.batch", c.decoder.batch);
  f("decoder.lr", c.decoder.lr);
  f("decoder.min_lr", c.decoder.min_lr);
  f("decoder.warmup_ratio", c.decoder.warmup_ratio);
  f("decoder.beta1", c.decoder.beta1);
  f("decoder.beta2", c.decoder.beta2);
  f("decoder.noise_aug", c.decoder.noise.enabled);
  f("decoder.noise_tau", c.decoder.noise.tau);
  f("decoder.adv_start_epoch", c.decoder.adv_start_epoch);
  f("decoder.val_seed", u64(c.decoder.val_seed));
  f("loss.omega_L", c.decoder.weights.perceptual);
  f("loss.omega_G", c.decoder.weights.gram);
  f("loss.omega_A", c.decoder.weights.adversarial);

  f("tts.k", c.tts.k);
  f("tts.n", c.tts.n_grid);
  f("tts.trials", c.tts.trials);
  f("tts.verifier", c.tts.verifier);
  f("tts.probe_hidden", c.tts.probe_hidden);
  f("tts.probe_steps", c.tts.probe_steps);
}

}  // namespace

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

Config Config::parse(std::string_view text) {
  Config c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("", "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("", "line " + std::to_string(line_no) + ": empty key");
    if (c.has(key)) throw ConfigError(key, "duplicate key");
    c.set(key, std::string(trim(line.substr(eq + 1))));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const std::string& Config::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(key, "missing key");
  return it->second;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

ShiftedSchedule ScheduleSettings::make(LatentShape shape) const {
  if (!shift) return ShiftedSchedule::identity();
  if (alpha > 0.0) return ShiftedSchedule::with_alpha(alpha);
  return ShiftedSchedule(base_dim, shape.effective_dim());
}

MixtureSpec DataSettings::resolve() const {
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw ConfigError("data.spec", "cannot open " + spec_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("data.spec", e.what());
    }
    return MixtureSpec::from_json(j);
  }
  return MixtureSpec::from_prior(num_conditions, components, {tokens, width}, std, mean_scale, prior_seed);
}

ExperimentConfig ExperimentConfig::from_config(const Config& config) {
  ExperimentConfig c;
  std::set<std::string> seen;
  visit_fields(c, [&](const char* key, auto&& field) {
    if (config.has(key)) {
      decode(key, config.get(key), field);
      seen.insert(key);
    }
  });
  for (const auto& [k, v] : config.entries()) {
    if (!seen.count(k)) throw ConfigError(k, "unknown key");
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) { return from_config(Config::load(path)); }

Config ExperimentConfig::to_config() const {
  Config out;
  visit_fields(*this, [&](const char* key, const auto& field) { out.set(key, encode(field)); });
  return out;
}

std::string ExperimentConfig::hash() const {
  const std::string text = canonical();
  return hex64(fnv1a(text.data(), text.size()));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  const Config defaults = ExperimentConfig{}.to_config();
  for (const auto& [k, v] : defaults.entries()) keys.push_back(k);
  return keys;
}

DenoiserConfig ExperimentConfig::resolved_denoiser() const {
  DenoiserConfig d = denoiser;
  d.latent = latent_shape();
  return d;
}

ConditionerConfig ExperimentConfig::conditioner() const {
  return {data.num_conditions, denoiser.cond_dim, num_query_tokens};
}

void ExperimentConfig::validate() const {
  if (schedule.base_dim == 0) throw ConfigError("schedule.base_dim", "must be positive");
  if (schedule.alpha < 0.0) throw ConfigError("schedule.alpha", "must be nonnegative");
  if (schedule.sampler_steps == 0) throw ConfigError("schedule.sampler_steps", "must be positive");
  if (data.num_conditions == 0) throw ConfigError("data.num_conditions", "must be at least 1");
  if (data.components == 0) throw ConfigError("data.components", "must be at least 1");
  if (data.tokens == 0) throw ConfigError("data.tokens", "must be positive");
  if (data.width == 0) throw ConfigError("data.width", "must be positive");
  if (!(data.std > 0.0)) throw ConfigError("data.std", "must be positive");
  if (denoiser.cond_dim == 0) throw ConfigError("denoiser.cond_dim", "must be positive");
  resolved_denoiser().validate();
  conditioner().validate();
  if (!(optim.lr > 0.0)) throw ConfigError("optim.lr", "must be positive");
  if (optim.min_lr < 0.0 || optim.min_lr > optim.lr) throw ConfigError("optim.min_lr", "must lie in [0, lr]");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0)) throw ConfigError("optim.beta1", "must lie in [0, 1)");
  if (!(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) throw ConfigError("optim.beta2", "must lie in [0, 1)");
  if (optim.weight_decay < 0.0) throw ConfigError("optim.weight_decay", "must be nonnegative");
  if (!(optim.warmup_ratio >= 0.0 && optim.warmup_ratio < 1.0)) {
    throw ConfigError("optim.warmup_ratio", "must lie in [0, 1)");
  }
  if (train.batch == 0) throw ConfigError("train.batch", "must be positive");
  if (train.log_interval == 0) throw ConfigError("train.log_interval", "must be positive");
  if (train.eval_interval == 0) throw ConfigError("train.eval_interval", "must be positive");
  if (train.eval_samples < 2) throw ConfigError("train.eval_samples", "must be at least 2");
  if (train.sw_projections == 0) throw ConfigError("train.sw_projections", "must be positive");
  decoder.validate();
  if (!(decoder.beta1 >= 0.0 && decoder.beta1 < 1.0)) throw ConfigError("decoder.beta1", "must lie in [0, 1)");
  if (!(decoder.beta2 >= 0.0 && decoder.beta2 < 1.0)) throw ConfigError("decoder.beta2", "must lie in [0, 1)");
  if (tts.k == 0) throw ConfigError("tts.k", "must be at least 1");
  for (std::size_t i = 0; i < tts.n_grid.size(); ++i) {
    if (tts.n_grid[i] < tts.k) throw ConfigError("tts.n", "every n must be at least k");
    if (i > 0 && tts.n_grid[i] <= tts.n_grid[i - 1]) throw ConfigError("tts.n", "must be ascending");
  }
  if (tts.verifier != "oracle" && tts.verifier != "confidence") {
    throw ConfigError("tts.verifier", "expected oracle or confidence");
  }
}

}  // namespace rae
