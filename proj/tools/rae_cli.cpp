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

// Command-line front end: data generation, training, sampling, test-time
// scaling, evaluation, scripted experiments and gradient checks.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rae/checkpoint.hpp"
#include "rae/conditioning.hpp"
#include "rae/config.hpp"
#include "rae/datagen.hpp"
#include "rae/error.hpp"
#include "rae/experiments.hpp"
#include "rae/flow.hpp"
#include "rae/gradcheck.hpp"
#include "rae/training.hpp"

namespace fs = std::filesystem;
using namespace rae;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw ArgumentError("--out is required");
  return g.out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(item, &pos);
    if (pos != item.size()) throw ArgumentError("bad list element '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Tensor conditions_tensor(const std::vector<std::size_t>& conds) {
  std::vector<double> v(conds.begin(), conds.end());
  return Tensor::from({conds.size()}, std::move(v));
}

std::string report_summary(const std::string& title, const ExperimentConfig& cfg, const ExperimentReport& report,
                           const std::vector<std::string>& names) {
  std::string s = title + "\nconfig_hash: " + cfg.hash() + "\nseed: " + std::to_string(cfg.seed) + "\n";
  for (const auto& name : names) {
    if (report.series(name).empty()) continue;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s (last) = %.6g\n", name.c_str(), report.last_value(name));
    s += buf;
  }
  return s;
}

Decoder load_decoder(const ExperimentConfig& cfg, const fs::path& path) {
  const auto& d = cfg.decoder;
  Decoder dec(d.decoder, d.encoder.width, d.encoder.patch, kImageSize, 0);
  dec.params().load(Checkpoint::load(path), "");
  return dec;
}

int cmd_gen_data(const Globals& g, const std::string& kind, const std::string& spec_path, std::size_t count) {
  const ExperimentConfig cfg = load_config(g);
  const fs::path out = require_out(g);
  if (count == 0) throw ArgumentError("--count must be positive");
  Checkpoint ckpt;
  nlohmann::json side{{"kind", kind}, {"count", count}, {"seed", cfg.seed}};
  if (kind == "latents") {
    MixtureSpec spec = cfg.data.resolve();
    if (!spec_path.empty()) {
      std::ifstream f(spec_path);
      if (!f) throw IoError("cannot read " + spec_path);
      spec = MixtureSpec::from_json(nlohmann::json::parse(f));
    }
    const LatentBatch batch = sample_conditional_batch(spec, count, cfg.seed);
    ckpt.put("latents", batch.latents);
    ckpt.put("conditions", conditions_tensor(batch.conditions));
    side["spec_hash"] = hex64(spec.hash());
    side["spec"] = spec.to_json();
  } else if (kind == "images") {
    const ImageSet set = sample_domain_images(cfg.decoder.mix, count, cfg.seed);
    std::vector<std::size_t> domains;
    for (auto d : set.domains) domains.push_back(static_cast<std::size_t>(d));
    ckpt.put("images", set.images);
    ckpt.put("domains", conditions_tensor(domains));
    side["mix"] = cfg.decoder.mix.ratios;
    side["spec_hash"] = cfg.hash();
  } else {
    throw ArgumentError("--kind must be latents or images");
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  ckpt.save(out);
  write_text(out.string() + ".json", side.dump(2) + "\n");
  std::cout << "wrote " << count << " " << kind << " to " << out.string() << "\n";
  return 0;
}

int cmd_train_decoder(const Globals& g) {
  const ExperimentConfig cfg = load_config(g);
  const fs::path out = require_out(g);
  fs::create_directories(out);
  DirLock lock(out);
  const auto run = train_decoder(cfg.decoder, cfg.decoder_epochs, cfg.seed);
  ExperimentReport report = run.report;
  report.set_config_hash(cfg.hash());
  Checkpoint ckpt;
  run.decoder.params().save(ckpt, "");
  ckpt.save(out / "decoder.raet");
  report.write(out);
  write_text(out / "config.lock", cfg.canonical());
  write_text(out / "summary.txt", report_summary("train-decoder", cfg, report,
                                                 {"train/loss", "val/l1/smooth", "val/l1/texture", "val/l1/glyph",
                                                  "val/l1/all"}));
  std::cout << "val/l1/all = " << report.last_value("val/l1/all") << "\n";
  return 0;
}

int cmd_train_dit(const Globals& g) {
  const ExperimentConfig cfg = load_config(g);
  const fs::path out = require_out(g);
  fs::create_directories(out);
  DirLock lock(out);
  const auto run = train_dit(cfg);
  write_run(out, cfg, run.model, run.report);
  write_text(out / "summary.txt", report_summary("train-dit", cfg, run.report, {"train/loss", "eval/sw"}));
  const auto sw = run.report.series("eval/sw");
  std::cout << "eval/sw " << sw.front().second << " -> " << sw.back().second << "\n";
  return 0;
}

int cmd_sample(const Globals& g, std::size_t steps, std::size_t batch, const std::string& checkpoint) {
  const ExperimentConfig cfg = load_config(g);
  const fs::path out = require_out(g);
  if (batch == 0) throw ArgumentError("--batch must be positive");
  const ConditionalDenoiser model = load_model(cfg, checkpoint);
  const std::size_t c = cfg.data.num_conditions;
  std::vector<std::size_t> conds(batch);
  for (std::size_t i = 0; i < batch; ++i) conds[i] = i % c;
  NoGradGuard no_grad;
  const LatentBatch result = euler_sample(model, cfg.make_schedule(), steps == 0 ? cfg.schedule.sampler_steps : steps,
                                          batch, cfg.seed, conds, cfg.latent_shape());
  Checkpoint ckpt;
  ckpt.put("latents", result.latents);
  ckpt.put("conditions", conditions_tensor(result.conditions));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  ckpt.save(out);
  std::cout << "wrote " << batch << " samples to " << out.string() << "\n";
  return 0;
}

int cmd_tts(const Globals& g, std::size_t k, const std::string& n_list, const std::string& verifier,
            std::size_t trials, const std::string& checkpoint) {
  ExperimentConfig cfg = load_config(g);
  const fs::path out = require_out(g);
  fs::create_directories(out);
  DirLock lock(out);
  const MixtureSpec spec = cfg.data.resolve();
  const ConditionalDenoiser model = load_model(cfg, checkpoint);
  TtsConfig tcfg;
  tcfg.k = k;
  tcfg.n_grid = parse_list(n_list);
  tcfg.trials = trials;
  tcfg.sampler_steps = cfg.schedule.sampler_steps;

  std::optional<Probe> probe;
  std::unique_ptr<Verifier> v;
  if (verifier == "oracle") {
    v = std::make_unique<OracleVerifier>(spec);
  } else if (verifier == "confidence") {
    probe.emplace(cfg.latent_shape(), spec.num_conditions(), cfg.tts.probe_hidden, derive_seed(cfg.seed, 0x9b));
    probe->fit(spec, cfg.tts.probe_steps, 128, 2e-3, derive_seed(cfg.seed, 0x9c));
    v = std::make_unique<ConfidenceVerifier>(*probe);
  } else {
    throw ArgumentError("--verifier must be oracle or confidence");
  }
  const auto result = tts_experiment(model, cfg.make_schedule(), cfg.latent_shape(), *v, spec, tcfg, cfg.seed);
  ExperimentReport report = result.report;
  report.set_config_hash(cfg.hash());
  report.write(out);
  write_text(out / "config.lock", cfg.canonical());
  std::string summary = "tts (" + verifier + " verifier, k=" + std::to_string(k) + ")\n";
  for (std::size_t i = 0; i < tcfg.n_grid.size(); ++i) {
    const auto& q = result.selected_quality[i];
    char buf[128];
    std::snprintf(buf, sizeof(buf), "n=%zu mean selected quality = %.6g\n", tcfg.n_grid[i],
                  std::accumulate(q.begin(), q.end(), 0.0) / static_cast<double>(q.size()));
    summary += buf;
  }
  write_text(out / "summary.txt", summary);
  std::cout << summary;
  return 0;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& decoder_path,
             const std::string& metrics, std::optional<std::uint64_t> eval_seed) {
  const ExperimentConfig cfg = load_config(g);
  const fs::path out = require_out(g);
  fs::create_directories(out);
  DirLock lock(out);
  std::optional<ConditionalDenoiser> model;
  std::optional<Decoder> decoder;
  if (!checkpoint.empty()) model.emplace(load_model(cfg, checkpoint));
  if (!decoder_path.empty()) decoder.emplace(load_decoder(cfg, decoder_path));
  const auto names = split_names(metrics);
  const ExperimentReport report = evaluate(cfg, model ? &*model : nullptr, decoder ? &*decoder : nullptr, names,
                                           eval_seed.value_or(cfg.train.eval_seed));
  report.write(out);
  write_text(out / "config.lock", cfg.canonical());
  std::vector<std::string> keys;
  for (const auto& n : names) keys.push_back("eval/" + n);
  const std::string summary = report_summary("eval", cfg, report, keys);
  write_text(out / "summary.txt", summary);
  std::cout << summary;
  return 0;
}

int cmd_experiment(const Globals& g, const std::string& name, double scale) {
  const fs::path out = require_out(g);
  const auto& info = experiment_info(name);
  fs::create_directories(out);
  DirLock lock(out);
  const auto outcome = run_experiment(name, g.seed.value_or(info.registered_seed), {scale});
  write_experiment(outcome, out);
  std::cout << outcome.summary();
  return outcome.direction_ok ? 0 : 1;
}

int cmd_gradcheck(const Globals& g, const std::string& scope) {
  const std::vector<std::string> scopes =
      scope == "all" ? std::vector<std::string>{"ops", "denoiser", "losses"} : std::vector<std::string>{scope};
  bool ok = true;
  std::string text;
  for (const auto& s : scopes) {
    const auto report = gradcheck(s, g.seed.value_or(0));
    ok = ok && report.passed();
    text += report.to_text();
  }
  std::cout << text;
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    write_text(fs::path(g.out) / "summary.txt", text);
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Representation-latent diffusion toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory or file");
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");

  auto* gen = app.add_subcommand("gen-data", "Sample mixture latents or domain images");
  std::string kind = "latents", spec_path;
  std::size_t count = 1024;
  gen->add_option("--kind", kind, "latents or images")->check(CLI::IsMember({"latents", "images"}));
  gen->add_option("--spec", spec_path, "Mixture spec JSON (latents)")->check(CLI::ExistingFile);
  gen->add_option("--count", count, "Number of samples");

  auto* tdec = app.add_subcommand("train-decoder", "Train the pixel decoder on frozen encoder latents");
  auto* tdit = app.add_subcommand("train-dit", "Train the denoiser on the configured mixture");

  auto* smp = app.add_subcommand("sample", "Euler-sample latents from a checkpoint");
  std::size_t steps = 0, batch = 16;
  std::string checkpoint;
  smp->add_option("--steps", steps, "Sampler steps (default: schedule.sampler_steps)");
  smp->add_option("--batch", batch, "Number of samples; conditions cycle");
  smp->add_option("--checkpoint", checkpoint, "Denoiser checkpoint")->required()->check(CLI::ExistingFile);

  auto* tts = app.add_subcommand("tts", "Best-k-of-n test-time scaling");
  std::size_t k = 4, trials = 50;
  std::string n_list = "8,16,32", verifier = "oracle";
  tts->add_option("--k", k, "Candidates kept");
  tts->add_option("--n", n_list, "Comma-separated candidate counts");
  tts->add_option("--verifier", verifier, "oracle or confidence")->check(CLI::IsMember({"oracle", "confidence"}));
  tts->add_option("--trials", trials, "Trials");
  tts->add_option("--checkpoint", checkpoint, "Denoiser checkpoint")->required()->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on fresh data");
  std::string decoder_path, metrics;
  std::uint64_t eval_seed = 0;
  ev->add_option("--checkpoint", checkpoint, "Denoiser checkpoint")->check(CLI::ExistingFile);
  ev->add_option("--decoder", decoder_path, "Decoder checkpoint")->check(CLI::ExistingFile);
  ev->add_option("--metrics", metrics, "Comma-separated: sliced_wasserstein, frechet_feature_distance, recon_l1");
  auto* eval_seed_opt = ev->add_option("--eval-seed", eval_seed, "Eval data seed (default: train.eval_seed)");

  auto* exp = app.add_subcommand("experiment", "Run a scripted experiment");
  std::string name;
  double scale = 1.0;
  exp->add_option("--name", name, "Experiment name")->required();
  exp->add_option("--scale", scale, "Budget multiplier")->check(CLI::PositiveNumber);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::string scope = "all";
  gc->add_option("--scope", scope, "ops, denoiser, losses or all")
      ->check(CLI::IsMember({"ops", "denoiser", "losses", "all"}));

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (gen->parsed()) return cmd_gen_data(g, kind, spec_path, count);
    if (tdec->parsed()) return cmd_train_decoder(g);
    if (tdit->parsed()) return cmd_train_dit(g);
    if (smp->parsed()) return cmd_sample(g, steps, batch, checkpoint);
    if (tts->parsed()) return cmd_tts(g, k, n_list, verifier, trials, checkpoint);
    if (ev->parsed()) {
      return cmd_eval(g, checkpoint, decoder_path, metrics,
                      eval_seed_opt->count() > 0 ? std::optional<std::uint64_t>(eval_seed) : std::nullopt);
    }
    if (exp->parsed()) return cmd_experiment(g, name, scale);
    if (gc->parsed()) return cmd_gradcheck(g, scope);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
