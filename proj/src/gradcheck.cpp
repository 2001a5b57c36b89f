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

#include "rae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "rae/autoencoder.hpp"
#include "rae/denoiser.hpp"
#include "rae/error.hpp"
#include "rae/rng.hpp"

namespace rae {
namespace {

using Inputs = std::vector<std::pair<std::string, Tensor>>;

Tensor leaf(const Tensor& t) {
  Tensor c = t.detach().clone();
  c.set_requires_grad(true);
  return c;
}

Tensor normal(const Shape& shape, std::uint64_t seed) { return leaf(seeded_normal(shape, seed)); }

// Values in [lo, lo + span), for ops with restricted domains.
Tensor positive(const Shape& shape, std::uint64_t seed, double lo = 0.5, double span = 1.5) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = lo + span * rng.uniform();
  return leaf(Tensor::from(shape, std::move(v)));
}

// Normal values pushed at least `gap` away from zero (kinks of abs).
Tensor away_from_zero(const Shape& shape, std::uint64_t seed, double gap = 0.05) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    const double z = rng.normal();
    x = (z < 0 ? -gap : gap) + z;
  }
  return leaf(Tensor::from(shape, std::move(v)));
}

// Random linear functional of an op's output, so every output element
// contributes to the checked gradient.
Tensor project(const Tensor& out, std::uint64_t seed) {
  if (out.rank() == 0) return out;
  return sum(mul(out, seeded_normal(out.shape(), seed)));
}

class Suite {
 public:
  Suite(std::string scope, double tolerance) : tol_(tolerance) { report_.scope = std::move(scope); }

  void check(const std::string& name, const std::function<Tensor()>& loss, const Inputs& inputs) {
    double worst = 0.0;
    for (const auto& [n, e] : gradient_errors(loss, inputs)) worst = std::max(worst, e);
    report_.entries.push_back({name, worst, tol_, worst <= tol_});
  }

  void check_param(const std::string& name, const std::function<Tensor()>& loss, const Inputs& inputs) {
    for (const auto& [n, e] : gradient_errors(loss, inputs)) {
      report_.entries.push_back({name + ":" + n, e, tol_, e <= tol_});
    }
  }

  GradcheckReport take() { return std::move(report_); }

 private:
  GradcheckReport report_;
  double tol_;
};

GradcheckReport ops_suite(std::uint64_t seed) {
  Suite s("ops", kOpsTolerance);
  std::uint64_t k = 0;
  auto next = [&] { return derive_seed(seed, k++); };
  const std::uint64_t w = next();

  // Unary ops: f(x) with a projection.
  auto unary = [&](const std::string& name, std::function<Tensor(const Tensor&)> f, Tensor x) {
    s.check(name, [=] { return project(f(x), w); }, {{"x", x}});
  };
  auto binary = [&](const std::string& name, std::function<Tensor(const Tensor&, const Tensor&)> f, Tensor a,
                    Tensor b) {
    s.check(name, [=] { return project(f(a, b), w); }, {{"a", a}, {"b", b}});
  };

  binary("add", [](auto& a, auto& b) { return add(a, b); }, normal({3, 4, 5}, next()), normal({3, 4, 5}, next()));
  binary("add_broadcast", [](auto& a, auto& b) { return add(a, b); }, normal({3, 4, 5}, next()), normal({4, 1}, next()));
  binary("sub", [](auto& a, auto& b) { return sub(a, b); }, normal({2, 6}, next()), normal({6}, next()));
  binary("mul", [](auto& a, auto& b) { return mul(a, b); }, normal({3, 4, 5}, next()), normal({1, 4, 5}, next()));
  binary("div", [](auto& a, auto& b) { return div(a, b); }, normal({3, 5}, next()), positive({3, 5}, next()));
  binary("div_broadcast", [](auto& a, auto& b) { return div(a, b); }, normal({2, 3, 4}, next()), positive({3, 1}, next()));

  unary("scale", [](auto& x) { return scale(x, -1.7); }, normal({4, 5}, next()));
  unary("add_scalar", [](auto& x) { return add_scalar(x, 0.3); }, normal({4, 5}, next()));
  unary("neg", [](auto& x) { return neg(x); }, normal({4, 5}, next()));
  unary("square", [](auto& x) { return square(x); }, normal({4, 5}, next()));
  unary("abs", [](auto& x) { return abs(x); }, away_from_zero({4, 5}, next()));
  unary("exp", [](auto& x) { return exp(x); }, normal({4, 5}, next()));
  unary("log", [](auto& x) { return log(x); }, positive({4, 5}, next()));
  unary("sqrt", [](auto& x) { return sqrt(x); }, positive({4, 5}, next()));
  unary("tanh", [](auto& x) { return tanh(x); }, normal({4, 5}, next()));
  unary("silu", [](auto& x) { return silu(x); }, normal({4, 5}, next()));
  unary("gelu", [](auto& x) { return gelu(x); }, normal({4, 5}, next()));

  binary("matmul", [](auto& a, auto& b) { return matmul(a, b); }, normal({2, 3, 4}, next()), normal({4, 5}, next()));
  binary("bmm", [](auto& a, auto& b) { return bmm(a, b); }, normal({2, 3, 4}, next()), normal({2, 4, 5}, next()));

  unary("reshape", [](auto& x) { return reshape(x, {6, 4}); }, normal({2, 3, 4}, next()));
  unary("permute", [](auto& x) { return permute(x, {2, 0, 1}); }, normal({2, 3, 4}, next()));
  unary("transpose_last", [](auto& x) { return transpose_last(x); }, normal({2, 3, 4}, next()));
  unary("slice", [](auto& x) { return slice(x, 1, 1, 2); }, normal({2, 4, 3}, next()));
  binary("concat", [](auto& a, auto& b) { return concat({a, b}, 1); }, normal({2, 3, 4}, next()),
         normal({2, 2, 4}, next()));

  unary("sum", [](auto& x) { return scale(sum(x), 1.3); }, normal({3, 4}, next()));
  unary("mean", [](auto& x) { return scale(mean(x), 1.3); }, normal({3, 4}, next()));
  unary("sum_axis", [](auto& x) { return sum_axis(x, 1); }, normal({2, 3, 4}, next()));
  unary("sum_axis_keepdim", [](auto& x) { return sum_axis(x, 0, true); }, normal({2, 3, 4}, next()));
  unary("mean_axis", [](auto& x) { return mean_axis(x, 2); }, normal({2, 3, 4}, next()));
  unary("softmax_last", [](auto& x) { return softmax(x, 2); }, normal({2, 3, 4}, next()));
  unary("softmax_inner", [](auto& x) { return softmax(x, 0); }, normal({3, 4}, next()));
  unary("log_softmax", [](auto& x) { return log_softmax(x, 1); }, normal({3, 5}, next()));
  unary("layer_norm", [](auto& x) { return layer_norm(x); }, normal({2, 3, 6}, next()));
  {
    const Tensor x = normal({3, 5}, next());
    const Tensor g = normal({5}, next());
    const Tensor b = normal({5}, next());
    s.check("layer_norm_affine", [=] { return project(layer_norm(x, g, b), w); }, {{"x", x}, {"gain", g}, {"bias", b}});
  }
  {
    const Tensor table = normal({6, 4}, next());
    const std::vector<std::size_t> ids{3, 0, 3, 5};
    s.check("embedding", [=] { return project(embedding(table, ids), w); }, {{"table", table}});
  }
  return s.take();
}

GradcheckReport denoiser_suite(std::uint64_t seed) {
  Suite s("denoiser", kDenoiserTolerance);
  DenoiserConfig cfg;
  cfg.hidden = 16;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.latent = {4, 8};
  cfg.cond_dim = 8;
  cfg.mlp_ratio = 2;
  cfg.freq_dim = 8;
  Denoiser model = Denoiser::build(cfg, derive_seed(seed, 0));
  model.perturb(derive_seed(seed, 1), 0.2);

  const Tensor x = normal({2, 4, 8}, derive_seed(seed, 2));
  const Tensor cond = normal({2, 8}, derive_seed(seed, 3));
  const std::vector<double> t{0.3, 0.85};
  const std::uint64_t w = derive_seed(seed, 4);
  Inputs inputs{{"x_t", x}, {"cond", cond}};
  for (const auto& [name, p] : model.params().items()) inputs.emplace_back(name, p);
  s.check_param("denoiser", [&] { return project(model.forward(x, t, cond), w); }, inputs);
  return s.take();
}

GradcheckReport losses_suite(std::uint64_t seed) {
  Suite s("losses", kOpsTolerance);
  const FrozenEncoder encoder({8, 16, 2.0, true, derive_seed(seed, 0)});
  const EncoderFeatures features(encoder);
  const ZeroAdversary adversary;

  Rng rng(derive_seed(seed, 1));
  std::vector<double> xv(2 * 16 * 16), hv(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    xv[i] = rng.uniform();
    const double offset = 0.05 + 0.2 * rng.uniform();
    hv[i] = xv[i] + (rng.uniform() < 0.5 ? -offset : offset);
  }
  const Tensor x = Tensor::from({2, 1, 16, 16}, xv);
  const Tensor x_hat = leaf(Tensor::from({2, 1, 16, 16}, hv));

  s.check("l1", [=] { return mean(abs(sub(x_hat, x))); }, {{"x_hat", x_hat}});
  s.check("perceptual", [&] { return mean(square(sub(features.features(x_hat), features.features(x)))); },
          {{"x_hat", x_hat}});
  const Tensor fa = normal({2, 4, 3}, derive_seed(seed, 2));
  const Tensor fb = normal({2, 4, 3}, derive_seed(seed, 3));
  s.check("gram", [=] { return gram_loss(fa, fb); }, {{"feat_a", fa}, {"feat_b", fb}});
  s.check("recon_total", [&] { return recon_loss(x, x_hat, LossWeights{}, features, adversary).total; },
          {{"x_hat", x_hat}});
  const Tensor pred = normal({3, 2, 4}, derive_seed(seed, 4));
  const Tensor target = seeded_normal({3, 2, 4}, derive_seed(seed, 5));
  s.check("flow_matching_mse", [=] { return mean(square(sub(pred, target))); }, {{"pred", pred}});
  const Tensor logits = normal({4, 5}, derive_seed(seed, 6));
  std::vector<double> oh(20, 0.0);
  for (std::size_t i = 0; i < 4; ++i) oh[i * 5 + (i * 3) % 5] = 1.0;
  const Tensor onehot = Tensor::from({4, 5}, oh);
  s.check("cross_entropy", [=] { return neg(mean(sum_axis(mul(log_softmax(logits, 1), onehot), 1))); },
          {{"logits", logits}});
  return s.take();
}

}  // namespace

std::vector<std::pair<std::string, double>> gradient_errors(const std::function<Tensor()>& loss,
                                                            const std::vector<std::pair<std::string, Tensor>>& inputs,
                                                            double h) {
  std::vector<std::vector<double>> analytic;
  {
    for (const auto& [name, t] : inputs) {
      Tensor handle = t;
      handle.set_requires_grad(true);
      handle.zero_grad();
    }
    const Tensor l = loss();
    if (l.rank() != 0) throw ContractError("gradcheck: loss must be a scalar");
    backward(l);
    for (const auto& [name, t] : inputs) {
      analytic.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                         : std::vector<double>(t.numel(), 0.0));
    }
  }
  NoGradGuard no_grad;
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor handle = inputs[i].second;
    auto v = handle.mutable_values();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double orig = v[j];
      v[j] = orig + h;
      const double fp = loss().item();
      v[j] = orig - h;
      const double fm = loss().item();
      v[j] = orig;
      const double num = (fp - fm) / (2.0 * h);
      const double a = analytic[i][j];
      diff2 += (a - num) * (a - num);
      a2 += a * a;
      n2 += num * num;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-10});
    out.emplace_back(inputs[i].first, std::sqrt(diff2) / denom);
  }
  return out;
}

bool GradcheckReport::passed() const {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
}

std::string GradcheckReport::to_text() const {
  std::string out;
  char buf[256];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof(buf), "%-4s %-40s rel_err=%.3e tol=%.0e\n", e.pass ? "ok" : "FAIL", e.name.c_str(),
                  e.max_rel_error, e.tolerance);
    out += buf;
  }
  out += std::string("gradcheck ") + scope + ": " + (passed() ? "PASS" : "FAIL") + "\n";
  return out;
}

GradcheckReport gradcheck(std::string_view scope, std::uint64_t seed) {
  if (scope == "ops") return ops_suite(seed);
  if (scope == "denoiser") return denoiser_suite(seed);
  if (scope == "losses") return losses_suite(seed);
  throw ArgumentError("unknown gradcheck scope '" + std::string(scope) + "' (expected ops, denoiser or losses)");
}

}  // namespace rae
