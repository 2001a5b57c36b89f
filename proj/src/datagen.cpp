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

#include "rae/datagen.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "rae/error.hpp"
#include "rae/nn.hpp"
#include "rae/rng.hpp"

namespace rae {
namespace {

constexpr std::size_t kGlyphSize = 8;

// 8x8 glyphs; '#' is ink.
constexpr std::array<std::array<std::string_view, 8>, 16> kGlyphRows = {{
    {"..####..", ".#....#.", ".#....#.", ".######.", ".#....#.", ".#....#.", ".#....#.", "........"},  // A
    {".#####..", ".#....#.", ".#....#.", ".#####..", ".#....#.", ".#....#.", ".#####..", "........"},  // B
    {"..####..", ".#....#.", ".#......", ".#......", ".#......", ".#....#.", "..####..", "........"},  // C
    {".####...", ".#...#..", ".#....#.", ".#....#.", ".#....#.", ".#...#..", ".####...", "........"},  // D
    {".######.", ".#......", ".#......", ".#####..", ".#......", ".#......", ".######.", "........"},  // E
    {".######.", ".#......", ".#......", ".#####..", ".#......", ".#......", ".#......", "........"},  // F
    {".#....#.", ".#....#.", ".#....#.", ".######.", ".#....#.", ".#....#.", ".#....#.", "........"},  // H
    {".#...#..", ".#..#...", ".#.#....", ".##.....", ".#.#....", ".#..#...", ".#...#..", "........"},  // K
    {".#......", ".#......", ".#......", ".#......", ".#......", ".#......", ".######.", "........"},  // L
    {".#....#.", ".##..##.", ".#.##.#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", "........"},  // M
    {".#....#.", ".##...#.", ".#.#..#.", ".#..#.#.", ".#...##.", ".#....#.", ".#....#.", "........"},  // N
    {"..####..", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", "..####..", "........"},  // O
    {".#####..", ".#....#.", ".#....#.", ".#####..", ".#......", ".#......", ".#......", "........"},  // P
    {".######.", "...##...", "...##...", "...##...", "...##...", "...##...", "...##...", "........"},  // T
    {".#....#.", "..#..#..", "...##...", "...##...", "...##...", "..#..#..", ".#....#.", "........"},  // X
    {".######.", "......#.", ".....#..", "....#...", "...#....", "..#.....", ".######.", "........"},  // Z
}};

std::array<std::array<std::uint8_t, 64>, 16> build_atlas() {
  std::array<std::array<std::uint8_t, 64>, 16> atlas{};
  for (std::size_t g = 0; g < kGlyphRows.size(); ++g) {
    for (std::size_t i = 0; i < 64; ++i) atlas[g][i] = kGlyphRows[g][i / 8][i % 8] == '#' ? 1 : 0;
  }
  return atlas;
}

void gaussian_blur(std::vector<double>& img, std::size_t size, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[static_cast<std::size_t>(k + radius)];
  }
  for (auto& k : kernel) k /= total;
  const int n = static_cast<int>(size);
  auto at = [n](int v) { return std::clamp(v, 0, n - 1); };  // edge replicate
  std::vector<double> tmp(img.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[static_cast<std::size_t>(k + radius)] * img[static_cast<std::size_t>(y * n + at(x + k))];
      tmp[static_cast<std::size_t>(y * n + x)] = acc;
    }
  }
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(at(y + k) * n + x)];
      img[static_cast<std::size_t>(y * n + x)] = acc;
    }
  }
}

std::vector<double> render_smooth(Rng& rng) {
  constexpr std::size_t n = kImageSize;
  std::vector<double> img(n * n);
  const double base = 0.35 + 0.3 * rng.uniform();
  struct Blob {
    double cx, cy, sigma, amp;
  };
  std::array<Blob, 4> blobs{};
  for (auto& b : blobs) {
    b.cx = rng.uniform() * n;
    b.cy = rng.uniform() * n;
    b.sigma = 5.0 + 4.0 * rng.uniform();
    b.amp = 0.5 * (rng.uniform() - 0.5);
  }
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double v = base;
      for (const auto& b : blobs) {
        const double dx = static_cast<double>(x) - b.cx;
        const double dy = static_cast<double>(y) - b.cy;
        v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      }
      img[y * n + x] = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

std::vector<double> render_texture(Rng& rng) {
  constexpr std::size_t n = kImageSize;
  std::vector<double> fine(n * n);
  for (auto& v : fine) v = rng.normal();
  std::vector<double> coarse = fine;
  gaussian_blur(fine, n, 0.8);
  gaussian_blur(coarse, n, 2.5);
  std::vector<double> band(n * n);
  for (std::size_t i = 0; i < band.size(); ++i) band[i] = fine[i] - coarse[i];
  double mu = std::accumulate(band.begin(), band.end(), 0.0) / static_cast<double>(band.size());
  double var = 0.0;
  for (double v : band) var += (v - mu) * (v - mu);
  const double sd = std::sqrt(var / static_cast<double>(band.size())) + 1e-12;
  const double contrast = 0.12 + 0.08 * rng.uniform();
  const double level = 0.4 + 0.2 * rng.uniform();
  for (auto& v : band) v = std::clamp(level + contrast * (v - mu) / sd, 0.0, 1.0);
  return band;
}

std::vector<double> render_glyph(Rng& rng) {
  constexpr std::size_t n = kImageSize;
  const auto& atlas = glyph_atlas();
  const bool dark_ink = rng.uniform() < 0.5;
  const double background = dark_ink ? 1.0 : 0.0;
  const double ink = 1.0 - background;
  std::vector<double> img(n * n, background);
  const std::size_t cells = n / kGlyphSize;
  for (std::size_t cy = 0; cy < cells; ++cy) {
    for (std::size_t cx = 0; cx < cells; ++cx) {
      const auto& glyph = atlas[rng.uniform_int(atlas.size())];
      for (std::size_t y = 0; y < kGlyphSize; ++y) {
        for (std::size_t x = 0; x < kGlyphSize; ++x) {
          if (glyph[y * kGlyphSize + x]) img[(cy * kGlyphSize + y) * n + cx * kGlyphSize + x] = ink;
        }
      }
    }
  }
  // Light smoothing: 8% of the 4-neighbour mean.
  std::vector<double> out(img.size());
  const int ni = static_cast<int>(n);
  for (int y = 0; y < ni; ++y) {
    for (int x = 0; x < ni; ++x) {
      auto px = [&](int yy, int xx) {
        return img[static_cast<std::size_t>(std::clamp(yy, 0, ni - 1) * ni + std::clamp(xx, 0, ni - 1))];
      };
      const double nb = 0.25 * (px(y - 1, x) + px(y + 1, x) + px(y, x - 1) + px(y, x + 1));
      out[static_cast<std::size_t>(y * ni + x)] = 0.92 * px(y, x) + 0.08 * nb;
    }
  }
  return out;
}

}  // namespace

// ---- mixtures -------------------------------------------------------------

void MixtureSpec::validate() const {
  if (shape.tokens == 0 || shape.width == 0) throw ConfigError("data.shape", "tokens and width must be positive");
  if (conditions.empty()) throw ConfigError("data.conditions", "need at least one condition");
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    const auto& comps = conditions[c];
    const std::string key = "data.conditions[" + std::to_string(c) + "]";
    if (comps.empty()) throw ConfigError(key, "no components");
    double total = 0.0;
    for (const auto& comp : comps) {
      if (!(comp.weight > 0.0)) throw ConfigError(key + ".weight", "weights must be positive");
      if (!(comp.std > 0.0)) throw ConfigError(key + ".std", "stds must be positive");
      if (!comp.mean.defined() || comp.mean.shape() != Shape{shape.tokens, shape.width}) {
        throw ConfigError(key + ".mean", "mean must be [N, d]");
      }
      total += comp.weight;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw ConfigError(key + ".weight", "weights must sum to 1");
  }
}

MixtureSpec MixtureSpec::from_prior(std::size_t num_conditions, std::size_t components, LatentShape shape,
                                    double std, double mean_scale, std::uint64_t prior_seed) {
  MixtureSpec spec;
  spec.shape = shape;
  Rng rng(prior_seed);
  for (std::size_t c = 0; c < num_conditions; ++c) {
    std::vector<MixtureComponent> comps;
    for (std::size_t k = 0; k < components; ++k) {
      std::vector<double> mu(shape.effective_dim());
      for (auto& v : mu) v = mean_scale * rng.normal();
      comps.push_back({1.0 / static_cast<double>(components), Tensor::from({shape.tokens, shape.width}, std::move(mu)), std});
    }
    spec.conditions.push_back(std::move(comps));
  }
  spec.validate();
  return spec;
}

MixtureSpec MixtureSpec::default_task(std::uint64_t prior_seed) {
  return from_prior(4, 2, {8, 16}, 0.3, 1.0, prior_seed);
}

nlohmann::json MixtureSpec::to_json() const {
  nlohmann::json j;
  j["tokens"] = shape.tokens;
  j["width"] = shape.width;
  auto& conds = j["conditions"] = nlohmann::json::array();
  for (const auto& comps : conditions) {
    auto arr = nlohmann::json::array();
    for (const auto& comp : comps) {
      arr.push_back({{"weight", comp.weight},
                     {"std", comp.std},
                     {"mean", std::vector<double>(comp.mean.values().begin(), comp.mean.values().end())}});
    }
    conds.push_back(std::move(arr));
  }
  return j;
}

MixtureSpec MixtureSpec::from_json(const nlohmann::json& j) {
  try {
    LatentShape shape{j.at("tokens").get<std::size_t>(), j.at("width").get<std::size_t>()};
    if (!j.contains("conditions")) {
      return from_prior(j.at("num_conditions").get<std::size_t>(), j.value("components", std::size_t{2}), shape,
                        j.value("std", 0.3), j.value("mean_scale", 1.0), j.value("prior_seed", std::uint64_t{7}));
    }
    MixtureSpec spec;
    spec.shape = shape;
    for (const auto& arr : j.at("conditions")) {
      std::vector<MixtureComponent> comps;
      for (const auto& c : arr) {
        auto mu = c.at("mean").get<std::vector<double>>();
        if (mu.size() != shape.effective_dim()) throw ConfigError("data.conditions.mean", "wrong mean length");
        comps.push_back({c.at("weight").get<double>(), Tensor::from({shape.tokens, shape.width}, std::move(mu)),
                         c.at("std").get<double>()});
      }
      spec.conditions.push_back(std::move(comps));
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("data", std::string("malformed mixture spec: ") + e.what());
  }
}

std::uint64_t MixtureSpec::hash() const {
  const std::string text = to_json().dump();
  return fnv1a(text.data(), text.size());
}

LatentBatch sample_latents(const MixtureSpec& spec, std::size_t cond, std::size_t batch, std::uint64_t seed,
                           std::vector<std::size_t>* components) {
  if (cond >= spec.num_conditions()) {
    throw ArgumentError("sample_latents: condition " + std::to_string(cond) + " out of range");
  }
  const auto& comps = spec.conditions[cond];
  const std::size_t width = spec.shape.effective_dim();
  Rng rng(seed);
  std::vector<double> values(batch * width);
  if (components) components->assign(batch, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double u = rng.uniform();
    std::size_t k = 0;
    double acc = comps[0].weight;
    while (k + 1 < comps.size() && u >= acc) acc += comps[++k].weight;
    if (components) (*components)[b] = k;
    const auto mu = comps[k].mean.values();
    for (std::size_t i = 0; i < width; ++i) values[b * width + i] = mu[i] + comps[k].std * rng.normal();
  }
  LatentBatch out;
  out.latents = Tensor::from({batch, spec.shape.tokens, spec.shape.width}, std::move(values));
  out.conditions.assign(batch, cond);
  return out;
}

LatentBatch sample_conditional_batch(const MixtureSpec& spec, std::size_t batch, std::uint64_t seed) {
  const std::size_t width = spec.shape.effective_dim();
  std::vector<double> values;
  values.reserve(batch * width);
  std::vector<std::size_t> conds(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    conds[b] = b % spec.num_conditions();
    const auto one = sample_latents(spec, conds[b], 1, derive_seed(seed, b));
    values.insert(values.end(), one.latents.values().begin(), one.latents.values().end());
  }
  LatentBatch out;
  out.latents = Tensor::from({batch, spec.shape.tokens, spec.shape.width}, std::move(values));
  out.conditions = std::move(conds);
  return out;
}

double mixture_log_density(const MixtureSpec& spec, std::size_t cond, std::span<const double> latent) {
  if (cond >= spec.num_conditions()) throw ArgumentError("mixture_log_density: condition out of range");
  const std::size_t dim = spec.shape.effective_dim();
  if (latent.size() != dim) throw DimensionError("mixture_log_density: latent has wrong size");
  std::vector<double> terms;
  for (const auto& comp : spec.conditions[cond]) {
    const auto mu = comp.mean.values();
    double sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) sq += (latent[i] - mu[i]) * (latent[i] - mu[i]);
    const double var = comp.std * comp.std;
    terms.push_back(std::log(comp.weight) - 0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * var) -
                    0.5 * sq / var);
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  return mx + std::log(acc);
}

// ---- images ---------------------------------------------------------------

std::string_view domain_name(Domain domain) {
  switch (domain) {
    case Domain::kSmooth:
      return "smooth";
    case Domain::kTexture:
      return "texture";
    case Domain::kGlyph:
      return "glyph";
  }
  return "?";
}

Domain parse_domain(std::string_view name) {
  for (auto d : kAllDomains) {
    if (domain_name(d) == name) return d;
  }
  throw ArgumentError("unknown domain '" + std::string(name) + "'");
}

const std::array<std::array<std::uint8_t, 64>, 16>& glyph_atlas() {
  static const auto atlas = build_atlas();
  return atlas;
}

Tensor render_domain_image(Domain domain, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> px;
  switch (domain) {
    case Domain::kSmooth:
      px = render_smooth(rng);
      break;
    case Domain::kTexture:
      px = render_texture(rng);
      break;
    case Domain::kGlyph:
      px = render_glyph(rng);
      break;
    default:
      throw ArgumentError("render_domain_image: unknown domain");
  }
  return Tensor::from({1, kImageSize, kImageSize}, std::move(px));
}

void DomainMix::validate() const {
  double total = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!(ratios[i] >= 0.0)) {
      throw ConfigError(std::string("data.mix.") + std::string(domain_name(kAllDomains[i])), "must be nonnegative");
    }
    total += ratios[i];
  }
  if (total == 0.0) throw ConfigError("data.mix", "empty mixture");
  if (std::fabs(total - 1.0) > 1e-9) throw ConfigError("data.mix", "ratios must sum to 1");
}

DomainMix DomainMix::only(Domain d) {
  DomainMix mix;
  mix.ratios = {0.0, 0.0, 0.0};
  mix.ratios[static_cast<std::size_t>(d)] = 1.0;
  return mix;
}

ImageSet sample_domain_images(const DomainMix& mix, std::size_t count, std::uint64_t seed) {
  mix.validate();
  // Largest-remainder allocation of `count` over the domains.
  std::array<std::size_t, 3> quota{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = mix.ratios[i] * static_cast<double>(count);
    quota[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(quota[i]);
    assigned += quota[i];
  }
  while (assigned < count) {
    const auto best = static_cast<std::size_t>(std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
    ++quota[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  // Interleave: repeatedly take from the domain furthest behind its share.
  std::vector<Domain> order;
  std::array<std::size_t, 3> used{};
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t pick = 3;
    double best = 2.0;
    for (std::size_t d = 0; d < 3; ++d) {
      if (used[d] >= quota[d]) continue;
      const double progress = static_cast<double>(used[d]) / static_cast<double>(quota[d]);
      if (progress < best) {
        best = progress;
        pick = d;
      }
    }
    ++used[pick];
    order.push_back(kAllDomains[pick]);
  }
  std::vector<Tensor> images;
  images.reserve(count);
  for (std::size_t i = 0; i < count; ++i) images.push_back(render_domain_image(order[i], derive_seed(seed, i)));
  ImageSet set;
  if (count > 0) set.images = stack_rows(images);
  set.domains = std::move(order);
  return set;
}

// ---- sliced Wasserstein ---------------------------------------------------

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("wasserstein_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double total = 0.0;
  if (a.size() == b.size()) {
    for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(total / static_cast<double>(a.size()));
  }
  // Integrate (F_a^-1(u) - F_b^-1(u))^2 over the merged quantile breakpoints.
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double u = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / na;
    const double next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    total += (next - u) * (a[i] - b[j]) * (a[i] - b[j]);
    u = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return std::sqrt(total);
}

double sliced_wasserstein(const Tensor& set_a, const Tensor& set_b, std::size_t projections, std::uint64_t seed) {
  if (!set_a.defined() || !set_b.defined() || set_a.numel() == 0 || set_b.numel() == 0) {
    throw ArgumentError("sliced_wasserstein: empty set");
  }
  if (projections == 0) throw ArgumentError("sliced_wasserstein: need at least one projection");
  const std::size_t na = set_a.dim(0);
  const std::size_t nb = set_b.dim(0);
  const std::size_t dim = set_a.numel() / na;
  if (set_b.numel() / nb != dim) throw DimensionError("sliced_wasserstein: sample dimensions differ");

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMat dirs(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(projections));
  Rng rng(seed);
  for (std::size_t p = 0; p < projections; ++p) {
    double norm = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double v = rng.normal();
      dirs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p)) = v;
      norm += v * v;
    }
    dirs.col(static_cast<Eigen::Index>(p)) /= std::sqrt(norm);
  }
  const Eigen::Map<const RowMat> a(set_a.values().data(), static_cast<Eigen::Index>(na), static_cast<Eigen::Index>(dim));
  const Eigen::Map<const RowMat> b(set_b.values().data(), static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(dim));
  const RowMat pa = a * dirs;
  const RowMat pb = b * dirs;
  double total = 0.0;
  for (std::size_t p = 0; p < projections; ++p) {
    std::vector<double> ca(na), cb(nb);
    for (std::size_t i = 0; i < na; ++i) ca[i] = pa(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < nb; ++i) cb[i] = pb(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p));
    total += wasserstein_1d(std::move(ca), std::move(cb));
  }
  return total / static_cast<double>(projections);
}

}  // namespace rae
