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

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rae/latent.hpp"
#include "rae/tensor.hpp"

namespace rae {

struct MixtureComponent {
  double weight = 1.0;
  Tensor mean;  // [N, d]
  double std = 0.3;
};

/// Per-condition isotropic Gaussian mixtures over [N, d] latents.
struct MixtureSpec {
  LatentShape shape{8, 16};
  std::vector<std::vector<MixtureComponent>> conditions;

  std::size_t num_conditions() const { return conditions.size(); }
  /// Weights positive and summing to 1 per condition, stds positive,
  /// means shaped [N, d]. Throws ConfigError.
  void validate() const;

  /// Means drawn elementwise from N(0, mean_scale^2) with Rng(prior_seed);
  /// equal weights.
  static MixtureSpec from_prior(std::size_t num_conditions, std::size_t components, LatentShape shape,
                                double std, double mean_scale, std::uint64_t prior_seed);
  /// Default generation task: 4 conditions x 2 components, N=8, d=16,
  /// std 0.3.
  static MixtureSpec default_task(std::uint64_t prior_seed = 7);

  nlohmann::json to_json() const;
  /// Accepts the explicit form written by `to_json` or a prior form
  /// {num_conditions, components, tokens, width, std, mean_scale, prior_seed}.
  static MixtureSpec from_json(const nlohmann::json& j);
  std::uint64_t hash() const;
};

/// iid draws from condition `cond`'s mixture. Deterministic per seed.
/// When `components` is non-null it receives the drawn component index per row.
LatentBatch sample_latents(const MixtureSpec& spec, std::size_t cond, std::size_t batch, std::uint64_t seed,
                           std::vector<std::size_t>* components = nullptr);

/// Batch with condition ids cycling 0, 1, ..., C-1, 0, ...
LatentBatch sample_conditional_batch(const MixtureSpec& spec, std::size_t batch, std::uint64_t seed);

/// Log-density of one [N, d] latent under condition `cond`'s mixture.
double mixture_log_density(const MixtureSpec& spec, std::size_t cond, std::span<const double> latent);

enum class Domain { kSmooth = 0, kTexture = 1, kGlyph = 2 };
inline constexpr std::array<Domain, 3> kAllDomains = {Domain::kSmooth, Domain::kTexture, Domain::kGlyph};
inline constexpr std::size_t kImageSize = 32;

std::string_view domain_name(Domain domain);
/// Throws ArgumentError for unknown names.
Domain parse_domain(std::string_view name);

/// 1 x 32 x 32 image with pixels in [0, 1].
///   smooth:  a few broad Gaussian blobs (low frequency, small gradients)
///   texture: band-pass filtered white noise
///   glyph:   4 x 4 grid of cells from the 16-glyph atlas, lightly smoothed
Tensor render_domain_image(Domain domain, std::uint64_t seed);

/// The shipped 16-glyph 8x8 binary atlas, row-major, 1 = ink.
const std::array<std::array<std::uint8_t, 64>, 16>& glyph_atlas();

/// Ratios over {smooth, texture, glyph}; nonnegative, summing to 1.
struct DomainMix {
  std::array<double, 3> ratios{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  void validate() const;
  double ratio(Domain d) const { return ratios[static_cast<std::size_t>(d)]; }
  static DomainMix only(Domain d);
};

struct ImageSet {
  Tensor images;  // [K, 1, 32, 32]
  std::vector<Domain> domains;
};

/// `count` images whose per-domain counts follow the mix (largest remainder),
/// interleaved; image i uses seed derive_seed(seed, i).
ImageSet sample_domain_images(const DomainMix& mix, std::size_t count, std::uint64_t seed);

/// Mean over `projections` random unit directions (drawn from Rng(seed)) of
/// the 1-D 2-Wasserstein distance between the projected empirical
/// distributions. Rows are flattened to vectors. Unequal counts are handled
/// through exact quantile-function matching.
double sliced_wasserstein(const Tensor& set_a, const Tensor& set_b, std::size_t projections, std::uint64_t seed);

/// 1-D 2-Wasserstein distance between two empirical samples.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

}  // namespace rae
