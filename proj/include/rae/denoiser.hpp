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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rae/latent.hpp"
#include "rae/nn.hpp"
#include "rae/tensor.hpp"

namespace rae {

struct DenoiserConfig {
  std::size_t hidden = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  LatentShape latent{8, 16};
  /// Width of the optional wide, shallow head. Absent means no head.
  std::optional<std::size_t> ddt_head_width;
  std::size_t ddt_head_depth = 2;
  /// Conditioning vector width; 0 for an unconditional model.
  std::size_t cond_dim = 32;
  std::size_t mlp_ratio = 4;
  /// Sinusoidal timestep feature width (even).
  std::size_t freq_dim = 32;

  /// Throws ConfigError naming the offending `denoiser.*` key.
  void validate() const;
  bool operator==(const DenoiserConfig&) const = default;
};

/// One residual-stream stage, for structural inspection.
struct StageShape {
  std::string name;
  std::size_t in_width;
  std::size_t out_width;
};

/// DiT-style velocity network over token latents.
///
/// Tokens are embedded linearly (latents are already tokens, no patching) and
/// get learned position embeddings. The timestep enters through sinusoidal
/// features and an MLP; the projected condition is added to that embedding.
/// Each block is pre-norm attention + GELU MLP whose shift/scale/gate come
/// from the embedding (adaLN). All modulation maps and the output projection
/// start at zero, so a fresh model predicts zero velocity.
///
/// With `ddt_head_width` set, a linear adapter widens the stream after the
/// backbone and `ddt_head_depth` blocks run at the head width before the
/// output projection.
class Denoiser {
 public:
  static Denoiser build(const DenoiserConfig& config, std::uint64_t seed);

  /// x_t: [B, N, d]; t: B timesteps; cond: [B, cond_dim] (ignored when
  /// cond_dim = 0, may be undefined). Returns [B, N, d].
  Tensor forward(const Tensor& x_t, std::span<const double> t, const Tensor& cond) const;

  const DenoiserConfig& config() const { return config_; }
  const ParamList& params() const { return params_; }
  std::size_t param_count() const { return params_.count(); }
  std::vector<StageShape> stage_shapes() const;

  /// Entries named `<prefix><layer>/<param>`, prefix defaults to "denoiser/".
  void save(Checkpoint& ckpt, const std::string& prefix = "denoiser/") const;
  void load(const Checkpoint& ckpt, const std::string& prefix = "denoiser/");

  /// Adds N(0, scale^2) noise to every parameter. Test helper: zero-init
  /// layers otherwise hide most of the gradient paths.
  void perturb(std::uint64_t seed, double scale);

 private:
  struct Block {
    std::size_t width = 0;
    std::size_t heads = 0;
    Linear ada, qkv, proj, fc1, fc2;
    Tensor forward(const Tensor& x, const Tensor& cond_act) const;
  };

  Denoiser() = default;

  DenoiserConfig config_;
  Linear embed_, time_fc1_, time_fc2_, cond_proj_;
  Tensor pos_;
  std::vector<Block> blocks_;
  Linear head_in_, head_skip_;
  std::vector<Block> head_blocks_;
  Linear final_ada_, final_out_;
  ParamList params_;
};

/// Exact learned-parameter count of `Denoiser::build(config, *)`.
std::size_t param_count(const DenoiserConfig& config);

/// Sinusoidal timestep features [B, dim]; t is scaled by 1000 first.
Tensor timestep_features(std::span<const double> t, std::size_t dim);

}  // namespace rae
