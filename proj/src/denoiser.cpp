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

#include "rae/denoiser.hpp"

#include <cmath>

#include "rae/error.hpp"
#include "rae/rng.hpp"

namespace rae {
namespace {

std::size_t block_count(std::size_t cond_width, std::size_t width, std::size_t mlp_ratio) {
  return Linear::count(cond_width, 6 * width) + Linear::count(width, 3 * width) + Linear::count(width, width) +
         Linear::count(width, mlp_ratio * width) + Linear::count(mlp_ratio * width, width);
}

// Multi-head self-attention over [B, N, w] given fused qkv [B, N, 3w].
Tensor attention(const Tensor& qkv, std::size_t heads) {
  const std::size_t b = qkv.dim(0);
  const std::size_t n = qkv.dim(1);
  const std::size_t w = qkv.dim(2) / 3;
  const std::size_t dh = w / heads;
  // [B, N, 3, H, dh] -> [3, B, H, N, dh]
  const Tensor split = permute(reshape(qkv, {b, n, 3, heads, dh}), {2, 0, 3, 1, 4});
  const Tensor q = reshape(slice(split, 0, 0, 1), {b, heads, n, dh});
  const Tensor k = reshape(slice(split, 0, 1, 1), {b, heads, n, dh});
  const Tensor v = reshape(slice(split, 0, 2, 1), {b, heads, n, dh});
  const Tensor scores = scale(bmm(q, transpose_last(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
  const Tensor mixed = bmm(softmax(scores, 3), v);  // [B, H, N, dh]
  return reshape(permute(mixed, {0, 2, 1, 3}), {b, n, w});
}

Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scale_) {
  return add(mul(layer_norm(x), add_scalar(scale_, 1.0)), shift);
}

}  // namespace

void DenoiserConfig::validate() const {
  if (hidden == 0) throw ConfigError("denoiser.hidden", "must be positive");
  if (heads == 0) throw ConfigError("denoiser.heads", "must be positive");
  if (hidden % heads != 0) throw ConfigError("denoiser.heads", "hidden width must be divisible by heads");
  if (latent.tokens == 0) throw ConfigError("denoiser.latent_tokens", "must be positive");
  if (latent.width == 0) throw ConfigError("denoiser.latent_width", "must be positive");
  if (mlp_ratio == 0) throw ConfigError("denoiser.mlp_ratio", "must be positive");
  if (freq_dim == 0 || freq_dim % 2 != 0) throw ConfigError("denoiser.freq_dim", "must be positive and even");
  if (ddt_head_width) {
    if (*ddt_head_width <= hidden) {
      throw ConfigError("denoiser.ddt_head_width", "head must be wider than the backbone");
    }
    if (*ddt_head_width % heads != 0) {
      throw ConfigError("denoiser.ddt_head_width", "head width must be divisible by heads");
    }
    if (ddt_head_depth == 0) throw ConfigError("denoiser.ddt_head_depth", "must be positive");
  }
}

std::size_t param_count(const DenoiserConfig& c) {
  c.validate();
  const std::size_t d = c.latent.width;
  std::size_t n = Linear::count(d, c.hidden) + c.latent.tokens * c.hidden;
  n += Linear::count(c.freq_dim, c.hidden) + Linear::count(c.hidden, c.hidden);
  if (c.cond_dim > 0) n += Linear::count(c.cond_dim, c.hidden);
  n += c.depth * block_count(c.hidden, c.hidden, c.mlp_ratio);
  std::size_t out_width = c.hidden;
  if (c.ddt_head_width) {
    out_width = *c.ddt_head_width;
    n += Linear::count(c.hidden, out_width) + Linear::count(d, out_width) +
         c.ddt_head_depth * block_count(c.hidden, out_width, c.mlp_ratio);
  }
  n += Linear::count(c.hidden, 2 * out_width) + Linear::count(out_width, d);
  return n;
}

Tensor timestep_features(std::span<const double> t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> out(t.size() * dim);
  for (std::size_t b = 0; b < t.size(); ++b) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      const double arg = 1000.0 * t[b] * freq;
      out[b * dim + i] = std::cos(arg);
      out[b * dim + half + i] = std::sin(arg);
    }
  }
  return Tensor::from({t.size(), dim}, std::move(out));
}

Tensor Denoiser::Block::forward(const Tensor& x, const Tensor& cond_act) const {
  const std::size_t b = x.dim(0);
  const Tensor mod = reshape(ada(cond_act), {b, 1, 6 * width});
  auto part = [&](std::size_t k) { return slice(mod, 2, k * width, width); };
  const Tensor attn_in = modulate(x, part(0), part(1));
  Tensor out = add(x, mul(part(2), proj(attention(qkv(attn_in), heads))));
  const Tensor mlp_in = modulate(out, part(3), part(4));
  return add(out, mul(part(5), fc2(gelu(fc1(mlp_in)))));
}

Denoiser Denoiser::build(const DenoiserConfig& config, std::uint64_t seed) {
  config.validate();
  Denoiser m;
  m.config_ = config;
  Rng rng(seed);
  const std::size_t h = config.hidden;
  const std::size_t d = config.latent.width;

  m.embed_ = Linear(d, h, rng);
  std::vector<double> pos(config.latent.tokens * h);
  for (auto& v : pos) v = 0.02 * rng.normal();
  m.pos_ = Tensor::from({config.latent.tokens, h}, std::move(pos), true);
  m.time_fc1_ = Linear(config.freq_dim, h, rng);
  m.time_fc2_ = Linear(h, h, rng);
  if (config.cond_dim > 0) m.cond_proj_ = Linear(config.cond_dim, h, rng);

  auto make_block = [&](std::size_t width) {
    Block blk;
    blk.width = width;
    blk.heads = config.heads;
    blk.ada = Linear(h, 6 * width, rng, Init::kZero);
    blk.qkv = Linear(width, 3 * width, rng);
    blk.proj = Linear(width, width, rng);
    blk.fc1 = Linear(width, config.mlp_ratio * width, rng);
    blk.fc2 = Linear(config.mlp_ratio * width, width, rng);
    return blk;
  };
  for (std::size_t i = 0; i < config.depth; ++i) m.blocks_.push_back(make_block(h));
  std::size_t out_width = h;
  if (config.ddt_head_width) {
    out_width = *config.ddt_head_width;
    m.head_in_ = Linear(h, out_width, rng);
    m.head_skip_ = Linear(d, out_width, rng);
    for (std::size_t i = 0; i < config.ddt_head_depth; ++i) m.head_blocks_.push_back(make_block(out_width));
  }
  m.final_ada_ = Linear(h, 2 * out_width, rng, Init::kZero);
  m.final_out_ = Linear(out_width, d, rng, Init::kZero);

  auto& p = m.params_;
  p.append("embed/", m.embed_.params());
  p.add("pos/weight", m.pos_);
  p.append("time_fc1/", m.time_fc1_.params());
  p.append("time_fc2/", m.time_fc2_.params());
  if (config.cond_dim > 0) p.append("cond_proj/", m.cond_proj_.params());
  auto add_block = [&](const std::string& name, const Block& blk) {
    p.append(name + ".ada/", blk.ada.params());
    p.append(name + ".qkv/", blk.qkv.params());
    p.append(name + ".proj/", blk.proj.params());
    p.append(name + ".fc1/", blk.fc1.params());
    p.append(name + ".fc2/", blk.fc2.params());
  };
  for (std::size_t i = 0; i < m.blocks_.size(); ++i) add_block("block" + std::to_string(i), m.blocks_[i]);
  if (config.ddt_head_width) {
    p.append("head_in/", m.head_in_.params());
    p.append("head_skip/", m.head_skip_.params());
    for (std::size_t i = 0; i < m.head_blocks_.size(); ++i) add_block("head_block" + std::to_string(i), m.head_blocks_[i]);
  }
  p.append("final_ada/", m.final_ada_.params());
  p.append("final_out/", m.final_out_.params());
  return m;
}

Tensor Denoiser::forward(const Tensor& x_t, std::span<const double> t, const Tensor& cond) const {
  const auto& c = config_;
  if (x_t.rank() != 3 || x_t.dim(1) != c.latent.tokens || x_t.dim(2) != c.latent.width) {
    throw DimensionError("Denoiser::forward: expected [B, " + std::to_string(c.latent.tokens) + ", " +
                         std::to_string(c.latent.width) + "], got " + shape_str(x_t.shape()));
  }
  const std::size_t b = x_t.dim(0);
  if (t.size() != b) throw DimensionError("Denoiser::forward: need one timestep per batch row");

  Tensor emb = time_fc2_(silu(time_fc1_(timestep_features(t, c.freq_dim))));
  if (c.cond_dim > 0) {
    if (!cond.defined() || cond.shape() != Shape{b, c.cond_dim}) {
      throw DimensionError("Denoiser::forward: condition must be [" + std::to_string(b) + ", " +
                           std::to_string(c.cond_dim) + "]");
    }
    emb = add(emb, cond_proj_(cond));
  }
  const Tensor cond_act = silu(emb);

  Tensor x = add(embed_(x_t), pos_);
  for (const auto& blk : blocks_) x = blk.forward(x, cond_act);
  std::size_t out_width = c.hidden;
  if (c.ddt_head_width) {
    out_width = *c.ddt_head_width;
    x = add(head_in_(x), head_skip_(x_t));
    for (const auto& blk : head_blocks_) x = blk.forward(x, cond_act);
  }
  const Tensor mod = reshape(final_ada_(cond_act), {b, 1, 2 * out_width});
  const Tensor y = modulate(x, slice(mod, 2, 0, out_width), slice(mod, 2, out_width, out_width));
  return final_out_(y);
}

std::vector<StageShape> Denoiser::stage_shapes() const {
  std::vector<StageShape> out;
  out.push_back({"embed", embed_.in_features(), embed_.out_features()});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    out.push_back({"block" + std::to_string(i), blocks_[i].width, blocks_[i].width});
  }
  if (config_.ddt_head_width) {
    out.push_back({"head_in", head_in_.in_features(), head_in_.out_features()});
    out.push_back({"head_skip", head_skip_.in_features(), head_skip_.out_features()});
    for (std::size_t i = 0; i < head_blocks_.size(); ++i) {
      out.push_back({"head_block" + std::to_string(i), head_blocks_[i].width, head_blocks_[i].width});
    }
  }
  out.push_back({"final_out", final_out_.in_features(), final_out_.out_features()});
  return out;
}

void Denoiser::save(Checkpoint& ckpt, const std::string& prefix) const { params_.save(ckpt, prefix); }

void Denoiser::load(const Checkpoint& ckpt, const std::string& prefix) { params_.load(ckpt, prefix); }

void Denoiser::perturb(std::uint64_t seed, double scale_) {
  Rng rng(seed);
  for (const auto& [name, t] : params_.items()) {
    Tensor handle = t;
    for (auto& v : handle.mutable_values()) v += scale_ * rng.normal();
  }
}

}  // namespace rae
