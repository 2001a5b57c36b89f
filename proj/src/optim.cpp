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

#include "rae/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rae/error.hpp"

namespace rae {

OptimizerState OptimizerState::for_params(const std::vector<Tensor>& params, AdamWOptions options) {
  if (!(options.beta1 > 0.0 && options.beta1 < 1.0 && options.beta2 > 0.0 && options.beta2 < 1.0)) {
    throw ConfigError("optim.betas", "betas must lie in (0, 1)");
  }
  OptimizerState state;
  state.options = options;
  for (const auto& p : params) {
    state.m.emplace_back(p.numel(), 0.0);
    state.v.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adamw_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
                OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw DimensionError("adamw_step: parameter, gradient and state counts differ");
  }
  const auto& o = state.options;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_values();
    const auto& g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (g.size() != w.size() || m.size() != w.size() || v.size() != w.size()) {
      throw DimensionError("adamw_step: shape mismatch on parameter " + std::to_string(i));
    }
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      w[k] -= o.lr * o.weight_decay * w[k];
      w[k] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options)
    : params_(std::move(params)), state_(OptimizerState::for_params(params_, options)) {}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamW::step() {
  std::vector<std::vector<double>> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) {
    if (p.has_grad()) {
      grads.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      grads.emplace_back(p.numel(), 0.0);
    }
  }
  adamw_step(params_, grads, state_);
}

CosineWarmupSchedule::CosineWarmupSchedule(double max_lr, double min_lr, std::int64_t total_steps,
                                           double warmup_ratio)
    : max_lr_(max_lr),
      min_lr_(min_lr),
      total_(std::max<std::int64_t>(total_steps, 1)),
      warmup_(static_cast<std::int64_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps)))) {}

double CosineWarmupSchedule::lr_at(std::int64_t step) const {
  if (step < warmup_) return max_lr_ * static_cast<double>(step + 1) / static_cast<double>(warmup_);
  const double span = static_cast<double>(std::max<std::int64_t>(total_ - warmup_, 1));
  const double progress = std::clamp(static_cast<double>(step - warmup_) / span, 0.0, 1.0);
  return min_lr_ + 0.5 * (max_lr_ - min_lr_) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace rae
