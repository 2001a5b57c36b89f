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
#include <vector>

#include "rae/tensor.hpp"

namespace rae {

inline constexpr double kAdamEps = 1e-8;

struct AdamWOptions {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.0;
  double eps = kAdamEps;
};

/// Per-parameter AdamW moments. Moments start at zero; `step` counts
/// completed updates.
struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
  AdamWOptions options;

  static OptimizerState for_params(const std::vector<Tensor>& params, AdamWOptions options);
};

/// One AdamW update: decoupled decay `w -= lr*wd*w`, then the bias-corrected
/// Adam step. Throws DimensionError when params, grads and moments disagree.
void adamw_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
                OptimizerState& state);

/// AdamW bound to a parameter list; reads gradients off the tensors.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWOptions options);

  void zero_grad();
  void step();
  void set_lr(double lr) { state_.options.lr = lr; }
  double lr() const { return state_.options.lr; }
  const OptimizerState& state() const { return state_; }

 private:
  std::vector<Tensor> params_;
  OptimizerState state_;
};

/// Linear warmup to `max_lr`, then cosine decay to `min_lr` at `total_steps`.
class CosineWarmupSchedule {
 public:
  CosineWarmupSchedule(double max_lr, double min_lr, std::int64_t total_steps, double warmup_ratio);

  double lr_at(std::int64_t step) const;
  std::int64_t warmup_steps() const { return warmup_; }

 private:
  double max_lr_;
  double min_lr_;
  std::int64_t total_;
  std::int64_t warmup_;
};

}  // namespace rae
