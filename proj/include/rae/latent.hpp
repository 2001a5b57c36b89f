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
#include <vector>

#include "rae/tensor.hpp"

namespace rae {

/// Token geometry of one latent: N tokens of width d.
struct LatentShape {
  std::size_t tokens = 16;
  std::size_t width = 64;

  std::size_t effective_dim() const { return tokens * width; }
  bool operator==(const LatentShape&) const = default;
};

/// B x N x d token matrices with one condition id per row.
struct LatentBatch {
  Tensor latents;
  std::vector<std::size_t> conditions;

  std::size_t size() const { return latents.defined() ? latents.dim(0) : 0; }
};

/// Row `i` of a batch-major tensor, as its own tensor of shape shape[1:].
Tensor batch_row(const Tensor& batch, std::size_t i);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack_rows(const std::vector<Tensor>& rows);

}  // namespace rae
