// Copyright 2026 The MHE-SDC Authors
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

// Training objectives: pixel-wise MSE plus an optional relative-height term
// (scale-invariant residual variance, ordinal ranking, or multi-scale
// gradient matching).
//
// Residuals are R = gt - pred in height units. For rank-4 inputs [N,C,H,W]
// the per-image terms are evaluated per image and averaged over N; any
// other rank is treated as a single image.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mhe/graph.hpp"
#include "mhe/tensor.hpp"

namespace mhe::losses {

enum class LossVariant { kMseOnly, kScaleInvariant, kRank, kGradientMatching };

std::string_view to_string(LossVariant v);
LossVariant parse_loss_variant(std::string_view name);

struct LossConfig {
  LossVariant variant = LossVariant::kMseOnly;
  std::size_t rank_pairs = 512;   // pairs per image per step
  double rank_threshold = 0.25;   // meters
  // Pyramid levels as downsample divisors: {1, 2, 4, 8} is scales
  // {1, 1/2, 1/4, 1/8}.
  std::vector<std::size_t> msg_scales = {1, 2, 4, 8};
  double weight = 1.0;            // weight of the relative-height term

  void validate() const;
};

// View of a tensor as a stack of images: rank-4 tensors split along N,
// anything else is one image whose last two extents are H and W.
struct ImageSplit {
  std::size_t count = 1;
  std::size_t size = 0;
  std::size_t h = 1;
  std::size_t w = 0;
};

ImageSplit split_images(const Dims& dims);

struct OrdinalPair {
  std::size_t i = 0;  // flat index into the prediction tensor
  std::size_t j = 0;
  int label = 0;      // +1: gt_i above gt_j, -1: below, 0: within threshold
};

// ---------------------------------------------------------------------------
// Shared kernels. The metrics module evaluates exactly these functions.

// (1/n) sum R^2 - (1/n^2) (sum R)^2, evaluated as the mean squared
// deviation of R from its mean (same quantity, never negative).
template <typename T>
double scale_invariant_error(std::span<const T> pred, std::span<const T> gt);

// (1/M) sum over levels of |forward differences| of the level residual in
// both axes, last row/column excluded; M = h*w of the full-res map.
template <typename T>
double gradient_matching_error(std::span<const T> pred, std::span<const T> gt,
                               std::size_t h, std::size_t w,
                               std::span<const std::size_t> scales);

int ordinal_label(double gt_i, double gt_j, double threshold);

// Uniform pixel pairs within each image of gt, labelled from gt.
template <typename T>
std::vector<OrdinalPair> sample_ordinal_pairs(const Tensor<T>& gt,
                                              std::size_t pairs_per_image,
                                              double threshold,
                                              std::uint64_t seed);

// ---------------------------------------------------------------------------
// Differentiable losses

template <typename T>
Var<T> loss_mse(const Var<T>& pred, const Tensor<T>& gt);

template <typename T>
Var<T> loss_si(const Var<T>& pred, const Tensor<T>& gt);

template <typename T>
Var<T> loss_rank(const Var<T>& pred, std::span<const OrdinalPair> pairs);

template <typename T>
Var<T> loss_msg(const Var<T>& pred, const Tensor<T>& gt,
                std::span<const std::size_t> scales);

// MSE + weight * selected relative term. `step_seed` drives pair sampling
// for the rank variant.
template <typename T>
Var<T> loss_total(const Var<T>& pred, const Tensor<T>& gt,
                  const LossConfig& cfg, std::uint64_t step_seed);

}  // namespace mhe::losses
