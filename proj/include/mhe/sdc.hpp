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

// Scale-deformable convolution (SDC).
//
// A k x k convolution whose taps are resampled per output pixel. For output
// pixel (y, x) and tap (kh, kw) with base offset (bi, bj) = (kh - k/2,
// kw - k/2), the sampling position in input pixel coordinates is
//
//   row = y + eta_row(y, x) * bi + d_row(t, y, x)
//   col = x + eta_col(y, x) * bj + d_col(t, y, x)
//
// where eta = softplus(dil_raw) is a positive per-pixel dilation multiplier
// shared by all taps and channels, and d is a free per-tap offset. The input
// is read with the bilinear tent kernel max(0, 1 - |p - v|) per axis and zero
// outside the image, so with eta = 1 and d = 0 the operator is exactly a
// stride-1 convolution with k/2 zero padding.
//
// Tensor layouts:
//   x        [N, C, H, W]
//   weight   [Co, C, k, k]
//   offsets  [N, 2*k*k, H, W]  channel 2t = row offset, 2t+1 = column offset
//                              of tap t = kh*k + kw, in pixels
//   dil_raw  [N, 2, H, W]      channel 0 = row rate, 1 = column rate (raw)
//   output   [N, Co, H, W]

#include <memory>
#include <vector>

#include "mhe/graph.hpp"
#include "mhe/tensor.hpp"

namespace mhe::sdc {

// softplus^-1(1) = log(e - 1): the raw dilation that gives eta = 1.
inline constexpr double kIdentityDilationRaw = 0.54132485461291810;

template <typename T>
struct SdcParams {
  Tensor<T> weight;
  Tensor<T> offsets;
  Tensor<T> dil_raw;
};

template <typename T>
struct SdcGradients {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> offsets;
  Tensor<T> dil_raw;
};

// Which gradient families a backward pass should produce.
struct SdcNeeds {
  bool input = true;
  bool weight = true;
  bool offsets = true;
  bool dil_raw = true;
};

// Sampling coordinates of every tap, each [N, k*k, H, W].
template <typename T>
struct SamplingGrid {
  Tensor<T> rows;
  Tensor<T> cols;
};

// Shared by the grid, the fast path and the oracle so the coordinate
// formula exists once.
template <typename T>
inline T tap_coordinate(T center, T rate, T base, T offset) {
  return center + rate * base + offset;
}

template <typename T>
SamplingGrid<T> sampling_grid(const SdcParams<T>& params);

template <typename T>
Tensor<T> sdc_forward(const Tensor<T>& x, const SdcParams<T>& params);

// Forward pass that keeps what backward needs.
template <typename T>
class SdcContext {
 public:
  SdcContext() = default;

  static SdcContext run(Tensor<T> x, SdcParams<T> params);

  const Tensor<T>& output() const;
  SdcGradients<T> backward(const Tensor<T>& grad_out,
                           SdcNeeds needs = {}) const;

 private:
  bool ready_ = false;
  Tensor<T> x_;
  SdcParams<T> params_;
  std::vector<T> cols_;  // [N][C*k*k][H*W] sampled input values
  Tensor<T> out_;
};

// Convenience: runs the forward pass internally.
template <typename T>
SdcGradients<T> sdc_backward(const Tensor<T>& x, const SdcParams<T>& params,
                             const Tensor<T>& grad_out);

// Direct evaluation of the bilinear-sampled sum over every input pixel,
// without floor/corner shortcuts. Reference semantics for small inputs.
template <typename T>
Tensor<T> sdc_oracle(const Tensor<T>& x, const SdcParams<T>& params);

template <typename T>
Var<T> sdc(const Var<T>& x, const Var<T>& weight, const Var<T>& offsets,
           const Var<T>& dil_raw);

// Two 1x1 convolution branches that turn features into offsets and raw
// dilation rates.
template <typename T>
struct SdcHead {
  Tensor<T> offset_weight;  // [2k^2, C, 1, 1]
  Tensor<T> offset_bias;    // [2k^2]
  Tensor<T> dil_weight;     // [2, C, 1, 1]
  Tensor<T> dil_bias;       // [2]

  // Zero weights, zero offset bias and the identity dilation bias: the
  // layer starts out as a plain convolution.
  static SdcHead identity(std::size_t channels, std::size_t k);
};

template <typename T>
struct PredictedParams {
  Var<T> offsets;
  Var<T> dil_raw;
};

// `output_dims` are the dims of the SDC output the parameters must align
// with; features must share its N, H and W.
template <typename T>
PredictedParams<T> predict_params(const Var<T>& features,
                                  const Var<T>& offset_weight,
                                  const Var<T>& offset_bias,
                                  const Var<T>& dil_weight,
                                  const Var<T>& dil_bias,
                                  const Dims& output_dims);

// Mutation hook for the gradient-check sentinel.
enum class Fault { kNone, kFlipDilationChainSign };
void set_fault(Fault fault);
Fault current_fault();

}  // namespace mhe::sdc
