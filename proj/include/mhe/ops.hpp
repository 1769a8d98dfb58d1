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

#include <cstddef>

#include "mhe/graph.hpp"
#include "mhe/tensor.hpp"

namespace mhe::ops {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// ---------------------------------------------------------------------------
// Tensor kernels

// Zero-padded cross-correlation: x [N,C,H,W], w [Co,C,k,k] with odd k.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, ConvGeometry geom);

template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& grad_out, const Tensor<T>& w,
                            const Dims& x_dims, ConvGeometry geom);

template <typename T>
Tensor<T> conv2d_grad_weight(const Tensor<T>& x, const Tensor<T>& grad_out,
                             const Dims& w_dims, ConvGeometry geom);

// Non-overlapping `factor` x `factor` mean pooling over the last two axes.
// `factor` is a power of two and must divide both spatial extents.
template <typename T>
Tensor<T> resize_avg(const Tensor<T>& x, std::size_t factor);

// Adjoint of resize_avg: spreads each value uniformly over its block.
template <typename T>
Tensor<T> resize_avg_grad(const Tensor<T>& grad_out, std::size_t factor);

template <typename T>
T softplus(T x);
template <typename T>
T sigmoid(T x);

// ---------------------------------------------------------------------------
// Differentiable operations recorded on a Graph

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, ConvGeometry geom);

// Adds b [C] along the channel axis of x [N,C,H,W].
template <typename T>
Var<T> bias_add(const Var<T>& x, const Var<T>& b);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& a, T factor);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> softplus(const Var<T>& x);

template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

// Scalar sum(a * weights) with a constant weight tensor.
template <typename T>
Var<T> dot(const Var<T>& a, const Tensor<T>& weights);

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, std::size_t factor);

template <typename T>
Var<T> resize_avg(const Var<T>& x, std::size_t factor);

}  // namespace mhe::ops
