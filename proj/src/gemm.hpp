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

// Small dense matrix kernels shared by the convolution operators. All
// matrices are row-major and every routine accumulates into C. Each output
// row is owned by exactly one thread and summed in a fixed order, so
// results do not depend on the thread count.

#include <cstddef>

#include "mhe/parallel.hpp"

namespace mhe::detail {

// Rows of work below which spawning threads costs more than it saves.
inline constexpr std::size_t kParallelMinWork = 1 << 15;

// C[M x N] += A[M x K] * B[K x N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c) {
  const bool par = m * n * k >= kParallelMinWork;
#pragma omp parallel for schedule(static) num_threads(kernel_threads()) if (par)
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T{0}) continue;
      const T* brow = b + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M x N] += A^T * B, with A stored as [K x M] and B as [K x N].
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c) {
  const bool par = m * n * k >= kParallelMinWork;
#pragma omp parallel for schedule(static) num_threads(kernel_threads()) if (par)
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[p * m + i];
      if (av == T{0}) continue;
      const T* brow = b + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M x N] += A * B^T, with A stored as [M x K] and B as [N x K].
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c) {
  const bool par = m * n * k >= kParallelMinWork;
#pragma omp parallel for schedule(static) num_threads(kernel_threads()) if (par)
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = 0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

}  // namespace mhe::detail
