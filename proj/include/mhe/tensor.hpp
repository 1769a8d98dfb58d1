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
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mhe {

using Dims = std::vector<std::size_t>;

inline constexpr std::size_t kMaxRank = 4;

std::size_t element_count(const Dims& dims);
std::string dims_to_string(const Dims& dims);

// Extents of a rank-4 raster in N,C,H,W order.
struct Nchw {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t plane() const { return h * w; }
  Dims dims() const { return {n, c, h, w}; }
};

/// Dense row-major array of rank <= 4.
///
/// A rank-0 tensor is a scalar with one element. Every extent is >= 1 and
/// the element count always equals the product of the extents.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(1, T{0}) {}
  explicit Tensor(Dims dims, T fill = T{0});
  Tensor(Dims dims, std::vector<T> data);

  static Tensor zeros(Dims dims) { return Tensor(std::move(dims)); }
  static Tensor full(Dims dims, T value) { return Tensor(std::move(dims), value); }
  static Tensor scalar(T value) { return Tensor(Dims{}, value); }
  // Same as the (dims, data) constructor but also rejects NaN/Inf. Use for
  // anything read from files or user input.
  static Tensor from_external(Dims dims, std::vector<T> data);

  const Dims& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_.size(); }
  Nchw nchw() const;

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }

  T item() const;
  bool all_finite() const;

  Tensor reshaped(Dims dims) const;
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(dims_, std::move(out));
  }

  // In-place helpers for kernels that own the tensor being built.
  void fill(T value);
  void add_inplace(const Tensor& other);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  Dims dims_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

void require_same_dims(const Dims& a, const Dims& b, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mhe
