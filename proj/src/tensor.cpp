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
#include "mhe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mhe/error.hpp"

namespace mhe {

namespace {

void validate_dims(const Dims& dims) {
  if (dims.size() > kMaxRank) {
    throw InvalidArgument("tensor rank " + std::to_string(dims.size()) +
                          " exceeds 4");
  }
  for (std::size_t d : dims) {
    if (d == 0) {
      throw InvalidArgument("tensor extents must be >= 1, got " +
                            dims_to_string(dims));
    }
  }
}

}  // namespace

std::size_t element_count(const Dims& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::string dims_to_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " +
                          dims_to_string(a) + " vs " + dims_to_string(b));
  }
}

template <typename T>
Tensor<T>::Tensor(Dims dims, T fill) : dims_(std::move(dims)) {
  validate_dims(dims_);
  data_.assign(element_count(dims_), fill);
}

template <typename T>
Tensor<T>::Tensor(Dims dims, std::vector<T> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  validate_dims(dims_);
  if (data_.size() != element_count(dims_)) {
    throw InvalidArgument("tensor data has " + std::to_string(data_.size()) +
                          " values but shape " + dims_to_string(dims_) +
                          " needs " + std::to_string(element_count(dims_)));
  }
}

template <typename T>
Tensor<T> Tensor<T>::from_external(Dims dims, std::vector<T> data) {
  Tensor t(std::move(dims), std::move(data));
  if (!t.all_finite()) {
    throw InvalidArgument("tensor contains NaN or Inf");
  }
  return t;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= dims_.size()) {
    throw InvalidArgument("axis " + std::to_string(axis) +
                          " out of range for shape " + dims_to_string(dims_));
  }
  return dims_[axis];
}

template <typename T>
Nchw Tensor<T>::nchw() const {
  if (dims_.size() != 4) {
    throw InvalidArgument("expected N,C,H,W tensor, got " +
                          dims_to_string(dims_));
  }
  return {dims_[0], dims_[1], dims_[2], dims_[3]};
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) {
    throw InvalidArgument("item() on tensor of shape " + dims_to_string(dims_));
  }
  return data_[0];
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Dims dims) const {
  if (element_count(dims) != data_.size()) {
    throw InvalidArgument("cannot reshape " + dims_to_string(dims_) + " to " +
                          dims_to_string(dims));
  }
  return Tensor(std::move(dims), data_);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
void Tensor<T>::add_inplace(const Tensor& other) {
  require_same_dims(dims_, other.dims_, "add_inplace");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace mhe
