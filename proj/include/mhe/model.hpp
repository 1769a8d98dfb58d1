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

// Small encoder-decoder height regressor with a context block before the
// prediction head. The context block is either a scale-deformable
// convolution or a plain convolution of the same kernel size.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mhe/graph.hpp"
#include "mhe/tensor.hpp"

namespace mhe::model {

enum class ContextKind { kSdc, kConv };

std::string_view to_string(ContextKind kind);
ContextKind parse_context_kind(std::string_view name);

struct ModelSpec {
  std::vector<std::size_t> channels = {8, 16, 32};  // one entry per stage
  std::size_t sdc_kernel = 3;
  ContextKind context = ContextKind::kSdc;
  double height_scale = 10.0;  // meters per unit of softplus output

  void validate() const;
  // Extents must be divisible by this.
  std::size_t spatial_divisor() const;
  std::string canonical() const;
  std::uint64_t fingerprint() const;
  static ModelSpec parse(std::string_view canonical);

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct ParamSlot {
  std::string name;
  Dims dims;
};

// Parameter names and shapes in canonical order.
std::vector<ParamSlot> parameter_layout(const ModelSpec& spec);

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

template <typename T>
class Model {
 public:
  Model() = default;

  // He-normal weights, zero biases, identity SDC branches. Every tensor
  // draws from its own stream keyed by name, so models that share a
  // parameter name share its initial value.
  static Model initialize(const ModelSpec& spec, std::uint64_t seed);
  static Model from_parameters(const ModelSpec& spec, std::uint64_t seed,
                               std::vector<NamedTensor<T>> params);

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  bool initialized() const { return !params_.empty(); }

  const std::vector<NamedTensor<T>>& parameters() const { return params_; }
  std::vector<NamedTensor<T>>& parameters() { return params_; }
  const Tensor<T>& parameter(std::string_view name) const;
  Tensor<T>& parameter(std::string_view name);

  std::vector<Var<T>> bind(Graph<T>& graph, bool requires_grad = true) const;
  // `image` is [N, 3, H, W]; returns [N, 1, H, W].
  Var<T> forward(const std::vector<Var<T>>& params, const Var<T>& image) const;
  Tensor<T> predict(const Tensor<T>& image) const;

  template <typename U>
  Model<U> cast() const {
    std::vector<NamedTensor<U>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back({p.name, p.value.template cast<U>()});
    return Model<U>::from_parameters(spec_, seed_, std::move(out));
  }

  friend bool operator==(const Model& a, const Model& b) {
    if (a.spec_ != b.spec_ || a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
      if (a.params_[i].name != b.params_[i].name ||
          !(a.params_[i].value == b.params_[i].value)) {
        return false;
      }
    }
    return true;
  }

 private:
  ModelSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<NamedTensor<T>> params_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace mhe::model
