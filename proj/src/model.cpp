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
#include "mhe/model.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "mhe/error.hpp"
#include "mhe/metrics.hpp"
#include "mhe/ops.hpp"
#include "mhe/random.hpp"
#include "mhe/sdc.hpp"

namespace mhe::model {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t at = s.find(sep, start);
    out.push_back(s.substr(start, at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return out;
}

template <typename N>
N parse_num(std::string_view field, std::string_view what) {
  N v{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw InvalidArgument("model spec: bad " + std::string(what) + " '" +
                          std::string(field) + "'");
  }
  return v;
}

bool is_bias(std::string_view name) {
  return name.size() > 5 && name.substr(name.size() - 5) == ".bias";
}

std::size_t pos_of(const std::vector<ParamSlot>& layout, std::string_view name) {
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].name == name) return i;
  }
  throw InvalidArgument("model: no parameter named '" + std::string(name) + "'");
}

}  // namespace

std::string_view to_string(ContextKind kind) {
  return kind == ContextKind::kSdc ? "sdc" : "conv";
}

ContextKind parse_context_kind(std::string_view name) {
  if (name == "sdc") return ContextKind::kSdc;
  if (name == "conv") return ContextKind::kConv;
  throw InvalidArgument("unknown context kind '" + std::string(name) +
                        "' (expected sdc or conv)");
}

void ModelSpec::validate() const {
  if (channels.empty()) throw InvalidArgument("model spec: no stages");
  for (std::size_t c : channels) {
    if (c == 0) throw InvalidArgument("model spec: zero channel count");
  }
  if (sdc_kernel % 2 == 0) {
    throw InvalidArgument("model spec: kernel size must be odd, got " +
                          std::to_string(sdc_kernel));
  }
  if (!(height_scale > 0) || !std::isfinite(height_scale)) {
    throw InvalidArgument("model spec: height_scale must be positive");
  }
}

std::size_t ModelSpec::spatial_divisor() const {
  return std::size_t{1} << (channels.size() - 1);
}

std::string ModelSpec::canonical() const {
  std::string out = "channels=";
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(channels[i]);
  }
  out += ";kernel=" + std::to_string(sdc_kernel);
  out += ";context=" + std::string(to_string(context));
  out += ";height_scale=" + metrics::format_number(height_scale);
  return out;
}

std::uint64_t ModelSpec::fingerprint() const { return fnv1a64(canonical()); }

ModelSpec ModelSpec::parse(std::string_view text) {
  ModelSpec spec;
  const auto fields = split(text, ';');
  if (fields.size() != 4) {
    throw InvalidArgument("model spec: malformed '" + std::string(text) + "'");
  }
  for (std::string_view f : fields) {
    const std::size_t eq = f.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidArgument("model spec: malformed field '" + std::string(f) + "'");
    }
    const std::string_view key = f.substr(0, eq);
    const std::string_view value = f.substr(eq + 1);
    if (key == "channels") {
      spec.channels.clear();
      for (std::string_view c : split(value, ',')) {
        spec.channels.push_back(parse_num<std::size_t>(c, "channel count"));
      }
    } else if (key == "kernel") {
      spec.sdc_kernel = parse_num<std::size_t>(value, "kernel");
    } else if (key == "context") {
      spec.context = parse_context_kind(value);
    } else if (key == "height_scale") {
      spec.height_scale = parse_num<double>(value, "height_scale");
    } else {
      throw InvalidArgument("model spec: unknown field '" + std::string(key) + "'");
    }
  }
  spec.validate();
  return spec;
}

std::vector<ParamSlot> parameter_layout(const ModelSpec& spec) {
  spec.validate();
  const auto& ch = spec.channels;
  const std::size_t k = spec.sdc_kernel;
  std::vector<ParamSlot> out;
  std::size_t in = 3;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    out.push_back({p + ".weight", {ch[i], in, 3, 3}});
    out.push_back({p + ".bias", {ch[i]}});
    in = ch[i];
  }
  for (std::size_t i = ch.size() - 1; i-- > 0;) {
    const std::string p = "dec" + std::to_string(i);
    out.push_back({p + ".weight", {ch[i], ch[i + 1], 3, 3}});
    out.push_back({p + ".bias", {ch[i]}});
  }
  const std::size_t c0 = ch[0];
  out.push_back({"ctx.weight", {c0, c0, k, k}});
  out.push_back({"ctx.bias", {c0}});
  if (spec.context == ContextKind::kSdc) {
    out.push_back({"ctx.offset.weight", {2 * k * k, c0, 1, 1}});
    out.push_back({"ctx.offset.bias", {2 * k * k}});
    out.push_back({"ctx.dil.weight", {2, c0, 1, 1}});
    out.push_back({"ctx.dil.bias", {2}});
  }
  out.push_back({"head.weight", {1, c0, 1, 1}});
  out.push_back({"head.bias", {1}});
  return out;
}

template <typename T>
Model<T> Model<T>::initialize(const ModelSpec& spec, std::uint64_t seed) {
  std::vector<NamedTensor<T>> params;
  for (const ParamSlot& slot : parameter_layout(spec)) {
    Tensor<T> t(slot.dims);
    if (slot.name == "ctx.dil.bias") {
      t.fill(static_cast<T>(sdc::kIdentityDilationRaw));
    } else if (slot.name.rfind("ctx.offset.", 0) == 0 ||
               slot.name.rfind("ctx.dil.", 0) == 0 || is_bias(slot.name)) {
      // zeros
    } else {
      const std::size_t fan_in = slot.dims[1] * slot.dims[2] * slot.dims[3];
      Rng rng(derive_seed(seed, slot.name));
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(dist(rng));
    }
    params.push_back({slot.name, std::move(t)});
  }
  return from_parameters(spec, seed, std::move(params));
}

template <typename T>
Model<T> Model<T>::from_parameters(const ModelSpec& spec, std::uint64_t seed,
                                   std::vector<NamedTensor<T>> params) {
  const auto layout = parameter_layout(spec);
  if (params.size() != layout.size()) {
    throw InvalidArgument("model: expected " + std::to_string(layout.size()) +
                          " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params[i].name != layout[i].name) {
      throw InvalidArgument("model: tensor " + std::to_string(i) + " is '" +
                            params[i].name + "', expected '" + layout[i].name + "'");
    }
    require_same_dims(params[i].value.dims(), layout[i].dims, layout[i].name.c_str());
    if (!params[i].value.all_finite()) {
      throw InvalidArgument("model: non-finite values in '" + layout[i].name + "'");
    }
  }
  Model m;
  m.spec_ = spec;
  m.seed_ = seed;
  m.params_ = std::move(params);
  return m;
}

template <typename T>
const Tensor<T>& Model<T>::parameter(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw InvalidArgument("model: no parameter named '" + std::string(name) + "'");
}

template <typename T>
Tensor<T>& Model<T>::parameter(std::string_view name) {
  return const_cast<Tensor<T>&>(std::as_const(*this).parameter(name));
}

template <typename T>
std::vector<Var<T>> Model<T>::bind(Graph<T>& graph, bool requires_grad) const {
  if (!initialized()) throw InvalidArgument("model: uninitialized weights");
  std::vector<Var<T>> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(graph.leaf(p.value, requires_grad));
  return vars;
}

template <typename T>
Var<T> Model<T>::forward(const std::vector<Var<T>>& params,
                         const Var<T>& image) const {
  if (!initialized()) throw InvalidArgument("model: uninitialized weights");
  const auto layout = parameter_layout(spec_);
  if (params.size() != layout.size()) {
    throw InvalidArgument("model: bound parameter count mismatch");
  }
  const Dims& d = image.dims();
  const std::size_t div = spec_.spatial_divisor();
  if (d.size() != 4 || d[1] != 3) {
    throw InvalidArgument("model: expected an [N, 3, H, W] image, got " +
                          dims_to_string(d));
  }
  if (d[2] % div != 0 || d[3] % div != 0) {
    throw InvalidArgument("model: extents " + std::to_string(d[2]) + "x" +
                          std::to_string(d[3]) + " not divisible by " +
                          std::to_string(div));
  }
  auto p = [&](std::string_view name) { return params[pos_of(layout, name)]; };
  const ops::ConvGeometry same{1, 1};
  const ops::ConvGeometry down{2, 1};

  const std::size_t stages = spec_.channels.size();
  std::vector<Var<T>> skips;
  Var<T> h = image;
  for (std::size_t i = 0; i < stages; ++i) {
    const std::string n = "enc" + std::to_string(i);
    h = ops::relu(ops::bias_add(
        ops::conv2d(h, p(n + ".weight"), i == 0 ? same : down), p(n + ".bias")));
    skips.push_back(h);
  }
  for (std::size_t i = stages - 1; i-- > 0;) {
    const std::string n = "dec" + std::to_string(i);
    Var<T> up = ops::upsample_nearest(h, std::size_t{2});
    h = ops::relu(ops::add(
        ops::bias_add(ops::conv2d(up, p(n + ".weight"), same), p(n + ".bias")),
        skips[i]));
  }

  Var<T> ctx;
  const std::size_t k = spec_.sdc_kernel;
  if (spec_.context == ContextKind::kSdc) {
    Dims out_dims = h.dims();
    const auto branches =
        sdc::predict_params(h, p("ctx.offset.weight"), p("ctx.offset.bias"),
                            p("ctx.dil.weight"), p("ctx.dil.bias"), out_dims);
    ctx = sdc::sdc(h, p("ctx.weight"), branches.offsets, branches.dil_raw);
  } else {
    ctx = ops::conv2d(h, p("ctx.weight"), ops::ConvGeometry{1, k / 2});
  }
  h = ops::relu(ops::bias_add(ctx, p("ctx.bias")));

  const Var<T> logits = ops::bias_add(
      ops::conv2d(h, p("head.weight"), ops::ConvGeometry{1, 0}), p("head.bias"));
  return ops::scale(ops::softplus(logits), static_cast<T>(spec_.height_scale));
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& image) const {
  Graph<T> graph;
  const auto params = bind(graph, false);
  const Tensor<T> x = image.rank() == 3
                          ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)})
                          : image;
  return forward(params, graph.constant(x)).value();
}

template class Model<float>;
template class Model<double>;

}  // namespace mhe::model
