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
#include "mhe/losses.hpp"

#include <cmath>
#include <string>

#include "mhe/error.hpp"
#include "mhe/ops.hpp"
#include "mhe/random.hpp"

namespace mhe::losses {

ImageSplit split_images(const Dims& dims) {
  ImageSplit s;
  const std::size_t total = element_count(dims);
  if (dims.size() == 4) {
    s.count = dims[0];
    s.h = dims[2];
    s.w = dims[3];
  } else if (dims.size() >= 2) {
    s.h = dims[dims.size() - 2];
    s.w = dims[dims.size() - 1];
  } else {
    s.w = total;
  }
  s.size = total / s.count;
  return s;
}

namespace {

void check_msg_scales(std::span<const std::size_t> scales, std::size_t h,
                      std::size_t w) {
  for (std::size_t d : scales) {
    if (d == 0 || (d & (d - 1)) != 0) {
      throw InvalidArgument("msg: scale divisor must be a power of two, got " +
                            std::to_string(d));
    }
    if (h % d != 0 || w % d != 0) {
      throw InvalidArgument("msg: extents " + std::to_string(h) + "x" +
                            std::to_string(w) + " not divisible by " +
                            std::to_string(d));
    }
  }
}

double softplus_d(double z) { return ops::softplus(z); }
double sigmoid_d(double z) { return ops::sigmoid(z); }

// Derivative of the scale-invariant error w.r.t. pred for one image.
template <typename T>
void scale_invariant_grad(std::span<const T> pred, std::span<const T> gt,
                          double upstream, std::span<T> out) {
  const std::size_t n = pred.size();
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += double(gt[i]) - double(pred[i]);
  mean /= double(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = double(gt[i]) - double(pred[i]);
    out[i] = static_cast<T>(-2.0 * (r - mean) / double(n) * upstream);
  }
}

double sign(double v) { return (v > 0) - (v < 0); }

// Derivative of the gradient-matching error w.r.t. pred for one image.
template <typename T>
void gradient_matching_grad(std::span<const T> pred, std::span<const T> gt,
                            std::size_t h, std::size_t w,
                            std::span<const std::size_t> scales,
                            double upstream, std::span<T> out) {
  TensorD residual({h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    residual[i] = double(gt[i]) - double(pred[i]);
  }
  TensorD g_res({h, w});
  for (std::size_t d : scales) {
    const TensorD level = ops::resize_avg(residual, d);
    const std::size_t lh = h / d;
    const std::size_t lw = w / d;
    TensorD g_level({lh, lw});
    for (std::size_t y = 0; y < lh; ++y) {
      for (std::size_t x = 0; x < lw; ++x) {
        const std::size_t i = y * lw + x;
        if (x + 1 < lw) {
          const double s = sign(level[i + 1] - level[i]);
          g_level[i + 1] += s;
          g_level[i] -= s;
        }
        if (y + 1 < lh) {
          const double s = sign(level[i + lw] - level[i]);
          g_level[i + lw] += s;
          g_level[i] -= s;
        }
      }
    }
    g_res.add_inplace(ops::resize_avg_grad(g_level, d));
  }
  const double scale = upstream / double(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    out[i] = static_cast<T>(-g_res[i] * scale);
  }
}

}  // namespace

std::string_view to_string(LossVariant v) {
  switch (v) {
    case LossVariant::kMseOnly:
      return "mse_only";
    case LossVariant::kScaleInvariant:
      return "si";
    case LossVariant::kRank:
      return "rank";
    case LossVariant::kGradientMatching:
      return "msg";
  }
  return "mse_only";
}

LossVariant parse_loss_variant(std::string_view name) {
  if (name == "mse_only") return LossVariant::kMseOnly;
  if (name == "si") return LossVariant::kScaleInvariant;
  if (name == "rank") return LossVariant::kRank;
  if (name == "msg") return LossVariant::kGradientMatching;
  throw InvalidArgument("unknown loss variant '" + std::string(name) +
                        "' (expected mse_only, si, rank or msg)");
}

void LossConfig::validate() const {
  if (!(rank_threshold > 0)) {
    throw InvalidArgument("loss: rank_threshold must be > 0");
  }
  if (rank_pairs < 1) throw InvalidArgument("loss: rank_pairs must be >= 1");
  if (msg_scales.empty()) throw InvalidArgument("loss: msg_scales is empty");
  if (!std::isfinite(weight) || weight < 0) {
    throw InvalidArgument("loss: weight must be finite and >= 0");
  }
}

template <typename T>
double scale_invariant_error(std::span<const T> pred, std::span<const T> gt) {
  if (pred.size() != gt.size()) {
    throw InvalidArgument("si: shape mismatch");
  }
  const std::size_t n = pred.size();
  if (n == 0) throw InvalidArgument("si: empty input");
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += double(gt[i]) - double(pred[i]);
  mean /= double(n);
  double var = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = double(gt[i]) - double(pred[i]) - mean;
    var += d * d;
  }
  return var / double(n);
}

template <typename T>
double gradient_matching_error(std::span<const T> pred, std::span<const T> gt,
                               std::size_t h, std::size_t w,
                               std::span<const std::size_t> scales) {
  if (pred.size() != gt.size() || pred.size() != h * w) {
    throw InvalidArgument("msg: shape mismatch");
  }
  check_msg_scales(scales, h, w);
  TensorD residual({h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    residual[i] = double(gt[i]) - double(pred[i]);
  }
  double total = 0;
  for (std::size_t d : scales) {
    const TensorD level = ops::resize_avg(residual, d);
    const std::size_t lh = h / d;
    const std::size_t lw = w / d;
    for (std::size_t y = 0; y < lh; ++y) {
      for (std::size_t x = 0; x < lw; ++x) {
        const std::size_t i = y * lw + x;
        if (x + 1 < lw) total += std::abs(level[i + 1] - level[i]);
        if (y + 1 < lh) total += std::abs(level[i + lw] - level[i]);
      }
    }
  }
  return total / double(h * w);
}

int ordinal_label(double gt_i, double gt_j, double threshold) {
  if (gt_i - gt_j > threshold) return 1;
  if (gt_j - gt_i > threshold) return -1;
  return 0;
}

template <typename T>
std::vector<OrdinalPair> sample_ordinal_pairs(const Tensor<T>& gt,
                                              std::size_t pairs_per_image,
                                              double threshold,
                                              std::uint64_t seed) {
  const ImageSplit s = split_images(gt.dims());
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, s.size - 1);
  std::vector<OrdinalPair> pairs;
  pairs.reserve(s.count * pairs_per_image);
  for (std::size_t n = 0; n < s.count; ++n) {
    for (std::size_t k = 0; k < pairs_per_image; ++k) {
      const std::size_t i = n * s.size + pick(rng);
      const std::size_t j = n * s.size + pick(rng);
      pairs.push_back({i, j, ordinal_label(gt[i], gt[j], threshold)});
    }
  }
  return pairs;
}

template <typename T>
Var<T> loss_mse(const Var<T>& pred, const Tensor<T>& gt) {
  require_same_dims(pred.dims(), gt.dims(), "loss_mse");
  const auto p = pred.value().data();
  const auto g = gt.data();
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i] < T{0}) throw InvalidArgument("loss_mse: negative ground truth");
    const double r = double(g[i]) - double(p[i]);
    acc += r * r;
  }
  const double n = double(p.size());
  const Graph<T>& graph = pred.graph();
  const NodeId pid = pred.id();
  return pred.graph().record(
      "loss_mse", Tensor<T>::scalar(static_cast<T>(acc / n)), {pred},
      [&graph, pid, gt, n](const Tensor<T>& go, const std::vector<bool>&) {
        const Tensor<T>& pv = graph.value(pid);
        Tensor<T> gp(pv.dims());
        const double up = double(go.item());
        for (std::size_t i = 0; i < gp.numel(); ++i) {
          gp[i] = static_cast<T>(-2.0 * (double(gt[i]) - double(pv[i])) / n * up);
        }
        return std::vector<Tensor<T>>{std::move(gp)};
      });
}

template <typename T>
Var<T> loss_si(const Var<T>& pred, const Tensor<T>& gt) {
  require_same_dims(pred.dims(), gt.dims(), "loss_si");
  const ImageSplit s = split_images(gt.dims());
  const auto p = pred.value().data();
  const auto g = gt.data();
  double acc = 0;
  for (std::size_t n = 0; n < s.count; ++n) {
    acc += scale_invariant_error(p.subspan(n * s.size, s.size),
                                 g.subspan(n * s.size, s.size));
  }
  const Graph<T>& graph = pred.graph();
  const NodeId pid = pred.id();
  return pred.graph().record(
      "loss_si", Tensor<T>::scalar(static_cast<T>(acc / double(s.count))),
      {pred}, [&graph, pid, gt, s](const Tensor<T>& go, const std::vector<bool>&) {
        const Tensor<T>& pv = graph.value(pid);
        Tensor<T> gp(pv.dims());
        const double up = double(go.item()) / double(s.count);
        for (std::size_t n = 0; n < s.count; ++n) {
          scale_invariant_grad(pv.data().subspan(n * s.size, s.size),
                               gt.data().subspan(n * s.size, s.size), up,
                               gp.data().subspan(n * s.size, s.size));
        }
        return std::vector<Tensor<T>>{std::move(gp)};
      });
}

template <typename T>
Var<T> loss_rank(const Var<T>& pred, std::span<const OrdinalPair> pairs) {
  if (pairs.empty()) throw InvalidArgument("loss_rank: empty pair list");
  const auto p = pred.value().data();
  double acc = 0;
  for (const OrdinalPair& pr : pairs) {
    if (pr.i >= p.size() || pr.j >= p.size()) {
      throw InvalidArgument("loss_rank: pair index out of range");
    }
    const double z = double(p[pr.i]) - double(p[pr.j]);
    switch (pr.label) {
      case 1:
        acc += softplus_d(-z);
        break;
      case -1:
        acc += softplus_d(z);
        break;
      case 0:
        acc += z * z;
        break;
      default:
        throw InvalidArgument("loss_rank: label must be -1, 0 or +1");
    }
  }
  const double count = double(pairs.size());
  const Graph<T>& graph = pred.graph();
  const NodeId pid = pred.id();
  std::vector<OrdinalPair> saved(pairs.begin(), pairs.end());
  return pred.graph().record(
      "loss_rank", Tensor<T>::scalar(static_cast<T>(acc / count)), {pred},
      [&graph, pid, saved = std::move(saved), count](
          const Tensor<T>& go, const std::vector<bool>&) {
        const Tensor<T>& pv = graph.value(pid);
        std::vector<double> g(pv.numel(), 0.0);
        for (const OrdinalPair& pr : saved) {
          const double z = double(pv[pr.i]) - double(pv[pr.j]);
          double dz = 0;
          if (pr.label == 1) {
            dz = -sigmoid_d(-z);
          } else if (pr.label == -1) {
            dz = sigmoid_d(z);
          } else {
            dz = 2 * z;
          }
          g[pr.i] += dz;
          g[pr.j] -= dz;
        }
        const double up = double(go.item()) / count;
        Tensor<T> gp(pv.dims());
        for (std::size_t i = 0; i < g.size(); ++i) {
          gp[i] = static_cast<T>(g[i] * up);
        }
        return std::vector<Tensor<T>>{std::move(gp)};
      });
}

template <typename T>
Var<T> loss_msg(const Var<T>& pred, const Tensor<T>& gt,
                std::span<const std::size_t> scales) {
  require_same_dims(pred.dims(), gt.dims(), "loss_msg");
  const ImageSplit s = split_images(gt.dims());
  if (s.size != s.h * s.w) {
    throw InvalidArgument("loss_msg: expected single-channel height maps, got " +
                          dims_to_string(gt.dims()));
  }
  check_msg_scales(scales, s.h, s.w);
  const auto p = pred.value().data();
  const auto g = gt.data();
  double acc = 0;
  for (std::size_t n = 0; n < s.count; ++n) {
    acc += gradient_matching_error(p.subspan(n * s.size, s.size),
                                   g.subspan(n * s.size, s.size), s.h, s.w,
                                   scales);
  }
  const Graph<T>& graph = pred.graph();
  const NodeId pid = pred.id();
  std::vector<std::size_t> levels(scales.begin(), scales.end());
  return pred.graph().record(
      "loss_msg", Tensor<T>::scalar(static_cast<T>(acc / double(s.count))),
      {pred},
      [&graph, pid, gt, s, levels = std::move(levels)](
          const Tensor<T>& go, const std::vector<bool>&) {
        const Tensor<T>& pv = graph.value(pid);
        Tensor<T> gp(pv.dims());
        const double up = double(go.item()) / double(s.count);
        for (std::size_t n = 0; n < s.count; ++n) {
          gradient_matching_grad(pv.data().subspan(n * s.size, s.size),
                                 gt.data().subspan(n * s.size, s.size), s.h,
                                 s.w, std::span<const std::size_t>(levels), up,
                                 gp.data().subspan(n * s.size, s.size));
        }
        return std::vector<Tensor<T>>{std::move(gp)};
      });
}

template <typename T>
Var<T> loss_total(const Var<T>& pred, const Tensor<T>& gt,
                  const LossConfig& cfg, std::uint64_t step_seed) {
  cfg.validate();
  Var<T> total = loss_mse(pred, gt);
  Var<T> relative;
  switch (cfg.variant) {
    case LossVariant::kMseOnly:
      return total;
    case LossVariant::kScaleInvariant:
      relative = loss_si(pred, gt);
      break;
    case LossVariant::kRank: {
      const auto pairs = sample_ordinal_pairs(gt, cfg.rank_pairs,
                                              cfg.rank_threshold, step_seed);
      relative = loss_rank(pred, std::span<const OrdinalPair>(pairs));
      break;
    }
    case LossVariant::kGradientMatching:
      relative = loss_msg(pred, gt, std::span<const std::size_t>(cfg.msg_scales));
      break;
  }
  if (cfg.weight != 1.0) relative = ops::scale(relative, static_cast<T>(cfg.weight));
  return ops::add(total, relative);
}

#define MHE_INSTANTIATE_LOSSES(T)                                              \
  template double scale_invariant_error(std::span<const T>,                    \
                                        std::span<const T>);                   \
  template double gradient_matching_error(std::span<const T>,                  \
                                          std::span<const T>, std::size_t,     \
                                          std::size_t,                         \
                                          std::span<const std::size_t>);       \
  template std::vector<OrdinalPair> sample_ordinal_pairs(                      \
      const Tensor<T>&, std::size_t, double, std::uint64_t);                   \
  template Var<T> loss_mse(const Var<T>&, const Tensor<T>&);                   \
  template Var<T> loss_si(const Var<T>&, const Tensor<T>&);                    \
  template Var<T> loss_rank(const Var<T>&, std::span<const OrdinalPair>);      \
  template Var<T> loss_msg(const Var<T>&, const Tensor<T>&,                    \
                           std::span<const std::size_t>);                      \
  template Var<T> loss_total(const Var<T>&, const Tensor<T>&,                  \
                             const LossConfig&, std::uint64_t);

MHE_INSTANTIATE_LOSSES(float)
MHE_INSTANTIATE_LOSSES(double)

#undef MHE_INSTANTIATE_LOSSES

}  // namespace mhe::losses
