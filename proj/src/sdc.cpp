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
#include "mhe/sdc.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "gemm.hpp"
#include "mhe/error.hpp"
#include "mhe/ops.hpp"
#include "mhe/parallel.hpp"

namespace mhe::sdc {

namespace {

std::atomic<Fault> g_fault{Fault::kNone};

struct Geometry {
  Nchw in;
  std::size_t co = 0;
  std::size_t k = 0;
  long radius = 0;

  std::size_t taps() const { return k * k; }
  std::size_t rows() const { return in.c * taps(); }
  std::size_t pixels() const { return in.plane(); }
};

template <typename T>
Geometry validate(const Tensor<T>& x, const SdcParams<T>& p) {
  if (x.rank() != 4) {
    throw InvalidArgument("sdc: input must be [N,C,H,W], got " +
                          dims_to_string(x.dims()));
  }
  Geometry g;
  g.in = x.nchw();
  const Dims& wd = p.weight.dims();
  if (wd.size() != 4) {
    throw InvalidArgument("sdc: weight must be [Co,C,k,k], got " +
                          dims_to_string(wd));
  }
  if (wd[1] != g.in.c) {
    throw InvalidArgument("sdc: channel mismatch, input has " +
                          std::to_string(g.in.c) + " channels, weight expects " +
                          std::to_string(wd[1]));
  }
  if (wd[2] != wd[3] || wd[2] % 2 == 0) {
    throw InvalidArgument("sdc: kernel must be square with odd extent, got " +
                          dims_to_string(wd));
  }
  g.co = wd[0];
  g.k = wd[2];
  g.radius = static_cast<long>(g.k / 2);
  require_same_dims(p.offsets.dims(),
                    Dims{g.in.n, 2 * g.taps(), g.in.h, g.in.w}, "sdc offsets");
  require_same_dims(p.dil_raw.dims(), Dims{g.in.n, 2, g.in.h, g.in.w},
                    "sdc dil_raw");
  if (!p.weight.all_finite() || !p.offsets.all_finite() ||
      !p.dil_raw.all_finite()) {
    throw InvalidArgument("sdc: NaN or Inf in parameters");
  }
  return g;
}

// Position of a sample inside the bilinear cell whose top-left corner is
// (y0, x0). Returns false when the tent kernel has no support inside the
// image, i.e. row <= -1, row >= H, col <= -1 or col >= W.
template <typename T>
struct Cell {
  long y0 = 0;
  long x0 = 0;
  T ly = 0;
  T lx = 0;
};

template <typename T>
bool locate(T py, T px, long h, long w, Cell<T>& cell) {
  if (!(py > T(-1) && py < static_cast<T>(h) && px > T(-1) &&
        px < static_cast<T>(w))) {
    return false;
  }
  const T fy = std::floor(py);
  const T fx = std::floor(px);
  cell.y0 = static_cast<long>(fy);
  cell.x0 = static_cast<long>(fx);
  cell.ly = py - fy;
  cell.lx = px - fx;
  return true;
}

// The four corner values of a cell, zero outside the image.
template <typename T>
struct Corners {
  T v00, v01, v10, v11;
};

template <typename T>
Corners<T> fetch(const T* plane, const Cell<T>& c, long h, long w) {
  auto at = [&](long y, long x) -> T {
    return (y >= 0 && y < h && x >= 0 && x < w) ? plane[y * w + x] : T{0};
  };
  return {at(c.y0, c.x0), at(c.y0, c.x0 + 1), at(c.y0 + 1, c.x0),
          at(c.y0 + 1, c.x0 + 1)};
}

template <typename T>
T tent(T d) {
  const T a = T{1} - std::abs(d);
  return a > T{0} ? a : T{0};
}

// Per-pixel view of the parameters for image n.
template <typename T>
struct PixelParams {
  const T* offsets;  // [2*taps][P]
  const T* dil_raw;  // [2][P]
  std::size_t pixels;

  T rate_row(std::size_t p) const { return ops::softplus(dil_raw[p]); }
  T rate_col(std::size_t p) const { return ops::softplus(dil_raw[pixels + p]); }
  T d_row(std::size_t t, std::size_t p) const { return offsets[(2 * t) * pixels + p]; }
  T d_col(std::size_t t, std::size_t p) const { return offsets[(2 * t + 1) * pixels + p]; }
};

template <typename T>
PixelParams<T> pixel_params(const SdcParams<T>& p, const Geometry& g,
                            std::size_t n) {
  return {p.offsets.data().data() + n * 2 * g.taps() * g.pixels(),
          p.dil_raw.data().data() + n * 2 * g.pixels(), g.pixels()};
}

}  // namespace

void set_fault(Fault fault) { g_fault.store(fault); }
Fault current_fault() { return g_fault.load(); }

template <typename T>
SamplingGrid<T> sampling_grid(const SdcParams<T>& params) {
  const Nchw od = params.offsets.nchw();
  const std::size_t taps = od.c / 2;
  const auto k = static_cast<std::size_t>(std::lround(std::sqrt(taps)));
  if (k * k != taps || od.c != 2 * taps || k % 2 == 0) {
    throw InvalidArgument("sampling_grid: offsets must have 2*k*k channels "
                          "with odd k, got " +
                          dims_to_string(params.offsets.dims()));
  }
  require_same_dims(params.dil_raw.dims(), Dims{od.n, 2, od.h, od.w},
                    "sampling_grid dil_raw");
  const long r = static_cast<long>(k / 2);
  SamplingGrid<T> grid{Tensor<T>({od.n, taps, od.h, od.w}),
                       Tensor<T>({od.n, taps, od.h, od.w})};
  Geometry g;
  g.in = {od.n, 0, od.h, od.w};
  g.k = k;
  for (std::size_t n = 0; n < od.n; ++n) {
    const PixelParams<T> pp = pixel_params(params, g, n);
    for (std::size_t y = 0; y < od.h; ++y) {
      for (std::size_t x = 0; x < od.w; ++x) {
        const std::size_t p = y * od.w + x;
        for (std::size_t t = 0; t < taps; ++t) {
          const T bi = static_cast<T>(static_cast<long>(t / k) - r);
          const T bj = static_cast<T>(static_cast<long>(t % k) - r);
          grid.rows.at(n, t, y, x) = tap_coordinate(
              static_cast<T>(y), pp.rate_row(p), bi, pp.d_row(t, p));
          grid.cols.at(n, t, y, x) = tap_coordinate(
              static_cast<T>(x), pp.rate_col(p), bj, pp.d_col(t, p));
        }
      }
    }
  }
  return grid;
}

template <typename T>
SdcContext<T> SdcContext<T>::run(Tensor<T> x, SdcParams<T> params) {
  const Geometry g = validate(x, params);
  SdcContext ctx;
  ctx.x_ = std::move(x);
  ctx.params_ = std::move(params);
  const std::size_t P = g.pixels();
  const std::size_t R = g.rows();
  const std::size_t taps = g.taps();
  const long h = static_cast<long>(g.in.h);
  const long w = static_cast<long>(g.in.w);
  ctx.cols_.assign(g.in.n * R * P, T{0});
  ctx.out_ = Tensor<T>({g.in.n, g.co, g.in.h, g.in.w});

  for (std::size_t n = 0; n < g.in.n; ++n) {
    const T* xn = ctx.x_.data().data() + n * g.in.c * P;
    T* cols = ctx.cols_.data() + n * R * P;
    const PixelParams<T> pp = pixel_params(ctx.params_, g, n);
#pragma omp parallel for schedule(static) num_threads(kernel_threads())
    for (std::size_t p = 0; p < P; ++p) {
      const T y = static_cast<T>(p / g.in.w);
      const T x = static_cast<T>(p % g.in.w);
      const T eta_r = pp.rate_row(p);
      const T eta_c = pp.rate_col(p);
      for (std::size_t t = 0; t < taps; ++t) {
        const T bi = static_cast<T>(static_cast<long>(t / g.k) - g.radius);
        const T bj = static_cast<T>(static_cast<long>(t % g.k) - g.radius);
        Cell<T> cell;
        if (!locate(tap_coordinate(y, eta_r, bi, pp.d_row(t, p)),
                    tap_coordinate(x, eta_c, bj, pp.d_col(t, p)), h, w, cell)) {
          continue;
        }
        const T w00 = (T{1} - cell.ly) * (T{1} - cell.lx);
        const T w01 = (T{1} - cell.ly) * cell.lx;
        const T w10 = cell.ly * (T{1} - cell.lx);
        const T w11 = cell.ly * cell.lx;
        for (std::size_t c = 0; c < g.in.c; ++c) {
          const Corners<T> v = fetch(xn + c * P, cell, h, w);
          cols[(c * taps + t) * P + p] =
              w00 * v.v00 + w01 * v.v01 + w10 * v.v10 + w11 * v.v11;
        }
      }
    }
    detail::gemm_nn(g.co, P, R, ctx.params_.weight.data().data(), cols,
                    ctx.out_.data().data() + n * g.co * P);
  }
  ctx.ready_ = true;
  return ctx;
}

template <typename T>
const Tensor<T>& SdcContext<T>::output() const {
  if (!ready_) throw std::logic_error("sdc: context holds no forward pass");
  return out_;
}

template <typename T>
SdcGradients<T> SdcContext<T>::backward(const Tensor<T>& grad_out,
                                        SdcNeeds needs) const {
  if (!ready_) {
    throw InvalidArgument("sdc backward: missing saved forward intermediates");
  }
  const Geometry g = validate(x_, params_);
  require_same_dims(grad_out.dims(), out_.dims(), "sdc backward grad_out");
  const std::size_t P = g.pixels();
  const std::size_t R = g.rows();
  const std::size_t taps = g.taps();
  const long h = static_cast<long>(g.in.h);
  const long w = static_cast<long>(g.in.w);
  const bool flip = current_fault() == Fault::kFlipDilationChainSign;

  SdcGradients<T> grads{Tensor<T>(x_.dims()), Tensor<T>(params_.weight.dims()),
                        Tensor<T>(params_.offsets.dims()),
                        Tensor<T>(params_.dil_raw.dims())};
  const bool need_cols = needs.input || needs.offsets || needs.dil_raw;
  std::vector<T> gcols(need_cols ? R * P : 0);

  for (std::size_t n = 0; n < g.in.n; ++n) {
    const T* go = grad_out.data().data() + n * g.co * P;
    if (needs.weight) {
      detail::gemm_nt(g.co, R, P, go, cols_.data() + n * R * P,
                      grads.weight.data().data());
    }
    if (!need_cols) continue;
    std::fill(gcols.begin(), gcols.end(), T{0});
    detail::gemm_tn(R, P, g.co, params_.weight.data().data(), go, gcols.data());

    const T* xn = x_.data().data() + n * g.in.c * P;
    const PixelParams<T> pp = pixel_params(params_, g, n);

    // Input gradient: transpose of the bilinear gather. Each channel plane
    // is owned by one task and visited in a fixed pixel/tap order.
    if (needs.input) {
      T* gx = grads.input.data().data() + n * g.in.c * P;
#pragma omp parallel for schedule(static) num_threads(kernel_threads())
      for (std::size_t c = 0; c < g.in.c; ++c) {
        T* plane = gx + c * P;
        auto scatter = [&](long y, long x, T v) {
          if (y >= 0 && y < h && x >= 0 && x < w) plane[y * w + x] += v;
        };
        for (std::size_t p = 0; p < P; ++p) {
          const T y = static_cast<T>(p / g.in.w);
          const T x = static_cast<T>(p % g.in.w);
          const T eta_r = pp.rate_row(p);
          const T eta_c = pp.rate_col(p);
          for (std::size_t t = 0; t < taps; ++t) {
            const T gv = gcols[(c * taps + t) * P + p];
            if (gv == T{0}) continue;
            const T bi = static_cast<T>(static_cast<long>(t / g.k) - g.radius);
            const T bj = static_cast<T>(static_cast<long>(t % g.k) - g.radius);
            Cell<T> cell;
            if (!locate(tap_coordinate(y, eta_r, bi, pp.d_row(t, p)),
                        tap_coordinate(x, eta_c, bj, pp.d_col(t, p)), h, w,
                        cell)) {
              continue;
            }
            scatter(cell.y0, cell.x0, gv * (T{1} - cell.ly) * (T{1} - cell.lx));
            scatter(cell.y0, cell.x0 + 1, gv * (T{1} - cell.ly) * cell.lx);
            scatter(cell.y0 + 1, cell.x0, gv * cell.ly * (T{1} - cell.lx));
            scatter(cell.y0 + 1, cell.x0 + 1, gv * cell.ly * cell.lx);
          }
        }
      }
    }

    // Coordinate gradients. d tent(p - v)/dp is -1 for the corner at or
    // below p and +1 for the corner above it, so inside a cell the row
    // slope is the lx-weighted difference of the lower and upper rows. At
    // an integral coordinate this is the right-sided derivative.
    if (needs.offsets || needs.dil_raw) {
      T* goff = grads.offsets.data().data() + n * 2 * taps * P;
      T* gdil = grads.dil_raw.data().data() + n * 2 * P;
#pragma omp parallel for schedule(static) num_threads(kernel_threads())
      for (std::size_t p = 0; p < P; ++p) {
        const T y = static_cast<T>(p / g.in.w);
        const T x = static_cast<T>(p % g.in.w);
        const T eta_r = pp.rate_row(p);
        const T eta_c = pp.rate_col(p);
        T d_eta_r = 0;
        T d_eta_c = 0;
        for (std::size_t t = 0; t < taps; ++t) {
          const T bi = static_cast<T>(static_cast<long>(t / g.k) - g.radius);
          const T bj = static_cast<T>(static_cast<long>(t % g.k) - g.radius);
          Cell<T> cell;
          if (!locate(tap_coordinate(y, eta_r, bi, pp.d_row(t, p)),
                      tap_coordinate(x, eta_c, bj, pp.d_col(t, p)), h, w,
                      cell)) {
            continue;
          }
          T d_row = 0;
          T d_col = 0;
          for (std::size_t c = 0; c < g.in.c; ++c) {
            const T gv = gcols[(c * taps + t) * P + p];
            const Corners<T> v = fetch(xn + c * P, cell, h, w);
            d_row += gv * ((T{1} - cell.lx) * (v.v10 - v.v00) +
                           cell.lx * (v.v11 - v.v01));
            d_col += gv * ((T{1} - cell.ly) * (v.v01 - v.v00) +
                           cell.ly * (v.v11 - v.v10));
          }
          goff[(2 * t) * P + p] = d_row;
          goff[(2 * t + 1) * P + p] = d_col;
          // d row / d eta_row = base offset of the tap.
          const T drow_deta = flip ? -bi : bi;
          const T dcol_deta = flip ? -bj : bj;
          d_eta_r += d_row * drow_deta;
          d_eta_c += d_col * dcol_deta;
        }
        gdil[p] = d_eta_r * ops::sigmoid(pp.dil_raw[p]);
        gdil[P + p] = d_eta_c * ops::sigmoid(pp.dil_raw[P + p]);
      }
    }
  }
  return grads;
}

template <typename T>
Tensor<T> sdc_forward(const Tensor<T>& x, const SdcParams<T>& params) {
  return SdcContext<T>::run(x, params).output();
}

template <typename T>
SdcGradients<T> sdc_backward(const Tensor<T>& x, const SdcParams<T>& params,
                             const Tensor<T>& grad_out) {
  return SdcContext<T>::run(x, params).backward(grad_out);
}

template <typename T>
Tensor<T> sdc_oracle(const Tensor<T>& x, const SdcParams<T>& params) {
  const Geometry g = validate(x, params);
  const SamplingGrid<T> grid = sampling_grid(params);
  Tensor<T> out({g.in.n, g.co, g.in.h, g.in.w});
  for (std::size_t n = 0; n < g.in.n; ++n) {
    for (std::size_t co = 0; co < g.co; ++co) {
      for (std::size_t y = 0; y < g.in.h; ++y) {
        for (std::size_t xo = 0; xo < g.in.w; ++xo) {
          T acc = 0;
          for (std::size_t c = 0; c < g.in.c; ++c) {
            for (std::size_t t = 0; t < g.taps(); ++t) {
              const T pi = grid.rows.at(n, t, y, xo);
              const T pj = grid.cols.at(n, t, y, xo);
              T sample = 0;
              for (std::size_t u = 0; u < g.in.h; ++u) {
                for (std::size_t v = 0; v < g.in.w; ++v) {
                  sample += x.at(n, c, u, v) * tent(pi - static_cast<T>(u)) *
                            tent(pj - static_cast<T>(v));
                }
              }
              acc += params.weight.at(co, c, t / g.k, t % g.k) * sample;
            }
          }
          out.at(n, co, y, xo) = acc;
        }
      }
    }
  }
  return out;
}

template <typename T>
Var<T> sdc(const Var<T>& x, const Var<T>& weight, const Var<T>& offsets,
           const Var<T>& dil_raw) {
  auto ctx = std::make_shared<SdcContext<T>>(SdcContext<T>::run(
      x.value(), SdcParams<T>{weight.value(), offsets.value(), dil_raw.value()}));
  Tensor<T> out = ctx->output();
  return x.graph().record(
      "sdc", std::move(out), {x, weight, offsets, dil_raw},
      [ctx](const Tensor<T>& go, const std::vector<bool>& needs) {
        SdcGradients<T> g =
            ctx->backward(go, SdcNeeds{needs[0], needs[1], needs[2], needs[3]});
        return std::vector<Tensor<T>>{std::move(g.input), std::move(g.weight),
                                      std::move(g.offsets),
                                      std::move(g.dil_raw)};
      });
}

template <typename T>
SdcHead<T> SdcHead<T>::identity(std::size_t channels, std::size_t k) {
  const std::size_t off = 2 * k * k;
  return {Tensor<T>({off, channels, 1, 1}), Tensor<T>({off}),
          Tensor<T>({2, channels, 1, 1}),
          Tensor<T>::full({2}, static_cast<T>(kIdentityDilationRaw))};
}

template <typename T>
PredictedParams<T> predict_params(const Var<T>& features,
                                  const Var<T>& offset_weight,
                                  const Var<T>& offset_bias,
                                  const Var<T>& dil_weight,
                                  const Var<T>& dil_bias,
                                  const Dims& output_dims) {
  const Nchw f = features.value().nchw();
  if (output_dims.size() != 4 || output_dims[0] != f.n ||
      output_dims[2] != f.h || output_dims[3] != f.w) {
    throw InvalidArgument("predict_params: features " +
                          dims_to_string(features.dims()) +
                          " not aligned with operator output " +
                          dims_to_string(output_dims));
  }
  const ops::ConvGeometry pointwise{1, 0};
  return {ops::bias_add(ops::conv2d(features, offset_weight, pointwise),
                        offset_bias),
          ops::bias_add(ops::conv2d(features, dil_weight, pointwise), dil_bias)};
}

#define MHE_INSTANTIATE_SDC(T)                                                 \
  template SamplingGrid<T> sampling_grid(const SdcParams<T>&);                 \
  template class SdcContext<T>;                                                \
  template Tensor<T> sdc_forward(const Tensor<T>&, const SdcParams<T>&);       \
  template SdcGradients<T> sdc_backward(const Tensor<T>&, const SdcParams<T>&, \
                                        const Tensor<T>&);                    \
  template Tensor<T> sdc_oracle(const Tensor<T>&, const SdcParams<T>&);        \
  template Var<T> sdc(const Var<T>&, const Var<T>&, const Var<T>&,             \
                      const Var<T>&);                                          \
  template struct SdcHead<T>;                                                  \
  template PredictedParams<T> predict_params(                                  \
      const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&,              \
      const Var<T>&, const Dims&);

MHE_INSTANTIATE_SDC(float)
MHE_INSTANTIATE_SDC(double)

#undef MHE_INSTANTIATE_SDC

}  // namespace mhe::sdc
