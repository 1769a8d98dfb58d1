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
#include "mhe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gemm.hpp"
#include "mhe/error.hpp"
#include "mhe/parallel.hpp"

namespace mhe::ops {

namespace {

struct ConvShape {
  Nchw in;
  std::size_t co = 0;
  std::size_t k = 0;
  std::size_t oh = 0;
  std::size_t ow = 0;

  std::size_t rows() const { return in.c * k * k; }
  std::size_t cols() const { return oh * ow; }
};

ConvShape conv_shape(const Dims& x_dims, const Dims& w_dims, ConvGeometry g) {
  if (x_dims.size() != 4 || w_dims.size() != 4) {
    throw InvalidArgument("conv2d: expected rank-4 input and weight, got " +
                          dims_to_string(x_dims) + " and " +
                          dims_to_string(w_dims));
  }
  ConvShape s;
  s.in = {x_dims[0], x_dims[1], x_dims[2], x_dims[3]};
  s.co = w_dims[0];
  s.k = w_dims[2];
  if (w_dims[1] != s.in.c) {
    throw InvalidArgument("conv2d: channel mismatch, input has " +
                          std::to_string(s.in.c) + " channels, weight expects " +
                          std::to_string(w_dims[1]));
  }
  if (w_dims[3] != s.k || s.k % 2 == 0) {
    throw InvalidArgument("conv2d: kernel must be square with odd extent, got " +
                          dims_to_string(w_dims));
  }
  if (g.stride < 1) throw InvalidArgument("conv2d: stride must be >= 1");
  if (s.in.h + 2 * g.pad < s.k || s.in.w + 2 * g.pad < s.k) {
    throw InvalidArgument("conv2d: output extent < 1 for input " +
                          dims_to_string(x_dims));
  }
  s.oh = (s.in.h + 2 * g.pad - s.k) / g.stride + 1;
  s.ow = (s.in.w + 2 * g.pad - s.k) / g.stride + 1;
  return s;
}

// cols[(c*k + kh)*k + kw][oy*ow + ox] = x[c][oy*s - pad + kh][ox*s - pad + kw]
template <typename T>
void im2col(const T* x, const ConvShape& s, ConvGeometry g, T* cols) {
  const std::size_t k = s.k;
  const long h = static_cast<long>(s.in.h);
  const long w = static_cast<long>(s.in.w);
  for (std::size_t c = 0; c < s.in.c; ++c) {
    const T* plane = x + c * s.in.plane();
    for (std::size_t kh = 0; kh < k; ++kh) {
      for (std::size_t kw = 0; kw < k; ++kw) {
        T* row = cols + ((c * k + kh) * k + kw) * s.cols();
        for (std::size_t oy = 0; oy < s.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + kh) -
                          static_cast<long>(g.pad);
          T* dst = row + oy * s.ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + s.ow, T{0});
            continue;
          }
          for (std::size_t ox = 0; ox < s.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kw) -
                            static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= w) ? T{0} : plane[iy * w + ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvShape& s, ConvGeometry g, T* x) {
  const std::size_t k = s.k;
  const long h = static_cast<long>(s.in.h);
  const long w = static_cast<long>(s.in.w);
  for (std::size_t c = 0; c < s.in.c; ++c) {
    T* plane = x + c * s.in.plane();
    for (std::size_t kh = 0; kh < k; ++kh) {
      for (std::size_t kw = 0; kw < k; ++kw) {
        const T* row = cols + ((c * k + kh) * k + kw) * s.cols();
        for (std::size_t oy = 0; oy < s.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + kh) -
                          static_cast<long>(g.pad);
          if (iy < 0 || iy >= h) continue;
          const T* src = row + oy * s.ow;
          for (std::size_t ox = 0; ox < s.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kw) -
                            static_cast<long>(g.pad);
            if (ix >= 0 && ix < w) plane[iy * w + ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_pool_factor(const Dims& dims, std::size_t factor) {
  if (dims.size() < 2) {
    throw InvalidArgument("resize_avg: need at least two axes, got " +
                          dims_to_string(dims));
  }
  if (factor == 0 || (factor & (factor - 1)) != 0) {
    throw InvalidArgument("resize_avg: factor must be a power of two, got " +
                          std::to_string(factor));
  }
  const std::size_t h = dims[dims.size() - 2];
  const std::size_t w = dims[dims.size() - 1];
  if (h % factor != 0 || w % factor != 0) {
    throw InvalidArgument("resize_avg: extents " + dims_to_string(dims) +
                          " not divisible by " + std::to_string(factor));
  }
}

template <typename T>
Tensor<T> map(const Tensor<T>& x, auto&& fn) {
  Tensor<T> out(x.dims());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor kernels

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, ConvGeometry geom) {
  const ConvShape s = conv_shape(x.dims(), w.dims(), geom);
  Tensor<T> out({s.in.n, s.co, s.oh, s.ow});
  std::vector<T> cols(s.rows() * s.cols());
  for (std::size_t n = 0; n < s.in.n; ++n) {
    im2col(x.data().data() + n * s.in.c * s.in.plane(), s, geom, cols.data());
    detail::gemm_nn(s.co, s.cols(), s.rows(), w.data().data(), cols.data(),
                    out.data().data() + n * s.co * s.cols());
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& grad_out, const Tensor<T>& w,
                            const Dims& x_dims, ConvGeometry geom) {
  const ConvShape s = conv_shape(x_dims, w.dims(), geom);
  require_same_dims(grad_out.dims(), Dims{s.in.n, s.co, s.oh, s.ow},
                    "conv2d_grad_input");
  Tensor<T> gx(x_dims);
  std::vector<T> gcols(s.rows() * s.cols());
  for (std::size_t n = 0; n < s.in.n; ++n) {
    std::fill(gcols.begin(), gcols.end(), T{0});
    detail::gemm_tn(s.rows(), s.cols(), s.co, w.data().data(),
                    grad_out.data().data() + n * s.co * s.cols(), gcols.data());
    col2im(gcols.data(), s, geom, gx.data().data() + n * s.in.c * s.in.plane());
  }
  return gx;
}

template <typename T>
Tensor<T> conv2d_grad_weight(const Tensor<T>& x, const Tensor<T>& grad_out,
                             const Dims& w_dims, ConvGeometry geom) {
  const ConvShape s = conv_shape(x.dims(), w_dims, geom);
  require_same_dims(grad_out.dims(), Dims{s.in.n, s.co, s.oh, s.ow},
                    "conv2d_grad_weight");
  Tensor<T> gw(w_dims);
  std::vector<T> cols(s.rows() * s.cols());
  for (std::size_t n = 0; n < s.in.n; ++n) {
    im2col(x.data().data() + n * s.in.c * s.in.plane(), s, geom, cols.data());
    detail::gemm_nt(s.co, s.rows(), s.cols(),
                    grad_out.data().data() + n * s.co * s.cols(), cols.data(),
                    gw.data().data());
  }
  return gw;
}

template <typename T>
Tensor<T> resize_avg(const Tensor<T>& x, std::size_t factor) {
  check_pool_factor(x.dims(), factor);
  Dims od = x.dims();
  const std::size_t h = od[od.size() - 2];
  const std::size_t w = od[od.size() - 1];
  od[od.size() - 2] = h / factor;
  od[od.size() - 1] = w / factor;
  Tensor<T> out(od);
  const std::size_t planes = x.numel() / (h * w);
  const std::size_t oh = h / factor;
  const std::size_t ow = w / factor;
  const T inv = T{1} / static_cast<T>(factor * factor);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data().data() + p * h * w;
    T* dst = out.data().data() + p * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = 0;
        for (std::size_t dy = 0; dy < factor; ++dy) {
          for (std::size_t dx = 0; dx < factor; ++dx) {
            acc += src[(oy * factor + dy) * w + ox * factor + dx];
          }
        }
        dst[oy * ow + ox] = acc * inv;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> resize_avg_grad(const Tensor<T>& grad_out, std::size_t factor) {
  Dims id = grad_out.dims();
  if (id.size() < 2) {
    throw InvalidArgument("resize_avg_grad: need at least two axes");
  }
  const std::size_t oh = id[id.size() - 2];
  const std::size_t ow = id[id.size() - 1];
  id[id.size() - 2] = oh * factor;
  id[id.size() - 1] = ow * factor;
  Tensor<T> gx(id);
  const std::size_t w = ow * factor;
  const std::size_t planes = grad_out.numel() / (oh * ow);
  const T inv = T{1} / static_cast<T>(factor * factor);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = grad_out.data().data() + p * oh * ow;
    T* dst = gx.data().data() + p * oh * ow * factor * factor;
    for (std::size_t y = 0; y < oh * factor; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        dst[y * w + x] = src[(y / factor) * ow + x / factor] * inv;
      }
    }
  }
  return gx;
}

template <typename T>
T softplus(T x) {
  if (x > T{20}) return x;
  return std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// ---------------------------------------------------------------------------
// Graph operations

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, ConvGeometry geom) {
  Tensor<T> out = conv2d(x.value(), w.value(), geom);
  const Graph<T>& g = x.graph();
  const NodeId xid = x.id();
  const NodeId wid = w.id();
  return x.graph().record(
      "conv2d", std::move(out), {x, w},
      [&g, xid, wid, geom](const Tensor<T>& go, const std::vector<bool>& needs) {
        const Tensor<T>& xv = g.value(xid);
        const Tensor<T>& wv = g.value(wid);
        std::vector<Tensor<T>> grads(2);
        if (needs[0]) grads[0] = conv2d_grad_input(go, wv, xv.dims(), geom);
        if (needs[1]) grads[1] = conv2d_grad_weight(xv, go, wv.dims(), geom);
        return grads;
      });
}

template <typename T>
Var<T> bias_add(const Var<T>& x, const Var<T>& b) {
  const Nchw s = x.value().nchw();
  if (b.value().numel() != s.c || b.value().rank() != 1) {
    throw InvalidArgument("bias_add: bias shape " + dims_to_string(b.dims()) +
                          " does not match channel count " +
                          std::to_string(s.c));
  }
  Tensor<T> out = x.value();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      T* dst = o.data() + (n * s.c + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] += bv[c];
    }
  }
  return x.graph().record(
      "bias_add", std::move(out), {x, b},
      [s](const Tensor<T>& go, const std::vector<bool>&) {
        Tensor<T> gb({s.c});
        const auto src = go.data();
        for (std::size_t n = 0; n < s.n; ++n) {
          for (std::size_t c = 0; c < s.c; ++c) {
            const T* p = src.data() + (n * s.c + c) * s.plane();
            T acc = 0;
            for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
            gb[c] += acc;
          }
        }
        return std::vector<Tensor<T>>{go, std::move(gb)};
      });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_dims(a.dims(), b.dims(), "add");
  Tensor<T> out = a.value();
  out.add_inplace(b.value());
  return a.graph().record(
      "add", std::move(out), {a, b},
      [](const Tensor<T>& go, const std::vector<bool>&) {
        return std::vector<Tensor<T>>{go, go};
      });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_dims(a.dims(), b.dims(), "mul");
  Tensor<T> out(a.dims());
  const auto av = a.value().data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  const Graph<T>& g = a.graph();
  const NodeId aid = a.id();
  const NodeId bid = b.id();
  return a.graph().record(
      "mul", std::move(out), {a, b},
      [&g, aid, bid](const Tensor<T>& go, const std::vector<bool>&) {
        const Tensor<T>& av = g.value(aid);
        const Tensor<T>& bv = g.value(bid);
        Tensor<T> ga(av.dims());
        Tensor<T> gb(bv.dims());
        for (std::size_t i = 0; i < go.numel(); ++i) {
          ga[i] = go[i] * bv[i];
          gb[i] = go[i] * av[i];
        }
        return std::vector<Tensor<T>>{std::move(ga), std::move(gb)};
      });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = map(a.value(), [factor](T v) { return v * factor; });
  return a.graph().record(
      "scale", std::move(out), {a},
      [factor](const Tensor<T>& go, const std::vector<bool>&) {
        return std::vector<Tensor<T>>{map(go, [factor](T v) { return v * factor; })};
      });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = map(x.value(), [](T v) { return v > T{0} ? v : T{0}; });
  const Graph<T>& g = x.graph();
  const NodeId xid = x.id();
  return x.graph().record(
      "relu", std::move(out), {x},
      [&g, xid](const Tensor<T>& go, const std::vector<bool>&) {
        const Tensor<T>& xv = g.value(xid);
        Tensor<T> gx(xv.dims());
        for (std::size_t i = 0; i < gx.numel(); ++i) {
          gx[i] = xv[i] > T{0} ? go[i] : T{0};
        }
        return std::vector<Tensor<T>>{std::move(gx)};
      });
}

template <typename T>
Var<T> softplus(const Var<T>& x) {
  Tensor<T> out = map(x.value(), [](T v) { return softplus(v); });
  const Graph<T>& g = x.graph();
  const NodeId xid = x.id();
  return x.graph().record(
      "softplus", std::move(out), {x},
      [&g, xid](const Tensor<T>& go, const std::vector<bool>&) {
        const Tensor<T>& xv = g.value(xid);
        Tensor<T> gx(xv.dims());
        for (std::size_t i = 0; i < gx.numel(); ++i) {
          gx[i] = go[i] * sigmoid(xv[i]);
        }
        return std::vector<Tensor<T>>{std::move(gx)};
      });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  const Dims dims = x.dims();
  return x.graph().record(
      "sum", Tensor<T>::scalar(acc), {x},
      [dims](const Tensor<T>& go, const std::vector<bool>&) {
        return std::vector<Tensor<T>>{Tensor<T>::full(dims, go.item())};
      });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.value().numel()));
}

template <typename T>
Var<T> dot(const Var<T>& a, const Tensor<T>& weights) {
  require_same_dims(a.dims(), weights.dims(), "dot");
  T acc = 0;
  const auto av = a.value().data();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * weights[i];
  return a.graph().record(
      "dot", Tensor<T>::scalar(acc), {a},
      [weights](const Tensor<T>& go, const std::vector<bool>&) {
        const T g = go.item();
        return std::vector<Tensor<T>>{map(weights, [g](T v) { return v * g; })};
      });
}

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, std::size_t factor) {
  const Nchw s = x.value().nchw();
  if (factor < 1) throw InvalidArgument("upsample_nearest: factor must be >= 1");
  Tensor<T> out({s.n, s.c, s.h * factor, s.w * factor});
  const std::size_t ow = s.w * factor;
  const auto src = x.value().data();
  auto dst = out.data();
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    for (std::size_t y = 0; y < s.h * factor; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        dst[(p * s.h * factor + y) * ow + xx] =
            src[(p * s.h + y / factor) * s.w + xx / factor];
      }
    }
  }
  return x.graph().record(
      "upsample_nearest", std::move(out), {x},
      [s, factor](const Tensor<T>& go, const std::vector<bool>&) {
        // Block sums: resize_avg scaled back by the block area.
        Tensor<T> gx = resize_avg(go, factor);
        const T area = static_cast<T>(factor * factor);
        for (T& v : gx.data()) v *= area;
        return std::vector<Tensor<T>>{std::move(gx)};
      });
}

template <typename T>
Var<T> resize_avg(const Var<T>& x, std::size_t factor) {
  Tensor<T> out = resize_avg(x.value(), factor);
  return x.graph().record(
      "resize_avg", std::move(out), {x},
      [factor](const Tensor<T>& go, const std::vector<bool>&) {
        return std::vector<Tensor<T>>{resize_avg_grad(go, factor)};
      });
}

#define MHE_INSTANTIATE_OPS(T)                                                 \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, ConvGeometry); \
  template Tensor<T> conv2d_grad_input(const Tensor<T>&, const Tensor<T>&,     \
                                       const Dims&, ConvGeometry);            \
  template Tensor<T> conv2d_grad_weight(const Tensor<T>&, const Tensor<T>&,    \
                                        const Dims&, ConvGeometry);           \
  template Tensor<T> resize_avg(const Tensor<T>&, std::size_t);                \
  template Tensor<T> resize_avg_grad(const Tensor<T>&, std::size_t);           \
  template T softplus(T);                                                      \
  template T sigmoid(T);                                                       \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, ConvGeometry);          \
  template Var<T> bias_add(const Var<T>&, const Var<T>&);                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                           \
  template Var<T> mul(const Var<T>&, const Var<T>&);                           \
  template Var<T> scale(const Var<T>&, T);                                     \
  template Var<T> relu(const Var<T>&);                                         \
  template Var<T> softplus(const Var<T>&);                                     \
  template Var<T> sum(const Var<T>&);                                          \
  template Var<T> mean(const Var<T>&);                                         \
  template Var<T> dot(const Var<T>&, const Tensor<T>&);                        \
  template Var<T> upsample_nearest(const Var<T>&, std::size_t);                \
  template Var<T> resize_avg(const Var<T>&, std::size_t);

MHE_INSTANTIATE_OPS(float)
MHE_INSTANTIATE_OPS(double)

#undef MHE_INSTANTIATE_OPS

}  // namespace mhe::ops
