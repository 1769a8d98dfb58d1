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
#include "mhe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "mhe/error.hpp"
#include "mhe/losses.hpp"
#include "mhe/metrics.hpp"
#include "mhe/model.hpp"
#include "mhe/ops.hpp"
#include "mhe/random.hpp"
#include "mhe/sdc.hpp"

namespace mhe::gradcheck {

namespace {

using TD = Tensor<double>;
using VD = Var<double>;

TD uniform(const Dims& dims, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  TD t(dims);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = d(rng);
  return t;
}

// Uniform in [lo, hi] with |value| >= gap, for inputs of kinked functions.
TD away_from_zero(const Dims& dims, Rng& rng, double lo, double hi, double gap) {
  TD t = uniform(dims, rng, lo, hi);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (std::abs(t[i]) < gap) t[i] = t[i] < 0 ? -gap : gap;
  }
  return t;
}

double eval(const std::vector<TD>& leaves, const Builder& build) {
  Graph<double> g;
  std::vector<VD> vars;
  for (const TD& t : leaves) vars.push_back(g.leaf(t));
  const VD out = build(vars);
  if (out.value().numel() != 1) {
    throw std::logic_error("gradcheck: builder must return a scalar");
  }
  return out.value().item();
}

struct OneSided {
  TD central;
  std::vector<bool> smooth;  // false where one-sided slopes disagree
};

OneSided probe(const std::vector<TD>& leaves, std::size_t which,
               const Builder& build, double h) {
  std::vector<TD> work = leaves;
  const double f0 = eval(work, build);
  OneSided out{TD(leaves[which].dims()), std::vector<bool>(leaves[which].numel())};
  for (std::size_t i = 0; i < work[which].numel(); ++i) {
    const double keep = work[which][i];
    work[which][i] = keep + h;
    const double fp = eval(work, build);
    work[which][i] = keep - h;
    const double fm = eval(work, build);
    work[which][i] = keep;
    const double fwd = (fp - f0) / h;
    const double bwd = (f0 - fm) / h;
    out.central[i] = (fp - fm) / (2 * h);
    const double scale = std::max({std::abs(fwd), std::abs(bwd), 1e-8});
    out.smooth[i] = std::abs(fwd - bwd) <= 1e-2 * scale;
  }
  return out;
}

class Collector {
 public:
  explicit Collector(std::string suite) : suite_(std::move(suite)) {}

  void add(const std::string& family, double tolerance,
           std::span<const double> analytic, std::span<const double> numeric,
           const std::vector<bool>& mask = {}) {
    FamilyResult& r = slot(family, tolerance);
    std::size_t used = analytic.size();
    if (!mask.empty()) used = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
    r.checked += used;
    r.excluded += analytic.size() - used;
    if (used > 0) {
      r.max_rel_error =
          std::max(r.max_rel_error, max_relative_error(analytic, numeric, mask));
    }
  }

  void append_to(Report& report) const {
    for (const std::string& name : order_) report.families.push_back(results_.at(name));
  }

 private:
  FamilyResult& slot(const std::string& family, double tolerance) {
    auto it = results_.find(family);
    if (it == results_.end()) {
      order_.push_back(family);
      it = results_.emplace(family, FamilyResult{suite_, family, 0, tolerance, 0, 0}).first;
    }
    return it->second;
  }

  std::string suite_;
  std::vector<std::string> order_;
  std::map<std::string, FamilyResult> results_;
};

// Checks every leaf of `build` and files leaf k under families[k].
void check_graph(Collector& col, const std::vector<std::string>& families,
                 const std::vector<TD>& leaves, const Builder& build,
                 const Options& opt, double tolerance, bool detect_kinks = false) {
  const auto analytic = analytic_gradients(leaves, build);
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    if (families[k].empty()) continue;
    if (detect_kinks) {
      const OneSided num = probe(leaves, k, build, opt.step);
      col.add(families[k], tolerance, analytic[k].data(), num.central.data(),
              num.smooth);
    } else {
      const TD num = numeric_gradient(leaves, k, build, opt.step);
      col.add(families[k], tolerance, analytic[k].data(), num.data());
    }
  }
}

// ---------------------------------------------------------------------------

void tensor_suite(const Options& opt, Report& report) {
  Collector col("tensor");
  const double tol = opt.tolerance;
  for (std::size_t inst = 0; inst < opt.instances; ++inst) {
    Rng rng(derive_seed(opt.seed, "gradcheck.tensor", inst));
    const std::size_t n = 1 + inst % 2;

    for (std::size_t stride : {1, 2}) {
      const TD x = uniform({n, 2, 5, 5}, rng, -1, 1);
      const TD w = uniform({3, 2, 3, 3}, rng, -1, 1);
      const ops::ConvGeometry geom{stride, 1};
      const Dims od = ops::conv2d(x, w, geom).dims();
      const TD r = uniform(od, rng, -1, 1);
      check_graph(col, {"conv2d.input", "conv2d.weight"}, {x, w},
                  [&](const std::vector<VD>& v) {
                    return ops::dot(ops::conv2d(v[0], v[1], geom), r);
                  },
                  opt, tol);
    }

    const Dims d{n, 3, 4, 4};
    const TD a = uniform(d, rng, -1, 1);
    const TD b = uniform(d, rng, -1, 1);
    const TD bias = uniform({3}, rng, -1, 1);
    const TD r = uniform(d, rng, -1, 1);
    check_graph(col, {"bias_add.input", "bias_add.bias"}, {a, bias},
                [&](const std::vector<VD>& v) {
                  return ops::dot(ops::bias_add(v[0], v[1]), r);
                },
                opt, tol);
    check_graph(col, {"add", "add"}, {a, b},
                [&](const std::vector<VD>& v) { return ops::dot(ops::add(v[0], v[1]), r); },
                opt, tol);
    check_graph(col, {"mul", "mul"}, {a, b},
                [&](const std::vector<VD>& v) { return ops::dot(ops::mul(v[0], v[1]), r); },
                opt, tol);
    check_graph(col, {"scale"}, {a},
                [&](const std::vector<VD>& v) { return ops::dot(ops::scale(v[0], -1.7), r); },
                opt, tol);
    check_graph(col, {"softplus"}, {uniform(d, rng, -4, 4)},
                [&](const std::vector<VD>& v) { return ops::dot(ops::softplus(v[0]), r); },
                opt, tol);
    check_graph(col, {"relu"}, {away_from_zero(d, rng, -1, 1, 0.05)},
                [&](const std::vector<VD>& v) { return ops::dot(ops::relu(v[0]), r); },
                opt, tol);
    check_graph(col, {"sum"}, {a},
                [&](const std::vector<VD>& v) {
                  return ops::mul(ops::sum(v[0]), ops::sum(v[0]));
                },
                opt, tol);
    check_graph(col, {"mean"}, {a},
                [&](const std::vector<VD>& v) {
                  return ops::mul(ops::mean(v[0]), ops::mean(v[0]));
                },
                opt, tol);
    {
      const TD ru = uniform({n, 3, 8, 8}, rng, -1, 1);
      check_graph(col, {"upsample_nearest"}, {a},
                  [&](const std::vector<VD>& v) {
                    return ops::dot(ops::upsample_nearest(v[0], std::size_t{2}), ru);
                  },
                  opt, tol);
    }
    for (std::size_t f : {2, 4}) {
      const TD big = uniform({n, 2, 8, 8}, rng, -1, 1);
      const TD rr = uniform({n, 2, 8 / f, 8 / f}, rng, -1, 1);
      check_graph(col, {"resize_avg"}, {big},
                  [&](const std::vector<VD>& v) {
                    return ops::dot(ops::resize_avg(v[0], f), rr);
                  },
                  opt, tol);
    }
    {
      // conv2d -> relu -> mse
      const TD x = uniform({n, 2, 6, 6}, rng, -1, 1);
      const TD w = uniform({2, 2, 3, 3}, rng, -1, 1);
      const TD gt = uniform({n, 2, 6, 6}, rng, 0, 1);
      const Builder build = [&](const std::vector<VD>& v) {
        return losses::loss_mse(ops::relu(ops::conv2d(v[0], v[1], {1, 1})), gt);
      };
      check_graph(col, {"composite", "composite"}, {x, w}, build, opt, tol, true);
    }
  }
  col.append_to(report);
}

// Masks entries of the coordinate families whose coordinates sit within
// the kink band of an integer.
struct SdcMasks {
  std::vector<bool> offsets;
  std::vector<bool> dilation;
};

SdcMasks kink_masks(const sdc::SdcParams<double>& p, double band) {
  const sdc::SamplingGrid<double> grid = sdc::sampling_grid(p);
  const Nchw od = p.offsets.nchw();
  const std::size_t taps = od.c / 2;
  const auto k = static_cast<std::size_t>(std::lround(std::sqrt(double(taps))));
  const long r = static_cast<long>(k / 2);
  SdcMasks m{std::vector<bool>(p.offsets.numel(), true),
             std::vector<bool>(p.dil_raw.numel(), true)};
  auto near_int = [&](double c) { return std::abs(c - std::round(c)) < band; };
  for (std::size_t n = 0; n < od.n; ++n) {
    for (std::size_t t = 0; t < taps; ++t) {
      const long bi = static_cast<long>(t / k) - r;
      const long bj = static_cast<long>(t % k) - r;
      for (std::size_t y = 0; y < od.h; ++y) {
        for (std::size_t x = 0; x < od.w; ++x) {
          const std::size_t pix = y * od.w + x;
          const bool kr = near_int(grid.rows.at(n, t, y, x));
          const bool kc = near_int(grid.cols.at(n, t, y, x));
          if (kr) m.offsets[((n * od.c) + 2 * t) * od.h * od.w + pix] = false;
          if (kc) m.offsets[((n * od.c) + 2 * t + 1) * od.h * od.w + pix] = false;
          if (kr && bi != 0) m.dilation[(n * 2) * od.h * od.w + pix] = false;
          if (kc && bj != 0) m.dilation[(n * 2 + 1) * od.h * od.w + pix] = false;
        }
      }
    }
  }
  return m;
}

void sdc_suite(const Options& opt, Report& report) {
  Collector col("sdc");
  const double tol = opt.tolerance;
  for (std::size_t inst = 0; inst < opt.instances; ++inst) {
    Rng rng(derive_seed(opt.seed, "gradcheck.sdc", inst));
    const std::size_t n = 1 + inst % 2;
    const std::size_t c = 1 + inst % 3;
    const std::size_t co = 1 + (inst / 2) % 3;
    const std::size_t hw = inst % 4 == 3 ? 8 : 4 + inst % 4;
    const std::size_t k = 3;
    const TD x = uniform({n, c, hw, hw}, rng, -1, 1);
    sdc::SdcParams<double> p{uniform({co, c, k, k}, rng, -1, 1),
                             uniform({n, 2 * k * k, hw, hw}, rng, -1.5, 1.5),
                             uniform({n, 2, hw, hw}, rng, -1.0, 2.5)};
    const TD r = uniform({n, co, hw, hw}, rng, -1, 1);
    const sdc::SdcGradients<double> a = sdc::sdc_backward(x, p, r);
    auto f = [&](const TD& xx, const sdc::SdcParams<double>& pp) {
      const TD out = sdc::sdc_forward(xx, pp);
      double acc = 0;
      for (std::size_t i = 0; i < out.numel(); ++i) acc += out[i] * r[i];
      return acc;
    };
    auto central = [&](TD& target, auto&& eval_fn) {
      TD g(target.dims());
      for (std::size_t i = 0; i < target.numel(); ++i) {
        const double keep = target[i];
        target[i] = keep + opt.step;
        const double fp = eval_fn();
        target[i] = keep - opt.step;
        const double fm = eval_fn();
        target[i] = keep;
        g[i] = (fp - fm) / (2 * opt.step);
      }
      return g;
    };
    TD xw = x;
    sdc::SdcParams<double> pw = p;
    const TD gx = central(xw, [&] { return f(xw, pw); });
    const TD gw = central(pw.weight, [&] { return f(xw, pw); });
    const TD go = central(pw.offsets, [&] { return f(xw, pw); });
    const TD gd = central(pw.dil_raw, [&] { return f(xw, pw); });
    const SdcMasks masks = kink_masks(p, opt.kink_band + opt.step);
    col.add("input", tol, a.input.data(), gx.data());
    col.add("weight", tol, a.weight.data(), gw.data());
    col.add("offsets", tol, a.offsets.data(), go.data(), masks.offsets);
    col.add("dilation", tol, a.dil_raw.data(), gd.data(), masks.dilation);
  }
  col.append_to(report);
}

void losses_suite(const Options& opt, Report& report) {
  Collector col("losses");
  const double tol = opt.tolerance;
  for (std::size_t inst = 0; inst < opt.instances; ++inst) {
    Rng rng(derive_seed(opt.seed, "gradcheck.losses", inst));
    const std::size_t n = 1 + inst % 2;
    const Dims d{n, 1, 8, 8};
    const TD pred = uniform(d, rng, 0, 5);
    const TD gt = uniform(d, rng, 0, 5);
    check_graph(col, {"mse"}, {pred},
                [&](const std::vector<VD>& v) { return losses::loss_mse(v[0], gt); },
                opt, tol);
    check_graph(col, {"si"}, {pred},
                [&](const std::vector<VD>& v) { return losses::loss_si(v[0], gt); },
                opt, tol);
    const auto pairs = losses::sample_ordinal_pairs(gt, 32, 0.25, inst);
    check_graph(col, {"rank"}, {pred},
                [&](const std::vector<VD>& v) {
                  return losses::loss_rank(v[0], std::span<const losses::OrdinalPair>(pairs));
                },
                opt, tol);
    const std::vector<std::size_t> scales = {1, 2, 4, 8};
    check_graph(col, {"msg"}, {pred},
                [&](const std::vector<VD>& v) { return losses::loss_msg(v[0], gt, scales); },
                opt, tol, true);
    for (auto variant : {losses::LossVariant::kMseOnly, losses::LossVariant::kScaleInvariant,
                         losses::LossVariant::kRank,
                         losses::LossVariant::kGradientMatching}) {
      losses::LossConfig cfg;
      cfg.variant = variant;
      cfg.rank_pairs = 32;
      check_graph(col, {"total." + std::string(losses::to_string(variant))}, {pred},
                  [&](const std::vector<VD>& v) {
                    return losses::loss_total(v[0], gt, cfg, inst);
                  },
                  opt, tol, variant == losses::LossVariant::kGradientMatching);
    }
  }
  col.append_to(report);
}

void model_suite(const Options& opt, Report& report) {
  Collector col("model");
  const std::size_t instances = std::max<std::size_t>(1, opt.instances / 10);
  for (model::ContextKind kind : {model::ContextKind::kSdc, model::ContextKind::kConv}) {
    model::ModelSpec spec;
    spec.context = kind;
    const std::string family(model::to_string(kind));
    for (std::size_t inst = 0; inst < instances; ++inst) {
      Rng rng(derive_seed(opt.seed, "gradcheck.model", inst));
      auto m = model::Model<double>::initialize(spec, derive_seed(opt.seed, "init", inst));
      if (kind == model::ContextKind::kSdc) {
        // Move the sampling grid off the integer lattice.
        for (const char* name : {"ctx.offset.weight", "ctx.offset.bias",
                                 "ctx.dil.weight", "ctx.dil.bias"}) {
          TD& t = m.parameter(name);
          const TD noise = uniform(t.dims(), rng, -0.3, 0.3);
          for (std::size_t i = 0; i < t.numel(); ++i) t[i] += noise[i];
        }
      }
      const TD image = uniform({1, 3, 8, 8}, rng, 0, 1);
      const TD gt = uniform({1, 1, 8, 8}, rng, 0, 20);
      losses::LossConfig cfg;
      cfg.variant = losses::LossVariant::kScaleInvariant;
      std::vector<TD> leaves;
      std::vector<std::string> families;
      for (const auto& p : m.parameters()) {
        leaves.push_back(p.value);
        families.push_back(family);
      }
      const Builder build = [&](const std::vector<VD>& v) {
        Graph<double>& g = v.front().graph();
        return losses::loss_total(m.forward(v, g.constant(image)), gt, cfg, inst);
      };
      check_graph(col, families, leaves, build, opt, opt.model_tolerance, true);
    }
  }
  col.append_to(report);
}

}  // namespace

double max_relative_error(std::span<const double> analytic,
                          std::span<const double> numeric,
                          const std::vector<bool>& mask) {
  if (analytic.size() != numeric.size()) {
    throw InvalidArgument("max_relative_error: size mismatch");
  }
  double scale = 0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = std::max(1e-3 * scale, 1e-12);
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

Tensor<double> numeric_gradient(const std::vector<Tensor<double>>& leaves,
                                std::size_t which, const Builder& build,
                                double step) {
  std::vector<TD> work = leaves;
  TD g(leaves.at(which).dims());
  for (std::size_t i = 0; i < work[which].numel(); ++i) {
    const double keep = work[which][i];
    work[which][i] = keep + step;
    const double fp = eval(work, build);
    work[which][i] = keep - step;
    const double fm = eval(work, build);
    work[which][i] = keep;
    g[i] = (fp - fm) / (2 * step);
  }
  return g;
}

std::vector<Tensor<double>> analytic_gradients(
    const std::vector<Tensor<double>>& leaves, const Builder& build) {
  Graph<double> g;
  std::vector<VD> vars;
  for (const TD& t : leaves) vars.push_back(g.leaf(t));
  const VD out = build(vars);
  const Gradients<double> grads = g.backward(out);
  std::vector<TD> result;
  for (const VD& v : vars) result.push_back(grads[v]);
  return result;
}

bool Report::passed() const {
  if (families.empty()) return false;
  return std::all_of(families.begin(), families.end(),
                     [](const FamilyResult& f) { return f.passed(); });
}

std::string Report::format() const {
  std::ostringstream out;
  out << "suite    family             max_rel_err     tolerance  checked  excluded  status\n";
  for (const FamilyResult& f : families) {
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %-18s %-15.3e %-10.0e %8zu %9zu  %s\n",
                  f.suite.c_str(), f.family.c_str(), f.max_rel_error, f.tolerance,
                  f.checked, f.excluded, f.passed() ? "PASS" : "FAIL");
    out << line;
  }
  out << (passed() ? "gradcheck: PASS\n" : "gradcheck: FAIL\n");
  return out.str();
}

Report run(const Options& opt) {
  if (!(opt.step > 0)) throw InvalidArgument("gradcheck: step must be > 0");
  Report report;
  for (const std::string& suite : opt.suites) {
    if (suite == "tensor") {
      tensor_suite(opt, report);
    } else if (suite == "sdc") {
      sdc_suite(opt, report);
    } else if (suite == "losses") {
      losses_suite(opt, report);
    } else if (suite == "model") {
      model_suite(opt, report);
    } else {
      throw InvalidArgument("gradcheck: unknown suite '" + suite + "'");
    }
  }
  return report;
}

}  // namespace mhe::gradcheck
