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
// Acceptance suite: one PASS/FAIL line per criterion. Usage:
//   acceptance <work-dir>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mhe/checkpoint.hpp"
#include "mhe/config.hpp"
#include "mhe/gradcheck.hpp"
#include "mhe/hmt.hpp"
#include "mhe/losses.hpp"
#include "mhe/metrics.hpp"
#include "mhe/model.hpp"
#include "mhe/protocol.hpp"
#include "mhe/random.hpp"
#include "mhe/sdc.hpp"
#include "mhe/synthdata.hpp"
#include "mhe/train.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace mhe;
using testing::naive_conv;
using testing::random_tensor;
using testing::rel_diff;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

template <typename F>
Verdict guarded(F&& check) {
  try {
    return check();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

void report(int id, const Verdict& v) {
  std::printf("criterion %d: %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Verdict gradient_correctness() {
  gradcheck::Options o;
  o.instances = 20;
  o.step = 1e-4;
  o.kink_band = 1e-3;
  o.tolerance = 1e-5;
  o.suites = {"sdc"};
  const auto t0 = Clock::now();
  const gradcheck::Report r = gradcheck::run(o);
  const double secs = seconds_since(t0);
  bool pass = secs < 30 && r.families.size() == 4;
  std::string detail;
  for (const auto& f : r.families) {
    pass = pass && f.passed() && f.max_rel_error <= 1e-5;
    detail += f.family + " " + fmt("%.2e", f.max_rel_error) + "; ";
  }
  return {pass, detail + fmt("%.1f s", secs)};
}

sdc::SdcParams<double> grid_params(const Dims& xd, std::size_t co, std::size_t k, double eta,
                                   Rng& rng) {
  const double raw = std::log(std::expm1(eta));
  return {random_tensor<double>({co, xd[1], k, k}, rng),
          TensorD({xd[0], 2 * k * k, xd[2], xd[3]}, 0.0),
          TensorD({xd[0], 2, xd[2], xd[3]}, raw)};
}

Verdict reduction_oracle() {
  Rng rng(2001);
  const auto t0 = Clock::now();
  double worst = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const Dims xd{1 + std::size_t(inst % 2), 3, 6 + std::size_t(inst % 3), 7};
    const TensorD x = random_tensor<double>(xd, rng);
    const auto p1 = grid_params(xd, 2, 3, 1.0, rng);
    worst = std::max(worst, rel_diff(sdc::sdc_forward(x, p1), naive_conv(x, p1.weight, 1, 1)));
    const std::size_t d = 2 + inst % 3;
    const auto pd = grid_params(xd, 2, 3, double(d), rng);
    worst = std::max(worst,
                     rel_diff(sdc::sdc_forward(x, pd), naive_conv(x, pd.weight, 1, d, d)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 10,
          "100 comparisons, max rel " + fmt("%.2e", worst) + ", " + fmt("%.2f s", secs)};
}

Verdict forward_oracle() {
  Rng rng(2002);
  double worst = 0;
  for (int inst = 0; inst < 25; ++inst) {
    const std::size_t h = 4 + inst % 5, w = 5 + inst % 3;
    const TensorD x = random_tensor<double>({2, 3, h, w}, rng);
    sdc::SdcParams<double> p{random_tensor<double>({2, 3, 3, 3}, rng),
                             random_tensor<double>({2, 18, h, w}, rng, -2.5, 2.5),
                             random_tensor<double>({2, 2, h, w}, rng, -2.0, 2.0)};
    worst = std::max(worst, rel_diff(sdc::sdc_forward(x, p), sdc::sdc_oracle(x, p)));
  }
  return {worst <= 1e-6, "25 instances, max rel " + fmt("%.2e", worst)};
}

template <typename F>
double loss_value(const TensorD& pred, F&& f) {
  Graph<double> g;
  return f(g.constant(pred)).value().item();
}

Verdict loss_invariants() {
  Rng rng(2003);
  std::uniform_real_distribution<double> shift(-50, 50);
  const std::vector<std::size_t> scales = {1, 2, 4, 8};
  double worst_shift = 0;
  bool mae_le_rmse = true;
  for (int i = 0; i < 100; ++i) {
    const TensorD pred = random_tensor<double>({2, 1, 16, 16}, rng, 0, 30);
    const TensorD gt = random_tensor<double>({2, 1, 16, 16}, rng, 0, 30);
    const double c = std::round(shift(rng) * 8) / 8;
    TensorD moved = pred;
    for (std::size_t j = 0; j < moved.numel(); ++j) moved[j] += c;
    auto si = [&](const Var<double>& p) { return losses::loss_si(p, gt); };
    auto msg = [&](const Var<double>& p) { return losses::loss_msg(p, gt, std::span(scales)); };
    worst_shift = std::max(worst_shift, std::abs(loss_value(moved, si) - loss_value(pred, si)));
    worst_shift = std::max(worst_shift, std::abs(loss_value(moved, msg) - loss_value(pred, msg)));
    mae_le_rmse = mae_le_rmse && metrics::metric_mae(pred, gt) <= metrics::metric_rmse(pred, gt);
  }
  const TensorD zero({1, 2}, 0.0);
  const TensorD r12({1, 2}, std::vector<double>{1, 2});
  const double si12 = loss_value(zero, [&](const Var<double>& p) { return losses::loss_si(p, r12); });
  const std::vector<losses::OrdinalPair> pairs = {{0, 1, 1}};
  const double rank = loss_value(TensorD({2}, 3.0), [&](const Var<double>& p) {
    return losses::loss_rank(p, std::span(pairs));
  });
  const bool pass = worst_shift <= 1e-9 && std::abs(si12 - 0.25) <= 1e-12 &&
                    std::abs(rank - std::log(2.0)) <= 1e-9 && mae_le_rmse;
  return {pass, "shift " + fmt("%.1e", worst_shift) + ", si([1,2]) " + fmt("%.6f", si12) +
                    ", rank " + fmt("%.12f", rank) + ", mae<=rmse " +
                    (mae_le_rmse ? "yes" : "no")};
}

double image_mse(const model::Model<float>& m, const synth::Sample& s) {
  const auto [x, y] = train::stack({s}, {0});
  const TensorF p = m.predict(x);
  double acc = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double d = double(p[i]) - double(y[i]);
    acc += d * d;
  }
  return acc / double(p.numel());
}

Verdict overfit() {
  synth::SceneSpec spec;
  spec.height = spec.width = 32;
  const auto scene = synth::generate_scene(spec, 7);
  const std::vector<synth::Sample> data = {{scene.rgb, scene.height}};
  const auto m = model::Model<float>::initialize(model::ModelSpec{}, 0);
  train::TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch = 1;
  cfg.loss.variant = losses::LossVariant::kMseOnly;
  const double before = image_mse(m, data[0]);
  const auto a = train::train(m, data, cfg);
  const auto b = train::train(m, data, cfg);
  const double after = image_mse(a.model, data[0]);
  const bool same = a.model == b.model && a.epoch_loss == b.epoch_loss;
  return {a.steps == 200 && after < 0.05 * before && same,
          "mse " + fmt("%.4g", before) + " -> " + fmt("%.4g", after) + " (" +
              fmt("%.2f%%", 100 * after / before) + "), replay " +
              (same ? "identical" : "differs")};
}

using protocol::ResultTable;

double mean_mae(const ResultTable& t, const std::string& variant, double pct) {
  return protocol::mean_metric(
      t, [&](const metrics::MetricsRecord& r) { return r.variant == variant && r.pct == pct; },
      &metrics::MetricsReport::mae);
}

Verdict fewshot_trends(const protocol::PlanResult& res, const protocol::ExperimentPlan& plan,
                       double secs) {
  bool a = true, b = true, c = true;
  std::ostringstream d;
  d.precision(4);
  for (const auto& v : plan.variants) {
    for (double pct : plan.pcts) {
      const double pre = mean_mae(res.fewshot, v + "@pretrained", pct);
      const double rnd = mean_mae(res.fewshot, v + "@random", pct);
      a = a && pre <= rnd;
      d << "(a) " << v << " " << pct << "%: " << pre << " vs " << rnd << "; ";
    }
    const double p1 = mean_mae(res.fewshot, v + "@pretrained", 1);
    const double p5 = mean_mae(res.fewshot, v + "@pretrained", 5);
    b = b && p5 <= p1;
    d << "(b) " << v << ": 5% " << p5 << " vs 1% " << p1 << "; ";
  }
  const double sdc1 = mean_mae(res.fewshot, "sdc@pretrained", 1);
  const double conv1 = mean_mae(res.fewshot, "conv_baseline@pretrained", 1);
  c = sdc1 <= conv1;
  d << "(c) 1%: sdc " << sdc1 << " vs conv_baseline " << conv1 << "; ";
  d << "a=" << (a ? "ok" : "no") << " b=" << (b ? "ok" : "no") << " c=" << (c ? "ok" : "no")
    << "; " << fmt("%.0f s", secs);
  return {a && b && c && secs < 1800, d.str()};
}

Verdict zeroshot_gap(const protocol::PlanResult& res, const protocol::ExperimentPlan& plan) {
  bool pass = true;
  std::ostringstream d;
  d.precision(4);
  std::size_t n = 0;
  for (const auto& v : plan.variants) {
    for (std::uint64_t seed : plan.seeds) {
      const auto pick = [&](const std::string& ds) {
        return protocol::mean_metric(
            ds == plan.source ? res.indomain : res.zeroshot,
            [&](const metrics::MetricsRecord& r) {
              return r.dataset == ds && r.variant == v + "@pretrained" && r.seed == seed;
            },
            &metrics::MetricsReport::mae);
      };
      for (const auto& target : plan.targets) {
        const double zs = pick(target);
        const double in = pick(plan.source);
        pass = pass && zs > in;
        ++n;
        d << v << " s" << seed << " " << zs << ">" << in << "; ";
      }
    }
  }
  return {pass && n == plan.variants.size() * plan.seeds.size() * plan.targets.size() &&
              plan.seeds.size() >= 3,
          d.str()};
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") {
      out[fs::relative(e.path(), dir).string()] = testing::read_file(e.path());
    }
  }
  return out;
}

Verdict reproducibility(const fs::path& work) {
  config::Config cfg;
  for (const char* s : {"model.channels=4,8", "plan.variants=conv_baseline,sdc",
                        "plan.seeds=0,1", "plan.raster=16", "plan.source_train=16",
                        "plan.source_test=4", "plan.target_train=20", "plan.target_test=4",
                        "train.epochs=4", "finetune.epochs=2"}) {
    cfg.set(s);
  }
  const auto plan = config::experiment_plan(cfg);
  fs::remove_all(work / "replay_a");
  fs::remove_all(work / "replay_b");
  const auto ra = protocol::run_plan(plan, work / "replay_a");
  const auto rb = protocol::run_plan(plan, work / "replay_b");
  const auto fa = csv_files(ra.dir);
  const auto fb = csv_files(rb.dir);
  const bool csv_same = !fa.empty() && fa == fb;

  Rng rng(2008);
  bool hmt_same = true;
  for (const Dims& dims : {Dims{5}, Dims{2, 3, 7, 9}}) {
    const TensorF f = random_tensor<float>(dims, rng);
    const TensorD g = random_tensor<double>(dims, rng);
    save_hmt(work / "t32.hmt", f);
    save_hmt(work / "t64.hmt", g);
    hmt_same = hmt_same && load_hmt<float>(work / "t32.hmt") == f &&
               load_hmt<double>(work / "t64.hmt") == g &&
               testing::read_file(work / "t32.hmt") == encode_hmt(f);
  }
  const auto ck = model::to_checkpoint(model::Model<float>::initialize(model::ModelSpec{}, 8));
  model::save_checkpoint(work / "m.ckpt", ck);
  const auto back = model::load_checkpoint(work / "m.ckpt");
  const bool ckpt_same =
      back == ck && model::encode_checkpoint(back) == testing::read_file(work / "m.ckpt");
  return {csv_same && hmt_same && ckpt_same,
          std::to_string(fa.size()) + " csv files " + (csv_same ? "identical" : "differ") +
              ", hmt " + (hmt_same ? "bit-identical" : "differs") + ", checkpoint " +
              (ckpt_same ? "bit-identical" : "differs")};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("'") + MHE_CLI_PATH + "' " + args + " >'" +
                          log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict mutation_sentinel(const fs::path& work) {
  const std::string base = "-s gradcheck.suites=sdc gradcheck";
  const int clean = run_cli(base, work / "gradcheck_clean.log");
  const int faulty = run_cli(base + " --inject-fault flip-dilation-sign",
                             work / "gradcheck_fault.log");
  const std::string log = testing::read_file(work / "gradcheck_fault.log");
  const bool named = log.find("sdc.dilation") != std::string::npos;
  return {clean == 0 && faulty != 0 && named,
          "clean exit " + std::to_string(clean) + ", injected fault exit " +
              std::to_string(faulty) + (named ? ", sdc.dilation reported" : "")};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_work";
  fs::create_directories(work);

  report(1, guarded(gradient_correctness));
  report(2, guarded(reduction_oracle));
  report(3, guarded(forward_oracle));
  report(4, guarded(loss_invariants));
  report(5, guarded(overfit));

  config::Config cfg;
  cfg.set("plan.variants=conv_baseline,sdc");
  const auto plan = config::experiment_plan(cfg);
  std::optional<protocol::PlanResult> res;
  std::string plan_error;
  const auto t0 = Clock::now();
  try {
    res = protocol::run_plan(plan, work / "plan", [](const std::string& s) {
      std::fprintf(stderr, "%s\n", s.c_str());
    });
  } catch (const std::exception& e) {
    plan_error = std::string("exception: ") + e.what();
  }
  const double secs = seconds_since(t0);
  report(6, res ? fewshot_trends(*res, plan, secs) : Verdict{false, plan_error});
  report(7, res ? zeroshot_gap(*res, plan) : Verdict{false, plan_error});
  report(8, guarded([&] { return reproducibility(work); }));
  report(9, guarded([&] { return mutation_sentinel(work); }));

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
