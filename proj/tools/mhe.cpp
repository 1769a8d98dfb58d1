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
// mhe: dataset generation, training, evaluation, gradient checks and the
// transfer benchmark behind one binary.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mhe/checkpoint.hpp"
#include "mhe/config.hpp"
#include "mhe/error.hpp"
#include "mhe/gradcheck.hpp"
#include "mhe/metrics.hpp"
#include "mhe/parallel.hpp"
#include "mhe/protocol.hpp"
#include "mhe/random.hpp"
#include "mhe/sdc.hpp"
#include "mhe/synthdata.hpp"
#include "mhe/train.hpp"

namespace fs = std::filesystem;
using namespace mhe;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string curve_csv(const std::vector<double>& curve) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < curve.size(); ++e) {
    out += std::to_string(e) + "," + metrics::format_number(curve[e]) + "\n";
  }
  return out;
}

train::EpochHook progress(const char* stage) {
  return [stage](std::size_t epoch, double loss) {
    std::fprintf(stderr, "%s epoch %zu loss %.6g\n", stage, epoch, loss);
  };
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

int cmd_gen(config::Config& cfg) {
  const synth::DatasetSpec spec = config::dataset_spec(cfg);
  const fs::path out = cfg.get("data", "out");
  const auto m = synth::generate_dataset(spec, cfg.get_size("data", "train"),
                                         cfg.get_size("data", "val"),
                                         cfg.get_size("data", "test"), out);
  cfg.echo(out);
  std::printf("%s: train %zu val %zu test %zu -> %s\n", spec.name.c_str(),
              m.count(synth::kTrain), m.count(synth::kVal), m.count(synth::kTest),
              out.string().c_str());
  return 0;
}

int cmd_train(const config::Config& cfg) {
  const auto manifest = synth::read_manifest(cfg.get("train", "data"));
  const fs::path out = cfg.get("train", "out");
  const std::uint64_t seed = cfg.get_u64("run", "seed");
  train::TrainConfig tc = config::train_config(cfg, "train");
  tc.seed = derive_seed(seed, "pretrain");
  auto model = model::Model<float>::initialize(config::model_spec(cfg),
                                               derive_seed(seed, "init"));
  const auto data = synth::load_split(manifest, synth::kTrain);
  make_dirs(out);
  cfg.echo(out);
  const auto result = train::train(std::move(model), data, tc, progress("train"));
  model::save_checkpoint(out / "model.ckpt", model::to_checkpoint(result.model));
  write_text(out / "loss.csv", curve_csv(result.epoch_loss));
  std::printf("trained %zu steps on %zu images -> %s\n", result.steps, data.size(),
              (out / "model.ckpt").string().c_str());
  return 0;
}

void report_metrics(const fs::path& out, const std::string& dataset,
                    const std::string& label, double pct, std::uint64_t seed,
                    const metrics::MetricsReport& r) {
  const metrics::MetricsRecord rec{dataset, label, pct, seed, r};
  write_text(out / "metrics.csv", std::string(metrics::kCsvHeader) + "\n" +
                                      metrics::to_csv_row(rec) + "\n");
  write_text(out / "metrics.txt", metrics::format_report(r));
  std::fputs(metrics::format_report(r).c_str(), stdout);
}

int cmd_finetune(const config::Config& cfg) {
  const auto target = synth::read_manifest(cfg.get("finetune", "data"));
  const fs::path out = cfg.get("finetune", "out");
  const std::uint64_t seed = cfg.get_u64("run", "seed");
  const auto init = model::parse_init_mode(cfg.get("finetune", "init"));
  const double pct = cfg.get_double("finetune", "pct");
  std::optional<model::Checkpoint> ckpt;
  if (init == model::InitMode::kFull) {
    ckpt = model::load_checkpoint(cfg.get("finetune", "checkpoint"));
  }
  make_dirs(out);
  cfg.echo(out);
  const auto result = protocol::fewshot_finetune(
      config::model_spec(cfg), config::train_config(cfg, "finetune"),
      ckpt ? &*ckpt : nullptr, target, pct, init, seed);
  model::save_checkpoint(out / "model.ckpt", model::to_checkpoint(result.model));
  write_text(out / "loss.csv", curve_csv(result.epoch_loss));
  const auto& tuned = result.model;
  const auto r = metrics::evaluate_split(
      [&](const synth::Sample& s) { return tuned.predict(s.rgb); }, target);
  report_metrics(out, target.spec.name,
                 std::string(model::to_string(tuned.spec().context)) +
                     "@" + std::string(model::to_string(init)),
                 pct, seed, r);
  return 0;
}

int cmd_eval(const config::Config& cfg) {
  const auto manifest = synth::read_manifest(cfg.get("eval", "data"));
  const std::string kind = cfg.get("eval", "predictor");
  const fs::path out = cfg.get("eval", "out");
  metrics::Predictor predictor;
  std::optional<model::Model<float>> model;
  if (kind == "model") {
    const auto ckpt = model::load_checkpoint(cfg.get("eval", "checkpoint"));
    model = model::init_from(ckpt.spec, &ckpt, model::InitMode::kFull, 0);
    predictor = [&](const synth::Sample& s) { return model->predict(s.rgb); };
  } else if (kind == "gt") {
    predictor = metrics::ground_truth_predictor();
  } else if (kind == "zero") {
    predictor = metrics::zero_predictor();
  } else {
    throw ConfigError("eval.predictor must be model, gt or zero, got '" + kind + "'");
  }
  const auto r = metrics::evaluate_split(predictor, manifest, cfg.get("eval", "split"));
  make_dirs(out);
  cfg.echo(out);
  report_metrics(out, manifest.spec.name, cfg.get("eval", "label"), 0,
                 cfg.get_u64("run", "seed"), r);
  return 0;
}

int cmd_gradcheck(const config::Config& cfg, const std::string& fault) {
  if (fault == "flip-dilation-sign") {
    sdc::set_fault(sdc::Fault::kFlipDilationChainSign);
  } else if (!fault.empty()) {
    throw ConfigError("unknown fault '" + fault + "'");
  }
  const auto report = gradcheck::run(config::gradcheck_options(cfg));
  const std::string text = report.format();
  std::fputs(text.c_str(), stdout);
  const std::string out = cfg.get("gradcheck", "out");
  if (!out.empty()) {
    make_dirs(out);
    cfg.echo(out);
    write_text(fs::path(out) / "gradcheck.txt", text);
  }
  if (!report.passed()) {
    std::string failed;
    for (const auto& f : report.families) {
      if (!f.passed()) failed += (failed.empty() ? "" : ",") + f.suite + "." + f.family;
    }
    throw CheckFailure("gradient check failed: " + failed);
  }
  return 0;
}

int cmd_bench(const config::Config& cfg, bool smoke) {
  protocol::ExperimentPlan plan = config::experiment_plan(cfg);
  if (smoke) {
    plan.seeds.resize(1);
    plan.targets.resize(std::min<std::size_t>(plan.targets.size(), 1));
  }
  const auto res = protocol::run_plan(plan, cfg.get("plan", "out"), [](const std::string& s) {
    std::fprintf(stderr, "%s\n", s.c_str());
  });
  cfg.echo(res.dir);
  std::ifstream table(res.dir / "table.txt");
  std::cout << table.rdbuf();
  std::printf("results -> %s\n", res.dir.string().c_str());
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int fail(ErrorKind kind, const std::string& msg) {
  std::fprintf(stderr, "mhe: error[%s]: %s\n", std::string(to_string(kind)).c_str(),
               one_line(msg).c_str());
  const int code = static_cast<int>(kind);
  return kind == ErrorKind::kInvalidArgument ? static_cast<int>(ErrorKind::kConfig) : code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monocular height estimation with scale-deformable convolution"};
  app.require_subcommand(1);
  Common common;
  app.add_option("-c,--config", common.config_file, "INI config file");
  app.add_option("-s,--set", common.overrides, "Override, section.key=value (repeatable)");

  std::vector<std::pair<std::string, std::string>> shortcuts;
  auto shortcut = [&](CLI::App* sub, const std::string& flag, const std::string& key,
                      const std::string& help) {
    sub->add_option_function<std::string>(
        flag, [&shortcuts, key](const std::string& v) { shortcuts.emplace_back(key, v); },
        help + " (" + key + ")");
  };

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  shortcut(gen, "--preset", "data.preset", "Dataset preset");
  shortcut(gen, "--out", "data.out", "Output directory");

  auto* trn = app.add_subcommand("train", "Train a model from scratch");
  shortcut(trn, "--data", "train.data", "Dataset directory");
  shortcut(trn, "--out", "train.out", "Output directory");
  shortcut(trn, "--epochs", "train.epochs", "Epochs");

  auto* ft = app.add_subcommand("finetune", "Few-shot fine-tuning on a target dataset");
  shortcut(ft, "--data", "finetune.data", "Target dataset directory");
  shortcut(ft, "--checkpoint", "finetune.checkpoint", "Pretrained checkpoint");
  shortcut(ft, "--init", "finetune.init", "pretrained or random");
  shortcut(ft, "--pct", "finetune.pct", "Percent of the train split");
  shortcut(ft, "--out", "finetune.out", "Output directory");

  auto* ev = app.add_subcommand("eval", "Evaluate on a dataset split");
  shortcut(ev, "--data", "eval.data", "Dataset directory");
  shortcut(ev, "--checkpoint", "eval.checkpoint", "Checkpoint");
  shortcut(ev, "--predictor", "eval.predictor", "model, gt or zero");
  shortcut(ev, "--split", "eval.split", "Split name");
  shortcut(ev, "--out", "eval.out", "Output directory");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::string fault;
  gc->add_option("--inject-fault", fault)->group("");
  shortcut(gc, "--out", "gradcheck.out", "Report directory");

  auto* bench = app.add_subcommand("bench", "Run the transfer experiment plan");
  bool smoke = false;
  bench->add_flag("--smoke", smoke, "One seed and one target");
  shortcut(bench, "--out", "plan.out", "Results root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(ErrorKind::kConfig, e.what());
  }

  try {
    config::Config cfg;
    if (!common.config_file.empty()) cfg.merge_file(common.config_file);
    for (const auto& o : common.overrides) cfg.set(o);
    for (const auto& [key, value] : shortcuts) cfg.set(key + "=" + value);
    if (const auto threads = cfg.get_size("run", "threads"); threads > 0) {
      set_kernel_threads(static_cast<int>(threads));
    }
    if (gen->parsed()) return cmd_gen(cfg);
    if (trn->parsed()) return cmd_train(cfg);
    if (ft->parsed()) return cmd_finetune(cfg);
    if (ev->parsed()) return cmd_eval(cfg);
    if (gc->parsed()) return cmd_gradcheck(cfg, fault);
    if (bench->parsed()) return cmd_bench(cfg, smoke);
    return fail(ErrorKind::kConfig, "no subcommand");
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mhe: error[internal]: %s\n", one_line(e.what()).c_str());
    return 1;
  }
}
