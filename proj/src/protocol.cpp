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
#include "mhe/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mhe/error.hpp"
#include "mhe/random.hpp"

namespace mhe::protocol {

namespace fs = std::filesystem;
using metrics::format_number;
using metrics::MetricsRecord;
using metrics::MetricsReport;

namespace {

template <typename C, typename F>
std::string join(const C& items, F&& fmt) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += ',';
    out += fmt(item);
  }
  return out;
}

std::string train_canonical(const train::TrainConfig& c) {
  return "lr=" + format_number(c.lr) + ";momentum=" + format_number(c.momentum) +
         ";epochs=" + std::to_string(c.epochs) + ";batch=" + std::to_string(c.batch) +
         ";clip_norm=" + format_number(c.clip_norm) +
         ";hflip=" + (c.hflip ? "1" : "0") +
         ";schedule=" + std::string(train::to_string(c.schedule));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string variant_label(std::string_view variant, model::InitMode init) {
  return std::string(variant) + "@" + std::string(model::to_string(init));
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct Moments {
  double mean = 0;
  double std = 0;
  std::size_t n = 0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  m.n = xs.size();
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= double(xs.size());
  if (xs.size() >= 2) {
    double ss = 0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / double(xs.size() - 1));
  }
  return m;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Variant parse_variant(std::string_view name) {
  Variant v;
  v.name = std::string(name);
  if (name == "conv_baseline") {
    v.context = model::ContextKind::kConv;
  } else if (name == "sdc") {
    v.context = model::ContextKind::kSdc;
  } else if (name.substr(0, 4) == "sdc+") {
    v.context = model::ContextKind::kSdc;
    v.loss = losses::parse_loss_variant(name.substr(4));
    if (v.loss == losses::LossVariant::kMseOnly) {
      throw InvalidArgument("variant '" + v.name + "': use 'sdc' for mse only");
    }
  } else {
    throw InvalidArgument("unknown variant '" + v.name +
                          "' (expected conv_baseline, sdc, sdc+msg, sdc+si or sdc+rank)");
  }
  return v;
}

void ExperimentPlan::validate() const {
  if (variants.empty() || seeds.empty()) {
    throw InvalidArgument("plan: variants and seeds must be non-empty");
  }
  for (const auto& v : variants) parse_variant(v);
  synth::dataset_preset(source);
  for (const auto& t : targets) synth::dataset_preset(t);
  for (double p : pcts) {
    if (!(p > 0 && p <= 100)) throw InvalidArgument("plan: pct must lie in (0, 100]");
  }
  if (source_train == 0 || source_test == 0 || target_test == 0) {
    throw InvalidArgument("plan: split sizes must be >= 1");
  }
  for (double p : pcts) synth::fewshot_count(target_train, p);
  if (raster % model.spatial_divisor() != 0 || raster % 8 != 0) {
    throw InvalidArgument("plan: raster " + std::to_string(raster) +
                          " must be divisible by 8 and by the model's stride");
  }
  auto no_dupes = [](const auto& xs, const char* what) {
    auto sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvalidArgument(std::string("plan: duplicate ") + what);
    }
  };
  no_dupes(targets, "target");
  no_dupes(variants, "variant");
  no_dupes(inits, "init");
  no_dupes(pcts, "pct");
  no_dupes(seeds, "seed");
  model.validate();
  loss.validate();
  pretrain.validate();
  finetune.validate();
}

std::string ExperimentPlan::canonical() const {
  std::ostringstream out;
  out << "source=" << source << '\n'
      << "targets=" << join(targets, [](const auto& s) { return s; }) << '\n'
      << "variants=" << join(variants, [](const auto& s) { return s; }) << '\n'
      << "inits="
      << join(inits, [](auto m) { return std::string(model::to_string(m)); }) << '\n'
      << "pcts=" << join(pcts, [](double p) { return format_number(p); }) << '\n'
      << "seeds=" << join(seeds, [](auto s) { return std::to_string(s); }) << '\n'
      << "data_seed=" << data_seed << '\n'
      << "raster=" << raster << '\n'
      << "source_split=" << source_train << ',' << source_test << '\n'
      << "target_split=" << target_train << ',' << target_test << '\n'
      << "model=" << model.canonical() << '\n'
      << "loss=rank_pairs=" << loss.rank_pairs
      << ";rank_threshold=" << format_number(loss.rank_threshold)
      << ";msg_scales=" << join(loss.msg_scales, [](auto d) { return std::to_string(d); })
      << ";weight=" << format_number(loss.weight) << '\n'
      << "pretrain=" << train_canonical(pretrain) << '\n'
      << "finetune=" << train_canonical(finetune) << '\n';
  return out.str();
}

std::uint64_t ExperimentPlan::hash() const { return fnv1a64(canonical()); }

std::string ExperimentPlan::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

std::string CellKey::file_stem() const {
  return target + "__" + variant + "__" + std::string(model::to_string(init)) +
         "__p" + format_number(pct) + "__s" + std::to_string(seed);
}

MetricsRecord to_record(const CellKey& key, const MetricsReport& report) {
  return {key.target, variant_label(key.variant, key.init), key.pct, key.seed, report};
}

std::string ResultTable::to_csv() const {
  std::string out(metrics::kCsvHeader);
  out += '\n';
  for (const auto& r : rows) out += metrics::to_csv_row(r) + '\n';
  return out;
}

ResultTable ResultTable::from_csv(std::string_view text) {
  ResultTable t;
  std::size_t start = 0;
  bool header = true;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    if (header) {
      if (line != metrics::kCsvHeader) throw IoError("csv: unexpected header");
      header = false;
      continue;
    }
    t.rows.push_back(metrics::parse_csv_row(line));
  }
  if (header) throw IoError("csv: missing header");
  return t;
}

std::string ResultTable::to_text() const {
  std::vector<double> pcts;
  std::vector<std::pair<std::string, std::string>> row_keys;
  for (const auto& r : rows) {
    if (std::find(pcts.begin(), pcts.end(), r.pct) == pcts.end()) pcts.push_back(r.pct);
    const auto key = std::make_pair(r.dataset, r.variant);
    if (std::find(row_keys.begin(), row_keys.end(), key) == row_keys.end()) {
      row_keys.push_back(key);
    }
  }
  struct Field {
    const char* name;
    double MetricsReport::*ptr;
  };
  const Field fields[] = {{"mae", &MetricsReport::mae},
                          {"rmse", &MetricsReport::rmse},
                          {"si_rmse", &MetricsReport::si_rmse},
                          {"msge", &MetricsReport::msge}};

  std::vector<std::string> header = {"dataset", "variant"};
  for (const Field& f : fields) {
    for (double p : pcts) {
      header.push_back(std::string(f.name) + (p > 0 ? "@" + format_number(p) + "%" : ""));
    }
  }
  const std::size_t ncols = header.size() - 2;
  std::vector<std::vector<Moments>> stats(row_keys.size(), std::vector<Moments>(ncols));
  for (std::size_t i = 0; i < row_keys.size(); ++i) {
    std::size_t col = 0;
    for (const Field& f : fields) {
      for (double p : pcts) {
        std::vector<double> xs;
        for (const auto& r : rows) {
          if (r.dataset == row_keys[i].first && r.variant == row_keys[i].second &&
              r.pct == p) {
            xs.push_back(r.report.*(f.ptr));
          }
        }
        stats[i][col++] = moments(xs);
      }
    }
  }
  std::vector<std::vector<std::string>> cells;
  cells.push_back(header);
  for (std::size_t i = 0; i < row_keys.size(); ++i) {
    std::vector<std::string> line = {row_keys[i].first, row_keys[i].second};
    for (std::size_t c = 0; c < ncols; ++c) {
      const Moments& m = stats[i][c];
      if (m.n == 0) {
        line.push_back("n/a");
        continue;
      }
      bool best = true;
      for (std::size_t j = 0; j < row_keys.size(); ++j) {
        if (stats[j][c].n > 0 && stats[j][c].mean < m.mean) best = false;
      }
      std::string s = fixed(m.mean, 4) + (m.n >= 2 ? "+-" + fixed(m.std, 4) : "");
      line.push_back(s + (best ? "*" : " "));
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      out << line[c] << std::string(width[c] - line[c].size(), ' ');
      out << (c + 1 < line.size() ? "  " : "");
    }
    out << '\n';
  }
  out << "mean+-std over seeds; '*' marks the lowest mean per column\n";
  const bool has_random = std::any_of(rows.begin(), rows.end(), [](const MetricsRecord& r) {
    return r.variant.ends_with("@random");
  });
  if (has_random) {
    out << "@random: random init stands in for ImageNet init (no external weights)\n";
  }
  return out.str();
}

synth::DatasetSpec dataset_for(const ExperimentPlan& plan, std::string_view name) {
  synth::DatasetSpec d = synth::dataset_preset(name);
  d.scene.height = plan.raster;
  d.scene.width = plan.raster;
  d.seed = derive_seed(plan.data_seed, std::string("dataset:") + std::string(name));
  return d;
}

model::ModelSpec model_spec_for(const ExperimentPlan& plan, const Variant& variant) {
  model::ModelSpec spec = plan.model;
  spec.context = variant.context;
  return spec;
}

train::TrainConfig train_config_for(const train::TrainConfig& base,
                                    const ExperimentPlan& plan,
                                    const Variant& variant, std::uint64_t seed,
                                    std::string_view stage) {
  train::TrainConfig cfg = base;
  cfg.loss = plan.loss;
  cfg.loss.variant = variant.loss;
  cfg.seed = derive_seed(seed, stage);
  return cfg;
}

Pretrained run_pretrain(const ExperimentPlan& plan, const Variant& variant,
                        std::uint64_t seed,
                        const std::vector<synth::Sample>& source_train) {
  auto model = model::Model<float>::initialize(model_spec_for(plan, variant),
                                               derive_seed(seed, "init"));
  auto result = train::train(std::move(model), source_train,
                             train_config_for(plan.pretrain, plan, variant, seed, "pretrain"));
  const auto& curve = result.epoch_loss;
  if (curve.size() >= 2 && !(curve.back() < curve.front())) {
    throw DivergenceError("pretrain " + variant.name + " seed " + std::to_string(seed) +
                          ": final loss " + format_number(curve.back()) +
                          " is not below initial loss " + format_number(curve.front()));
  }
  return {model::to_checkpoint(result.model), std::move(result.epoch_loss)};
}

ResultTable run_zeroshot(const model::Checkpoint& ckpt, std::string_view variant,
                         std::uint64_t seed,
                         const std::vector<synth::DatasetManifest>& targets) {
  const auto model = model::init_from(ckpt.spec, &ckpt, model::InitMode::kFull, 0);
  const metrics::Predictor predict = [&](const synth::Sample& s) {
    return model.predict(s.rgb);
  };
  ResultTable table;
  for (const auto& target : targets) {
    CellKey key{target.spec.name, std::string(variant), model::InitMode::kFull, 0, seed};
    table.rows.push_back(to_record(key, metrics::evaluate_split(predict, target)));
  }
  return table;
}

train::TrainResult fewshot_finetune(const model::ModelSpec& spec,
                                    const train::TrainConfig& base,
                                    const model::Checkpoint* ckpt,
                                    const synth::DatasetManifest& target,
                                    double pct, model::InitMode init,
                                    std::uint64_t seed) {
  auto start = model::init_from(spec, ckpt, init, derive_seed(seed, "random-init"));
  // One shuffle per seed, so the 1% subset is nested in the 5% subset.
  const synth::DatasetManifest subset =
      synth::subsample_fewshot(target, pct, derive_seed(seed, "fewshot"));
  const auto data = synth::load_split(subset, synth::kTrain);
  train::TrainConfig cfg = base;
  cfg.seed = derive_seed(seed, "finetune");
  return train::train(std::move(start), data, cfg);
}

MetricsReport run_fewshot(const ExperimentPlan& plan, const Variant& variant,
                          const model::Checkpoint& ckpt,
                          const synth::DatasetManifest& target, double pct,
                          model::InitMode init, std::uint64_t seed) {
  const auto result = fewshot_finetune(
      model_spec_for(plan, variant),
      train_config_for(plan.finetune, plan, variant, seed, "finetune"), &ckpt,
      target, pct, init, seed);
  const auto& tuned = result.model;
  return metrics::evaluate_split(
      [&](const synth::Sample& s) { return tuned.predict(s.rgb); }, target);
}

void emit_tables(const ExperimentPlan& plan, const ResultTable& fewshot,
                 const fs::path& dir) {
  ResultTable ordered;
  for (const auto& target : plan.targets) {
    for (const auto& variant : plan.variants) {
      for (auto init : plan.inits) {
        for (double pct : plan.pcts) {
          for (auto seed : plan.seeds) {
            const CellKey key{target, variant, init, pct, seed};
            const std::string label = variant_label(variant, init);
            std::size_t hits = 0;
            for (const auto& r : fewshot.rows) {
              if (r.dataset == target && r.variant == label && r.pct == pct &&
                  r.seed == seed) {
                if (hits++ == 0) ordered.rows.push_back(r);
              }
            }
            if (hits != 1) {
              throw InvalidArgument("emit_tables: cell " + key.file_stem() +
                                    (hits == 0 ? " is missing" : " is duplicated"));
            }
          }
        }
      }
    }
  }
  fs::create_directories(dir);
  write_text(dir / "table.csv", ordered.to_csv());
  write_text(dir / "table.txt", ordered.to_text());
}

PlanResult run_plan(const ExperimentPlan& plan, const fs::path& out_root,
                    const Logger& log) {
  plan.validate();
  const auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };
  PlanResult res;
  res.dir = out_root / plan.hash_hex();
  std::error_code ec;
  for (const char* sub : {"cells", "pretrain", "data"}) {
    fs::create_directories(res.dir / sub, ec);
    if (ec) throw IoError("cannot create " + (res.dir / sub).string() + ": " + ec.message());
  }
  write_text(res.dir / "plan.txt", plan.canonical());

  const auto source = synth::generate_dataset(dataset_for(plan, plan.source),
                                              plan.source_train, 0, plan.source_test,
                                              res.dir / "data" / plan.source);
  std::vector<synth::DatasetManifest> targets;
  for (const auto& name : plan.targets) {
    targets.push_back(synth::generate_dataset(dataset_for(plan, name), plan.target_train,
                                              0, plan.target_test,
                                              res.dir / "data" / name));
  }
  const auto source_train = synth::load_split(source, synth::kTrain);
  say("data: " + plan.source + " " + std::to_string(plan.source_train) + "/" +
      std::to_string(plan.source_test) + ", " + std::to_string(targets.size()) +
      " target(s)");

  for (auto seed : plan.seeds) {
    for (const auto& vname : plan.variants) {
      const Variant variant = parse_variant(vname);
      const auto t0 = std::chrono::steady_clock::now();
      const Pretrained pre = run_pretrain(plan, variant, seed, source_train);
      const std::string stem = vname + "__s" + std::to_string(seed);
      model::save_checkpoint(res.dir / "pretrain" / (stem + ".ckpt"), pre.checkpoint);
      std::string curve = "epoch,loss\n";
      for (std::size_t e = 0; e < pre.loss_curve.size(); ++e) {
        curve += std::to_string(e) + "," + format_number(pre.loss_curve[e]) + "\n";
      }
      write_text(res.dir / "pretrain" / (stem + ".loss.csv"), curve);
      say("pretrain " + stem + ": loss " +
          (pre.loss_curve.empty() ? std::string("n/a")
                                  : fixed(pre.loss_curve.front(), 3) + " -> " +
                                        fixed(pre.loss_curve.back(), 3)) +
          " (" + fixed(elapsed(t0), 1) + " s)");

      const ResultTable in = run_zeroshot(pre.checkpoint, vname, seed, {source});
      res.indomain.rows.insert(res.indomain.rows.end(), in.rows.begin(), in.rows.end());
      const ResultTable zs = run_zeroshot(pre.checkpoint, vname, seed, targets);
      res.zeroshot.rows.insert(res.zeroshot.rows.end(), zs.rows.begin(), zs.rows.end());

      for (const auto& target : targets) {
        for (auto init : plan.inits) {
          for (double pct : plan.pcts) {
            const CellKey key{target.spec.name, vname, init, pct, seed};
            const MetricsReport r =
                run_fewshot(plan, variant, pre.checkpoint, target, pct, init, seed);
            const MetricsRecord rec = to_record(key, r);
            write_text(res.dir / "cells" / (key.file_stem() + ".csv"),
                       std::string(metrics::kCsvHeader) + "\n" +
                           metrics::to_csv_row(rec) + "\n");
            res.fewshot.rows.push_back(rec);
            say("fewshot " + key.file_stem() + ": mae " + fixed(r.mae, 4));
          }
        }
      }
    }
  }

  emit_tables(plan, res.fewshot, res.dir);
  write_text(res.dir / "indomain.csv", res.indomain.to_csv());
  write_text(res.dir / "zeroshot.csv", res.zeroshot.to_csv());
  ResultTable transfer = res.indomain;
  transfer.rows.insert(transfer.rows.end(), res.zeroshot.rows.begin(),
                       res.zeroshot.rows.end());
  write_text(res.dir / "zeroshot.txt", transfer.to_text());
  return res;
}

double mean_metric(const ResultTable& table,
                   const std::function<bool(const MetricsRecord&)>& pick,
                   double MetricsReport::*field) {
  std::vector<double> xs;
  for (const auto& r : table.rows) {
    if (pick(r)) xs.push_back(r.report.*field);
  }
  if (xs.empty()) throw InvalidArgument("mean_metric: no matching rows");
  return moments(xs).mean;
}

}  // namespace mhe::protocol
