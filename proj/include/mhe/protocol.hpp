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

// Desk-scale transfer experiments: in-domain benchmark, zero-shot transfer
// and few-shot fine-tuning from a source-pretrained or random init.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mhe/checkpoint.hpp"
#include "mhe/losses.hpp"
#include "mhe/metrics.hpp"
#include "mhe/model.hpp"
#include "mhe/synthdata.hpp"
#include "mhe/train.hpp"

namespace mhe::protocol {

// "conv_baseline", "sdc", "sdc+msg", "sdc+si", "sdc+rank".
struct Variant {
  std::string name;
  model::ContextKind context = model::ContextKind::kSdc;
  losses::LossVariant loss = losses::LossVariant::kMseOnly;
};

Variant parse_variant(std::string_view name);

struct ExperimentPlan {
  std::string source = "gtah";
  std::vector<std::string> targets = {"ahn"};
  std::vector<std::string> variants = {"conv_baseline", "sdc", "sdc+msg",
                                       "sdc+si", "sdc+rank"};
  std::vector<model::InitMode> inits = {model::InitMode::kFull,
                                        model::InitMode::kRandom};
  std::vector<double> pcts = {1, 5};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::uint64_t data_seed = 0;
  std::size_t raster = 32;
  std::size_t source_train = 256;
  std::size_t source_test = 64;
  std::size_t target_train = 64;
  std::size_t target_test = 64;
  model::ModelSpec model;  // context is overridden per variant
  losses::LossConfig loss;  // variant is overridden per variant
  train::TrainConfig pretrain = train::pretrain_defaults();
  train::TrainConfig finetune = train::finetune_defaults();

  void validate() const;
  // Every setting that affects results, one per line.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;
};

struct CellKey {
  std::string target;
  std::string variant;
  model::InitMode init = model::InitMode::kFull;
  double pct = 0;
  std::uint64_t seed = 0;

  std::string file_stem() const;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

// Few-shot rows use variant "<variant>@<init>". Zero-shot and in-domain
// rows use pct 0.
struct ResultTable {
  std::vector<metrics::MetricsRecord> rows;

  std::string to_csv() const;
  static ResultTable from_csv(std::string_view text);
  // One row per (dataset, variant); columns are metric x pct as
  // mean+-std over seeds, best (lowest) mean per column marked '*'.
  std::string to_text() const;

  friend bool operator==(const ResultTable&, const ResultTable&) = default;
};

metrics::MetricsRecord to_record(const CellKey& key,
                                 const metrics::MetricsReport& report);

struct Pretrained {
  model::Checkpoint checkpoint;
  std::vector<double> loss_curve;
};

using Logger = std::function<void(const std::string&)>;

synth::DatasetSpec dataset_for(const ExperimentPlan& plan, std::string_view name);

model::ModelSpec model_spec_for(const ExperimentPlan& plan, const Variant& variant);
train::TrainConfig train_config_for(const train::TrainConfig& base,
                                    const ExperimentPlan& plan,
                                    const Variant& variant, std::uint64_t seed,
                                    std::string_view stage);

Pretrained run_pretrain(const ExperimentPlan& plan, const Variant& variant,
                        std::uint64_t seed,
                        const std::vector<synth::Sample>& source_train);

ResultTable run_zeroshot(const model::Checkpoint& ckpt, std::string_view variant,
                         std::uint64_t seed,
                         const std::vector<synth::DatasetManifest>& targets);

// Few-shot fine-tuning shared by the plan runner and the CLI. `base`
// carries the loss; its seed is replaced by one derived from `seed`.
train::TrainResult fewshot_finetune(const model::ModelSpec& spec,
                                    const train::TrainConfig& base,
                                    const model::Checkpoint* ckpt,
                                    const synth::DatasetManifest& target,
                                    double pct, model::InitMode init,
                                    std::uint64_t seed);

// Initializes from `ckpt` or randomly, fine-tunes on the pct% subset of
// the target's train split and evaluates on its full test split.
metrics::MetricsReport run_fewshot(const ExperimentPlan& plan,
                                   const Variant& variant,
                                   const model::Checkpoint& ckpt,
                                   const synth::DatasetManifest& target,
                                   double pct, model::InitMode init,
                                   std::uint64_t seed);

struct PlanResult {
  std::filesystem::path dir;
  ResultTable indomain;
  ResultTable zeroshot;
  ResultTable fewshot;
};

// Runs every cell of the plan and writes
//   <out_root>/<plan-hash>/cells/<key>.csv, table.{csv,txt},
//   indomain.csv, zeroshot.{csv,txt}, pretrain/<variant>__s<seed>.{ckpt,loss.csv}
PlanResult run_plan(const ExperimentPlan& plan,
                    const std::filesystem::path& out_root,
                    const Logger& log = {});

// Fails when a (target, variant, init, pct, seed) cell is missing.
void emit_tables(const ExperimentPlan& plan, const ResultTable& fewshot,
                 const std::filesystem::path& dir);

// Mean of one metric over rows matching the predicate.
double mean_metric(const ResultTable& table,
                   const std::function<bool(const metrics::MetricsRecord&)>& pick,
                   double metrics::MetricsReport::*field);

}  // namespace mhe::protocol
