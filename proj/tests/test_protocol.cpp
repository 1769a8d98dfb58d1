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
#include <gtest/gtest.h>

#include <filesystem>

#include "mhe/error.hpp"
#include "mhe/protocol.hpp"
#include "test_util.hpp"

namespace mhe {
namespace {

using namespace protocol;
namespace fs = std::filesystem;

ExperimentPlan tiny_plan() {
  ExperimentPlan p;
  p.variants = {"conv_baseline", "sdc"};
  p.seeds = {0};
  p.pcts = {5, 10};
  p.raster = 16;
  p.source_train = 8;
  p.source_test = 3;
  p.target_train = 20;
  p.target_test = 3;
  p.model.channels = {4, 8};
  p.pretrain.epochs = 2;
  p.pretrain.batch = 4;
  p.finetune.epochs = 1;
  return p;
}

metrics::MetricsRecord row(std::string ds, std::string variant, double pct, std::uint64_t seed,
                           double mae) {
  return {std::move(ds), std::move(variant), pct, seed, {mae, mae + 1, mae + 2, mae + 3, 4}};
}

TEST(Variant, KnownNames) {
  EXPECT_EQ(parse_variant("conv_baseline").context, model::ContextKind::kConv);
  EXPECT_EQ(parse_variant("conv_baseline").loss, losses::LossVariant::kMseOnly);
  EXPECT_EQ(parse_variant("sdc").context, model::ContextKind::kSdc);
  EXPECT_EQ(parse_variant("sdc+msg").loss, losses::LossVariant::kGradientMatching);
  EXPECT_EQ(parse_variant("sdc+si").loss, losses::LossVariant::kScaleInvariant);
  EXPECT_EQ(parse_variant("sdc+rank").loss, losses::LossVariant::kRank);
  EXPECT_THROW(parse_variant("dcn"), InvalidArgument);
}

TEST(Plan, DefaultsAndValidation) {
  ExperimentPlan p;
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(p.pcts, (std::vector<double>{1, 5}));
  EXPECT_EQ(p.source_train, 256u);
  EXPECT_EQ(p.target_train, 64u);
  EXPECT_EQ(p.variants.size(), 5u);
  auto bad = p;
  bad.seeds = {1, 1};
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = p;
  bad.raster = 20;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = p;
  bad.targets = {"mars"};
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = p;
  bad.pcts = {0};
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Plan, HashTracksEverySetting) {
  ExperimentPlan a, b;
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash_hex().size(), 16u);
  b.finetune.lr = 2e-3;
  EXPECT_NE(a.hash(), b.hash());
  b = a;
  b.pretrain.schedule = train::Schedule::kConstant;
  EXPECT_NE(a.hash(), b.hash());
  b = a;
  b.data_seed = 9;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(CellKey, FileStem) {
  CellKey k{"ahn", "sdc+msg", model::InitMode::kRandom, 5, 2};
  EXPECT_EQ(k.file_stem(), "ahn__sdc+msg__random__p5__s2");
  CellKey f{"ahn", "sdc", model::InitMode::kFull, 1, 0};
  EXPECT_EQ(f.file_stem(), "ahn__sdc__pretrained__p1__s0");
  EXPECT_EQ(to_record(f, {}).variant, "sdc@pretrained");
}

TEST(ResultTable, CsvRoundTrip) {
  ResultTable t;
  t.rows = {row("ahn", "sdc@pretrained", 1, 0, 1.25), row("ahn", "sdc@random", 5, 2, 1.0 / 3)};
  EXPECT_EQ(ResultTable::from_csv(t.to_csv()), t);
  EXPECT_THROW(ResultTable::from_csv("bad,header\n"), IoError);
  EXPECT_THROW(ResultTable::from_csv(""), IoError);
}

TEST(ResultTable, TextColumnsAndBestMarks) {
  ResultTable t;
  for (std::uint64_t s = 0; s < 3; ++s) {
    t.rows.push_back(row("ahn", "a@pretrained", 1, s, 1.0 + s));
    t.rows.push_back(row("ahn", "a@pretrained", 5, s, 3.0 + s));
    t.rows.push_back(row("ahn", "b@random", 1, s, 2.0 + s));
    t.rows.push_back(row("ahn", "b@random", 5, s, 1.0));
  }
  const std::string text = t.to_text();
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::vector<std::string> cols;
  for (std::string c; hs >> c;) cols.push_back(c);
  ASSERT_EQ(cols.size(), 2u + 4 * 2);
  EXPECT_EQ(cols[2], "mae@1%");
  EXPECT_EQ(cols[3], "mae@5%");
  std::string a_line, b_line;
  std::getline(in, a_line);
  std::getline(in, b_line);
  EXPECT_NE(a_line.find("2.0000+-1.0000*"), std::string::npos) << a_line;
  EXPECT_NE(b_line.find("1.0000+-0.0000*"), std::string::npos) << b_line;
  EXPECT_NE(text.find("ImageNet"), std::string::npos);
}

TEST(ResultTable, SingleSeedHasNoStd) {
  ResultTable t;
  t.rows = {row("ahn", "sdc@pretrained", 1, 0, 2.5)};
  const std::string text = t.to_text();
  EXPECT_NE(text.find("2.5000*"), std::string::npos);
  EXPECT_EQ(text.find("+-0"), std::string::npos);
}

TEST(EmitTables, SingleCellAndMissingCells) {
  testing::TempDir dir("emit");
  ExperimentPlan p;
  p.variants = {"sdc"};
  p.inits = {model::InitMode::kFull};
  p.pcts = {1};
  p.seeds = {0};
  ResultTable t;
  t.rows = {row("ahn", "sdc@pretrained", 1, 0, 2.0)};
  emit_tables(p, t, dir.path());
  EXPECT_EQ(ResultTable::from_csv(testing::read_file(dir.path() / "table.csv")), t);
  p.seeds = {0, 1};
  EXPECT_THROW(emit_tables(p, t, dir.path()), InvalidArgument);
  p.seeds = {0};
  t.rows.push_back(t.rows[0]);
  EXPECT_THROW(emit_tables(p, t, dir.path()), InvalidArgument);
}

TEST(MeanMetric, FiltersRows) {
  ResultTable t;
  t.rows = {row("ahn", "x", 1, 0, 1), row("ahn", "x", 1, 1, 3), row("ahn", "y", 1, 0, 10)};
  auto pick_x = [](const metrics::MetricsRecord& r) { return r.variant == "x"; };
  EXPECT_EQ(mean_metric(t, pick_x, &metrics::MetricsReport::mae), 2.0);
  EXPECT_EQ(mean_metric(t, pick_x, &metrics::MetricsReport::rmse), 3.0);
  EXPECT_THROW(mean_metric(t, [](auto&) { return false; }, &metrics::MetricsReport::mae),
               InvalidArgument);
}

class ProtocolData : public ::testing::Test {
 protected:
  void SetUp() override {
    plan_ = tiny_plan();
    source_ = synth::generate_dataset(dataset_for(plan_, "gtah"), plan_.source_train, 0,
                                      plan_.source_test, dir_.path() / "gtah");
    target_ = synth::generate_dataset(dataset_for(plan_, "ahn"), plan_.target_train, 0,
                                      plan_.target_test, dir_.path() / "ahn");
    train_ = synth::load_split(source_, synth::kTrain);
  }

  testing::TempDir dir_{"protocol"};
  ExperimentPlan plan_;
  synth::DatasetManifest source_, target_;
  std::vector<synth::Sample> train_;
};

TEST_F(ProtocolData, DatasetsUsePlanRaster) {
  EXPECT_EQ(train_.front().rgb.dims(), (Dims{3, 16, 16}));
  EXPECT_EQ(dataset_for(plan_, "ahn").seed, dataset_for(plan_, "ahn").seed);
  EXPECT_NE(dataset_for(plan_, "ahn").seed, dataset_for(plan_, "gtah").seed);
}

TEST_F(ProtocolData, PretrainSeedsAndZeroEpochs) {
  const Variant v = parse_variant("sdc");
  auto zero = plan_;
  zero.pretrain.epochs = 0;
  Pretrained p0 = run_pretrain(zero, v, 0, train_);
  EXPECT_EQ(p0.checkpoint, model::to_checkpoint(model::Model<float>::initialize(
                               model_spec_for(zero, v), derive_seed(0, "init"))));
  EXPECT_TRUE(p0.loss_curve.empty());
  Pretrained a = run_pretrain(plan_, v, 0, train_);
  Pretrained b = run_pretrain(plan_, v, 1, train_);
  Pretrained a2 = run_pretrain(plan_, v, 0, train_);
  EXPECT_EQ(a.checkpoint, a2.checkpoint);
  EXPECT_FALSE(a.checkpoint == b.checkpoint);
  EXPECT_EQ(a.loss_curve.size(), 2u);
}

TEST_F(ProtocolData, ZeroShotOnSourceEqualsInDomain) {
  const Variant v = parse_variant("conv_baseline");
  Pretrained p = run_pretrain(plan_, v, 0, train_);
  ResultTable in = run_zeroshot(p.checkpoint, "conv_baseline", 0, {source_});
  ASSERT_EQ(in.rows.size(), 1u);
  auto m = model::init_from(p.checkpoint.spec, &p.checkpoint, model::InitMode::kFull, 0);
  auto direct = metrics::evaluate_split([&](const synth::Sample& s) { return m.predict(s.rgb); },
                                        source_);
  EXPECT_EQ(in.rows[0].report, direct);
  EXPECT_EQ(in.rows[0].dataset, "gtah");
  EXPECT_EQ(in.rows[0].pct, 0.0);
  EXPECT_TRUE(run_zeroshot(p.checkpoint, "conv_baseline", 0, {}).rows.empty());
}

TEST_F(ProtocolData, FewShotIsDeterministic) {
  const Variant v = parse_variant("sdc");
  Pretrained p = run_pretrain(plan_, v, 0, train_);
  auto a = run_fewshot(plan_, v, p.checkpoint, target_, 5, model::InitMode::kFull, 0);
  auto b = run_fewshot(plan_, v, p.checkpoint, target_, 5, model::InitMode::kFull, 0);
  auto c = run_fewshot(plan_, v, p.checkpoint, target_, 5, model::InitMode::kRandom, 0);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  EXPECT_EQ(a.n_images, plan_.target_test);
}

TEST(RunPlan, WritesLayoutAndReplaysByteIdentically) {
  testing::TempDir a("plan_a"), b("plan_b");
  ExperimentPlan p = tiny_plan();
  p.variants = {"sdc"};
  p.inits = {model::InitMode::kFull};
  p.pcts = {5};
  std::vector<std::string> log;
  PlanResult r1 = run_plan(p, a.path(), [&](const std::string& s) { log.push_back(s); });
  PlanResult r2 = run_plan(p, b.path());
  EXPECT_EQ(r1.dir, a.path() / p.hash_hex());
  EXPECT_FALSE(log.empty());
  for (const char* f : {"table.csv", "table.txt", "indomain.csv", "zeroshot.csv", "zeroshot.txt",
                        "plan.txt", "cells/ahn__sdc__pretrained__p5__s0.csv",
                        "pretrain/sdc__s0.ckpt", "pretrain/sdc__s0.loss.csv"}) {
    ASSERT_TRUE(fs::exists(r1.dir / f)) << f;
    EXPECT_EQ(testing::read_file(r1.dir / f), testing::read_file(r2.dir / f)) << f;
  }
  EXPECT_EQ(r1.fewshot.rows.size(), 1u);
  EXPECT_EQ(ResultTable::from_csv(testing::read_file(r1.dir / "table.csv")), r1.fewshot);
  EXPECT_EQ(testing::read_file(r1.dir / "plan.txt"), p.canonical());
}

TEST(Pretrain, DeskSourceHalvesTrainingLoss) {
  testing::TempDir dir("desk");
  const ExperimentPlan plan;
  const auto source = synth::generate_dataset(dataset_for(plan, "gtah"), plan.source_train, 0,
                                              1, dir.path() / "gtah");
  const auto train = synth::load_split(source, synth::kTrain);
  ASSERT_EQ(train.size(), 256u);
  ASSERT_EQ(train.front().rgb.dims(), (Dims{3, 32, 32}));
  const Pretrained p = run_pretrain(plan, parse_variant("conv_baseline"), 0, train);
  ASSERT_EQ(p.loss_curve.size(), 30u);
  EXPECT_LT(p.loss_curve.back(), 0.5 * p.loss_curve.front());
}

}  // namespace
}  // namespace mhe
