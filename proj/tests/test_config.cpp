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

#include "mhe/config.hpp"
#include "mhe/error.hpp"
#include "test_util.hpp"

namespace mhe {
namespace {

using config::Config;

TEST(Config, DefaultsCoverEverySection) {
  Config c;
  EXPECT_EQ(c.get("model", "context"), "sdc");
  EXPECT_EQ(c.get_double("train", "lr"), 0.01);
  EXPECT_EQ(c.get_size("finetune", "epochs"), 15u);
  EXPECT_EQ(c.get("train", "schedule"), "cosine");
  EXPECT_EQ(c.get("finetune", "schedule"), "constant");
  EXPECT_FALSE(c.get_bool("train", "hflip"));
  EXPECT_EQ(c.get_list("plan", "seeds"), (std::vector<std::string>{"0", "1", "2"}));
  EXPECT_TRUE(c.has_section("gradcheck"));
  EXPECT_FALSE(c.has_section("bogus"));
}

TEST(Config, MergeTextWithComments) {
  Config c;
  c.merge_text(
      "; leading comment\n"
      "[train]\n"
      "lr = 0.05\n"
      "# another comment\n"
      "epochs=4\n"
      "[plan]\n"
      "variants = conv_baseline , sdc\n");
  EXPECT_EQ(c.get_double("train", "lr"), 0.05);
  EXPECT_EQ(c.get_size("train", "epochs"), 4u);
  EXPECT_EQ(c.get_list("plan", "variants"),
            (std::vector<std::string>{"conv_baseline", "sdc"}));
}

TEST(Config, OverridesReplaceValues) {
  Config c;
  c.set("run.seed=7");
  c.set(" loss.variant = si ");
  EXPECT_EQ(c.get_u64("run", "seed"), 7u);
  EXPECT_EQ(c.get("loss", "variant"), "si");
  EXPECT_THROW(c.set("noequals"), ConfigError);
  EXPECT_THROW(c.set("nodot=3"), ConfigError);
}

TEST(Config, UnknownNamesAreRejected) {
  Config c;
  EXPECT_THROW(c.set("bogus.key=1"), ConfigError);
  EXPECT_THROW(c.set("train.bogus=1"), ConfigError);
  EXPECT_THROW(c.merge_text("[train]\nlrr = 1\n"), ConfigError);
  EXPECT_THROW(c.merge_text("[nosuch]\nlr = 1\n"), ConfigError);
  EXPECT_THROW(c.merge_text("lr = 1\n"), ConfigError);
  EXPECT_THROW(c.get("train", "bogus"), ConfigError);
}

TEST(Config, BadValuesAreRejected) {
  Config c;
  c.set("train.lr=fast");
  EXPECT_THROW(c.get_double("train", "lr"), ConfigError);
  c.set("train.epochs=3.5");
  EXPECT_THROW(c.get_size("train", "epochs"), ConfigError);
  c.set("train.hflip=maybe");
  EXPECT_THROW(c.get_bool("train", "hflip"), ConfigError);
  c.set("train.hflip=yes");
  EXPECT_TRUE(c.get_bool("train", "hflip"));
  c.set("train.epochs=");
  EXPECT_THROW(c.get_size("train", "epochs"), ConfigError);
}

TEST(Config, MissingFileIsIoError) {
  Config c;
  EXPECT_THROW(c.merge_file("/nonexistent/mhe.ini"), IoError);
}

TEST(Config, IniRoundTripAndEcho) {
  Config a;
  a.set("model.channels=4,8");
  a.set("data.density=0.3");
  Config b;
  b.merge_text(a.to_ini());
  EXPECT_EQ(b.to_ini(), a.to_ini());
  EXPECT_EQ(a.to_ini().substr(0, 6), "[run]\n");

  testing::TempDir dir("cfg");
  a.echo(dir.path() / "sub");
  EXPECT_EQ(testing::read_file(dir.path() / "sub" / "config.ini"), a.to_ini());
  Config c;
  c.merge_file(dir.path() / "sub" / "config.ini");
  EXPECT_EQ(c.to_ini(), a.to_ini());
}

TEST(Config, DatasetSpecAppliesOnlyGivenOverrides) {
  Config c;
  c.set("data.preset=ahn");
  c.set("data.raster=16");
  const synth::DatasetSpec base = synth::dataset_preset("ahn");
  synth::DatasetSpec d = config::dataset_spec(c);
  EXPECT_EQ(d.name, "ahn");
  EXPECT_EQ(d.scene.height, 16u);
  EXPECT_EQ(d.scene.width, 16u);
  EXPECT_EQ(d.scene.density, base.scene.density);
  EXPECT_EQ(d.camera_heights, base.camera_heights);
  c.set("data.density=0.125");
  c.set("data.camera_heights=100,200");
  c.set("data.shadows=false");
  d = config::dataset_spec(c);
  EXPECT_EQ(d.scene.density, 0.125);
  EXPECT_EQ(d.camera_heights, (std::vector<double>{100, 200}));
  EXPECT_FALSE(d.scene.shadows);
  c.set("data.preset=mars");
  EXPECT_THROW(config::dataset_spec(c), InvalidArgument);
}

TEST(Config, TrainConfigPerSection) {
  Config c;
  train::TrainConfig pre = config::train_config(c, "train");
  train::TrainConfig fine = config::train_config(c, "finetune");
  EXPECT_EQ(pre.lr, 0.01);
  EXPECT_EQ(pre.epochs, 30u);
  EXPECT_EQ(pre.batch, 8u);
  EXPECT_EQ(pre.schedule, train::Schedule::kCosine);
  EXPECT_EQ(fine.lr, 0.001);
  EXPECT_EQ(fine.batch, 1u);
  EXPECT_EQ(fine.schedule, train::Schedule::kConstant);
  c.set("finetune.schedule=cosine");
  EXPECT_EQ(config::train_config(c, "finetune").schedule, train::Schedule::kCosine);
  c.set("train.momentum=1.5");
  EXPECT_THROW(config::train_config(c, "train"), InvalidArgument);
}

TEST(Config, ExperimentPlanFromKeys) {
  Config c;
  c.set("plan.variants=conv_baseline,sdc");
  c.set("plan.inits=pretrained");
  c.set("plan.pcts=1");
  c.set("plan.seeds=4,5");
  c.set("plan.raster=16");
  c.set("model.channels=4,8");
  protocol::ExperimentPlan p = config::experiment_plan(c);
  EXPECT_EQ(p.variants, (std::vector<std::string>{"conv_baseline", "sdc"}));
  EXPECT_EQ(p.inits, (std::vector<model::InitMode>{model::InitMode::kFull}));
  EXPECT_EQ(p.pcts, (std::vector<double>{1}));
  EXPECT_EQ(p.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(p.raster, 16u);
  EXPECT_EQ(p.model.channels, (std::vector<std::size_t>{4, 8}));
  EXPECT_EQ(p.pretrain.schedule, train::Schedule::kCosine);
  c.set("plan.seeds=x");
  EXPECT_THROW(config::experiment_plan(c), ConfigError);
}

TEST(Config, GradcheckOptions) {
  Config c;
  gradcheck::Options o = config::gradcheck_options(c);
  EXPECT_EQ(o.instances, 20u);
  EXPECT_EQ(o.tolerance, 1e-5);
  EXPECT_EQ(o.suites, (std::vector<std::string>{"tensor", "sdc", "losses", "model"}));
  c.set("gradcheck.instances=0");
  EXPECT_THROW(config::gradcheck_options(c), ConfigError);
}

}  // namespace
}  // namespace mhe
