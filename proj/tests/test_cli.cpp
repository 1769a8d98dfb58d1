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
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "test_util.hpp"

namespace mhe {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  Outcome mhe(const std::string& args) {
    const fs::path out = dir_.path() / "stdout.txt";
    const fs::path err = dir_.path() / "stderr.txt";
    const std::string cmd = std::string("'") + MHE_CLI_PATH + "' " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = testing::read_file(out);
    r.err = testing::read_file(err);
    return r;
  }

  std::string p(const std::string& name) const { return (dir_.path() / name).string(); }

  // Small model and dataset sizes for every command.
  static constexpr const char* kSmall =
      "-s model.channels=4,8 -s data.raster=16 -s data.train=4 -s data.test=2 ";

  testing::TempDir dir_{"cli"};
};

TEST_F(Cli, GenWritesManifestAndConfig) {
  Outcome r = mhe(std::string(kSmall) + "gen --preset ahn --out " + p("ahn"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_.path() / "ahn" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir_.path() / "ahn" / "config.ini"));
  EXPECT_NE(r.out.find("ahn: train 4 val 0 test 2"), std::string::npos) << r.out;
}

TEST_F(Cli, UnknownKeyIsConfigError) {
  Outcome r = mhe("-s train.bogus=1 gen --out " + p("x"));
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("mhe: error[config]: ", 0), 0u) << r.err;
  EXPECT_EQ(r.err.find('\n'), r.err.size() - 1);
  EXPECT_FALSE(fs::exists(dir_.path() / "x"));
}

TEST_F(Cli, BadArgumentsExitWithConfigCode) {
  EXPECT_EQ(mhe("").code, 2);
  EXPECT_EQ(mhe("frobnicate").code, 2);
  EXPECT_EQ(mhe("-s model.kernel=4 train --data " + p("none")).code, 3);
  Outcome r = mhe("-c " + p("missing.ini") + " gen");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("error[io]"), std::string::npos) << r.err;
}

TEST_F(Cli, GradcheckPassesAndCatchesInjectedFault) {
  const std::string base = "-s gradcheck.suites=sdc -s gradcheck.instances=4 gradcheck ";
  Outcome ok = mhe(base + "--out " + p("gc"));
  EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
  EXPECT_NE(ok.out.find("gradcheck: PASS"), std::string::npos);
  EXPECT_EQ(testing::read_file(dir_.path() / "gc" / "gradcheck.txt"), ok.out);
  Outcome bad = mhe(base + "--inject-fault flip-dilation-sign");
  EXPECT_EQ(bad.code, 5);
  EXPECT_NE(bad.err.find("sdc.dilation"), std::string::npos) << bad.err;
  EXPECT_EQ(mhe(base + "--inject-fault other").code, 2);
}

TEST_F(Cli, TrainFinetuneEvalPipeline) {
  ASSERT_EQ(mhe(std::string(kSmall) + "gen --preset gtah --out " + p("src")).code, 0);
  ASSERT_EQ(mhe(std::string(kSmall) + "gen --preset ahn --out " + p("tgt")).code, 0);

  Outcome gt = mhe("eval --data " + p("tgt") + " --predictor gt --out " + p("ev_gt"));
  ASSERT_EQ(gt.code, 0) << gt.err;
  EXPECT_NE(gt.out.find("mae      0\n"), std::string::npos) << gt.out;
  EXPECT_NE(gt.out.find("images   2\n"), std::string::npos) << gt.out;

  Outcome tr = mhe(std::string(kSmall) + "-s train.batch=2 train --data " + p("src") +
               " --epochs 2 --out " + p("run"));
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_TRUE(fs::exists(dir_.path() / "run" / "model.ckpt"));
  EXPECT_EQ(testing::read_file(dir_.path() / "run" / "loss.csv").rfind("epoch,loss\n0,", 0), 0u);

  Outcome ft = mhe(std::string(kSmall) + "-s finetune.epochs=1 finetune --data " + p("tgt") +
               " --checkpoint " + p("run/model.ckpt") + " --pct 50 --out " + p("ft"));
  ASSERT_EQ(ft.code, 0) << ft.err;
  const std::string row = testing::read_file(dir_.path() / "ft" / "metrics.csv");
  EXPECT_NE(row.find("\nahn,sdc@pretrained,50,0,"), std::string::npos) << row;

  Outcome ev = mhe("eval --data " + p("tgt") + " --checkpoint " + p("ft/model.ckpt") +
               " --out " + p("ev"));
  ASSERT_EQ(ev.code, 0) << ev.err;
  Outcome ev2 = mhe("eval --data " + p("tgt") + " --checkpoint " + p("ft/model.ckpt") +
                " --out " + p("ev2"));
  EXPECT_EQ(ev.out, ev2.out);
  EXPECT_NE(ev.out.find("mae      "), std::string::npos);
}

TEST_F(Cli, BenchSmokeWritesTables) {
  Outcome r = mhe(
      "-s model.channels=4,8 -s plan.variants=conv_baseline -s plan.inits=pretrained "
      "-s plan.pcts=10 -s plan.raster=16 -s plan.source_train=8 -s plan.source_test=3 "
      "-s plan.target_train=20 -s plan.target_test=3 -s train.epochs=2 "
      "-s finetune.epochs=1 bench --smoke --out " + p("bench"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("results -> "), std::string::npos);
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(dir_.path() / "bench")) {
    ++dirs;
    EXPECT_TRUE(fs::exists(e.path() / "table.csv"));
    EXPECT_TRUE(fs::exists(e.path() / "zeroshot.csv"));
    EXPECT_TRUE(fs::exists(e.path() / "config.ini"));
  }
  EXPECT_EQ(dirs, 1u);
}

}  // namespace
}  // namespace mhe
