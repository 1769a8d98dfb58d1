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

#include <vector>

#include "mhe/error.hpp"
#include "mhe/gradcheck.hpp"
#include "mhe/sdc.hpp"

namespace mhe {
namespace {

using gradcheck::max_relative_error;

TEST(Gradcheck, RelativeErrorSemantics) {
  std::vector<double> a = {1.0, 2.0, 0.0};
  std::vector<double> n = {1.0, 2.2, 0.0};
  EXPECT_NEAR(max_relative_error(a, n), 0.2 / 2.2, 1e-15);
  EXPECT_EQ(max_relative_error(a, a), 0.0);
  // Entries far below the largest numeric value use the floor.
  std::vector<double> a2 = {1e-9, 10.0};
  std::vector<double> n2 = {0.0, 10.0};
  EXPECT_NEAR(max_relative_error(a2, n2), 1e-9 / 1e-2, 1e-15);
  EXPECT_EQ(max_relative_error(a, n, {true, false, true}), 0.0);
  EXPECT_THROW(max_relative_error(a, std::vector<double>{1.0}), InvalidArgument);
}

TEST(Gradcheck, SuitesPass) {
  gradcheck::Options o;
  o.instances = 4;
  o.suites = {"tensor", "losses", "sdc"};
  gradcheck::Report r = gradcheck::run(o);
  EXPECT_TRUE(r.passed()) << r.format();
  for (const auto& f : r.families) EXPECT_GT(f.checked, 0u) << f.family;
  EXPECT_NE(r.format().find("gradcheck: PASS"), std::string::npos);
}

TEST(Gradcheck, UnknownSuiteRejected) {
  gradcheck::Options o;
  o.suites = {"nope"};
  EXPECT_THROW(gradcheck::run(o), InvalidArgument);
}

TEST(Gradcheck, FlippedDilationSignIsCaught) {
  gradcheck::Options o;
  o.instances = 4;
  o.suites = {"sdc"};
  sdc::set_fault(sdc::Fault::kFlipDilationChainSign);
  gradcheck::Report r = gradcheck::run(o);
  sdc::set_fault(sdc::Fault::kNone);
  EXPECT_FALSE(r.passed());
  for (const auto& f : r.families) {
    EXPECT_EQ(f.passed(), f.family != "dilation") << f.family;
  }
}

}  // namespace
}  // namespace mhe
