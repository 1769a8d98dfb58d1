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

// Finite-difference checks of every analytic gradient rule, at 64-bit.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mhe/graph.hpp"

namespace mhe::gradcheck {

struct Options {
  std::uint64_t seed = 0;
  std::size_t instances = 20;   // random instances per suite
  double step = 1e-4;           // central-difference step
  double kink_band = 1e-3;      // excluded distance from integer coordinates
  double tolerance = 1e-5;
  double model_tolerance = 1e-4;
  std::vector<std::string> suites = {"tensor", "sdc", "losses", "model"};
};

struct FamilyResult {
  std::string suite;
  std::string family;
  double max_rel_error = 0;
  double tolerance = 0;
  std::size_t checked = 0;   // compared entries
  std::size_t excluded = 0;  // entries skipped near kinks

  bool passed() const { return checked > 0 && max_rel_error <= tolerance; }
};

struct Report {
  std::vector<FamilyResult> families;

  bool passed() const;
  std::string format() const;
};

Report run(const Options& options);

// Elementwise |a - n| / max(|a|, |n|, floor) with floor = 1e-3 * max|n|,
// maximized over entries whose mask is true (all when mask is empty).
double max_relative_error(std::span<const double> analytic,
                          std::span<const double> numeric,
                          const std::vector<bool>& mask = {});

using Builder =
    std::function<Var<double>(const std::vector<Var<double>>& leaves)>;

// Central differences of the scalar built by `build` w.r.t. every entry of
// `leaves[which]`.
Tensor<double> numeric_gradient(const std::vector<Tensor<double>>& leaves,
                                std::size_t which, const Builder& build,
                                double step);

// Backward-pass gradients of the same scalar w.r.t. every leaf.
std::vector<Tensor<double>> analytic_gradients(
    const std::vector<Tensor<double>>& leaves, const Builder& build);

}  // namespace mhe::gradcheck
