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

// Height-map evaluation metrics and their serialized forms.

#include <functional>
#include <string>
#include <string_view>

#include "mhe/synthdata.hpp"
#include "mhe/tensor.hpp"

namespace mhe::metrics {

// Each metric treats a rank-4 input as a batch of images and returns the
// unweighted mean of the per-image values.
template <typename T>
double metric_mae(const Tensor<T>& pred, const Tensor<T>& gt);

template <typename T>
double metric_rmse(const Tensor<T>& pred, const Tensor<T>& gt);

// Same kernel as losses::loss_si.
template <typename T>
double metric_si_rmse(const Tensor<T>& pred, const Tensor<T>& gt);

// Same kernel as losses::loss_msg with divisors {1, 2, 4, 8}.
template <typename T>
double metric_msge(const Tensor<T>& pred, const Tensor<T>& gt);

struct MetricsReport {
  double mae = 0;
  double rmse = 0;
  double si_rmse = 0;
  double msge = 0;
  std::size_t n_images = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport evaluate_images(const TensorF& pred, const TensorF& gt);

using Predictor = std::function<TensorF(const synth::Sample&)>;

MetricsReport evaluate_split(const Predictor& predictor,
                             const synth::DatasetManifest& manifest,
                             std::string_view split = synth::kTest);

// Debug predictors: the ground truth itself and all zeros.
Predictor ground_truth_predictor();
Predictor zero_predictor();

struct MetricsRecord {
  std::string dataset;
  std::string variant;
  double pct = 0;
  std::uint64_t seed = 0;
  MetricsReport report;

  // Compares the CSV fields only; n_images is not part of the record.
  friend bool operator==(const MetricsRecord& a, const MetricsRecord& b) {
    return a.dataset == b.dataset && a.variant == b.variant && a.pct == b.pct &&
           a.seed == b.seed && a.report.mae == b.report.mae &&
           a.report.rmse == b.report.rmse && a.report.si_rmse == b.report.si_rmse &&
           a.report.msge == b.report.msge;
  }
};

inline constexpr std::string_view kCsvHeader =
    "dataset,variant,pct,seed,mae,rmse,si_rmse,msge";

// Shortest round-trip decimal form.
std::string format_number(double v);

std::string to_csv_row(const MetricsRecord& record);
MetricsRecord parse_csv_row(std::string_view line);

std::string format_report(const MetricsReport& report);

}  // namespace mhe::metrics
