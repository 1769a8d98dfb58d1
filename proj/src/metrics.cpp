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
#include "mhe/metrics.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <vector>

#include "mhe/error.hpp"
#include "mhe/losses.hpp"

namespace mhe::metrics {

namespace {

constexpr std::size_t kScales[] = {1, 2, 4, 8};

template <typename T, typename F>
double per_image_mean(const Tensor<T>& pred, const Tensor<T>& gt,
                      const char* what, F&& kernel) {
  require_same_dims(pred.dims(), gt.dims(), what);
  const losses::ImageSplit s = losses::split_images(gt.dims());
  if (s.size == 0) throw InvalidArgument(std::string(what) + ": empty input");
  double acc = 0;
  for (std::size_t n = 0; n < s.count; ++n) {
    acc += kernel(pred.data().subspan(n * s.size, s.size),
                  gt.data().subspan(n * s.size, s.size), s);
  }
  return acc / static_cast<double>(s.count);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename N>
N parse_number(std::string_view field) {
  N v{};
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw IoError("csv: bad number '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

template <typename T>
double metric_mae(const Tensor<T>& pred, const Tensor<T>& gt) {
  return per_image_mean(pred, gt, "metric_mae",
                        [](auto p, auto g, const losses::ImageSplit&) {
                          double acc = 0;
                          for (std::size_t i = 0; i < p.size(); ++i) {
                            acc += std::abs(double(g[i]) - double(p[i]));
                          }
                          return acc / static_cast<double>(p.size());
                        });
}

template <typename T>
double metric_rmse(const Tensor<T>& pred, const Tensor<T>& gt) {
  return per_image_mean(pred, gt, "metric_rmse",
                        [](auto p, auto g, const losses::ImageSplit&) {
                          double acc = 0;
                          for (std::size_t i = 0; i < p.size(); ++i) {
                            const double r = double(g[i]) - double(p[i]);
                            acc += r * r;
                          }
                          return std::sqrt(acc / static_cast<double>(p.size()));
                        });
}

template <typename T>
double metric_si_rmse(const Tensor<T>& pred, const Tensor<T>& gt) {
  return per_image_mean(pred, gt, "metric_si_rmse",
                        [](auto p, auto g, const losses::ImageSplit&) {
                          return losses::scale_invariant_error<T>(p, g);
                        });
}

template <typename T>
double metric_msge(const Tensor<T>& pred, const Tensor<T>& gt) {
  return per_image_mean(pred, gt, "metric_msge",
                        [](auto p, auto g, const losses::ImageSplit& s) {
                          return losses::gradient_matching_error<T>(
                              p, g, s.h, s.w, kScales);
                        });
}

MetricsReport evaluate_images(const TensorF& pred, const TensorF& gt) {
  MetricsReport r;
  r.mae = metric_mae(pred, gt);
  r.rmse = metric_rmse(pred, gt);
  r.si_rmse = metric_si_rmse(pred, gt);
  r.msge = metric_msge(pred, gt);
  r.n_images = losses::split_images(gt.dims()).count;
  return r;
}

MetricsReport evaluate_split(const Predictor& predictor,
                             const synth::DatasetManifest& manifest,
                             std::string_view split) {
  const std::vector<synth::Sample> samples = synth::load_split(manifest, split);
  if (samples.empty()) {
    throw InvalidArgument("evaluate: split '" + std::string(split) +
                          "' of " + manifest.root.string() + " is empty");
  }
  MetricsReport total;
  for (const synth::Sample& s : samples) {
    const TensorF pred = predictor(s);
    const MetricsReport r = evaluate_images(pred.reshaped(s.height.dims()), s.height);
    total.mae += r.mae;
    total.rmse += r.rmse;
    total.si_rmse += r.si_rmse;
    total.msge += r.msge;
  }
  const double n = static_cast<double>(samples.size());
  total.mae /= n;
  total.rmse /= n;
  total.si_rmse /= n;
  total.msge /= n;
  total.n_images = samples.size();
  return total;
}

Predictor ground_truth_predictor() {
  return [](const synth::Sample& s) { return s.height; };
}

Predictor zero_predictor() {
  return [](const synth::Sample& s) { return TensorF::zeros(s.height.dims()); };
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string to_csv_row(const MetricsRecord& rec) {
  for (const std::string& f : {rec.dataset, rec.variant}) {
    if (f.find_first_of(",\n\"") != std::string::npos) {
      throw InvalidArgument("csv: field '" + f + "' contains a separator");
    }
  }
  std::string row = rec.dataset + ',' + rec.variant + ',' +
                    format_number(rec.pct) + ',' + std::to_string(rec.seed);
  for (double v : {rec.report.mae, rec.report.rmse, rec.report.si_rmse,
                   rec.report.msge}) {
    row += ',' + format_number(v);
  }
  return row;
}

MetricsRecord parse_csv_row(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto f = split_fields(line);
  if (f.size() != 8) {
    throw IoError("csv: expected 8 fields, got " + std::to_string(f.size()));
  }
  MetricsRecord rec;
  rec.dataset = std::string(f[0]);
  rec.variant = std::string(f[1]);
  rec.pct = parse_number<double>(f[2]);
  rec.seed = parse_number<std::uint64_t>(f[3]);
  rec.report.mae = parse_number<double>(f[4]);
  rec.report.rmse = parse_number<double>(f[5]);
  rec.report.si_rmse = parse_number<double>(f[6]);
  rec.report.msge = parse_number<double>(f[7]);
  return rec;
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream out;
  out << "images   " << r.n_images << '\n'
      << "mae      " << format_number(r.mae) << '\n'
      << "rmse     " << format_number(r.rmse) << '\n'
      << "si_rmse  " << format_number(r.si_rmse) << '\n'
      << "msge     " << format_number(r.msge) << '\n';
  return out.str();
}

template double metric_mae(const TensorF&, const TensorF&);
template double metric_mae(const TensorD&, const TensorD&);
template double metric_rmse(const TensorF&, const TensorF&);
template double metric_rmse(const TensorD&, const TensorD&);
template double metric_si_rmse(const TensorF&, const TensorF&);
template double metric_si_rmse(const TensorD&, const TensorD&);
template double metric_msge(const TensorF&, const TensorF&);
template double metric_msge(const TensorD&, const TensorD&);

}  // namespace mhe::metrics
