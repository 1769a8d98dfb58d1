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
#include "mhe/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "mhe/error.hpp"
#include "mhe/random.hpp"

namespace mhe::train {

namespace {

void flip_width(TensorF& t, std::size_t image) {
  const Nchw s = t.nchw();
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t y = 0; y < s.h; ++y) {
      float* row = &t.at(image, c, y, 0);
      std::reverse(row, row + s.w);
    }
  }
}

}  // namespace

std::string_view to_string(Schedule s) {
  return s == Schedule::kCosine ? "cosine" : "constant";
}

Schedule parse_schedule(std::string_view name) {
  if (name == "constant") return Schedule::kConstant;
  if (name == "cosine") return Schedule::kCosine;
  throw InvalidArgument("unknown lr schedule '" + std::string(name) +
                        "' (expected constant or cosine)");
}

void TrainConfig::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw InvalidArgument("train: lr must be > 0");
  if (!(momentum >= 0 && momentum < 1)) {
    throw InvalidArgument("train: momentum must lie in [0, 1)");
  }
  if (batch == 0) throw InvalidArgument("train: batch must be >= 1");
  if (!(clip_norm >= 0)) throw InvalidArgument("train: clip_norm must be >= 0");
  loss.validate();
}

TrainConfig pretrain_defaults() {
  TrainConfig cfg;
  cfg.schedule = Schedule::kCosine;
  return cfg;
}

TrainConfig finetune_defaults() {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.epochs = 15;
  cfg.batch = 1;
  return cfg;
}

std::pair<TensorF, TensorF> stack(const std::vector<synth::Sample>& data,
                                  const std::vector<std::size_t>& indices) {
  const Dims& rd = data.at(indices.at(0)).rgb.dims();
  const std::size_t n = indices.size();
  TensorF x({n, rd[0], rd[1], rd[2]});
  TensorF y({n, 1, rd[1], rd[2]});
  const std::size_t xs = element_count(rd);
  const std::size_t ys = rd[1] * rd[2];
  for (std::size_t b = 0; b < n; ++b) {
    const synth::Sample& s = data.at(indices[b]);
    require_same_dims(s.rgb.dims(), rd, "train batch");
    std::copy(s.rgb.data().begin(), s.rgb.data().end(), x.data().begin() + b * xs);
    std::copy(s.height.data().begin(), s.height.data().end(),
              y.data().begin() + b * ys);
  }
  return {std::move(x), std::move(y)};
}

TrainResult train(model::Model<float> model,
                  const std::vector<synth::Sample>& data,
                  const TrainConfig& cfg, const EpochHook& hook) {
  cfg.validate();
  if (data.empty()) throw InvalidArgument("train: no training samples");
  if (!model.initialized()) throw InvalidArgument("model: uninitialized weights");

  auto& params = model.parameters();
  std::vector<TensorF> velocity;
  for (const auto& p : params) velocity.emplace_back(p.value.dims());

  TrainResult result;
  const std::size_t per_epoch = (data.size() + cfg.batch - 1) / cfg.batch;
  const double total_steps = static_cast<double>(per_epoch * cfg.epochs);
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Rng flip_rng(derive_seed(cfg.seed, "flip", epoch));

    double epoch_sum = 0;
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                         order.begin() + static_cast<long>(stop));
      auto [x, y] = stack(data, idx);
      if (cfg.hflip) {
        for (std::size_t b = 0; b < idx.size(); ++b) {
          if (flip_rng() & 1U) {
            flip_width(x, b);
            flip_width(y, b);
          }
        }
      }

      Graph<float> graph;
      const auto vars = model.bind(graph);
      const Var<float> pred = model.forward(vars, graph.constant(std::move(x)));
      const Var<float> loss = losses::loss_total(
          pred, y, cfg.loss, derive_seed(cfg.seed, "pairs", result.steps));
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(result.steps) +
                              " (loss " + std::to_string(value) + ")");
      }
      const Gradients<float> grads = graph.backward(loss);
      std::vector<TensorF> g_all;
      double norm2 = 0;
      for (const Var<float>& v : vars) {
        g_all.push_back(grads[v]);
        for (float gi : g_all.back().data()) norm2 += double(gi) * double(gi);
      }
      const double norm = std::sqrt(norm2);
      const float clip = cfg.clip_norm > 0 && norm > cfg.clip_norm
                             ? static_cast<float>(cfg.clip_norm / norm)
                             : 1.0f;
      double lr = cfg.lr;
      if (cfg.schedule == Schedule::kCosine) {
        lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * double(result.steps) / total_steps));
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        const TensorF& g = g_all[i];
        TensorF& v = velocity[i];
        TensorF& w = params[i].value;
        for (std::size_t j = 0; j < w.numel(); ++j) {
          v[j] = static_cast<float>(cfg.momentum) * v[j] + clip * g[j];
          w[j] -= static_cast<float>(lr) * v[j];
        }
        if (!w.all_finite()) {
          throw DivergenceError("training diverged: non-finite weights in '" +
                                params[i].name + "' at step " +
                                std::to_string(result.steps));
        }
      }
      epoch_sum += value;
      ++epoch_batches;
      ++result.steps;
    }
    const double mean = epoch_sum / static_cast<double>(epoch_batches);
    result.epoch_loss.push_back(mean);
    if (hook) hook(epoch, mean);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace mhe::train
