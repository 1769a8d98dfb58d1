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

// Minibatch SGD with heavy-ball momentum.

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "mhe/losses.hpp"
#include "mhe/model.hpp"
#include "mhe/synthdata.hpp"

namespace mhe::train {

enum class Schedule { kConstant, kCosine };

std::string_view to_string(Schedule s);
Schedule parse_schedule(std::string_view name);

struct TrainConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  std::size_t epochs = 30;
  std::size_t batch = 8;
  std::uint64_t seed = 0;
  bool hflip = false;     // random horizontal flips
  double clip_norm = 10;  // global gradient-norm cap, 0 disables
  Schedule schedule = Schedule::kConstant;  // cosine decays lr to 0 over all steps
  losses::LossConfig loss;

  void validate() const;
};

TrainConfig pretrain_defaults();
TrainConfig finetune_defaults();

struct TrainResult {
  model::Model<float> model;
  std::vector<double> epoch_loss;  // mean training loss per epoch
  std::size_t steps = 0;
};

// Called after every epoch with (epoch index, mean loss).
using EpochHook = std::function<void(std::size_t, double)>;

TrainResult train(model::Model<float> model,
                  const std::vector<synth::Sample>& data,
                  const TrainConfig& cfg, const EpochHook& hook = {});

// Stacks samples into [N, 3, H, W] and [N, 1, H, W].
std::pair<TensorF, TensorF> stack(const std::vector<synth::Sample>& data,
                                  const std::vector<std::size_t>& indices);

}  // namespace mhe::train
