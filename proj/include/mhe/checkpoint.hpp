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

// Checkpoint container: a header block listing every tensor by name with
// its byte range, followed by the concatenated HMT1 records.
//
//   "MHCK" | u32 version | u64 spec fingerprint | u64 seed
//   u32 spec length | spec text
//   u32 count | count x (u32 name length | name | u64 offset | u64 length)
//   payload (offsets are relative to the first payload byte)
//
// All integers little-endian.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mhe/model.hpp"

namespace mhe::model {

struct Checkpoint {
  ModelSpec spec;
  std::uint64_t seed = 0;
  std::vector<NamedTensor<float>> tensors;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    if (a.spec != b.spec || a.seed != b.seed ||
        a.tensors.size() != b.tensors.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
      if (a.tensors[i].name != b.tensors[i].name ||
          !(a.tensors[i].value == b.tensors[i].value)) {
        return false;
      }
    }
    return true;
  }
};

Checkpoint to_checkpoint(const Model<float>& model);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

enum class InitMode { kFull, kRandom };

std::string_view to_string(InitMode mode);
// Accepts "full"/"pretrained" and "random".
InitMode parse_init_mode(std::string_view name);

// kFull loads every tensor of `ckpt` after checking its fingerprint against
// `spec`; kRandom ignores `ckpt` and initializes from `seed`.
Model<float> init_from(const ModelSpec& spec, const Checkpoint* ckpt,
                       InitMode mode, std::uint64_t seed);

}  // namespace mhe::model
