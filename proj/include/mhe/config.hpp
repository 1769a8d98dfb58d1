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

// Run configuration: INI sections of key/value pairs over a fixed schema.
// Every key has a default; files and `section.key=value` overrides may only
// set keys the schema knows.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mhe/gradcheck.hpp"
#include "mhe/losses.hpp"
#include "mhe/model.hpp"
#include "mhe/protocol.hpp"
#include "mhe/synthdata.hpp"
#include "mhe/train.hpp"

namespace mhe::config {

class Config {
 public:
  // Schema defaults.
  Config();

  void merge_file(const std::filesystem::path& path);
  void merge_text(const std::string& text, std::string_view origin = "<text>");
  // "section.key=value"
  void set(std::string_view assignment);
  void set(const std::string& section, const std::string& key,
           const std::string& value);

  bool has_section(const std::string& section) const;
  const std::string& get(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key) const;
  std::size_t get_size(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key) const;
  std::vector<std::string> get_list(const std::string& section,
                                    const std::string& key) const;

  // Every key with its resolved value, in schema order.
  std::string to_ini() const;
  // Writes `config.ini` into `dir`.
  void echo(const std::filesystem::path& dir) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

synth::DatasetSpec dataset_spec(const Config& cfg);
model::ModelSpec model_spec(const Config& cfg);
losses::LossConfig loss_config(const Config& cfg);
// `section` is "train" or "finetune".
train::TrainConfig train_config(const Config& cfg, const std::string& section);
protocol::ExperimentPlan experiment_plan(const Config& cfg);
gradcheck::Options gradcheck_options(const Config& cfg);

}  // namespace mhe::config
