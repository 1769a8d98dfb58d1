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
#include "mhe/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <tuple>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mhe/error.hpp"
#include "mhe/random.hpp"

namespace mhe::config {

namespace {

struct Entry {
  const char* section;
  const char* key;
  const char* value;
};

// An empty data.* scene value means "take it from the preset".
constexpr Entry kSchema[] = {
    {"run", "seed", "0"},
    {"run", "threads", "0"},

    {"data", "preset", "gtah"},
    {"data", "out", "data/gtah"},
    {"data", "train", "256"},
    {"data", "val", "0"},
    {"data", "test", "64"},
    {"data", "raster", "32"},
    {"data", "density", ""},
    {"data", "height_mu", ""},
    {"data", "height_sigma", ""},
    {"data", "height_max", ""},
    {"data", "camera_heights", ""},
    {"data", "sun_azimuth", ""},
    {"data", "sun_elevation", ""},
    {"data", "shadows", ""},
    {"data", "ambient", ""},

    {"model", "channels", "8,16,32"},
    {"model", "kernel", "3"},
    {"model", "context", "sdc"},
    {"model", "height_scale", "10"},

    {"loss", "variant", "mse_only"},
    {"loss", "rank_pairs", "512"},
    {"loss", "rank_threshold", "0.25"},
    {"loss", "msg_scales", "1,2,4,8"},
    {"loss", "weight", "1"},

    {"train", "data", "data/gtah"},
    {"train", "out", "runs/train"},
    {"train", "lr", "0.01"},
    {"train", "momentum", "0.9"},
    {"train", "epochs", "30"},
    {"train", "batch", "8"},
    {"train", "clip_norm", "10"},
    {"train", "hflip", "false"},
    {"train", "schedule", "cosine"},

    {"finetune", "data", "data/ahn"},
    {"finetune", "checkpoint", "runs/train/model.ckpt"},
    {"finetune", "out", "runs/finetune"},
    {"finetune", "init", "pretrained"},
    {"finetune", "pct", "1"},
    {"finetune", "lr", "0.001"},
    {"finetune", "momentum", "0.9"},
    {"finetune", "epochs", "15"},
    {"finetune", "batch", "1"},
    {"finetune", "clip_norm", "10"},
    {"finetune", "hflip", "false"},
    {"finetune", "schedule", "constant"},

    {"eval", "data", "data/gtah"},
    {"eval", "checkpoint", "runs/train/model.ckpt"},
    {"eval", "split", "test"},
    {"eval", "predictor", "model"},
    {"eval", "label", "model"},
    {"eval", "out", "runs/eval"},

    {"plan", "out", "results"},
    {"plan", "source", "gtah"},
    {"plan", "targets", "ahn"},
    {"plan", "variants", "conv_baseline,sdc,sdc+msg,sdc+si,sdc+rank"},
    {"plan", "inits", "pretrained,random"},
    {"plan", "pcts", "1,5"},
    {"plan", "seeds", "0,1,2"},
    {"plan", "raster", "32"},
    {"plan", "source_train", "256"},
    {"plan", "source_test", "64"},
    {"plan", "target_train", "64"},
    {"plan", "target_test", "64"},

    {"gradcheck", "seed", "0"},
    {"gradcheck", "instances", "20"},
    {"gradcheck", "step", "0.0001"},
    {"gradcheck", "kink_band", "0.001"},
    {"gradcheck", "tolerance", "1e-05"},
    {"gradcheck", "model_tolerance", "0.0001"},
    {"gradcheck", "suites", "tensor,sdc,losses,model"},
    {"gradcheck", "out", ""},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename N>
N parse_as(const std::string& text, const std::string& where) {
  N v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(where + ": cannot parse '" + text + "' as a number");
  }
  return v;
}

std::vector<double> doubles(const Config& cfg, const std::string& s, const std::string& k) {
  std::vector<double> out;
  for (const auto& item : cfg.get_list(s, k)) out.push_back(parse_as<double>(item, s + "." + k));
  return out;
}

std::vector<std::size_t> sizes(const Config& cfg, const std::string& s, const std::string& k) {
  std::vector<std::size_t> out;
  for (const auto& item : cfg.get_list(s, k)) {
    out.push_back(parse_as<std::size_t>(item, s + "." + k));
  }
  return out;
}

}  // namespace

Config::Config() {
  for (const Entry& e : kSchema) values_[e.section][e.key] = e.value;
}

void Config::set(const std::string& section, const std::string& key,
                 const std::string& value) {
  auto sit = values_.find(section);
  if (sit == values_.end()) throw ConfigError("unknown section [" + section + "]");
  auto kit = sit->second.find(key);
  if (kit == sit->second.end()) {
    throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
  }
  kit->second = trim(value);
}

void Config::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw ConfigError("override '" + std::string(assignment) +
                      "' is not of the form section.key=value");
  }
  set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
      std::string(assignment.substr(eq + 1)));
}

void Config::merge_text(const std::string& text, std::string_view origin) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string(origin) + ":" + std::to_string(e.line()) + ": " +
                      e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(std::string(origin) + ": key '" + section +
                        "' outside of any section");
    }
    for (const auto& [key, node] : body) {
      try {
        set(section, key, node.get_value<std::string>());
      } catch (const ConfigError& e) {
        throw ConfigError(std::string(origin) + ": " + e.what());
      }
    }
  }
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

bool Config::has_section(const std::string& section) const {
  return values_.count(section) != 0;
}

const std::string& Config::get(const std::string& section, const std::string& key) const {
  auto sit = values_.find(section);
  if (sit == values_.end()) throw ConfigError("unknown section [" + section + "]");
  auto kit = sit->second.find(key);
  if (kit == sit->second.end()) {
    throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
  }
  return kit->second;
}

std::string Config::get_string(const std::string& s, const std::string& k) const {
  return get(s, k);
}

double Config::get_double(const std::string& s, const std::string& k) const {
  return parse_as<double>(get(s, k), s + "." + k);
}

std::uint64_t Config::get_u64(const std::string& s, const std::string& k) const {
  return parse_as<std::uint64_t>(get(s, k), s + "." + k);
}

std::size_t Config::get_size(const std::string& s, const std::string& k) const {
  return parse_as<std::size_t>(get(s, k), s + "." + k);
}

bool Config::get_bool(const std::string& s, const std::string& k) const {
  const std::string& v = get(s, k);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(s + "." + k + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& s, const std::string& k) const {
  std::vector<std::string> out;
  const std::string& v = get(s, k);
  std::size_t start = 0;
  while (start <= v.size()) {
    std::size_t comma = v.find(',', start);
    if (comma == std::string::npos) comma = v.size();
    std::string item = trim(std::string_view(v).substr(start, comma - start));
    if (!item.empty()) out.push_back(std::move(item));
    start = comma + 1;
  }
  return out;
}

std::string Config::to_ini() const {
  std::string out;
  std::string current;
  for (const Entry& e : kSchema) {
    if (current != e.section) {
      if (!current.empty()) out += '\n';
      current = e.section;
      out += "[" + current + "]\n";
    }
    out += std::string(e.key) + " = " + values_.at(e.section).at(e.key) + "\n";
  }
  return out;
}

void Config::echo(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto path = dir / "config.ini";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << to_ini();
}

synth::DatasetSpec dataset_spec(const Config& cfg) {
  synth::DatasetSpec d = synth::dataset_preset(cfg.get("data", "preset"));
  d.seed = derive_seed(cfg.get_u64("run", "seed"), "dataset:" + d.name);
  d.scene.height = cfg.get_size("data", "raster");
  d.scene.width = d.scene.height;
  auto opt = [&](const char* key, double& field) {
    if (!cfg.get("data", key).empty()) field = cfg.get_double("data", key);
  };
  opt("density", d.scene.density);
  opt("height_mu", d.scene.height_mu);
  opt("height_sigma", d.scene.height_sigma);
  opt("height_max", d.scene.height_max);
  opt("sun_azimuth", d.scene.sun_azimuth_deg);
  opt("sun_elevation", d.scene.sun_elevation_deg);
  opt("ambient", d.scene.ambient);
  if (!cfg.get("data", "shadows").empty()) d.scene.shadows = cfg.get_bool("data", "shadows");
  if (!cfg.get("data", "camera_heights").empty()) {
    d.camera_heights = doubles(cfg, "data", "camera_heights");
  }
  d.validate();
  return d;
}

model::ModelSpec model_spec(const Config& cfg) {
  model::ModelSpec m;
  m.channels = sizes(cfg, "model", "channels");
  m.sdc_kernel = cfg.get_size("model", "kernel");
  m.context = model::parse_context_kind(cfg.get("model", "context"));
  m.height_scale = cfg.get_double("model", "height_scale");
  m.validate();
  return m;
}

losses::LossConfig loss_config(const Config& cfg) {
  losses::LossConfig l;
  l.variant = losses::parse_loss_variant(cfg.get("loss", "variant"));
  l.rank_pairs = cfg.get_size("loss", "rank_pairs");
  l.rank_threshold = cfg.get_double("loss", "rank_threshold");
  l.msg_scales = sizes(cfg, "loss", "msg_scales");
  l.weight = cfg.get_double("loss", "weight");
  l.validate();
  return l;
}

train::TrainConfig train_config(const Config& cfg, const std::string& section) {
  train::TrainConfig t;
  t.lr = cfg.get_double(section, "lr");
  t.momentum = cfg.get_double(section, "momentum");
  t.epochs = cfg.get_size(section, "epochs");
  t.batch = cfg.get_size(section, "batch");
  t.clip_norm = cfg.get_double(section, "clip_norm");
  t.hflip = cfg.get_bool(section, "hflip");
  t.schedule = train::parse_schedule(cfg.get(section, "schedule"));
  t.seed = cfg.get_u64("run", "seed");
  t.loss = loss_config(cfg);
  t.validate();
  return t;
}

protocol::ExperimentPlan experiment_plan(const Config& cfg) {
  protocol::ExperimentPlan p;
  p.source = cfg.get("plan", "source");
  p.targets = cfg.get_list("plan", "targets");
  p.variants = cfg.get_list("plan", "variants");
  p.inits.clear();
  for (const auto& s : cfg.get_list("plan", "inits")) {
    p.inits.push_back(model::parse_init_mode(s));
  }
  p.pcts = doubles(cfg, "plan", "pcts");
  p.seeds.clear();
  for (const auto& s : cfg.get_list("plan", "seeds")) {
    p.seeds.push_back(parse_as<std::uint64_t>(s, "plan.seeds"));
  }
  p.data_seed = cfg.get_u64("run", "seed");
  p.raster = cfg.get_size("plan", "raster");
  p.source_train = cfg.get_size("plan", "source_train");
  p.source_test = cfg.get_size("plan", "source_test");
  p.target_train = cfg.get_size("plan", "target_train");
  p.target_test = cfg.get_size("plan", "target_test");
  p.model = model_spec(cfg);
  p.loss = loss_config(cfg);
  p.pretrain = train_config(cfg, "train");
  p.finetune = train_config(cfg, "finetune");
  p.validate();
  return p;
}

gradcheck::Options gradcheck_options(const Config& cfg) {
  gradcheck::Options o;
  o.seed = cfg.get_u64("gradcheck", "seed");
  o.instances = cfg.get_size("gradcheck", "instances");
  o.step = cfg.get_double("gradcheck", "step");
  o.kink_band = cfg.get_double("gradcheck", "kink_band");
  o.tolerance = cfg.get_double("gradcheck", "tolerance");
  o.model_tolerance = cfg.get_double("gradcheck", "model_tolerance");
  o.suites = cfg.get_list("gradcheck", "suites");
  if (o.instances == 0) throw ConfigError("gradcheck.instances must be >= 1");
  return o;
}

}  // namespace mhe::config
