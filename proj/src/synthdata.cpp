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
#include "mhe/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mhe/error.hpp"
#include "mhe/hmt.hpp"
#include "mhe/random.hpp"

namespace mhe::synth {

namespace {

using nlohmann::json;

constexpr double kMinSideMeters = 10.0;
constexpr double kMaxSideMeters = 30.0;
// Roof tint saturates around this height.
constexpr double kRoofTintHeight = 25.0;

double mean_footprint_area_m2() {
  // E[side^2] for side ~ U(a, b), ignoring the mild height dependence.
  const double a = kMinSideMeters;
  const double b = kMaxSideMeters;
  return (a * a + a * b + b * b) / 3.0;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

void cast_shadows(const SceneSpec& spec, const TensorF& height,
                  std::vector<unsigned char>& shadow) {
  const long h = static_cast<long>(spec.height);
  const long w = static_cast<long>(spec.width);
  const double az = spec.sun_azimuth_deg * std::numbers::pi / 180.0;
  const double el = spec.sun_elevation_deg * std::numbers::pi / 180.0;
  const double dy = -std::cos(az);
  const double dx = std::sin(az);
  const double rise = spec.ground_sampling_distance() * std::tan(el);
  const long reach = std::min<long>(
      static_cast<long>(std::ceil(spec.height_max / rise)), h + w);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const double h0 = height[static_cast<std::size_t>(y * w + x)];
      for (long s = 1; s <= reach; ++s) {
        const long yy = std::lround(static_cast<double>(y) + s * dy);
        const long xx = std::lround(static_cast<double>(x) + s * dx);
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) break;
        const double occ = height[static_cast<std::size_t>(yy * w + xx)];
        if (occ - h0 > static_cast<double>(s) * rise) {
          shadow[static_cast<std::size_t>(y * w + x)] = 1;
          break;
        }
      }
    }
  }
}

json rgb_json(const Rgb& c) { return json::array({c.r, c.g, c.b}); }
Rgb rgb_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

json scene_json(const SceneSpec& s) {
  return {{"height", s.height},
          {"width", s.width},
          {"density", s.density},
          {"height_mu", s.height_mu},
          {"height_sigma", s.height_sigma},
          {"height_max", s.height_max},
          {"camera_height", s.camera_height},
          {"sun_azimuth_deg", s.sun_azimuth_deg},
          {"sun_elevation_deg", s.sun_elevation_deg},
          {"shadows", s.shadows},
          {"ambient", s.ambient},
          {"ground", rgb_json(s.ground)},
          {"roof_low", rgb_json(s.roof_low)},
          {"roof_high", rgb_json(s.roof_high)},
          {"texture_noise", s.texture_noise},
          {"roof_jitter", s.roof_jitter}};
}

SceneSpec scene_from(const json& j) {
  SceneSpec s;
  s.height = j.at("height").get<std::size_t>();
  s.width = j.at("width").get<std::size_t>();
  s.density = j.at("density").get<double>();
  s.height_mu = j.at("height_mu").get<double>();
  s.height_sigma = j.at("height_sigma").get<double>();
  s.height_max = j.at("height_max").get<double>();
  s.camera_height = j.at("camera_height").get<double>();
  s.sun_azimuth_deg = j.at("sun_azimuth_deg").get<double>();
  s.sun_elevation_deg = j.at("sun_elevation_deg").get<double>();
  s.shadows = j.at("shadows").get<bool>();
  s.ambient = j.at("ambient").get<double>();
  s.ground = rgb_from(j.at("ground"));
  s.roof_low = rgb_from(j.at("roof_low"));
  s.roof_high = rgb_from(j.at("roof_high"));
  s.texture_noise = j.at("texture_noise").get<double>();
  s.roof_jitter = j.at("roof_jitter").get<double>();
  return s;
}

std::string sample_name(std::string_view prefix, std::string_view split,
                        std::size_t idx) {
  return std::string(split) + "/" + std::string(prefix) + "_" +
         std::to_string(idx) + ".hmt";
}

}  // namespace

void SceneSpec::validate() const {
  if (height < 1 || width < 1) {
    throw InvalidArgument("scene: degenerate extents " + std::to_string(height) +
                          "x" + std::to_string(width));
  }
  if (!(density > 0.0 && density < 1.0)) {
    throw InvalidArgument("scene: density must lie in (0, 1), got " +
                          std::to_string(density));
  }
  if (!(height_sigma > 0) || !std::isfinite(height_mu)) {
    throw InvalidArgument("scene: invalid height distribution");
  }
  if (!(height_max > 0)) throw InvalidArgument("scene: height_max must be > 0");
  if (!(camera_height > 0)) {
    throw InvalidArgument("scene: camera_height must be > 0");
  }
  if (!(sun_elevation_deg > 0 && sun_elevation_deg <= 90)) {
    throw InvalidArgument("scene: sun elevation must lie in (0, 90]");
  }
  if (!(ambient >= 0 && ambient <= 1)) {
    throw InvalidArgument("scene: ambient must lie in [0, 1]");
  }
}

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t H = spec.height;
  const std::size_t W = spec.width;
  const double gsd = spec.ground_sampling_distance();

  Rng height_rng(derive_seed(seed, "heights"));
  Rng layout_rng(derive_seed(seed, "layout"));
  Rng texture_rng(derive_seed(seed, "texture"));

  const double expected = spec.density * static_cast<double>(H * W) * gsd *
                          gsd / mean_footprint_area_m2();
  const auto count = static_cast<std::size_t>(std::floor(expected + 0.5));

  std::lognormal_distribution<double> height_dist(spec.height_mu,
                                                  spec.height_sigma);
  std::vector<double> heights(count);
  for (double& h : heights) {
    h = std::clamp(height_dist(height_rng), 0.0, spec.height_max);
  }

  Scene scene;
  std::uniform_real_distribution<double> side(kMinSideMeters, kMaxSideMeters);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-spec.roof_jitter,
                                                spec.roof_jitter);
  std::vector<Rgb> roof_colors;
  for (double h : heights) {
    const double grow = 1.0 + 0.25 * std::log1p(h / 10.0);
    Building b;
    b.height = h;
    b.rows = std::max<long>(1, std::lround(side(layout_rng) * grow / gsd));
    b.cols = std::max<long>(1, std::lround(side(layout_rng) * grow / gsd));
    b.row = static_cast<long>(std::floor(unit(layout_rng) * static_cast<double>(H))) -
            b.rows / 2;
    b.col = static_cast<long>(std::floor(unit(layout_rng) * static_cast<double>(W))) -
            b.cols / 2;
    Rgb c = lerp(spec.roof_low, spec.roof_high, h / (h + kRoofTintHeight));
    c.r += jitter(layout_rng);
    c.g += jitter(layout_rng);
    c.b += jitter(layout_rng);
    scene.buildings.push_back(b);
    roof_colors.push_back(c);
  }

  // Paint low to high so taller roofs win where footprints overlap.
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return heights[a] < heights[b];
  });

  scene.height = TensorF({1, H, W});
  std::vector<Rgb> albedo(H * W);
  std::uniform_real_distribution<double> grain(-spec.texture_noise,
                                               spec.texture_noise);
  for (Rgb& a : albedo) {
    a = spec.ground;
    a.r += grain(texture_rng);
    a.g += grain(texture_rng);
    a.b += grain(texture_rng);
  }
  for (std::size_t idx : order) {
    const Building& b = scene.buildings[idx];
    for (long y = std::max<long>(0, b.row);
         y < std::min<long>(static_cast<long>(H), b.row + b.rows); ++y) {
      for (long x = std::max<long>(0, b.col);
           x < std::min<long>(static_cast<long>(W), b.col + b.cols); ++x) {
        const auto i = static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x);
        scene.height[i] = static_cast<float>(b.height);
        albedo[i] = roof_colors[idx];
      }
    }
  }

  std::vector<unsigned char> shadow(H * W, 0);
  if (spec.shadows) cast_shadows(spec, scene.height, shadow);

  const double sun = std::sin(spec.sun_elevation_deg * std::numbers::pi / 180.0);
  const double lit = spec.ambient + (1.0 - spec.ambient) * sun;
  scene.rgb = TensorF({3, H, W});
  for (std::size_t i = 0; i < H * W; ++i) {
    const double shade = shadow[i] ? spec.ambient : lit;
    scene.rgb[i] = static_cast<float>(clamp01(albedo[i].r * shade));
    scene.rgb[H * W + i] = static_cast<float>(clamp01(albedo[i].g * shade));
    scene.rgb[2 * H * W + i] = static_cast<float>(clamp01(albedo[i].b * shade));
  }
  return scene;
}

void DatasetSpec::validate() const {
  if (name.empty()) throw InvalidArgument("dataset: empty name");
  if (camera_heights.empty()) {
    throw InvalidArgument("dataset: camera_heights is empty");
  }
  for (double c : camera_heights) {
    SceneSpec s = scene;
    s.camera_height = c;
    s.validate();
  }
}

DatasetSpec dataset_preset(std::string_view name) {
  DatasetSpec d;
  d.name = std::string(name);
  if (name == "gtah") return d;

  // Targets: nadir city scenes at a single camera height with their own
  // height range, palette and sun.
  SceneSpec& s = d.scene;
  s.shadows = true;
  if (name == "ahn") {
    s.height_max = 195.8;
    s.density = 0.35;
    s.height_mu = std::log(16.0);
    s.height_sigma = 0.8;
    s.sun_azimuth_deg = 160;
    s.sun_elevation_deg = 35;
    s.ground = {0.38, 0.43, 0.34};
    s.roof_low = {0.58, 0.48, 0.44};
    s.roof_high = {0.40, 0.46, 0.60};
    d.camera_heights = {460};
    d.seed = 101;
  } else if (name == "jax") {
    s.height_max = 186.5;
    s.density = 0.25;
    s.height_mu = std::log(14.0);
    s.height_sigma = 0.9;
    s.sun_azimuth_deg = 120;
    s.sun_elevation_deg = 50;
    s.ground = {0.44, 0.44, 0.38};
    d.camera_heights = {380};
    d.seed = 102;
  } else if (name == "oma") {
    s.height_max = 194.1;
    s.density = 0.3;
    s.height_mu = std::log(12.0);
    s.height_sigma = 0.9;
    s.sun_azimuth_deg = 150;
    s.sun_elevation_deg = 45;
    s.ground = {0.40, 0.45, 0.36};
    d.camera_heights = {540};
    d.seed = 103;
  } else if (name == "atl") {
    s.height_max = 123.4;
    s.density = 0.28;
    s.height_mu = std::log(11.0);
    s.height_sigma = 0.85;
    s.sun_azimuth_deg = 110;
    s.sun_elevation_deg = 55;
    s.ground = {0.36, 0.42, 0.33};
    d.camera_heights = {300};
    d.seed = 104;
  } else if (name == "arg") {
    s.height_max = 92.7;
    s.density = 0.4;
    s.height_mu = std::log(9.0);
    s.height_sigma = 0.7;
    s.sun_azimuth_deg = 200;
    s.sun_elevation_deg = 42;
    s.ground = {0.46, 0.42, 0.36};
    d.camera_heights = {460};
    d.seed = 105;
  } else {
    throw InvalidArgument("unknown dataset preset '" + std::string(name) + "'");
  }
  return d;
}

std::vector<std::string> preset_names() {
  return {"gtah", "ahn", "jax", "oma", "atl", "arg"};
}

std::size_t DatasetManifest::count(std::string_view name) const {
  auto it = splits.find(std::string(name));
  return it == splits.end() ? 0 : it->second.size();
}

const std::vector<SamplePaths>& DatasetManifest::split(std::string_view name) const {
  auto it = splits.find(std::string(name));
  if (it == splits.end()) {
    throw InvalidArgument("manifest has no split '" + std::string(name) + "'");
  }
  return it->second;
}

DatasetManifest generate_dataset(const DatasetSpec& spec, std::size_t n_train,
                                 std::size_t n_val, std::size_t n_test,
                                 const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  DatasetManifest m;
  m.root = out_dir;
  m.spec = spec;
  const std::pair<std::string_view, std::size_t> plan[] = {
      {kTrain, n_train}, {kVal, n_val}, {kTest, n_test}};
  std::error_code ec;
  for (const auto& [split, n] : plan) {
    fs::create_directories(out_dir / split, ec);
    if (ec) {
      throw IoError("cannot create " + (out_dir / split).string() + ": " +
                    ec.message());
    }
    auto& entries = m.splits[std::string(split)];
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t scene_seed = derive_seed(spec.seed, split, i);
      Rng pick(derive_seed(scene_seed, "camera"));
      std::uniform_int_distribution<std::size_t> which(
          0, spec.camera_heights.size() - 1);
      SceneSpec s = spec.scene;
      s.camera_height = spec.camera_heights[which(pick)];
      const Scene scene = generate_scene(s, scene_seed);
      SamplePaths paths{sample_name("img", split, i),
                        sample_name("hgt", split, i)};
      save_hmt(out_dir / paths.image, scene.rgb);
      save_hmt(out_dir / paths.height, scene.height);
      entries.push_back(std::move(paths));
    }
  }
  write_manifest(m);
  return m;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json splits = json::object();
  json counts = json::object();
  for (const auto& [name, entries] : m.splits) {
    json list = json::array();
    for (const SamplePaths& p : entries) {
      list.push_back({{"image", p.image}, {"height", p.height}});
    }
    splits[name] = std::move(list);
    counts[name] = entries.size();
  }
  json doc = {{"format", "mhe-dataset-v1"},
              {"name", m.spec.name},
              {"seed", m.spec.seed},
              {"scene", scene_json(m.spec.scene)},
              {"camera_heights", m.spec.camera_heights},
              {"counts", counts},
              {"splits", splits}};
  return doc.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text,
                                   const std::filesystem::path& root) {
  DatasetManifest m;
  m.root = root;
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "mhe-dataset-v1") {
      throw IoError("manifest: unsupported format");
    }
    m.spec.name = doc.at("name").get<std::string>();
    m.spec.seed = doc.at("seed").get<std::uint64_t>();
    m.spec.scene = scene_from(doc.at("scene"));
    m.spec.camera_heights = doc.at("camera_heights").get<std::vector<double>>();
    for (const auto& [name, list] : doc.at("splits").items()) {
      auto& entries = m.splits[name];
      for (const json& e : list) {
        entries.push_back({e.at("image").get<std::string>(),
                           e.at("height").get<std::string>()});
      }
      if (doc.at("counts").at(name).get<std::size_t>() != entries.size()) {
        throw IoError("manifest: count mismatch in split '" + name + "'");
      }
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const DatasetManifest& m) {
  const auto path = m.root / kManifestFile;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << manifest_to_json(m);
  if (!out) throw IoError("write failed: " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path file = fs::is_directory(path) ? path / kManifestFile : path;
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open: " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str(), file.parent_path());
}

std::size_t fewshot_count(std::size_t n_train, double pct) {
  if (!(pct > 0 && pct <= 100)) {
    throw InvalidArgument("few-shot percentage must lie in (0, 100]");
  }
  // Integer arithmetic where possible to avoid 5% of 100 becoming 6.
  const double exact = static_cast<double>(n_train) * pct / 100.0;
  const double nearest = std::round(exact);
  const auto n = static_cast<std::size_t>(
      std::abs(exact - nearest) < 1e-9 ? nearest : std::ceil(exact));
  if (n == 0) throw InvalidArgument("few-shot subset would be empty");
  return n;
}

DatasetManifest subsample_fewshot(const DatasetManifest& manifest, double pct,
                                  std::uint64_t seed) {
  const auto& train = manifest.split(kTrain);
  const std::size_t n = fewshot_count(train.size(), pct);
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  DatasetManifest out = manifest;
  auto& subset = out.splits[std::string(kTrain)];
  subset.clear();
  for (std::size_t i : idx) subset.push_back(train[i]);
  return out;
}

std::vector<Sample> load_split(const DatasetManifest& manifest,
                               std::string_view split) {
  std::vector<Sample> out;
  for (const SamplePaths& p : manifest.split(split)) {
    Sample s{load_hmt<float>(manifest.root / p.image),
             load_hmt<float>(manifest.root / p.height)};
    const Dims& rd = s.rgb.dims();
    const Dims& hd = s.height.dims();
    if (rd.size() != 3 || rd[0] != 3 || hd.size() != 3 || hd[0] != 1 ||
        rd[1] != hd[1] || rd[2] != hd[2]) {
      throw InvalidArgument("shape mismatch between image " + p.image + " " +
                            dims_to_string(rd) + " and height raster " +
                            p.height + " " + dims_to_string(hd));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mhe::synth
