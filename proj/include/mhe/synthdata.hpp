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

// Procedural aerial scenes: nadir RGB rasters paired with height rasters.
//
// A scene is flat ground (height 0) with axis-aligned flat-roofed
// buildings. Building heights follow a clamped lognormal; footprints are
// drawn in meters and converted to pixels through the ground sampling
// distance, which grows with camera height, so higher cameras see smaller
// and more numerous footprints. Colors are Lambertian-shaded albedo with an
// optional hard shadow mask cast along the sun azimuth.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mhe/tensor.hpp"

namespace mhe::synth {

// Ground sampling distance per meter of camera altitude (m/px per m).
inline constexpr double kGsdPerAltitude = 0.01;

inline constexpr double kSourceHeightBound = 439.2;

struct Rgb {
  double r = 0;
  double g = 0;
  double b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct SceneSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  double density = 0.3;                // target roof-cover fraction, in (0, 1)
  double height_mu = 2.4849066497880;  // log-meters (ln 12)
  double height_sigma = 1.0;
  double height_max = kSourceHeightBound;
  double camera_height = 300.0;        // meters
  double sun_azimuth_deg = 135.0;      // clockwise from image up
  double sun_elevation_deg = 40.0;
  bool shadows = true;
  double ambient = 0.35;
  Rgb ground{0.42, 0.40, 0.36};
  Rgb roof_low{0.62, 0.52, 0.44};
  Rgb roof_high{0.38, 0.48, 0.64};
  double texture_noise = 0.03;
  double roof_jitter = 0.04;

  void validate() const;
  double ground_sampling_distance() const {
    return camera_height * kGsdPerAltitude;
  }

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct Building {
  long row = 0;  // top-left corner, pixels (may start outside the raster)
  long col = 0;
  long rows = 1;
  long cols = 1;
  double height = 0;  // meters
};

struct Scene {
  TensorF rgb;     // [3, H, W] in [0, 1]
  TensorF height;  // [1, H, W] meters, ground exactly 0
  std::vector<Building> buildings;
};

// Building heights are drawn before (and independently of) footprints, so
// the same seed yields the same height sequence at every camera height.
Scene generate_scene(const SceneSpec& spec, std::uint64_t seed);

// Generator settings of a whole dataset. Each scene picks its camera height
// uniformly from `camera_heights`.
struct DatasetSpec {
  std::string name = "gtah";
  SceneSpec scene;
  std::vector<double> camera_heights = {300, 380, 460, 540};
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

// Built-in generator presets: "gtah" (source) and the targets "ahn",
// "jax", "oma", "atl", "arg", whose height bounds follow the respective
// real datasets.
DatasetSpec dataset_preset(std::string_view name);
std::vector<std::string> preset_names();

struct SamplePaths {
  std::string image;   // relative to the dataset root
  std::string height;

  friend bool operator==(const SamplePaths&, const SamplePaths&) = default;
};

inline constexpr std::string_view kTrain = "train";
inline constexpr std::string_view kVal = "val";
inline constexpr std::string_view kTest = "test";

struct DatasetManifest {
  std::filesystem::path root;
  DatasetSpec spec;
  std::map<std::string, std::vector<SamplePaths>> splits;

  std::size_t count(std::string_view split) const;
  const std::vector<SamplePaths>& split(std::string_view name) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline constexpr std::string_view kManifestFile = "manifest.json";

// Writes <out_dir>/<split>/{img,hgt}_<idx>.hmt and <out_dir>/manifest.json.
DatasetManifest generate_dataset(const DatasetSpec& spec, std::size_t n_train,
                                 std::size_t n_val, std::size_t n_test,
                                 const std::filesystem::path& out_dir);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text,
                                   const std::filesystem::path& root);
void write_manifest(const DatasetManifest& manifest);
// Accepts the dataset root or the manifest file itself.
DatasetManifest read_manifest(const std::filesystem::path& path);

// ceil(pct% of n_train); throws if that is zero.
std::size_t fewshot_count(std::size_t n_train, double pct);

// Uniform subset of the train split without replacement; val and test are
// kept. Selected items stay in their original order.
DatasetManifest subsample_fewshot(const DatasetManifest& manifest, double pct,
                                  std::uint64_t seed);

struct Sample {
  TensorF rgb;     // [3, H, W]
  TensorF height;  // [1, H, W]
};

std::vector<Sample> load_split(const DatasetManifest& manifest,
                               std::string_view split);

}  // namespace mhe::synth
