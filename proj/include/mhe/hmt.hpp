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

// HMT1 binary tensor container.
//
//   bytes 0..3   "HMT1"
//   byte  4      dtype code (0 = f32, 1 = f64)
//   byte  5      rank (0..4)
//   rank x u32   extents, little-endian
//   payload      row-major values, little-endian IEEE-754
//
// Used for dataset rasters and as the per-tensor record inside checkpoints.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "mhe/tensor.hpp"

namespace mhe {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::kF32; }
template <>
constexpr DType dtype_of<double>() { return DType::kF64; }

std::size_t hmt_encoded_size(DType dtype, const Dims& dims);

template <typename T>
void write_hmt(std::ostream& out, const Tensor<T>& tensor);

// Reads one record. A record stored in the other precision is converted.
template <typename T>
Tensor<T> read_hmt(std::istream& in);

template <typename T>
std::string encode_hmt(const Tensor<T>& tensor);

template <typename T>
void save_hmt(const std::filesystem::path& path, const Tensor<T>& tensor);

// Whole-file read; trailing bytes after the record are an error.
template <typename T>
Tensor<T> load_hmt(const std::filesystem::path& path);

}  // namespace mhe
