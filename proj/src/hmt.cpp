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
#include "mhe/hmt.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mhe/error.hpp"

namespace mhe {

namespace {

constexpr std::array<char, 4> kMagic = {'H', 'M', 'T', '1'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> buf;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(buf.data(), buf.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> buf;
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    throw IoError("HMT1: truncated record");
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(buf[i]) << (8 * i);
  }
  return value;
}

template <typename Stored>
using Bits = std::conditional_t<sizeof(Stored) == 4, std::uint32_t, std::uint64_t>;

template <typename Stored, typename T>
std::vector<T> read_payload(std::istream& in, std::size_t count) {
  std::vector<T> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto bits = get_le<Bits<Stored>>(in);
    out[i] = static_cast<T>(std::bit_cast<Stored>(bits));
  }
  return out;
}

}  // namespace

std::size_t hmt_encoded_size(DType dtype, const Dims& dims) {
  std::size_t width = dtype == DType::kF32 ? 4 : 8;
  return 6 + 4 * dims.size() + width * element_count(dims);
}

template <typename T>
void write_hmt(std::ostream& out, const Tensor<T>& tensor) {
  out.write(kMagic.data(), kMagic.size());
  out.put(static_cast<char>(dtype_of<T>()));
  out.put(static_cast<char>(tensor.rank()));
  for (std::size_t d : tensor.dims()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  for (T v : tensor.data()) {
    put_le(out, std::bit_cast<Bits<T>>(v));
  }
  if (!out) throw IoError("HMT1: write failed");
}

template <typename T>
Tensor<T> read_hmt(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) {
    throw IoError("HMT1: truncated header");
  }
  if (magic != kMagic) throw IoError("HMT1: bad magic");
  int dtype = in.get();
  int rank = in.get();
  if (!in) throw IoError("HMT1: truncated header");
  if (dtype != 0 && dtype != 1) {
    throw IoError("HMT1: unknown dtype code " + std::to_string(dtype));
  }
  if (rank < 0 || static_cast<std::size_t>(rank) > kMaxRank) {
    throw IoError("HMT1: rank " + std::to_string(rank) + " out of range");
  }
  Dims dims(static_cast<std::size_t>(rank));
  for (auto& d : dims) {
    d = get_le<std::uint32_t>(in);
    if (d == 0) throw IoError("HMT1: zero extent");
  }
  std::size_t count = element_count(dims);
  std::vector<T> data = dtype == 0 ? read_payload<float, T>(in, count)
                                   : read_payload<double, T>(in, count);
  try {
    return Tensor<T>::from_external(std::move(dims), std::move(data));
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("HMT1: ") + e.what());
  }
}

template <typename T>
std::string encode_hmt(const Tensor<T>& tensor) {
  std::ostringstream os(std::ios::binary);
  write_hmt(os, tensor);
  return os.str();
}

template <typename T>
void save_hmt(const std::filesystem::path& path, const Tensor<T>& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  write_hmt(out, tensor);
}

template <typename T>
Tensor<T> load_hmt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  Tensor<T> t = [&] {
    try {
      return read_hmt<T>(in);
    } catch (const IoError& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }();
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError(path.string() + ": trailing bytes after HMT1 record");
  }
  return t;
}

template void write_hmt(std::ostream&, const Tensor<float>&);
template void write_hmt(std::ostream&, const Tensor<double>&);
template Tensor<float> read_hmt<float>(std::istream&);
template Tensor<double> read_hmt<double>(std::istream&);
template std::string encode_hmt(const Tensor<float>&);
template std::string encode_hmt(const Tensor<double>&);
template void save_hmt(const std::filesystem::path&, const Tensor<float>&);
template void save_hmt(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_hmt<float>(const std::filesystem::path&);
template Tensor<double> load_hmt<double>(const std::filesystem::path&);

}  // namespace mhe
