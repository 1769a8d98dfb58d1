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
#include "mhe/checkpoint.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "mhe/error.hpp"
#include "mhe/hmt.hpp"

namespace mhe::model {

namespace {

constexpr std::string_view kMagic = "MHCK";
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U le() {
    const std::string_view b = take(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(b[i])) << (8 * i);
    }
    return value;
  }

  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw IoError("checkpoint: truncated");
    const std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint to_checkpoint(const Model<float>& model) {
  if (!model.initialized()) throw InvalidArgument("model: uninitialized weights");
  return {model.spec(), model.seed(), model.parameters()};
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string payload;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  for (const auto& t : ckpt.tensors) {
    const std::string rec = encode_hmt(t.value);
    ranges.emplace_back(payload.size(), rec.size());
    payload += rec;
  }
  const std::string spec = ckpt.spec.canonical();
  std::string out(kMagic);
  put_le(out, kVersion);
  put_le(out, ckpt.spec.fingerprint());
  put_le(out, ckpt.seed);
  put_le(out, static_cast<std::uint32_t>(spec.size()));
  out += spec;
  put_le(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    const std::string& name = ckpt.tensors[i].name;
    put_le(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le(out, ranges[i].first);
    put_le(out, ranges[i].second);
  }
  return out + payload;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw IoError("checkpoint: bad magic");
  const auto version = r.le<std::uint32_t>();
  if (version != kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto fingerprint = r.le<std::uint64_t>();
  Checkpoint ckpt;
  ckpt.seed = r.le<std::uint64_t>();
  const auto spec_len = r.le<std::uint32_t>();
  try {
    ckpt.spec = ModelSpec::parse(r.take(spec_len));
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  if (ckpt.spec.fingerprint() != fingerprint) {
    throw IoError("checkpoint: fingerprint does not match its spec text");
  }
  const auto count = r.le<std::uint32_t>();
  struct Entry {
    std::string name;
    std::uint64_t offset;
    std::uint64_t length;
  };
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = std::string(r.take(r.le<std::uint32_t>()));
    e.offset = r.le<std::uint64_t>();
    e.length = r.le<std::uint64_t>();
    entries.push_back(std::move(e));
  }
  const std::string_view payload = bytes.substr(r.pos());
  std::uint64_t expected = 0;
  for (const Entry& e : entries) {
    if (e.offset != expected || e.length > payload.size() - e.offset) {
      throw IoError("checkpoint: bad byte range for '" + e.name + "'");
    }
    std::istringstream in(std::string(payload.substr(e.offset, e.length)));
    Tensor<float> t = read_hmt<float>(in);
    if (in.peek() != std::char_traits<char>::eof()) {
      throw IoError("checkpoint: trailing bytes in '" + e.name + "'");
    }
    ckpt.tensors.push_back({e.name, std::move(t)});
    expected += e.length;
  }
  if (expected != payload.size()) throw IoError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const std::string bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string_view to_string(InitMode mode) {
  return mode == InitMode::kFull ? "pretrained" : "random";
}

InitMode parse_init_mode(std::string_view name) {
  if (name == "full" || name == "pretrained") return InitMode::kFull;
  if (name == "random") return InitMode::kRandom;
  throw InvalidArgument("unknown init mode '" + std::string(name) +
                        "' (expected pretrained or random)");
}

Model<float> init_from(const ModelSpec& spec, const Checkpoint* ckpt,
                       InitMode mode, std::uint64_t seed) {
  if (mode == InitMode::kRandom) return Model<float>::initialize(spec, seed);
  if (ckpt == nullptr) throw InvalidArgument("init_from: no checkpoint given");
  if (ckpt->spec.fingerprint() != spec.fingerprint()) {
    throw InvalidArgument("init_from: checkpoint fingerprint mismatch (checkpoint '" +
                          ckpt->spec.canonical() + "', model '" +
                          spec.canonical() + "')");
  }
  for (const ParamSlot& slot : parameter_layout(spec)) {
    bool found = false;
    for (const auto& t : ckpt->tensors) found = found || t.name == slot.name;
    if (!found) {
      throw InvalidArgument("init_from: checkpoint lacks tensor '" + slot.name + "'");
    }
  }
  return Model<float>::from_parameters(spec, ckpt->seed, ckpt->tensors);
}

}  // namespace mhe::model
