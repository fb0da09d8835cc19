// Copyright 2026 The s2m Authors.
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

// Checkpoint container, version 1, all integers little-endian:
//
//   8 bytes   magic "S2MCKPT1"
//   u32       format version (1)
//   u32       header length H
//   H bytes   JSON header: {"spec": {...}, "step": N,
//                           "tensors": [{"name", "rows", "cols"}, ...]}
//   payload   float64 values of each tensor in table order, column-major
//   u32       CRC-32 of everything before it
//
// Tensor names are the parameter names, then "adam_m/<name>" and
// "adam_v/<name>" for the optimizer moments.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "json.hpp"

#include "s2m/error.hpp"
#include "s2m/model/params.hpp"
#include "s2m/model/spec.hpp"
#include "s2m/model/train.hpp"

namespace s2m::nn {

inline constexpr char kCheckpointMagic[8] = {'S', '2', 'M', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace ckpt_detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint32_t crc(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

template <typename T>
struct Entry {
  std::string name;
  Mat<T>* tensor;
};

template <typename T>
std::vector<Entry<T>> table(TrainState<T>& s) {
  std::vector<Entry<T>> out;
  for_each_tensor([&](const std::string& n, Mat<T>& m) { out.push_back({n, &m}); }, s.params);
  for_each_tensor([&](const std::string& n, Mat<T>& m) { out.push_back({"adam_m/" + n, &m}); }, s.adam_m);
  for_each_tensor([&](const std::string& n, Mat<T>& m) { out.push_back({"adam_v/" + n, &m}); }, s.adam_v);
  return out;
}

}  // namespace ckpt_detail

/// CRC-32 of a byte string (the digest reported by the service).
inline std::uint32_t checksum(std::span<const std::uint8_t> bytes) { return ckpt_detail::crc(bytes); }

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const TrainState<T>& state) {
  namespace d = ckpt_detail;
  TrainState<T>& s = const_cast<TrainState<T>&>(state);  // table() only reads through the pointers here
  const auto entries = d::table(s);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : entries) tensors.push_back({{"name", e.name}, {"rows", e.tensor->rows()}, {"cols", e.tensor->cols()}});
  const nlohmann::json header = {{"spec", state.spec}, {"step", state.step}, {"tensors", tensors}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  d::put_u32(out, kCheckpointVersion);
  d::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& e : entries) {
    for (Eigen::Index i = 0; i < e.tensor->size(); ++i) {
      const double v = static_cast<double>(e.tensor->data()[i]);
      std::uint8_t raw[8];
      std::memcpy(raw, &v, 8);
      out.insert(out.end(), raw, raw + 8);
    }
  }
  d::put_u32(out, d::crc(out));
  return out;
}

/// Parses a checkpoint. With expected set, any spec difference is a
/// SpecMismatch.
template <typename T>
TrainState<T> parse_checkpoint(std::span<const std::uint8_t> bytes, const std::optional<ModelSpec>& expected = {}) {
  namespace d = ckpt_detail;
  constexpr std::size_t kFixed = sizeof(kCheckpointMagic) + 8;
  if (bytes.size() < kFixed + 4) fail(Errc::kCorruptCheckpoint, "checkpoint is truncated");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    fail(Errc::kCorruptCheckpoint, "bad checkpoint magic");
  }
  const std::size_t body = bytes.size() - 4;
  if (d::get_u32(bytes.data() + body) != d::crc(bytes.first(body))) {
    fail(Errc::kCorruptCheckpoint, "checkpoint checksum mismatch");
  }
  const std::uint32_t version = d::get_u32(bytes.data() + 8);
  if (version != kCheckpointVersion) fail(Errc::kCorruptCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t header_len = d::get_u32(bytes.data() + 12);
  if (kFixed + header_len > body) fail(Errc::kCorruptCheckpoint, "checkpoint header overruns the file");

  nlohmann::json header;
  TrainState<T> s;
  try {
    header = nlohmann::json::parse(bytes.begin() + kFixed, bytes.begin() + kFixed + header_len);
    s.spec = header.at("spec").get<ModelSpec>();
    s.step = header.at("step").get<std::int64_t>();
    s.spec.validate();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(Errc::kCorruptCheckpoint, std::string("unreadable checkpoint header: ") + e.what());
  }
  if (expected && !(*expected == s.spec)) {
    fail(Errc::kSpecMismatch, "checkpoint spec " + nlohmann::json(s.spec).dump() + " differs from expected " +
                                  nlohmann::json(*expected).dump());
  }

  s.params = init_params<T>(s.spec, 0);
  s.adam_m = zeros_like(s.params);
  s.adam_v = zeros_like(s.params);
  const auto entries = d::table(s);
  const nlohmann::json& tensors = header.at("tensors");
  if (!tensors.is_array() || tensors.size() != entries.size()) {
    fail(Errc::kCorruptCheckpoint, "checkpoint tensor table does not match the spec");
  }
  std::size_t offset = kFixed + header_len;
  for (std::size_t t = 0; t < entries.size(); ++t) {
    const auto& e = entries[t];
    const nlohmann::json& row = tensors[t];
    if (row.value("name", "") != e.name || row.value("rows", -1L) != e.tensor->rows() ||
        row.value("cols", -1L) != e.tensor->cols()) {
      fail(Errc::kCorruptCheckpoint, "unexpected tensor entry for " + e.name);
    }
    const std::size_t need = static_cast<std::size_t>(e.tensor->size()) * 8;
    if (offset + need > body) fail(Errc::kCorruptCheckpoint, "checkpoint payload is truncated");
    for (Eigen::Index i = 0; i < e.tensor->size(); ++i) {
      double v;
      std::memcpy(&v, bytes.data() + offset + static_cast<std::size_t>(i) * 8, 8);
      if (!std::isfinite(v)) fail(Errc::kCorruptCheckpoint, "non-finite value in " + e.name);
      e.tensor->data()[i] = static_cast<T>(v);
    }
    offset += need;
  }
  if (offset != body) fail(Errc::kCorruptCheckpoint, "trailing bytes after the checkpoint payload");
  return s;
}

template <typename T>
void save_checkpoint(const std::string& path, const TrainState<T>& state) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(state);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Errc::kIo, "cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(Errc::kIo, "write failed for " + path);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <typename T>
TrainState<T> load_checkpoint(const std::string& path, const std::optional<ModelSpec>& expected = {}) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return parse_checkpoint<T>(bytes, expected);
}

}  // namespace s2m::nn
