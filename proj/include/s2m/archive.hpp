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

// Base64 and an uncompressed zip writer/reader. Entries carry a fixed
// timestamp so identical inputs give identical archives.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <zlib.h>

#include "s2m/error.hpp"

namespace s2m {

inline std::string base64_encode(std::span<const std::uint8_t> in) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < in.size(); i += 3) {
    const std::uint32_t b0 = in[i];
    const std::uint32_t b1 = i + 1 < in.size() ? in[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < in.size() ? in[i + 2] : 0;
    const std::uint32_t v = (b0 << 16) | (b1 << 8) | b2;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < in.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += i + 2 < in.size() ? kAlphabet[v & 63] : '=';
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view in) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (in.size() % 4 != 0) fail(Errc::kInvalidArgument, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < in.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = in[i + k];
      if (c == '=') {
        ++pad;
        v <<= 6;
        continue;
      }
      const int d = value(c);
      if (d < 0 || pad > 0) fail(Errc::kInvalidArgument, "invalid base64 character");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    if (pad > 2 || (pad > 0 && i + 4 != in.size())) fail(Errc::kInvalidArgument, "misplaced base64 padding");
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

namespace zip_detail {

inline constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01

inline void u16(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  u16(out, v & 0xffff);
  u16(out, v >> 16);
}

inline std::uint32_t get16(std::span<const std::uint8_t> b, std::size_t at) {
  if (at + 2 > b.size()) fail(Errc::kInvalidArgument, "zip structure is truncated");
  return b[at] | (static_cast<std::uint32_t>(b[at + 1]) << 8);
}

inline std::uint32_t get32(std::span<const std::uint8_t> b, std::size_t at) {
  return get16(b, at) | (get16(b, at + 2) << 16);
}

}  // namespace zip_detail

/// Stored (uncompressed) zip archive built in memory.
class ZipWriter {
 public:
  void add(const std::string& name, std::span<const std::uint8_t> data) {
    namespace z = zip_detail;
    const auto crc = static_cast<std::uint32_t>(::crc32(0L, data.data(), static_cast<uInt>(data.size())));
    const auto offset = static_cast<std::uint32_t>(body_.size());
    z::u32(body_, 0x04034b50);
    z::u16(body_, 20);  // version needed
    z::u16(body_, 0);   // flags
    z::u16(body_, 0);   // stored
    z::u16(body_, 0);   // time
    z::u16(body_, z::kDosDate);
    z::u32(body_, crc);
    z::u32(body_, static_cast<std::uint32_t>(data.size()));
    z::u32(body_, static_cast<std::uint32_t>(data.size()));
    z::u16(body_, static_cast<std::uint32_t>(name.size()));
    z::u16(body_, 0);
    body_.insert(body_.end(), name.begin(), name.end());
    body_.insert(body_.end(), data.begin(), data.end());

    z::u32(central_, 0x02014b50);
    z::u16(central_, 20);  // version made by
    z::u16(central_, 20);
    z::u16(central_, 0);
    z::u16(central_, 0);
    z::u16(central_, 0);
    z::u16(central_, z::kDosDate);
    z::u32(central_, crc);
    z::u32(central_, static_cast<std::uint32_t>(data.size()));
    z::u32(central_, static_cast<std::uint32_t>(data.size()));
    z::u16(central_, static_cast<std::uint32_t>(name.size()));
    z::u16(central_, 0);  // extra
    z::u16(central_, 0);  // comment
    z::u16(central_, 0);  // disk
    z::u16(central_, 0);  // internal attributes
    z::u32(central_, 0);  // external attributes
    z::u32(central_, offset);
    central_.insert(central_.end(), name.begin(), name.end());
    ++count_;
  }

  void add(const std::string& name, std::string_view text) {
    add(name, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }

  std::vector<std::uint8_t> finish() const {
    namespace z = zip_detail;
    std::vector<std::uint8_t> out = body_;
    out.insert(out.end(), central_.begin(), central_.end());
    z::u32(out, 0x06054b50);
    z::u16(out, 0);
    z::u16(out, 0);
    z::u16(out, count_);
    z::u16(out, count_);
    z::u32(out, static_cast<std::uint32_t>(central_.size()));
    z::u32(out, static_cast<std::uint32_t>(body_.size()));
    z::u16(out, 0);
    return out;
  }

  std::size_t size() const { return count_; }

 private:
  std::vector<std::uint8_t> body_;
  std::vector<std::uint8_t> central_;
  std::uint32_t count_ = 0;
};

/// Reads the entries of a stored zip through its central directory and
/// verifies each CRC.
inline std::vector<std::pair<std::string, std::vector<std::uint8_t>>> read_stored_zip(
    std::span<const std::uint8_t> zip) {
  namespace z = zip_detail;
  if (zip.size() < 22) fail(Errc::kInvalidArgument, "zip is too short");
  const std::size_t eocd = zip.size() - 22;
  if (z::get32(zip, eocd) != 0x06054b50) fail(Errc::kInvalidArgument, "zip end record not found");
  const std::uint32_t entries = z::get16(zip, eocd + 10);
  std::size_t at = z::get32(zip, eocd + 16);
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> out;
  for (std::uint32_t e = 0; e < entries; ++e) {
    if (z::get32(zip, at) != 0x02014b50) fail(Errc::kInvalidArgument, "bad central directory entry");
    if (z::get16(zip, at + 10) != 0) fail(Errc::kInvalidArgument, "compressed zip entries are not supported");
    const std::uint32_t crc = z::get32(zip, at + 16);
    const std::uint32_t size = z::get32(zip, at + 20);
    const std::uint32_t name_len = z::get16(zip, at + 28);
    const std::uint32_t skip = z::get16(zip, at + 30) + z::get16(zip, at + 32);
    const std::uint32_t local = z::get32(zip, at + 42);
    if (at + 46 + name_len > zip.size()) fail(Errc::kInvalidArgument, "zip name overruns the archive");
    std::string name(reinterpret_cast<const char*>(zip.data() + at + 46), name_len);
    const std::size_t data = local + 30 + z::get16(zip, local + 26) + z::get16(zip, local + 28);
    if (data + size > zip.size()) fail(Errc::kInvalidArgument, "zip entry overruns the archive");
    std::vector<std::uint8_t> bytes(zip.begin() + static_cast<std::ptrdiff_t>(data),
                                    zip.begin() + static_cast<std::ptrdiff_t>(data + size));
    if (static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size()))) != crc) {
      fail(Errc::kInvalidArgument, "zip entry " + name + " fails its CRC");
    }
    out.emplace_back(std::move(name), std::move(bytes));
    at += 46 + name_len + skip;
  }
  return out;
}

}  // namespace s2m
