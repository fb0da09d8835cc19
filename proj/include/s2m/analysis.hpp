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

// Melodic interval statistics over token sequences.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>

#include "json.hpp"

#include "s2m/error.hpp"
#include "s2m/symbolic.hpp"

namespace s2m {

inline constexpr int kIntervalBuckets = 25;  // 0..23 exact, 24 means >= 24
inline constexpr int kLargeInterval = 5;

struct IntervalHistogram {
  std::array<std::uint64_t, kIntervalBuckets> counts{};
  std::uint64_t total = 0;

  double frequency(int bucket) const {
    return total == 0 ? 0.0 : static_cast<double>(counts[static_cast<std::size_t>(bucket)]) / static_cast<double>(total);
  }

  void add(int semitones) {
    const int b = std::min(std::abs(semitones), kIntervalBuckets - 1);
    ++counts[static_cast<std::size_t>(b)];
    ++total;
  }
};

/// Unsigned intervals between consecutive notes of each sequence. Rests do
/// not break adjacency; intervals never span two sequences.
inline IntervalHistogram interval_histogram(std::span<const TokenSeq> seqs) {
  IntervalHistogram h;
  for (const TokenSeq& seq : seqs) {
    const NoteList notes = tokens_to_notes(seq);
    for (std::size_t i = 1; i < notes.size(); ++i) h.add(notes[i].key - notes[i - 1].key);
  }
  return h;
}

struct IntervalReport {
  double total_variation = 0.0;
  double chromatic_fraction_a = 0.0;
  double chromatic_fraction_b = 0.0;
  double large_fraction_a = 0.0;
  double large_fraction_b = 0.0;
};

/// Share of 1-semitone steps among intervals that change pitch.
inline double chromatic_fraction(const IntervalHistogram& h) {
  const std::uint64_t moving = h.total - h.counts[0];
  return moving == 0 ? 0.0 : static_cast<double>(h.counts[1]) / static_cast<double>(moving);
}

/// Share of intervals of 5 semitones or more.
inline double large_interval_fraction(const IntervalHistogram& h) {
  if (h.total == 0) return 0.0;
  std::uint64_t large = 0;
  for (int b = kLargeInterval; b < kIntervalBuckets; ++b) large += h.counts[static_cast<std::size_t>(b)];
  return static_cast<double>(large) / static_cast<double>(h.total);
}

inline IntervalReport compare(const IntervalHistogram& a, const IntervalHistogram& b) {
  if (a.total == 0 || b.total == 0) fail(Errc::kEmptyHistogram, "cannot compare an empty interval histogram");
  IntervalReport r;
  for (int i = 0; i < kIntervalBuckets; ++i) r.total_variation += std::abs(a.frequency(i) - b.frequency(i));
  r.total_variation *= 0.5;
  r.chromatic_fraction_a = chromatic_fraction(a);
  r.chromatic_fraction_b = chromatic_fraction(b);
  r.large_fraction_a = large_interval_fraction(a);
  r.large_fraction_b = large_interval_fraction(b);
  return r;
}

inline nlohmann::json to_json(const IntervalReport& r) {
  return {{"total_variation", r.total_variation},
          {"chromatic_fraction", {r.chromatic_fraction_a, r.chromatic_fraction_b}},
          {"large_interval_fraction", {r.large_fraction_a, r.large_fraction_b}}};
}

/// interval,count,frequency rows; the last bucket is labelled ">=24".
inline std::string histogram_csv(const IntervalHistogram& h) {
  std::string out = "interval,count,frequency\n";
  for (int i = 0; i < kIntervalBuckets; ++i) {
    out += (i == kIntervalBuckets - 1 ? std::string(">=24") : std::to_string(i)) + "," +
           std::to_string(h.counts[static_cast<std::size_t>(i)]) + "," + std::to_string(h.frequency(i)) + "\n";
  }
  return out;
}

}  // namespace s2m
