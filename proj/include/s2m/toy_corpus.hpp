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

// Synthetic melody corpora for desk-scale training and checks: diatonic
// (C major) random walks, chromatic random walks and constant sequences.

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "s2m/error.hpp"
#include "s2m/symbolic.hpp"
#include "s2m/task_gen.hpp"

namespace s2m {

/// True for keys whose pitch class is in C major.
inline bool in_c_major(int key) {
  static constexpr std::array<bool, 12> kScale = {true, false, true, false, true, true,
                                                  false, true, false, true, false, true};
  return is_key(key) && kScale[static_cast<std::size_t>(key_to_midi(key) % 12)];
}

struct MelodyShape {
  int low_key = 28;   // C3
  int high_key = 52;  // C5
  double rest_probability = 0.1;
  std::array<int, 5> durations = {4, 6, 8, 10, 12};
};

namespace toy_detail {

template <typename Step>
std::vector<int> walk(std::size_t frames, const std::vector<int>& pitches, Rng& rng, const MelodyShape& shape,
                      Step step) {
  std::vector<int> out;
  out.reserve(frames);
  std::uniform_int_distribution<std::size_t> start(0, pitches.size() - 1);
  std::uniform_int_distribution<std::size_t> dur(0, shape.durations.size() - 1);
  std::bernoulli_distribution rest(shape.rest_probability);
  auto idx = static_cast<long>(start(rng));
  while (out.size() < frames) {
    const int len = shape.durations[dur(rng)];
    const int token = rest(rng) ? kSilence : pitches[static_cast<std::size_t>(idx)];
    for (int i = 0; i < len && out.size() < frames; ++i) out.push_back(token);
    idx = std::clamp(idx + step(rng), 0L, static_cast<long>(pitches.size()) - 1);
  }
  return out;
}

}  // namespace toy_detail

/// Random walk over C-major keys: mostly steps of one or two scale degrees,
/// with occasional leaps of a third to a fifth.
inline std::vector<int> diatonic_melody(std::size_t frames, Rng& rng, const MelodyShape& shape = {}) {
  std::vector<int> scale;
  for (int k = shape.low_key; k <= shape.high_key; ++k) {
    if (in_c_major(k)) scale.push_back(k);
  }
  if (scale.empty()) fail(Errc::kInvalidArgument, "key range holds no C-major key");
  std::discrete_distribution<int> pick({3, 6, 6, 3, 2, 2, 1, 1});
  static constexpr std::array<long, 8> kSteps = {-2, -1, 1, 2, -3, 3, -4, 4};
  return toy_detail::walk(frames, scale, rng, shape, [&](Rng& r) { return kSteps[static_cast<std::size_t>(pick(r))]; });
}

/// Random walk in semitones, dominated by half steps.
inline std::vector<int> chromatic_melody(std::size_t frames, Rng& rng, const MelodyShape& shape = {}) {
  std::vector<int> keys;
  for (int k = shape.low_key; k <= shape.high_key; ++k) keys.push_back(k);
  std::discrete_distribution<int> pick({6, 6, 1, 1});
  static constexpr std::array<long, 4> kSteps = {-1, 1, -2, 2};
  return toy_detail::walk(frames, keys, rng, shape, [&](Rng& r) { return kSteps[static_cast<std::size_t>(pick(r))]; });
}

inline std::vector<TokenSeq> diatonic_corpus(std::size_t count, std::size_t frames, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenSeq> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(wrap(diatonic_melody(frames, rng)));
  return out;
}

inline std::vector<TokenSeq> chromatic_corpus(std::size_t count, std::size_t frames, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenSeq> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(wrap(chromatic_melody(frames, rng)));
  return out;
}

inline std::vector<TokenSeq> constant_corpus(std::size_t count, std::size_t frames, int key) {
  return std::vector<TokenSeq>(count, wrap(std::vector<int>(frames, key)));
}

/// Share of sounding frames whose key lies outside C major.
inline double out_of_scale_fraction(const TokenSeq& seq) {
  std::size_t keys = 0;
  std::size_t outside = 0;
  for (int t : seq.content()) {
    if (!is_key(t)) continue;
    ++keys;
    if (!in_c_major(t)) ++outside;
  }
  return keys == 0 ? 0.0 : static_cast<double>(outside) / static_cast<double>(keys);
}

}  // namespace s2m
