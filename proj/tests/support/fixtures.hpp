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

// Random inputs and fixture builders shared by the test binaries.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "s2m/audio_io.hpp"
#include "s2m/model/checkpoint.hpp"
#include "s2m/pipeline.hpp"
#include "s2m/speech_features.hpp"
#include "s2m/symbolic.hpp"
#include "support/oracles.hpp"

namespace s2m::fixture {

using Rng = std::mt19937_64;

/// Loudness-like track: a smoothed random walk with bursts, floor stretches
/// and (sometimes) 1 dB quantization so plateaus and ties occur.
inline FrameTrack random_loudness(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> step(0.0, 3.0);
  const bool quantize = u(rng) < 0.5;
  FrameTrack t;
  t.kind = TrackKind::kLoudness;
  double level = -40.0 + 30.0 * u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = u(rng);
    if (r < 0.03) level = kLoudnessFloorDb;
    else if (r < 0.08) level = -5.0 - 15.0 * u(rng);
    else level = std::clamp(level + step(rng), kLoudnessFloorDb, 0.0);
    t.values.push_back(quantize ? std::round(level) : level);
  }
  return t;
}

inline FrameTrack random_f0(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FrameTrack t;
  t.kind = TrackKind::kF0;
  const double unvoiced = u(rng) * 0.6;
  for (std::size_t i = 0; i < n; ++i) t.values.push_back(u(rng) < unvoiced ? 0.0 : 60.0 + 400.0 * u(rng));
  return t;
}

/// Non-overlapping notes on the 20 ms grid; touching neighbours always
/// differ in key so the frame encoding keeps them apart.
inline NoteList grid_notes(Rng& rng, std::size_t max_notes = 20) {
  std::uniform_int_distribution<std::size_t> count(0, max_notes);
  std::uniform_int_distribution<int> key(kLowestKey, kHighestKey);
  std::uniform_int_distribution<int> len(1, 30);
  std::uniform_int_distribution<int> rest(0, 2);
  NoteList notes;
  int frame = rest(rng) * 3;
  const std::size_t n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    int k = key(rng);
    const bool touching = !notes.empty() && std::llround(notes.back().offset_s() / kHopSeconds) == frame;
    while (touching && k == notes.back().key) k = key(rng);
    const int d = len(rng);
    if (frame + d > static_cast<int>(kMaxContent)) break;
    notes.push_back({k, frame * kHopSeconds, d * kHopSeconds, kDefaultVelocity});
    frame += d + rest(rng) * 2;
  }
  return notes;
}

inline PolyTrack random_poly(Rng& rng, std::size_t max_notes = 30) {
  std::uniform_int_distribution<std::size_t> count(1, max_notes);
  std::uniform_real_distribution<double> onset(0.0, 4.0);
  std::uniform_real_distribution<double> len(0.005, 1.0);
  std::uniform_int_distribution<int> pitch(21, 108);
  std::uniform_int_distribution<int> vel(1, 127);
  PolyTrack p;
  const std::size_t n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double on = onset(rng);
    p.push_back({pitch(rng), on, on + len(rng), vel(rng)});
  }
  return p;
}

/// Two seconds of speech-like audio: a voiced vowel with a gliding pitch in
/// three syllables, separated by quiet noise.
inline AudioClip speech_like(double seconds = 2.0, int rate = kCanonicalRate) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  AudioClip c;
  c.sample_rate = rate;
  c.samples.assign(n, 0.0);
  Rng rng(11);
  std::normal_distribution<double> noise(0.0, 0.002);
  const double syllable = seconds / 3.0;
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double within = std::fmod(t, syllable) / syllable;
    const double f0 = 140.0 + 60.0 * within + 20.0 * std::floor(t / syllable);
    phase += 2.0 * oracle::kPi * f0 / rate;
    const double env = within > 0.15 && within < 0.85 ? std::sin(oracle::kPi * (within - 0.15) / 0.7) : 0.0;
    double v = 0.0;
    for (int h = 1; h <= 12; ++h) {
      const double hz = h * f0;
      const double formant = std::exp(-std::pow((hz - 700.0) / 250.0, 2)) + 0.6 * std::exp(-std::pow((hz - 1200.0) / 300.0, 2)) +
                             0.1;
      v += formant * std::sin(h * phase) / h;
    }
    c.samples[i] = 0.5 * env * v + noise(rng);
  }
  peak_normalize(c);
  for (double& s : c.samples) s *= 0.8;
  return c;
}

inline AudioClip silence(double seconds = 1.0, int rate = kCanonicalRate) {
  return {std::vector<double>(static_cast<std::size_t>(std::llround(seconds * rate)), 0.0), rate};
}

/// Untrained but deterministic models of both variants.
inline ModelBundle seeded_bundle(std::uint64_t seed = 3) {
  ModelBundle b;
  b.gapfill = to_loaded(nn::fresh_state<float>(desk_preset(Task::kGapFill), seed));
  b.denoise = to_loaded(nn::fresh_state<float>(desk_preset(Task::kDenoise), seed + 1));
  return b;
}

}  // namespace s2m::fixture
