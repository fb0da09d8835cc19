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

// Region-of-interest selection on frame tracks. Two techniques: a loudness
// threshold, and context windows around detected syllable nuclei.

#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "s2m/error.hpp"
#include "s2m/speech_features.hpp"

namespace s2m {

enum class SparsifyTechnique { kHeuristic, kSyllable };
enum class SparsifyLevel { kLow, kMedium, kHigh };

struct SparsifyConfig {
  SparsifyTechnique technique = SparsifyTechnique::kHeuristic;
  SparsifyLevel level = SparsifyLevel::kMedium;
  int smoothing_radius_frames = 2;
};

inline constexpr std::string_view technique_name(SparsifyTechnique t) {
  return t == SparsifyTechnique::kHeuristic ? "heuristic" : "syllable";
}

inline constexpr std::string_view level_name(SparsifyLevel l) {
  switch (l) {
    case SparsifyLevel::kLow: return "low";
    case SparsifyLevel::kMedium: return "medium";
    case SparsifyLevel::kHigh: return "high";
  }
  return "?";
}

/// Loudness percentile used as the heuristic threshold.
inline constexpr double heuristic_percentile(SparsifyLevel level) {
  switch (level) {
    case SparsifyLevel::kLow: return 40.0;
    case SparsifyLevel::kMedium: return 60.0;
    case SparsifyLevel::kHigh: return 80.0;
  }
  return 60.0;
}

/// Frames kept on each side of a syllable nucleus.
inline constexpr int syllable_context(SparsifyLevel level) {
  switch (level) {
    case SparsifyLevel::kLow: return 4;
    case SparsifyLevel::kMedium: return 2;
    case SparsifyLevel::kHigh: return 0;
  }
  return 2;
}

struct SparseTrack {
  std::vector<std::optional<double>> values;
  std::vector<bool> keep_mask;
  TrackKind kind = TrackKind::kF0;

  std::size_t size() const { return values.size(); }
  std::size_t kept_count() const {
    return static_cast<std::size_t>(std::count(keep_mask.begin(), keep_mask.end(), true));
  }
};

inline SparseTrack apply_keep_mask(const FrameTrack& track, std::vector<bool> mask) {
  SparseTrack out;
  out.kind = track.kind;
  out.values.resize(track.size());
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (mask[i]) out.values[i] = track.values[i];
  }
  out.keep_mask = std::move(mask);
  return out;
}

/// Centered moving average over 2 * radius + 1 frames; edges average the
/// neighbors that exist.
inline FrameTrack smooth_loudness(const FrameTrack& loudness, int radius) {
  if (radius < 0) fail(Errc::kInvalidArgument, "smoothing radius must be >= 0");
  FrameTrack out = loudness;
  const auto n = static_cast<std::ptrdiff_t>(loudness.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - radius);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + radius);
    double sum = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) sum += loudness.values[static_cast<std::size_t>(j)];
    out.values[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

/// Linear-interpolation percentile (p in [0, 100]) of an unsorted sample.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return percentile(std::move(v), 50.0); }

namespace detail {

inline void require_aligned(const FrameTrack& a, const FrameTrack& b) {
  if (a.size() != b.size()) {
    fail(Errc::kLengthMismatch,
         "tracks of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
}

}  // namespace detail

inline SparseTrack heuristic_sparsify(const FrameTrack& track, const FrameTrack& loudness,
                                      const SparsifyConfig& cfg) {
  detail::require_aligned(track, loudness);
  const FrameTrack smoothed = smooth_loudness(loudness, cfg.smoothing_radius_frames);
  const double threshold = percentile(smoothed.values, heuristic_percentile(cfg.level));
  std::vector<bool> mask(track.size());
  for (std::size_t i = 0; i < track.size(); ++i) mask[i] = smoothed.values[i] > threshold;
  return apply_keep_mask(track, std::move(mask));
}

/// Syllable nuclei from loudness peaks:
///  1. smooth the loudness;
///  2. take every local maximum (a plateau counts once, at its middle);
///  3. drop peaks not strictly above median + 2 dB;
///  4. drop peaks whose dip since the previous surviving peak (or the track
///     start) is less than 2 dB;
///  5. drop peaks on frames with F0 below 40 Hz;
///  6. return the survivors in ascending order.
inline std::vector<std::size_t> detect_syllable_nuclei(const FrameTrack& loudness, const FrameTrack& f0,
                                                       int smoothing_radius = 2) {
  detail::require_aligned(loudness, f0);
  constexpr double kAboveMedianDb = 2.0;
  constexpr double kMinDipDb = 2.0;

  const std::vector<double> s = smooth_loudness(loudness, smoothing_radius).values;
  const std::size_t n = s.size();
  if (n == 0) return {};

  std::vector<std::size_t> peaks;
  for (std::size_t a = 0; a < n;) {
    std::size_t b = a;
    while (b + 1 < n && s[b + 1] == s[a]) ++b;
    const bool left_lower = a == 0 || s[a - 1] < s[a];
    const bool right_lower = b + 1 == n || s[b + 1] < s[a];
    if (left_lower && right_lower) peaks.push_back((a + b) / 2);
    a = b + 1;
  }

  const double threshold = median(s) + kAboveMedianDb;
  std::vector<std::size_t> nuclei;
  std::size_t dip_from = 0;
  for (std::size_t p : peaks) {
    if (!(s[p] > threshold)) continue;
    const double dip = *std::min_element(s.begin() + static_cast<std::ptrdiff_t>(dip_from),
                                         s.begin() + static_cast<std::ptrdiff_t>(p) + 1);
    if (s[p] - dip < kMinDipDb) continue;
    dip_from = p;
    if (f0.values[p] < kUnvoicedBelowHz) continue;
    nuclei.push_back(p);
  }
  return nuclei;
}

/// Keeps each nucleus plus context(level) frames on either side.
inline SparseTrack sparsify_around(const FrameTrack& track, const std::vector<std::size_t>& nuclei,
                                   SparsifyLevel level) {
  const auto n = static_cast<std::ptrdiff_t>(track.size());
  const int ctx = syllable_context(level);
  std::vector<bool> mask(track.size(), false);
  for (std::size_t p : nuclei) {
    const auto c = static_cast<std::ptrdiff_t>(p);
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, c - ctx); i <= std::min(n - 1, c + ctx); ++i) {
      mask[static_cast<std::size_t>(i)] = true;
    }
  }
  return apply_keep_mask(track, std::move(mask));
}

inline SparseTrack syllable_sparsify(const FrameTrack& track, const FrameTrack& loudness,
                                     const FrameTrack& f0, const SparsifyConfig& cfg) {
  detail::require_aligned(track, loudness);
  detail::require_aligned(track, f0);
  return sparsify_around(track, detect_syllable_nuclei(loudness, f0, cfg.smoothing_radius_frames),
                         cfg.level);
}

inline SparseTrack sparsify(const FrameTrack& track, const FrameTrack& loudness, const FrameTrack& f0,
                            const SparsifyConfig& cfg) {
  return cfg.technique == SparsifyTechnique::kHeuristic ? heuristic_sparsify(track, loudness, cfg)
                                                        : syllable_sparsify(track, loudness, f0, cfg);
}

}  // namespace s2m
