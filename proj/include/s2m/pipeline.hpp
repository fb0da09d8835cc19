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

// Speech clip to MIDI: features, contour choice, optional sparsification,
// model inference, velocity mapping.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "s2m/audio_io.hpp"
#include "s2m/error.hpp"
#include "s2m/midi.hpp"
#include "s2m/model/checkpoint.hpp"
#include "s2m/model/transformer.hpp"
#include "s2m/sparsifier.hpp"
#include "s2m/speech_features.hpp"
#include "s2m/symbolic.hpp"
#include "s2m/task_gen.hpp"

namespace s2m {

inline constexpr double kMinClipSeconds = 0.5;
inline constexpr int kVelocityLow = 20;
inline constexpr int kVelocityHigh = 127;

/// Frames at or below the loudness floor get 0. Other frames map their
/// smoothed loudness affinely from [p5, p95] onto [20, 127], clamped and
/// rounded half up. A flat track maps to 127.
inline std::vector<int> map_velocity(const FrameTrack& loudness, int smoothing_radius = 2) {
  const FrameTrack s = smooth_loudness(loudness, smoothing_radius);
  const double lo = percentile(s.values, 5.0);
  const double hi = percentile(s.values, 95.0);
  std::vector<int> out(loudness.size(), 0);
  for (std::size_t i = 0; i < loudness.size(); ++i) {
    if (loudness.values[i] <= kLoudnessFloorDb) continue;
    double v = kVelocityHigh;
    if (hi > lo) v = kVelocityLow + (s.values[i] - lo) / (hi - lo) * (kVelocityHigh - kVelocityLow);
    v = std::clamp(v, double(kVelocityLow), double(kVelocityHigh));
    out[i] = static_cast<int>(std::floor(v + 0.5));
  }
  return out;
}

/// Parameters ready for inference.
struct LoadedModel {
  ModelSpec spec;
  nn::ModelParams<float> params;
  std::uint32_t digest = 0;  // CRC-32 of the checkpoint file
};

inline LoadedModel load_model(std::span<const std::uint8_t> checkpoint_bytes) {
  nn::TrainState<float> s = nn::parse_checkpoint<float>(checkpoint_bytes);
  return {s.spec, std::move(s.params), nn::checksum(checkpoint_bytes)};
}

template <typename T>
LoadedModel to_loaded(const nn::TrainState<T>& s) {
  const std::vector<std::uint8_t> bytes = nn::serialize_checkpoint(s);
  return load_model(bytes);
}

struct ModelBundle {
  std::optional<LoadedModel> gapfill;
  std::optional<LoadedModel> denoise;

  const LoadedModel* get(Task t) const {
    const auto& m = t == Task::kGapFill ? gapfill : denoise;
    return m ? &*m : nullptr;
  }
};

namespace pipeline_detail {

inline int sample_index(const Eigen::Matrix<float, 1, Eigen::Dynamic>& logits, double temperature, Rng* rng) {
  if (!rng || !(temperature > 0.0)) {
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    return static_cast<int>(best);
  }
  const Eigen::ArrayXd z = logits.transpose().cast<double>().array() / temperature;
  const Eigen::ArrayXd p = (z - z.maxCoeff()).exp();
  std::uniform_real_distribution<double> u(0.0, p.sum());
  double r = u(*rng);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    r -= p(i);
    if (r < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(p.size() - 1);
}

inline void require_variant(const LoadedModel& m, Task t) {
  if (m.spec.variant != t) {
    fail(Errc::kModelVariantMismatch, "checkpoint is a " + std::string(task_name(m.spec.variant)) + " model, not " +
                                          std::string(task_name(t)));
  }
}

}  // namespace pipeline_detail

/// Fills every GAP by autoregressive unrolling. Each step samples a pitch at
/// the given temperature (0 means argmax) and reads the run length from the
/// count head; runs longer than what is left of the current gap region are
/// cut, and regions are filled left to right.
inline TokenSeq gapfill_infer(const TokenSeq& seq, const LoadedModel& model, Rng& rng, double temperature = 1.0) {
  pipeline_detail::require_variant(model, Task::kGapFill);
  if (!seq.has_gap()) fail(Errc::kNoGaps, "sequence has no GAP tokens to fill");
  const TokenSeq input = seq.wrapped() ? seq : wrap(seq.tokens);
  TokenSeq out = input;
  std::vector<std::size_t> gaps;
  for (std::size_t i = 1; i + 1 < out.tokens.size(); ++i) {
    if (out.tokens[i] == kGap) gaps.push_back(i);
  }
  nn::IncrementalDecoder<float> dec(model.spec, model.params, std::span<const int>(input.tokens));
  int prev = kStart;
  std::size_t g = 0;
  while (g < gaps.size()) {
    const auto step = dec.step(prev);
    const int pitch = pipeline_detail::sample_index(step.pitch_logits, temperature, &rng);
    const int count = unscale_count(static_cast<double>(step.count));
    for (int c = 0; c < count && g < gaps.size(); ++c) {
      out.tokens[gaps[g]] = pitch;
      const bool region_ends = g + 1 == gaps.size() || gaps[g + 1] != gaps[g] + 1;
      ++g;
      if (region_ends) break;
    }
    prev = pitch;
  }
  out.hop_s = seq.hop_s;
  if (!seq.wrapped()) return TokenSeq{std::vector<int>(out.tokens.begin() + 1, out.tokens.end() - 1), seq.hop_s};
  return out;
}

/// Same-length denoising: one decoder step per content frame, argmax by
/// default or sampled when rng is given.
inline TokenSeq denoise_infer(const TokenSeq& seq, const LoadedModel& model, Rng* rng = nullptr,
                              double temperature = 1.0) {
  pipeline_detail::require_variant(model, Task::kDenoise);
  if (seq.has_gap()) fail(Errc::kGapTokenPresent, "denoising input must not contain GAP tokens");
  const TokenSeq input = seq.wrapped() ? seq : wrap(seq.tokens);
  const std::size_t n = input.content_size();
  std::vector<int> content;
  content.reserve(n);
  if (n > 0) {
    nn::IncrementalDecoder<float> dec(model.spec, model.params, std::span<const int>(input.tokens));
    int prev = kStart;
    for (std::size_t i = 0; i < n; ++i) {
      const auto step = dec.step(prev);
      prev = pipeline_detail::sample_index(step.pitch_logits, temperature, rng);
      content.push_back(prev);
    }
  }
  TokenSeq out = seq.wrapped() ? wrap(content) : TokenSeq{content, seq.hop_s};
  out.hop_s = seq.hop_s;
  return out;
}

struct ConvertConfig {
  Task model = Task::kGapFill;
  TrackKind contour = TrackKind::kF0;
  SparsifyConfig sparsify;
  std::uint64_t seed = 0;
  double temperature = 1.0;
};

struct ConvertResult {
  std::vector<std::uint8_t> raw_midi;
  std::vector<std::uint8_t> sparse_midi;  // gap-fill only
  std::vector<std::uint8_t> generated_midi;
  TokenSeq raw_tokens;
  TokenSeq sparse_tokens;  // gap-fill only, with GAP tokens
  TokenSeq generated_tokens;
  std::vector<int> velocities;
  std::map<std::string, double> timings_ms;
};

inline TokenSeq gaps_to_silence(TokenSeq seq) {
  std::replace(seq.tokens.begin(), seq.tokens.end(), kGap, kSilence);
  return seq;
}

namespace pipeline_detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace pipeline_detail

/// Features of a clip at the canonical rate; shared by every configuration
/// converted from the same clip.
inline FeatureBundle analyze_clip(const AudioClip& input) {
  if (input.duration_s() < kMinClipSeconds) {
    fail(Errc::kClipTooShort, "clip of " + std::to_string(input.duration_s()) + " s is shorter than 0.5 s");
  }
  const AudioClip clip = input.sample_rate == kCanonicalRate ? input : resample(input, kCanonicalRate);
  return extract_features(clip);
}

/// Conversion from precomputed features. A contour with no sounding frame has
/// nothing to transform and yields silence without invoking the model.
inline ConvertResult convert_features(const FeatureBundle& features, const ConvertConfig& cfg,
                                      const ModelBundle& models) {
  using pipeline_detail::Clock;
  using pipeline_detail::ms_since;
  if (cfg.contour == TrackKind::kLoudness) fail(Errc::kInvalidArgument, "loudness is not a melodic contour");
  const LoadedModel* model = models.get(cfg.model);
  if (!model) fail(Errc::kMissingCheckpoint, "no " + std::string(task_name(cfg.model)) + " checkpoint loaded");

  ConvertResult r;
  const FrameTrack& track = features.contour(cfg.contour);
  r.velocities = map_velocity(features.loudness);
  r.raw_tokens = tracks_to_tokens(track);
  const auto content = r.raw_tokens.content();
  const bool silent = std::none_of(content.begin(), content.end(), [](int t) { return is_key(t); });

  Rng rng(cfg.seed);
  auto t0 = Clock::now();
  if (cfg.model == Task::kGapFill) {
    r.sparse_tokens = tracks_to_tokens(sparsify(track, features.loudness, features.f0, cfg.sparsify));
    r.timings_ms["sparsify"] = ms_since(t0);
    t0 = Clock::now();
    if (silent) {
      r.generated_tokens = r.raw_tokens;
    } else if (!r.sparse_tokens.has_gap()) {
      r.generated_tokens = r.sparse_tokens;
    } else {
      r.generated_tokens = gapfill_infer(r.sparse_tokens, *model, rng, cfg.temperature);
    }
  } else {
    r.generated_tokens = silent ? r.raw_tokens : denoise_infer(r.raw_tokens, *model);
  }
  r.timings_ms["inference"] = ms_since(t0);

  t0 = Clock::now();
  r.raw_midi = write_midi(tokens_to_notes(r.raw_tokens, r.velocities));
  if (cfg.model == Task::kGapFill) {
    r.sparse_midi = write_midi(tokens_to_notes(gaps_to_silence(r.sparse_tokens), r.velocities));
  }
  r.generated_midi = write_midi(tokens_to_notes(r.generated_tokens, r.velocities));
  r.timings_ms["midi"] = ms_since(t0);
  return r;
}

inline ConvertResult convert(const AudioClip& clip, const ConvertConfig& cfg, const ModelBundle& models) {
  if (!models.get(cfg.model)) {
    fail(Errc::kMissingCheckpoint, "no " + std::string(task_name(cfg.model)) + " checkpoint loaded");
  }
  const auto t0 = pipeline_detail::Clock::now();
  const FeatureBundle features = analyze_clip(clip);
  const double feature_ms = pipeline_detail::ms_since(t0);
  ConvertResult r = convert_features(features, cfg, models);
  r.timings_ms["features"] = feature_ms;
  return r;
}

}  // namespace s2m
