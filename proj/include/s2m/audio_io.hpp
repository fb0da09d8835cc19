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

// RIFF/WAVE decoding, band-limited resampling and peak normalization.
// Everything downstream consumes 16 kHz mono clips in [-1, 1].

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "s2m/error.hpp"

namespace s2m {

inline constexpr int kCanonicalRate = 16000;

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kCanonicalRate;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

namespace detail {

inline std::uint32_t read_u32le(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

inline std::uint16_t read_u16le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

// Normalized sinc, sin(pi x)/(pi x).
inline double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

inline double kaiser(double x, double half_width, double beta) {
  const double r = x / half_width;
  if (r <= -1.0 || r >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) / std::cyl_bessel_i(0.0, beta);
}

}  // namespace detail

/// Scales so that max |sample| = 1. Silent clips are returned unchanged.
inline void peak_normalize(AudioClip& clip) {
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak <= 0.0) return;
  for (double& s : clip.samples) s /= peak;
}

/// Windowed-sinc (Kaiser) resampling. The low-pass cutoff sits at 95% of the
/// lower Nyquist frequency. Output length is round(n * target / source).
inline AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate < 8000 || target_rate > 48000) {
    fail(Errc::kInvalidRate, "target rate " + std::to_string(target_rate) + " outside [8000, 48000]");
  }
  if (clip.sample_rate <= 0) fail(Errc::kInvalidRate, "source rate must be positive");

  AudioClip out;
  out.sample_rate = target_rate;
  if (clip.sample_rate == target_rate) {
    out.samples = clip.samples;
    return out;
  }

  constexpr double kZeroCrossings = 24.0;
  constexpr double kBeta = 8.6;
  const double src = clip.sample_rate;
  const double ratio = target_rate / src;
  const double cutoff = 0.95 * std::min(1.0, ratio);  // fraction of source Nyquist
  const double half_width = kZeroCrossings / cutoff;  // in source samples

  const auto n_in = static_cast<std::ptrdiff_t>(clip.samples.size());
  const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(n_in) * ratio));
  out.samples.resize(n_out);
  for (std::size_t n = 0; n < n_out; ++n) {
    const double x = static_cast<double>(n) / ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(x - half_width)));
    const auto hi =
        std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(x + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double t = x - static_cast<double>(k);
      acc += clip.samples[static_cast<std::size_t>(k)] * cutoff * detail::sinc(cutoff * t) *
             detail::kaiser(t, half_width, kBeta);
    }
    out.samples[n] = acc;
  }
  return out;
}

/// Decoded WAV before channel mixing and resampling.
struct WavData {
  int sample_rate = 0;
  int channels = 0;
  std::vector<double> interleaved;
};

inline WavData decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) fail(Errc::kMalformedWav, "file shorter than RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(Errc::kMalformedWav, "missing RIFF/WAVE signature");
  }

  bool have_fmt = false;
  bool have_data = false;
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  std::span<const std::uint8_t> data;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::read_u32le(chunk + 4);
    const std::size_t body = pos + 8;
    if (size > bytes.size() - body) fail(Errc::kMalformedWav, "chunk size exceeds file length");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) fail(Errc::kMalformedWav, "fmt chunk too small");
      const std::uint8_t* f = bytes.data() + body;
      format = detail::read_u16le(f);
      channels = detail::read_u16le(f + 2);
      rate = detail::read_u32le(f + 4);
      bits = detail::read_u16le(f + 14);
      if (format == 0xFFFE) {
        if (size < 40) fail(Errc::kMalformedWav, "extensible fmt chunk too small");
        format = detail::read_u16le(f + 24);  // first two bytes of the sub-format GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.subspan(body, size);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || !have_data) fail(Errc::kMalformedWav, "missing fmt or data chunk");

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32) {
    fail(Errc::kUnsupportedFormat,
         "format tag " + std::to_string(format) + " with " + std::to_string(bits) + " bits");
  }
  if (channels < 1 || channels > 2) {
    fail(Errc::kUnsupportedFormat, std::to_string(channels) + " channels");
  }
  if (rate < 8000 || rate > 48000) {
    fail(Errc::kUnsupportedFormat, "sample rate " + std::to_string(rate));
  }

  const std::size_t width = bits / 8;
  const std::size_t frames = data.size() / (width * channels);
  if (frames == 0) fail(Errc::kEmptyAudio, "no samples");

  WavData out;
  out.sample_rate = static_cast<int>(rate);
  out.channels = channels;
  out.interleaved.resize(frames * channels);
  for (std::size_t i = 0; i < out.interleaved.size(); ++i) {
    const std::uint8_t* p = data.data() + i * width;
    if (pcm16) {
      const auto v = static_cast<std::int16_t>(detail::read_u16le(p));
      out.interleaved[i] = v / 32768.0;
    } else {
      float v;
      const std::uint32_t raw = detail::read_u32le(p);
      std::memcpy(&v, &raw, sizeof v);
      out.interleaved[i] = std::clamp(static_cast<double>(v), -1.0, 1.0);
    }
  }
  return out;
}

inline double duration_s(const WavData& wav) {
  if (wav.sample_rate <= 0 || wav.channels <= 0) return 0.0;
  return static_cast<double>(wav.interleaved.size() / static_cast<std::size_t>(wav.channels)) / wav.sample_rate;
}

/// Channel mean, resampled to 16 kHz and peak-normalized.
inline AudioClip to_canonical(const WavData& wav) {
  AudioClip mono;
  mono.sample_rate = wav.sample_rate;
  const std::size_t frames = wav.interleaved.size() / wav.channels;
  mono.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double sum = 0.0;
    for (int c = 0; c < wav.channels; ++c) sum += wav.interleaved[i * wav.channels + c];
    mono.samples[i] = sum / wav.channels;
  }
  AudioClip clip = resample(mono, kCanonicalRate);
  peak_normalize(clip);
  return clip;
}

/// Mono, 16 kHz, peak-normalized.
inline AudioClip load_wav(std::span<const std::uint8_t> bytes) { return to_canonical(decode_wav(bytes)); }

/// Mono PCM16 WAV. Samples are clamped to [-1, 1] before quantization.
inline std::vector<std::uint8_t> write_wav(const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32le(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);
  detail::put_u16le(out, 1);
  detail::put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate));
  detail::put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  detail::put_u16le(out, 2);
  detail::put_u16le(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_u32le(out, 2 * n);
  for (double s : clip.samples) {
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    detail::put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

}  // namespace s2m
