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

// Frame-level speech contours: F0, F1-F3 and A-weighted loudness.
//
// All extractors share one framing: a 50 ms analysis window advanced by 20 ms,
// so a clip of n samples yields (n - window) / hop + 1 frames. Hz-valued
// tracks use 0.0 for unvoiced or absent values.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "s2m/audio_io.hpp"
#include "s2m/error.hpp"

namespace s2m {

enum class TrackKind { kF0, kF1, kF2, kF3, kLoudness };

inline constexpr std::string_view track_kind_name(TrackKind kind) {
  switch (kind) {
    case TrackKind::kF0: return "f0";
    case TrackKind::kF1: return "f1";
    case TrackKind::kF2: return "f2";
    case TrackKind::kF3: return "f3";
    case TrackKind::kLoudness: return "loudness";
  }
  return "?";
}

inline constexpr double kHopSeconds = 0.020;
inline constexpr double kWindowSeconds = 0.050;
inline constexpr double kLoudnessFloorDb = -80.0;
inline constexpr double kUnvoicedBelowHz = 40.0;

struct FrameTrack {
  std::vector<double> values;
  TrackKind kind = TrackKind::kF0;
  double hop_s = kHopSeconds;
  double window_s = kWindowSeconds;

  std::size_t size() const { return values.size(); }
};

struct FeatureBundle {
  FrameTrack f0, f1, f2, f3, loudness;
  double source_duration_s = 0.0;

  const FrameTrack& contour(TrackKind kind) const {
    switch (kind) {
      case TrackKind::kF0: return f0;
      case TrackKind::kF1: return f1;
      case TrackKind::kF2: return f2;
      case TrackKind::kF3: return f3;
      case TrackKind::kLoudness: return loudness;
    }
    return f0;
  }
};

struct Framing {
  std::size_t window = 0;
  std::size_t hop = 0;
  std::size_t count = 0;
};

inline Framing frame_layout(const AudioClip& clip) {
  Framing f;
  f.window = static_cast<std::size_t>(std::lround(kWindowSeconds * clip.sample_rate));
  f.hop = static_cast<std::size_t>(std::lround(kHopSeconds * clip.sample_rate));
  if (clip.samples.size() < f.window || f.window == 0) {
    fail(Errc::kClipTooShort, "clip of " + std::to_string(clip.samples.size()) +
                                  " samples is shorter than one analysis window");
  }
  f.count = (clip.samples.size() - f.window) / f.hop + 1;
  return f;
}

inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

// ---------------------------------------------------------------------------
// F0

struct PitchOptions {
  double min_hz = 60.0;
  double max_hz = 500.0;
  double threshold = 0.15;
};

namespace detail {

// Cumulative-mean-normalized difference function over lags [0, max_lag].
inline std::vector<double> normalized_difference(const double* x, std::size_t integration,
                                                 std::size_t max_lag) {
  std::vector<double> d(max_lag + 1, 0.0);
  for (std::size_t tau = 1; tau <= max_lag; ++tau) {
    double acc = 0.0;
    for (std::size_t j = 0; j < integration; ++j) {
      const double diff = x[j] - x[j + tau];
      acc += diff * diff;
    }
    d[tau] = acc;
  }
  std::vector<double> nd(max_lag + 1, 1.0);
  double running = 0.0;
  for (std::size_t tau = 1; tau <= max_lag; ++tau) {
    running += d[tau];
    nd[tau] = running > 0.0 ? d[tau] * static_cast<double>(tau) / running : 1.0;
  }
  return nd;
}

inline double parabolic_offset(double left, double center, double right) {
  const double denom = left - 2.0 * center + right;
  if (std::abs(denom) < 1e-15) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

}  // namespace detail

/// Period detection on the cumulative-mean-normalized difference function.
/// A frame is voiced when the normalized difference dips below the threshold
/// somewhere in the lag range; the dip is refined by parabolic interpolation.
inline FrameTrack extract_f0(const AudioClip& clip, const PitchOptions& opt = {}) {
  const Framing fr = frame_layout(clip);
  const double sr = clip.sample_rate;
  const auto min_lag = static_cast<std::size_t>(std::floor(sr / opt.max_hz));
  const auto max_lag = static_cast<std::size_t>(std::ceil(sr / opt.min_hz));
  if (max_lag + 2 >= fr.window) fail(Errc::kInvalidArgument, "F0 search range too low for window");
  const std::size_t integration = fr.window - max_lag - 1;

  FrameTrack track;
  track.kind = TrackKind::kF0;
  track.values.assign(fr.count, 0.0);
  for (std::size_t f = 0; f < fr.count; ++f) {
    const double* x = clip.samples.data() + f * fr.hop;
    const std::vector<double> nd = detail::normalized_difference(x, integration, max_lag);

    std::size_t best = 0;
    for (std::size_t tau = std::max<std::size_t>(min_lag, 2); tau < max_lag; ++tau) {
      if (nd[tau] < opt.threshold) {
        while (tau + 1 < max_lag && nd[tau + 1] < nd[tau]) ++tau;
        best = tau;
        break;
      }
    }
    if (best == 0) continue;
    const double lag = static_cast<double>(best) +
                       detail::parabolic_offset(nd[best - 1], nd[best], nd[best + 1]);
    const double hz = sr / lag;
    if (hz >= kUnvoicedBelowHz && hz <= 8000.0) track.values[f] = hz;
  }
  return track;
}

// ---------------------------------------------------------------------------
// Formants

struct FormantOptions {
  double pre_emphasis = 0.97;
  double max_bandwidth_hz = 400.0;
  double min_hz = 90.0;
  double max_hz = 8000.0;
  int order = 0;  // 0 selects 2 + sample_rate / 1000
};

/// Levinson-Durbin recursion. Returns a[0..order] with a[0] = 1 for the
/// prediction-error filter A(z) = 1 + a1 z^-1 + ... + ap z^-p.
inline std::vector<double> levinson_durbin(const std::vector<double>& r, int order) {
  std::vector<double> a(order + 1, 0.0);
  a[0] = 1.0;
  double err = r[0];
  if (err <= 0.0) return a;
  std::vector<double> prev(order + 1);
  for (int i = 1; i <= order; ++i) {
    double acc = r[i];
    for (int j = 1; j < i; ++j) acc += a[j] * r[i - j];
    const double k = -acc / err;
    prev = a;
    for (int j = 1; j < i; ++j) a[j] = prev[j] + k * prev[i - j];
    a[i] = k;
    err *= (1.0 - k * k);
    if (err <= 0.0) break;
  }
  return a;
}

/// Formant candidates (frequency ascending) of one prediction polynomial.
inline std::vector<double> formants_from_lpc(const std::vector<double>& a, double sample_rate,
                                             const FormantOptions& opt = {}) {
  const int p = static_cast<int>(a.size()) - 1;
  std::vector<double> out;
  if (p < 1) return out;
  // Companion matrix of z^p + a1 z^(p-1) + ... + ap.
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  for (int j = 0; j < p; ++j) companion(0, j) = -a[j + 1];
  for (int i = 1; i < p; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  if (solver.info() != Eigen::Success) return out;
  const auto roots = solver.eigenvalues();
  for (int i = 0; i < roots.size(); ++i) {
    const std::complex<double> z = roots[i];
    if (z.imag() <= 0.0) continue;
    const double radius = std::abs(z);
    if (radius <= 0.0 || radius >= 1.0) continue;
    const double hz = std::atan2(z.imag(), z.real()) * sample_rate / (2.0 * std::numbers::pi);
    const double bandwidth = -(sample_rate / std::numbers::pi) * std::log(radius);
    if (bandwidth < opt.max_bandwidth_hz && hz >= opt.min_hz && hz <= opt.max_hz) out.push_back(hz);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct FormantTracks {
  FrameTrack f1, f2, f3;
};

/// Per-frame LPC root solving. Frames that extract_f0 judges unvoiced are
/// zeroed in all three tracks.
inline FormantTracks extract_formants(const AudioClip& clip, const FrameTrack& f0,
                                      const FormantOptions& opt = {}) {
  const Framing fr = frame_layout(clip);
  if (f0.size() != fr.count) fail(Errc::kLengthMismatch, "F0 track does not match clip framing");
  const int order = opt.order > 0 ? opt.order : 2 + clip.sample_rate / 1000;

  std::vector<double> emphasized(clip.samples.size());
  for (std::size_t i = 0; i < emphasized.size(); ++i) {
    emphasized[i] = clip.samples[i] - (i > 0 ? opt.pre_emphasis * clip.samples[i - 1] : 0.0);
  }
  const std::vector<double> window = hann_window(fr.window);

  FormantTracks out;
  out.f1.kind = TrackKind::kF1;
  out.f2.kind = TrackKind::kF2;
  out.f3.kind = TrackKind::kF3;
  for (FrameTrack* t : {&out.f1, &out.f2, &out.f3}) t->values.assign(fr.count, 0.0);

  std::vector<double> frame(fr.window);
  std::vector<double> r(order + 1);
  for (std::size_t f = 0; f < fr.count; ++f) {
    if (f0.values[f] < kUnvoicedBelowHz) continue;
    for (std::size_t i = 0; i < fr.window; ++i) frame[i] = emphasized[f * fr.hop + i] * window[i];
    for (int lag = 0; lag <= order; ++lag) {
      double acc = 0.0;
      for (std::size_t i = static_cast<std::size_t>(lag); i < fr.window; ++i) acc += frame[i] * frame[i - lag];
      r[lag] = acc;
    }
    if (r[0] <= 0.0) continue;
    const std::vector<double> hz = formants_from_lpc(levinson_durbin(r, order), clip.sample_rate, opt);
    if (hz.size() > 0) out.f1.values[f] = hz[0];
    if (hz.size() > 1) out.f2.values[f] = hz[1];
    if (hz.size() > 2) out.f3.values[f] = hz[2];
  }
  return out;
}

inline FormantTracks extract_formants(const AudioClip& clip, const FormantOptions& opt = {}) {
  return extract_formants(clip, extract_f0(clip), opt);
}

// ---------------------------------------------------------------------------
// Loudness

/// IEC 61672 A-weighting gain in dB.
inline double a_weighting_db(double hz) {
  if (hz <= 0.0) return -std::numeric_limits<double>::infinity();
  const double f2 = hz * hz;
  const double num = 12194.0 * 12194.0 * f2 * f2;
  const double den = (f2 + 20.6 * 20.6) * std::sqrt((f2 + 107.7 * 107.7) * (f2 + 737.9 * 737.9)) *
                     (f2 + 12194.0 * 12194.0);
  return 20.0 * std::log10(num / den) + 2.0;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Mean A-weighted power of each Hann-windowed frame, in dB with a -80 dB floor.
/// Power is normalized by the window energy, so a full-scale 1 kHz sine sits
/// near -3 dB.
inline FrameTrack extract_loudness(const AudioClip& clip) {
  const Framing fr = frame_layout(clip);
  const std::size_t nfft = next_pow2(fr.window);
  const std::size_t bins = nfft / 2 + 1;
  const std::vector<double> window = hann_window(fr.window);
  double window_energy = 0.0;
  for (double w : window) window_energy += w * w;

  std::vector<double> weight(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double hz = static_cast<double>(k) * clip.sample_rate / static_cast<double>(nfft);
    weight[k] = k == 0 ? 0.0 : std::pow(10.0, a_weighting_db(hz) / 10.0);
  }

  Eigen::FFT<double> fft;
  std::vector<double> frame(nfft, 0.0);
  std::vector<std::complex<double>> spectrum;
  FrameTrack track;
  track.kind = TrackKind::kLoudness;
  track.values.assign(fr.count, kLoudnessFloorDb);
  for (std::size_t f = 0; f < fr.count; ++f) {
    for (std::size_t i = 0; i < fr.window; ++i) frame[i] = clip.samples[f * fr.hop + i] * window[i];
    fft.fwd(spectrum, frame);
    double acc = 0.0;
    for (std::size_t k = 0; k < bins; ++k) acc += std::norm(spectrum[k]) * weight[k];
    const double power = acc / static_cast<double>(bins) / window_energy;
    if (power > 0.0) track.values[f] = std::max(kLoudnessFloorDb, 10.0 * std::log10(power));
  }
  return track;
}

inline FeatureBundle extract_features(const AudioClip& clip) {
  FeatureBundle bundle;
  bundle.source_duration_s = clip.duration_s();
  bundle.f0 = extract_f0(clip);
  FormantTracks formants = extract_formants(clip, bundle.f0);
  bundle.f1 = std::move(formants.f1);
  bundle.f2 = std::move(formants.f2);
  bundle.f3 = std::move(formants.f3);
  bundle.loudness = extract_loudness(clip);
  return bundle;
}

}  // namespace s2m
