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

// Independent reference implementations and signal generators used by the
// unit tests and the acceptance runner. They favour the obvious, slow
// formulation over anything shared with the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "s2m/audio_io.hpp"
#include "s2m/model/params.hpp"
#include "s2m/model/spec.hpp"
#include "s2m/speech_features.hpp"
#include "s2m/symbolic.hpp"

namespace s2m::oracle {

inline constexpr double kPi = std::numbers::pi;

// --- signals ----------------------------------------------------------------

inline AudioClip sine(double hz, double seconds, double amplitude = 0.5, int rate = kCanonicalRate) {
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    c.samples[i] = amplitude * std::sin(2.0 * kPi * hz * static_cast<double>(i) / rate);
  }
  return c;
}

/// Glottal impulse train at f0 through cascaded two-pole resonators.
inline AudioClip vowel(double f0, const std::vector<std::pair<double, double>>& resonances, double seconds,
                       int rate = kCanonicalRate) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  std::vector<double> x(n, 0.0);
  const double period = rate / f0;
  for (double t = 0.0; t < static_cast<double>(n); t += period) x[static_cast<std::size_t>(t)] = 1.0;
  for (const auto& [freq, bw] : resonances) {
    const double r = std::exp(-kPi * bw / rate);
    const double a1 = 2.0 * r * std::cos(2.0 * kPi * freq / rate);
    const double a2 = -r * r;
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = x[i] + (i >= 1 ? a1 * y[i - 1] : 0.0) + (i >= 2 ? a2 * y[i - 2] : 0.0);
    }
    x = std::move(y);
  }
  AudioClip c{std::move(x), rate};
  peak_normalize(c);
  for (double& s : c.samples) s *= 0.8;
  return c;
}

/// Tone bursts separated by near-silence.
inline AudioClip bursts(int count, double burst_s, double gap_s, double hz, double burst_amp, double gap_amp,
                        int rate = kCanonicalRate) {
  AudioClip c;
  c.sample_rate = rate;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto append = [&](double seconds, double amp, bool tone) {
    const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(c.samples.size()) / rate;
      c.samples.push_back(tone ? amp * std::sin(2.0 * kPi * hz * t) : amp * noise(rng));
    }
  };
  append(gap_s, gap_amp, false);
  for (int b = 0; b < count; ++b) {
    append(burst_s, burst_amp, true);
    append(gap_s, gap_amp, false);
  }
  return c;
}

// --- sparsifier -------------------------------------------------------------

inline std::vector<double> moving_average(const std::vector<double>& v, int radius) {
  std::vector<double> out(v.size());
  for (long i = 0; i < static_cast<long>(v.size()); ++i) {
    double sum = 0.0;
    int n = 0;
    for (long j = i - radius; j <= i + radius; ++j) {
      if (j < 0 || j >= static_cast<long>(v.size())) continue;
      sum += v[static_cast<std::size_t>(j)];
      ++n;
    }
    out[static_cast<std::size_t>(i)] = sum / n;
  }
  return out;
}

/// Percentile by linear interpolation between closest ranks, computed with
/// nth_element on a copy.
inline double percentile(std::vector<double> v, double p) {
  const double rank = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  std::nth_element(v.begin(), v.begin() + static_cast<long>(lo), v.end());
  const double a = v[lo];
  if (lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<long>(lo) + 1, v.end());
  return a + (rank - static_cast<double>(lo)) * (b - a);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// The six nucleus steps as separate filter passes over explicit lists.
inline std::vector<std::size_t> nuclei(const std::vector<double>& loudness, const std::vector<double>& f0,
                                       int radius = 2) {
  const std::vector<double> s = moving_average(loudness, radius);
  const std::size_t n = s.size();
  if (n == 0) return {};
  // step 2: every index is checked against the plateau that contains it
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t a = i;
    std::size_t b = i;
    while (a > 0 && s[a - 1] == s[i]) --a;
    while (b + 1 < n && s[b + 1] == s[i]) ++b;
    const bool left = a == 0 || s[a - 1] < s[i];
    const bool right = b + 1 == n || s[b + 1] < s[i];
    if (left && right && i == (a + b) / 2) candidates.push_back(i);
  }
  // step 3
  const double gate = median(s) + 2.0;
  std::vector<std::size_t> loud;
  for (std::size_t p : candidates) {
    if (s[p] > gate) loud.push_back(p);
  }
  // step 4
  std::vector<std::size_t> dipped;
  for (std::size_t p : loud) {
    const std::size_t from = dipped.empty() ? 0 : dipped.back();
    double lowest = s[p];
    for (std::size_t j = from; j <= p; ++j) lowest = std::min(lowest, s[j]);
    if (s[p] - lowest >= 2.0) dipped.push_back(p);
  }
  // step 5
  std::vector<std::size_t> voiced;
  for (std::size_t p : dipped) {
    if (!(f0[p] < 40.0)) voiced.push_back(p);
  }
  // step 6
  std::sort(voiced.begin(), voiced.end());
  return voiced;
}

// --- symbolic ---------------------------------------------------------------

/// Per-frame maximum over the notes sounding at the frame center.
inline std::vector<int> skyline(const PolyTrack& poly, std::size_t frames) {
  std::vector<int> out(frames, kSilence);
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = (static_cast<double>(f) + 0.5) * kHopSeconds;
    int best = -1;
    for (const PolyNote& n : poly) {
      if (n.onset_s <= t + 1e-12 && t < n.offset_s - 1e-12) best = std::max(best, n.pitch);
    }
    if (best >= 0) out[f] = midi_to_key(best);
  }
  return out;
}

// --- task generation --------------------------------------------------------

/// P(round(Z) = k) for Z ~ N(0, 1), via the normal CDF.
inline double rounded_normal_mass(int k) {
  const auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); };
  return cdf(k + 0.5) - cdf(k - 0.5);
}

// --- model ------------------------------------------------------------------

/// Forward pass written without relative terms, one position at a time,
/// for comparison with the library when every relative embedding is zero.
/// Evaluation mode only.
inline Eigen::MatrixXd content_only_forward(const ModelSpec& spec, const nn::ModelParams<double>& p,
                                            const std::vector<int>& enc, const std::vector<int>& dec,
                                            Eigen::VectorXd* count = nullptr) {
  using Row = Eigen::RowVectorXd;
  const auto layer_norm = [](const Row& x, const Eigen::MatrixXd& g, const Eigen::MatrixXd& b) {
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    Row y = (x.array() - mean) / std::sqrt(var + 1e-5);
    return Row((y.array() * g.row(0).array() + b.row(0).array()).matrix());
  };
  const auto lin = [](const Row& x, const nn::Linear<double>& l) { return Row(x * l.weight + l.bias.row(0)); };
  const auto attend = [&](const std::vector<Row>& xs_q, const std::vector<Row>& xs_kv, const nn::AttentionParams<double>& a,
                          bool causal) {
    const int dh = spec.head_dim();
    std::vector<Row> out;
    for (std::size_t i = 0; i < xs_q.size(); ++i) {
      const Row q = lin(xs_q[i], a.query);
      Row ctx = Row::Zero(spec.d_model);
      for (int h = 0; h < spec.n_heads; ++h) {
        std::vector<double> w;
        double mx = -1e300;
        for (std::size_t j = 0; j < xs_kv.size(); ++j) {
          if (causal && j > i) break;
          const Row k = lin(xs_kv[j], a.key);
          const double s = q.segment(h * dh, dh).dot(k.segment(h * dh, dh)) / std::sqrt(double(dh));
          w.push_back(s);
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (double& v : w) z += (v = std::exp(v - mx));
        for (std::size_t j = 0; j < w.size(); ++j) {
          const Row v = lin(xs_kv[j], a.value);
          ctx.segment(h * dh, dh) += (w[j] / z) * v.segment(h * dh, dh);
        }
      }
      out.push_back(lin(ctx, a.out));
    }
    return out;
  };
  const auto ff = [&](const Row& x, const nn::FeedForwardParams<double>& f) {
    return lin(lin(x, f.in).cwiseMax(0.0), f.out);
  };

  std::vector<Row> x;
  for (int t : enc) x.push_back(p.encoder_embedding.row(t));
  for (const auto& l : p.encoder) {
    std::vector<Row> a;
    for (const Row& r : x) a.push_back(layer_norm(r, l.norm1.gain, l.norm1.bias));
    const auto s = attend(a, a, l.self_attn, false);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += s[i];
    for (Row& r : x) r += ff(layer_norm(r, l.norm2.gain, l.norm2.bias), l.ff);
  }
  std::vector<Row> memory;
  for (const Row& r : x) memory.push_back(layer_norm(r, p.encoder_norm.gain, p.encoder_norm.bias));

  std::vector<Row> y;
  for (int t : dec) y.push_back(p.decoder_embedding.row(t));
  for (const auto& l : p.decoder) {
    std::vector<Row> a;
    for (const Row& r : y) a.push_back(layer_norm(r, l.norm1.gain, l.norm1.bias));
    const auto s = attend(a, a, l.self_attn, true);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += s[i];
    std::vector<Row> b;
    for (const Row& r : y) b.push_back(layer_norm(r, l.norm2.gain, l.norm2.bias));
    const auto c = attend(b, memory, l.cross_attn, false);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += c[i];
    for (Row& r : y) r += ff(layer_norm(r, l.norm3.gain, l.norm3.bias), l.ff);
  }
  Eigen::MatrixXd logits(static_cast<Eigen::Index>(y.size()), kPitchClasses);
  if (count) count->resize(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    const Row o = layer_norm(y[i], p.decoder_norm.gain, p.decoder_norm.bias);
    logits.row(static_cast<Eigen::Index>(i)) = lin(o, p.pitch_head);
    if (count && spec.has_count_head()) (*count)(static_cast<Eigen::Index>(i)) = 1.0 / (1.0 + std::exp(-lin(o, p.count_head)(0)));
  }
  return logits;
}

}  // namespace s2m::oracle
