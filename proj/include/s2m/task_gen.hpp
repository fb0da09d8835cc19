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

// Training-pair construction for the two sequence tasks.
//
// Gap filling: 150 content frames are hidden behind GAP tokens in spans whose
// lengths come from {25, 50, ..., 150}; the decoder predicts the hidden
// content as (pitch, count) runs, span by span.
//
// Denoising: every sounding key is shifted by a rounded standard-normal
// offset (clamped to the keyboard); the decoder predicts the clean content.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "s2m/error.hpp"
#include "s2m/symbolic.hpp"

namespace s2m {

using Rng = std::mt19937_64;

enum class Task { kGapFill, kDenoise };

inline constexpr std::string_view task_name(Task t) { return t == Task::kGapFill ? "gapfill" : "denoise"; }

inline constexpr int kMaskBudget = 150;
inline constexpr std::array<int, 6> kSpanLengths = {25, 50, 75, 100, 125, 150};
inline constexpr int kMaxRunCount = 500;
inline constexpr int kMaskRetries = 100;

struct Span {
  std::size_t start = 0;
  std::size_t length = 0;
};

struct GapMask {
  std::vector<Span> spans;  // in placement order
};

struct Run {
  int key = 0;
  int count = 0;
  bool operator==(const Run&) const = default;
};

struct TrainPair {
  Task task = Task::kDenoise;
  TokenSeq encoder_input;
  std::vector<int> target_pitch;   // one entry per decoder step
  std::vector<int> target_count;   // gap-fill only
  std::vector<std::uint8_t> loss_mask;
};

/// Count head target: [1, 500] mapped affinely onto [0, 1].
inline double scale_count(int count) {
  return static_cast<double>(std::clamp(count, 1, kMaxRunCount) - 1) / (kMaxRunCount - 1);
}

/// Inverse of scale_count on the sigmoid output.
inline int unscale_count(double sigmoid) {
  return static_cast<int>(std::lround(std::clamp(sigmoid, 0.0, 1.0) * (kMaxRunCount - 1))) + 1;
}

namespace detail {

inline bool overlaps(const std::vector<Span>& spans, std::size_t start, std::size_t length) {
  for (const Span& s : spans) {
    if (start < s.start + s.length && s.start < start + length) return true;
  }
  return false;
}

}  // namespace detail

/// Draws the span-length multiset by repeatedly picking uniformly among the
/// lengths that still fit the remaining budget, then places each span at a
/// uniformly chosen start that avoids the spans already placed. A dead end
/// restarts the whole draw.
inline GapMask sample_gap_mask(std::size_t content_len, Rng& rng) {
  if (content_len < static_cast<std::size_t>(kMaskBudget)) {
    fail(Errc::kContentTooShort,
         "content of " + std::to_string(content_len) + " frames is shorter than the mask budget");
  }
  for (int attempt = 0; attempt < kMaskRetries; ++attempt) {
    std::vector<int> lengths;
    for (int remaining = kMaskBudget; remaining > 0;) {
      int feasible = 0;
      while (feasible < static_cast<int>(kSpanLengths.size()) && kSpanLengths[feasible] <= remaining) ++feasible;
      std::uniform_int_distribution<int> pick(0, feasible - 1);
      const int len = kSpanLengths[pick(rng)];
      lengths.push_back(len);
      remaining -= len;
    }

    GapMask mask;
    bool placed_all = true;
    std::vector<std::size_t> starts;
    for (int len : lengths) {
      starts.clear();
      for (std::size_t s = 0; s + len <= content_len; ++s) {
        if (!detail::overlaps(mask.spans, s, len)) starts.push_back(s);
      }
      if (starts.empty()) {
        placed_all = false;
        break;
      }
      std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
      mask.spans.push_back({starts[pick(rng)], static_cast<std::size_t>(len)});
    }
    if (placed_all) return mask;
  }
  fail(Errc::kPlacementFailed, "no feasible span placement after " + std::to_string(kMaskRetries) + " draws");
}

/// Run-length encoding of each span's content, spans taken left to right.
/// Runs never cross a span boundary.
inline std::vector<Run> masked_runs(std::span<const int> content, const GapMask& mask) {
  std::vector<Span> spans = mask.spans;
  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.start < b.start; });
  std::vector<Run> runs;
  for (const Span& s : spans) {
    for (std::size_t i = s.start; i < s.start + s.length;) {
      std::size_t j = i + 1;
      while (j < s.start + s.length && content[j] == content[i] && j - i < kMaxRunCount) ++j;
      runs.push_back({content[i], static_cast<int>(j - i)});
      i = j;
    }
  }
  return runs;
}

inline TrainPair apply_gap_mask(const TokenSeq& seq, const GapMask& mask) {
  if (seq.has_gap()) fail(Errc::kInvalidArgument, "sequence already contains GAP tokens");
  const std::span<const int> content = seq.content();
  for (const Span& s : mask.spans) {
    if (s.length == 0 || s.start + s.length > content.size()) {
      fail(Errc::kMaskOutOfBounds, "span [" + std::to_string(s.start) + ", +" + std::to_string(s.length) +
                                       ") exceeds content of " + std::to_string(content.size()));
    }
  }
  TrainPair pair;
  pair.task = Task::kGapFill;
  pair.encoder_input = seq;
  const std::size_t offset = seq.wrapped() ? 1 : 0;
  for (const Span& s : mask.spans) {
    for (std::size_t i = s.start; i < s.start + s.length; ++i) pair.encoder_input.tokens[offset + i] = kGap;
  }
  for (const Run& r : masked_runs(content, mask)) {
    pair.target_pitch.push_back(r.key);
    pair.target_count.push_back(r.count);
  }
  pair.loss_mask.assign(pair.target_pitch.size(), 1);
  return pair;
}

/// Expands runs back to frames (the inverse used to check decoder targets).
inline std::vector<int> expand_runs(std::span<const int> pitch, std::span<const int> count) {
  std::vector<int> out;
  for (std::size_t i = 0; i < pitch.size(); ++i) out.insert(out.end(), static_cast<std::size_t>(count[i]), pitch[i]);
  return out;
}

/// One rounded N(0, 1) draw per content position. Silence and START/END are
/// untouched; keys stay inside [1, 88].
inline TrainPair apply_noise(const TokenSeq& seq, Rng& rng) {
  if (seq.has_gap()) fail(Errc::kInvalidArgument, "sequence contains GAP tokens");
  std::normal_distribution<double> normal(0.0, 1.0);
  TrainPair pair;
  pair.task = Task::kDenoise;
  pair.encoder_input = seq;
  const std::size_t offset = seq.wrapped() ? 1 : 0;
  const std::span<const int> content = seq.content();
  for (std::size_t i = 0; i < content.size(); ++i) {
    const int shift = static_cast<int>(std::round(normal(rng)));
    const int old = content[i];
    if (is_key(old)) pair.encoder_input.tokens[offset + i] = std::clamp(old + shift, kLowestKey, kHighestKey);
  }
  pair.target_pitch.assign(content.begin(), content.end());
  pair.loss_mask.assign(content.size(), 1);
  return pair;
}

inline TrainPair corrupt(const TokenSeq& seq, Task task, Rng& rng) {
  if (task == Task::kGapFill) return apply_gap_mask(seq, sample_gap_mask(seq.content_size(), rng));
  return apply_noise(seq, rng);
}

/// Uniform transposition in [-5, 5], redrawn until every key stays on the
/// keyboard (a shift of 0 always succeeds).
inline TokenSeq random_transpose(const TokenSeq& seq, Rng& rng) {
  int lo = kHighestKey;
  int hi = kLowestKey;
  for (int t : seq.content()) {
    if (is_key(t)) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  }
  std::uniform_int_distribution<int> shift(-5, 5);
  for (;;) {
    const int k = shift(rng);
    if (lo > hi || (lo + k >= kLowestKey && hi + k <= kHighestKey)) return transpose(seq, k);
  }
}

struct BatchOptions {
  std::size_t batch_size = 8;
  bool augment = true;
};

/// Endless, seeded stream of training batches. Each epoch shuffles the
/// corpus, transposes every sample and draws fresh corruption. The last batch
/// of an epoch holds the remainder.
class BatchStream {
 public:
  BatchStream(std::vector<TokenSeq> corpus, Task task, BatchOptions options, std::uint64_t seed)
      : corpus_(std::move(corpus)), task_(task), options_(options), rng_(seed) {
    if (corpus_.empty()) fail(Errc::kEmptyCorpus, "no training sequences");
    if (options_.batch_size == 0) fail(Errc::kInvalidArgument, "batch size must be positive");
    order_.resize(corpus_.size());
    cursor_ = order_.size();
  }

  std::vector<TrainPair> next() {
    if (cursor_ >= order_.size()) start_epoch();
    const std::size_t end = std::min(order_.size(), cursor_ + options_.batch_size);
    std::vector<TrainPair> batch;
    batch.reserve(end - cursor_);
    for (; cursor_ < end; ++cursor_) {
      const TokenSeq& base = corpus_[order_[cursor_]];
      const TokenSeq sample = options_.augment ? random_transpose(base, rng_) : base;
      batch.push_back(corrupt(sample, task_, rng_));
    }
    return batch;
  }

  std::size_t epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const {
    return (corpus_.size() + options_.batch_size - 1) / options_.batch_size;
  }

 private:
  void start_epoch() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
    ++epoch_;
  }

  std::vector<TokenSeq> corpus_;
  Task task_;
  BatchOptions options_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

inline BatchStream make_batches(std::vector<TokenSeq> corpus, Task task, std::size_t batch_size,
                                std::uint64_t seed, bool augment = true) {
  return BatchStream(std::move(corpus), task, {batch_size, augment}, seed);
}

}  // namespace s2m
