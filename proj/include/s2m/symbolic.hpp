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

// Held-pitch token sequences on a 20 ms grid.
//
// Token alphabet:
//   0        silence
//   1..88    piano keys A0..C8 (key k is MIDI pitch k + 20)
//   89       START
//   90       END
//   91       GAP (only in gap-fill model inputs)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "s2m/error.hpp"
#include "s2m/sparsifier.hpp"
#include "s2m/speech_features.hpp"

namespace s2m {

inline constexpr int kSilence = 0;
inline constexpr int kLowestKey = 1;
inline constexpr int kHighestKey = 88;
inline constexpr int kStart = 89;
inline constexpr int kEnd = 90;
inline constexpr int kGap = 91;
inline constexpr int kVocabSize = 92;
inline constexpr int kPitchClasses = 89;  // silence + 88 keys
inline constexpr int kMidiKeyOffset = 20;
inline constexpr std::size_t kMaxContent = 500;
inline constexpr std::size_t kMaxSequence = kMaxContent + 2;
inline constexpr int kDefaultVelocity = 80;

inline constexpr bool is_key(int token) { return token >= kLowestKey && token <= kHighestKey; }

struct TokenSeq {
  std::vector<int> tokens;
  double hop_s = kHopSeconds;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const TokenSeq& other) const { return tokens == other.tokens; }

  bool wrapped() const {
    return tokens.size() >= 2 && tokens.front() == kStart && tokens.back() == kEnd;
  }
  /// Tokens between START and END (the whole sequence when unwrapped).
  std::span<const int> content() const {
    if (wrapped()) return std::span<const int>(tokens).subspan(1, tokens.size() - 2);
    return tokens;
  }
  std::size_t content_size() const { return content().size(); }
  bool has_gap() const { return std::find(tokens.begin(), tokens.end(), kGap) != tokens.end(); }
};

inline TokenSeq wrap(std::span<const int> content) {
  TokenSeq seq;
  seq.tokens.reserve(content.size() + 2);
  seq.tokens.push_back(kStart);
  seq.tokens.insert(seq.tokens.end(), content.begin(), content.end());
  seq.tokens.push_back(kEnd);
  return seq;
}

struct Note {
  int key = 0;
  double onset_s = 0.0;
  double duration_s = 0.0;
  int velocity = kDefaultVelocity;

  double offset_s() const { return onset_s + duration_s; }
};

using NoteList = std::vector<Note>;

struct PolyNote {
  int pitch = 0;  // MIDI 0..127
  double onset_s = 0.0;
  double offset_s = 0.0;
  int velocity = kDefaultVelocity;
};

using PolyTrack = std::vector<PolyNote>;

/// 0 Hz (and anything non-positive) is silence; otherwise the nearest key,
/// clamped to the keyboard.
inline int hz_to_key(double hz) {
  if (!(hz > 0.0)) return kSilence;
  const double k = std::round(12.0 * std::log2(hz / 440.0)) + 49.0;
  return static_cast<int>(std::clamp(k, double(kLowestKey), double(kHighestKey)));
}

inline double key_to_hz(int key) { return 440.0 * std::pow(2.0, (key - 49) / 12.0); }

inline TokenSeq tracks_to_tokens(const FrameTrack& track) {
  std::vector<int> content;
  const std::size_t n = std::min(track.size(), kMaxContent);
  content.reserve(n);
  for (std::size_t i = 0; i < n; ++i) content.push_back(hz_to_key(track.values[i]));
  return wrap(content);
}

/// Dropped frames become GAP tokens.
inline TokenSeq tracks_to_tokens(const SparseTrack& track) {
  std::vector<int> content;
  const std::size_t n = std::min(track.size(), kMaxContent);
  content.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    content.push_back(track.keep_mask[i] ? hz_to_key(track.values[i].value_or(0.0)) : kGap);
  }
  return wrap(content);
}

/// Run-length decoding. Velocity of each note is velocities[onset frame] when
/// given (raised to at least 1, as MIDI velocity 0 means note-off), else 80.
inline NoteList tokens_to_notes(const TokenSeq& seq, std::span<const int> velocities = {}) {
  const std::span<const int> c = seq.content();
  NoteList notes;
  for (std::size_t i = 0; i < c.size();) {
    const int t = c[i];
    if (t == kGap) fail(Errc::kGapTokenPresent, "GAP at content position " + std::to_string(i));
    if (t == kStart || t == kEnd) fail(Errc::kInvalidArgument, "START/END inside content");
    std::size_t j = i + 1;
    while (j < c.size() && c[j] == t) ++j;
    if (t != kSilence) {
      Note note;
      note.key = t;
      note.onset_s = static_cast<double>(i) * seq.hop_s;
      note.duration_s = static_cast<double>(j - i) * seq.hop_s;
      if (!velocities.empty()) {
        note.velocity = i < velocities.size() ? std::clamp(velocities[i], 1, 127) : kDefaultVelocity;
      }
      notes.push_back(note);
    }
    i = j;
  }
  return notes;
}

/// Places notes on the grid by rounding onsets and offsets to the nearest
/// frame. Later notes overwrite earlier ones where they overlap.
inline TokenSeq notes_to_tokens(const NoteList& notes, double hop_s = kHopSeconds) {
  std::size_t frames = 0;
  for (const Note& n : notes) {
    frames = std::max(frames, static_cast<std::size_t>(std::llround(n.offset_s() / hop_s)));
  }
  std::vector<int> content(frames, kSilence);
  for (const Note& n : notes) {
    const auto a = static_cast<std::size_t>(std::llround(n.onset_s / hop_s));
    const auto b = static_cast<std::size_t>(std::llround(n.offset_s() / hop_s));
    for (std::size_t f = a; f < b && f < frames; ++f) content[f] = n.key;
  }
  TokenSeq seq = wrap(content);
  seq.hop_s = hop_s;
  return seq;
}

inline int midi_to_key(int pitch) {
  return std::clamp(pitch - kMidiKeyOffset, kLowestKey, kHighestKey);
}

inline int key_to_midi(int key) { return key + kMidiKeyOffset; }

/// Highest sounding pitch at each frame center. Frames with nothing sounding
/// are silence. total_s extends the grid past the last offset.
inline TokenSeq skyline(const PolyTrack& poly, std::optional<double> total_s = std::nullopt) {
  double end = total_s.value_or(0.0);
  if (!total_s) {
    for (const PolyNote& n : poly) end = std::max(end, n.offset_s);
  }
  const auto frames = static_cast<std::size_t>(std::max(0.0, std::ceil(end / kHopSeconds - 1e-9)));
  std::vector<int> top(frames, -1);
  for (const PolyNote& n : poly) {
    // Frames whose center (f + 0.5) * hop lies in [onset, offset).
    const double first = std::ceil(n.onset_s / kHopSeconds - 0.5);
    const double last = std::ceil(n.offset_s / kHopSeconds - 0.5);
    const auto a = static_cast<std::size_t>(std::max(0.0, first));
    const auto b = static_cast<std::size_t>(std::clamp(last, 0.0, static_cast<double>(frames)));
    for (std::size_t f = a; f < b; ++f) top[f] = std::max(top[f], n.pitch);
  }
  std::vector<int> content(frames);
  for (std::size_t f = 0; f < frames; ++f) content[f] = top[f] < 0 ? kSilence : midi_to_key(top[f]);
  return wrap(content);
}

inline TokenSeq transpose(const TokenSeq& seq, int semitones) {
  if (semitones < -5 || semitones > 5) {
    fail(Errc::kTranspositionOutOfRange, "shift " + std::to_string(semitones) + " beyond +/-5");
  }
  TokenSeq out = seq;
  for (int& t : out.tokens) {
    if (!is_key(t)) continue;
    t += semitones;
    if (!is_key(t)) fail(Errc::kTranspositionOutOfRange, "key leaves [1, 88]");
  }
  return out;
}

/// Non-overlapping 10 s windows of each track's skyline. Trailing partial
/// windows and windows with fewer than 5% sounding frames are dropped.
inline std::vector<TokenSeq> slice_corpus(std::span<const PolyTrack> tracks) {
  constexpr std::size_t kMinSounding = kMaxContent / 20;
  std::vector<TokenSeq> out;
  for (const PolyTrack& track : tracks) {
    const TokenSeq sky = skyline(track);
    const std::span<const int> c = sky.content();
    for (std::size_t start = 0; start + kMaxContent <= c.size(); start += kMaxContent) {
      const std::span<const int> window = c.subspan(start, kMaxContent);
      const auto sounding = static_cast<std::size_t>(
          std::count_if(window.begin(), window.end(), [](int t) { return t != kSilence; }));
      if (sounding < kMinSounding) continue;
      out.push_back(wrap(window));
    }
  }
  return out;
}

// Corpus files are JSON lines, one object per sequence: {"tokens": [89, ..., 90]}.

inline void write_corpus(std::ostream& os, std::span<const TokenSeq> seqs) {
  for (const TokenSeq& s : seqs) os << nlohmann::json{{"tokens", s.tokens}}.dump() << '\n';
}

inline std::vector<TokenSeq> read_corpus(std::istream& is) {
  std::vector<TokenSeq> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      TokenSeq seq;
      seq.tokens = j.at("tokens").get<std::vector<int>>();
      for (int t : seq.tokens) {
        if (t < 0 || t >= kVocabSize) fail(Errc::kInvalidArgument, "token out of range");
      }
      out.push_back(std::move(seq));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::kInvalidArgument, "corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<TokenSeq> read_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::kIo, "cannot open " + path);
  return read_corpus(in);
}

inline void write_corpus_file(const std::string& path, std::span<const TokenSeq> seqs) {
  std::ofstream out(path);
  if (!out) fail(Errc::kIo, "cannot write " + path);
  write_corpus(out, seqs);
}

}  // namespace s2m
