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

// Standard MIDI File reading (format 0 and 1, tempo map honored) and writing
// (format 0, 480 ticks per quarter note, 120 BPM, one track).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "s2m/error.hpp"
#include "s2m/symbolic.hpp"

namespace s2m {

inline constexpr int kWriteTicksPerQuarter = 480;
inline constexpr std::uint32_t kWriteTempoUsPerQuarter = 500000;  // 120 BPM

namespace midi_detail {

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t begin, std::size_t end)
      : bytes_(bytes), pos_(begin), end_(end) {}

  bool done() const { return pos_ >= end_; }
  std::size_t pos() const { return pos_; }

  std::uint8_t u8() {
    if (pos_ >= end_) fail(Errc::kMalformedMidi, "unexpected end of track data");
    return bytes_[pos_++];
  }
  std::uint8_t peek() const {
    if (pos_ >= end_) fail(Errc::kMalformedMidi, "unexpected end of track data");
    return bytes_[pos_];
  }
  std::uint32_t varlen() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7Fu);
      if ((b & 0x80u) == 0) return v;
    }
    fail(Errc::kMalformedMidi, "variable-length quantity longer than 4 bytes");
  }
  void skip(std::size_t n) {
    if (n > end_ - pos_) fail(Errc::kMalformedMidi, "event length exceeds track");
    pos_ += n;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
  std::size_t end_;
};

inline std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
}
inline std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_be16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
inline void put_varlen(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[4];
  int n = 0;
  buf[n++] = v & 0x7F;
  while ((v >>= 7) != 0) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
  while (n > 0) out.push_back(buf[--n]);
}

struct RawNoteEvent {
  std::uint64_t tick;
  int channel;
  int pitch;
  int velocity;  // 0 for note-off
  std::size_t order;
};

// Tick to seconds through a piecewise-constant tempo map.
class TempoMap {
 public:
  TempoMap(int division, std::map<std::uint64_t, std::uint32_t> changes) : division_(division) {
    if (division_ & 0x8000) {
      const int fps = -static_cast<std::int8_t>(division_ >> 8);
      const int per_frame = division_ & 0xFF;
      smpte_seconds_per_tick_ = 1.0 / (static_cast<double>(fps == 29 ? 29.97 : fps) * per_frame);
      return;
    }
    changes.emplace(0, 500000u);  // no-op if a tempo is already set at tick 0
    double seconds = 0.0;
    std::uint64_t last_tick = 0;
    std::uint32_t tempo = changes.begin()->second;
    for (const auto& [tick, us] : changes) {
      seconds += static_cast<double>(tick - last_tick) * tempo / 1e6 / division_;
      segments_.push_back({tick, seconds, us});
      last_tick = tick;
      tempo = us;
    }
  }

  double seconds(std::uint64_t tick) const {
    if (smpte_seconds_per_tick_ > 0) return static_cast<double>(tick) * smpte_seconds_per_tick_;
    auto it = std::upper_bound(segments_.begin(), segments_.end(), tick,
                               [](std::uint64_t t, const Segment& s) { return t < s.tick; });
    const Segment& s = *std::prev(it);
    return s.seconds + static_cast<double>(tick - s.tick) * s.tempo / 1e6 / division_;
  }

 private:
  struct Segment {
    std::uint64_t tick;
    double seconds;
    std::uint32_t tempo;
  };
  int division_;
  double smpte_seconds_per_tick_ = 0.0;
  std::vector<Segment> segments_;
};

}  // namespace midi_detail

/// Parses a Standard MIDI File into sounding notes. Note-on with velocity 0
/// is a note-off. Overlapping notes of one pitch on one channel pair
/// last-on/first-off; notes still open at the end of their track are closed
/// there. Zero-length notes are dropped.
inline PolyTrack read_midi(std::span<const std::uint8_t> bytes) {
  using namespace midi_detail;
  if (bytes.size() < 14 || std::memcmp(bytes.data(), "MThd", 4) != 0) {
    fail(Errc::kMalformedMidi, "missing MThd header");
  }
  const std::uint32_t header_len = be32(bytes.data() + 4);
  if (header_len < 6 || header_len > bytes.size() - 8) fail(Errc::kMalformedMidi, "bad header length");
  const std::uint16_t format = be16(bytes.data() + 8);
  const std::uint16_t ntracks = be16(bytes.data() + 10);
  const std::uint16_t division = be16(bytes.data() + 12);
  if (format > 1) fail(Errc::kMalformedMidi, "format " + std::to_string(format) + " not supported");
  if (division == 0) fail(Errc::kMalformedMidi, "zero time division");

  std::map<std::uint64_t, std::uint32_t> tempo_changes;
  std::vector<RawNoteEvent> events;

  std::size_t pos = 8 + header_len;
  for (int t = 0; t < ntracks; ++t) {
    if (bytes.size() - pos < 8) fail(Errc::kMalformedMidi, "missing track chunk");
    const std::uint32_t len = be32(bytes.data() + pos + 4);
    if (len > bytes.size() - pos - 8) fail(Errc::kMalformedMidi, "track length exceeds file");
    if (std::memcmp(bytes.data() + pos, "MTrk", 4) != 0) {
      pos += 8 + len;  // unknown chunk
      --t;
      continue;
    }
    Reader r(bytes, pos + 8, pos + 8 + len);
    std::uint64_t tick = 0;
    std::uint8_t running = 0;
    while (!r.done()) {
      tick += r.varlen();
      std::uint8_t status = r.peek();
      if (status & 0x80) {
        r.u8();
      } else {
        if (running == 0) fail(Errc::kMalformedMidi, "data byte without running status");
        status = running;
      }
      if (status == 0xFF) {
        const std::uint8_t type = r.u8();
        const std::uint32_t n = r.varlen();
        if (type == 0x51 && n == 3) {
          std::uint32_t us = 0;
          for (int i = 0; i < 3; ++i) us = (us << 8) | r.u8();
          if (us == 0) fail(Errc::kMalformedMidi, "zero tempo");
          tempo_changes[tick] = us;
        } else {
          r.skip(n);
        }
        if (type == 0x2F) break;
        continue;
      }
      if (status == 0xF0 || status == 0xF7) {
        r.skip(r.varlen());
        continue;
      }
      if (status < 0x80 || status >= 0xF0) fail(Errc::kMalformedMidi, "unexpected status byte");
      running = status;
      const int kind = status & 0xF0;
      const int channel = status & 0x0F;
      const int d1 = r.u8();
      const int d2 = (kind == 0xC0 || kind == 0xD0) ? 0 : r.u8();
      if ((d1 | d2) & 0x80) fail(Errc::kMalformedMidi, "data byte with high bit set");
      if (kind == 0x90 || kind == 0x80) {
        events.push_back({tick, channel, d1, kind == 0x90 ? d2 : 0, events.size()});
      }
    }
    events.push_back({tick, -1, t, 0, events.size()});  // track-end marker
    pos += 8 + len;
  }

  const TempoMap tempo(division, std::move(tempo_changes));

  // Pair per (channel, pitch), per track, in file order.
  PolyTrack out;
  std::map<std::tuple<int, int>, std::vector<std::pair<std::uint64_t, int>>> open;
  auto close = [&](std::uint64_t on_tick, int velocity, int pitch, std::uint64_t off_tick) {
    if (off_tick <= on_tick) return;
    out.push_back({pitch, tempo.seconds(on_tick), tempo.seconds(off_tick), velocity});
  };
  for (const RawNoteEvent& e : events) {
    if (e.channel < 0) {
      for (auto& [key, stack] : open) {
        for (const auto& [on_tick, vel] : stack) close(on_tick, vel, std::get<1>(key), e.tick);
      }
      open.clear();
      continue;
    }
    auto& stack = open[{e.channel, e.pitch}];
    if (e.velocity > 0) {
      stack.emplace_back(e.tick, e.velocity);
    } else if (!stack.empty()) {
      close(stack.back().first, stack.back().second, e.pitch, e.tick);
      stack.pop_back();
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const PolyNote& a, const PolyNote& b) {
    return std::tie(a.onset_s, a.pitch) < std::tie(b.onset_s, b.pitch);
  });
  return out;
}

/// Format 0 file: tempo meta event, then note pairs on channel 0.
inline std::vector<std::uint8_t> write_midi(const NoteList& notes) {
  using namespace midi_detail;
  constexpr double kTicksPerSecond =
      kWriteTicksPerQuarter * 1e6 / static_cast<double>(kWriteTempoUsPerQuarter);

  struct Ev {
    std::uint64_t tick;
    bool on;
    int pitch;
    int velocity;
  };
  std::vector<Ev> evs;
  for (const Note& n : notes) {
    const auto on = static_cast<std::uint64_t>(std::llround(std::max(0.0, n.onset_s) * kTicksPerSecond));
    auto off = static_cast<std::uint64_t>(std::llround(std::max(0.0, n.offset_s()) * kTicksPerSecond));
    if (off <= on) off = on + 1;
    const int pitch = std::clamp(key_to_midi(n.key), 0, 127);
    evs.push_back({on, true, pitch, std::clamp(n.velocity, 1, 127)});
    evs.push_back({off, false, pitch, 0});
  }
  std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    return !a.on && b.on;  // offs first
  });

  std::vector<std::uint8_t> track;
  put_varlen(track, 0);
  track.insert(track.end(), {0xFF, 0x51, 0x03});
  track.push_back(static_cast<std::uint8_t>(kWriteTempoUsPerQuarter >> 16));
  track.push_back(static_cast<std::uint8_t>(kWriteTempoUsPerQuarter >> 8));
  track.push_back(static_cast<std::uint8_t>(kWriteTempoUsPerQuarter));
  std::uint64_t last = 0;
  for (const Ev& e : evs) {
    put_varlen(track, static_cast<std::uint32_t>(e.tick - last));
    last = e.tick;
    track.push_back(e.on ? 0x90 : 0x80);
    track.push_back(static_cast<std::uint8_t>(e.pitch));
    track.push_back(static_cast<std::uint8_t>(e.on ? e.velocity : 64));
  }
  put_varlen(track, 0);
  track.insert(track.end(), {0xFF, 0x2F, 0x00});

  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  put_be32(out, 6);
  put_be16(out, 0);
  put_be16(out, 1);
  put_be16(out, kWriteTicksPerQuarter);
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  put_be32(out, static_cast<std::uint32_t>(track.size()));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

/// Monophonic view of a parsed file (read_midi, then rounded onto the grid).
inline NoteList poly_to_notes(const PolyTrack& poly) {
  NoteList notes;
  for (const PolyNote& p : poly) {
    notes.push_back({midi_to_key(p.pitch), p.onset_s, p.offset_s - p.onset_s, p.velocity});
  }
  return notes;
}

}  // namespace s2m
