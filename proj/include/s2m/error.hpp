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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace s2m {

/// Every failure the library reports carries one of these codes.
enum class Errc {
  kMalformedWav,
  kUnsupportedFormat,
  kEmptyAudio,
  kInvalidRate,
  kClipTooShort,
  kLengthMismatch,
  kGapTokenPresent,
  kTranspositionOutOfRange,
  kMalformedMidi,
  kContentTooShort,
  kPlacementFailed,
  kMaskOutOfBounds,
  kEmptyCorpus,
  kSequenceTooLong,
  kShapeMismatch,
  kNonFiniteGradient,
  kCorruptCheckpoint,
  kSpecMismatch,
  kNoGaps,
  kModelVariantMismatch,
  kMissingCheckpoint,
  kEmptyHistogram,
  kInvalidArgument,
  kIo,
};

inline constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kMalformedWav: return "MalformedWav";
    case Errc::kUnsupportedFormat: return "UnsupportedFormat";
    case Errc::kEmptyAudio: return "EmptyAudio";
    case Errc::kInvalidRate: return "InvalidRate";
    case Errc::kClipTooShort: return "ClipTooShort";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kGapTokenPresent: return "GapTokenPresent";
    case Errc::kTranspositionOutOfRange: return "TranspositionOutOfRange";
    case Errc::kMalformedMidi: return "MalformedMidi";
    case Errc::kContentTooShort: return "ContentTooShort";
    case Errc::kPlacementFailed: return "PlacementFailed";
    case Errc::kMaskOutOfBounds: return "MaskOutOfBounds";
    case Errc::kEmptyCorpus: return "EmptyCorpus";
    case Errc::kSequenceTooLong: return "SequenceTooLong";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kNonFiniteGradient: return "NonFiniteGradient";
    case Errc::kCorruptCheckpoint: return "CorruptCheckpoint";
    case Errc::kSpecMismatch: return "SpecMismatch";
    case Errc::kNoGaps: return "NoGaps";
    case Errc::kModelVariantMismatch: return "ModelVariantMismatch";
    case Errc::kMissingCheckpoint: return "MissingCheckpoint";
    case Errc::kEmptyHistogram: return "EmptyHistogram";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kIo: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace s2m
