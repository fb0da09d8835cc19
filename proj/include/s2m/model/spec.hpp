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

#include <string>

#include "json.hpp"

#include "s2m/error.hpp"
#include "s2m/symbolic.hpp"
#include "s2m/task_gen.hpp"

namespace s2m {

/// Hyperparameters of the encoder-decoder. The variant decides whether the
/// count head exists.
struct ModelSpec {
  Task variant = Task::kGapFill;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 128;
  double dropout = 0.1;
  int vocab_size = kVocabSize;
  int rel_window = 32;
  int max_len = static_cast<int>(kMaxSequence);
  int warmup = 400;

  bool operator==(const ModelSpec&) const = default;

  int head_dim() const { return d_model / n_heads; }
  bool has_count_head() const { return variant == Task::kGapFill; }

  void validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || rel_window < 0 || max_len <= 0 ||
        warmup <= 0) {
      fail(Errc::kInvalidArgument, "model dimensions must be positive");
    }
    if (d_model % n_heads != 0) fail(Errc::kInvalidArgument, "d_model must be divisible by n_heads");
    if (vocab_size != kVocabSize) fail(Errc::kInvalidArgument, "vocab_size must be 92");
    if (dropout < 0.0 || dropout >= 1.0) fail(Errc::kInvalidArgument, "dropout must be in [0, 1)");
  }
};

inline ModelSpec paper_preset(Task variant) {
  ModelSpec s;
  s.variant = variant;
  if (variant == Task::kGapFill) {
    s.d_model = 512;
    s.n_layers = 6;
    s.n_heads = 8;
  } else {
    s.d_model = 128;
    s.n_layers = 2;
    s.n_heads = 2;
  }
  s.d_ff = 1024;
  s.rel_window = 128;
  s.warmup = 4000;
  return s;
}

inline ModelSpec desk_preset(Task variant) {
  ModelSpec s;
  s.variant = variant;
  return s;
}

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = nlohmann::json{{"variant", std::string(task_name(s.variant))},
                     {"d_model", s.d_model},
                     {"n_layers", s.n_layers},
                     {"n_heads", s.n_heads},
                     {"d_ff", s.d_ff},
                     {"dropout", s.dropout},
                     {"vocab_size", s.vocab_size},
                     {"rel_window", s.rel_window},
                     {"max_len", s.max_len},
                     {"warmup", s.warmup}};
}

inline void from_json(const nlohmann::json& j, ModelSpec& s) {
  const std::string variant = j.at("variant").get<std::string>();
  if (variant == "gapfill") {
    s.variant = Task::kGapFill;
  } else if (variant == "denoise") {
    s.variant = Task::kDenoise;
  } else {
    fail(Errc::kInvalidArgument, "unknown variant " + variant);
  }
  j.at("d_model").get_to(s.d_model);
  j.at("n_layers").get_to(s.n_layers);
  j.at("n_heads").get_to(s.n_heads);
  j.at("d_ff").get_to(s.d_ff);
  j.at("dropout").get_to(s.dropout);
  j.at("vocab_size").get_to(s.vocab_size);
  j.at("rel_window").get_to(s.rel_window);
  j.at("max_len").get_to(s.max_len);
  j.at("warmup").get_to(s.warmup);
}

}  // namespace s2m
