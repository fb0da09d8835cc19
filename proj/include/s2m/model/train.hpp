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

// Losses, Adam with the inverse-square-root warmup schedule, and the
// single-writer trainer.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "s2m/error.hpp"
#include "s2m/model/params.hpp"
#include "s2m/model/spec.hpp"
#include "s2m/model/transformer.hpp"
#include "s2m/task_gen.hpp"

namespace s2m::nn {

struct LossValue {
  double total = 0.0;
  double nll = 0.0;
  double mse = 0.0;
  std::size_t steps = 0;
};

/// Teacher-forcing decoder input: START followed by the targets shifted right.
inline std::vector<int> decoder_input(const TrainPair& pair) {
  std::vector<int> in;
  in.reserve(pair.target_pitch.size());
  in.push_back(kStart);
  for (std::size_t i = 0; i + 1 < pair.target_pitch.size(); ++i) in.push_back(pair.target_pitch[i]);
  return in;
}

/// Loss of one pair. GAPFILL adds the count MSE (1:1) to the pitch NLL; both
/// are means over the steps selected by loss_mask. When dlogits is given the
/// gradients w.r.t. the logits and the count head's pre-sigmoid input are
/// written, scaled by weight.
template <typename T>
LossValue pair_loss(Task variant, const Mat<T>& logits, const Mat<T>& count, const TrainPair& pair,
                    Mat<T>* dlogits = nullptr, Mat<T>* dcount_logit = nullptr, double weight = 1.0) {
  const auto n = static_cast<Eigen::Index>(pair.target_pitch.size());
  if (logits.rows() != n || logits.cols() != kPitchClasses || pair.loss_mask.size() != pair.target_pitch.size()) {
    fail(Errc::kShapeMismatch, "logits do not match the target length");
  }
  const bool with_count = variant == Task::kGapFill;
  if (with_count && (count.rows() != n || pair.target_count.size() != pair.target_pitch.size())) {
    fail(Errc::kShapeMismatch, "count prediction does not match the target length");
  }
  std::size_t active = 0;
  for (std::uint8_t m : pair.loss_mask) active += m ? 1 : 0;

  LossValue out;
  out.steps = active;
  if (dlogits) dlogits->setZero(n, logits.cols());
  if (dcount_logit && with_count) dcount_logit->setZero(n, 1);
  if (active == 0) return out;
  const double inv = 1.0 / static_cast<double>(active);

  for (Eigen::Index i = 0; i < n; ++i) {
    if (!pair.loss_mask[static_cast<std::size_t>(i)]) continue;
    const int target = pair.target_pitch[static_cast<std::size_t>(i)];
    if (target < 0 || target >= kPitchClasses) fail(Errc::kShapeMismatch, "target pitch outside the 89 classes");
    const auto row = logits.row(i).template cast<double>();
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    out.nll += (lse - row(target)) * inv;
    if (dlogits) {
      auto d = dlogits->row(i);
      for (Eigen::Index c = 0; c < logits.cols(); ++c) d(c) = static_cast<T>(std::exp(row(c) - lse) * inv * weight);
      d(target) -= static_cast<T>(inv * weight);
    }
    if (with_count) {
      const double s = static_cast<double>(count(i, 0));
      const double y = scale_count(pair.target_count[static_cast<std::size_t>(i)]);
      out.mse += (s - y) * (s - y) * inv;
      if (dcount_logit) (*dcount_logit)(i, 0) = static_cast<T>(2.0 * (s - y) * s * (1.0 - s) * inv * weight);
    }
  }
  out.total = out.nll + out.mse;
  return out;
}

/// Mean loss over the pairs of a batch that have at least one target step.
/// Accumulates parameter gradients into grads when given.
template <typename T>
LossValue batch_loss(const ModelSpec& spec, const ModelParams<T>& params, const std::vector<TrainPair>& batch,
                     std::mt19937_64* dropout_rng = nullptr, ModelParams<T>* grads = nullptr) {
  std::size_t used = 0;
  for (const TrainPair& p : batch) {
    if (p.task != spec.variant) fail(Errc::kModelVariantMismatch, "pair task does not match the model variant");
    if (!p.target_pitch.empty()) ++used;
  }
  LossValue total;
  if (used == 0) return total;
  const double w = 1.0 / static_cast<double>(used);
  for (const TrainPair& p : batch) {
    if (p.target_pitch.empty()) continue;
    const std::vector<int> dec = decoder_input(p);
    ForwardCache<T> cache;
    const ForwardOutput<T> out =
        forward(spec, params, std::span<const int>(p.encoder_input.tokens), dec, dropout_rng, grads ? &cache : nullptr);
    Mat<T> dlogits, dcount;
    const LossValue l =
        pair_loss(spec.variant, out.pitch_logits, out.count, p, grads ? &dlogits : nullptr, grads ? &dcount : nullptr, w);
    if (grads) backward(spec, params, cache, dlogits, dcount, *grads);
    total.total += l.total * w;
    total.nll += l.nll * w;
    total.mse += l.mse * w;
    total.steps += l.steps;
  }
  return total;
}

/// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5), step counted from 1.
inline double learning_rate(const ModelSpec& spec, std::int64_t step) {
  const double s = static_cast<double>(std::max<std::int64_t>(step, 1));
  return std::pow(spec.d_model, -0.5) * std::min(std::pow(s, -0.5), s * std::pow(spec.warmup, -1.5));
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
};

template <typename T>
struct TrainState {
  ModelSpec spec;
  ModelParams<T> params;
  ModelParams<T> adam_m;
  ModelParams<T> adam_v;
  std::int64_t step = 0;
};

template <typename T>
TrainState<T> fresh_state(const ModelSpec& spec, std::uint64_t seed) {
  TrainState<T> s;
  s.spec = spec;
  s.params = init_params<T>(spec, seed);
  s.adam_m = zeros_like(s.params);
  s.adam_v = zeros_like(s.params);
  return s;
}

/// Owns the training state and the dropout generator. Identical seeds and
/// batches give identical parameters.
template <typename T>
class Trainer {
 public:
  Trainer(const ModelSpec& spec, std::uint64_t seed, AdamConfig adam = {})
      : state_(fresh_state<T>(spec, seed)), adam_(adam), dropout_rng_(seed ^ 0x5eedd20f0a11ULL) {}

  Trainer(TrainState<T> state, std::uint64_t seed, AdamConfig adam = {})
      : state_(std::move(state)), adam_(adam), dropout_rng_(seed ^ 0x5eedd20f0a11ULL) {
    state_.spec.validate();
  }

  const TrainState<T>& state() const { return state_; }
  TrainState<T>& state() { return state_; }
  const ModelSpec& spec() const { return state_.spec; }
  const ModelParams<T>& params() const { return state_.params; }

  /// One Adam update on the batch in training mode; returns the batch loss
  /// measured before the update.
  LossValue step(const std::vector<TrainPair>& batch) {
    ModelParams<T> grads = zeros_like(state_.params);
    const LossValue loss = batch_loss(state_.spec, state_.params, batch, &dropout_rng_, &grads);
    if (!std::isfinite(loss.total)) fail(Errc::kNonFiniteGradient, "loss is not finite at step " + step_label());
    for_each_tensor(
        [&](const std::string& name, const Mat<T>& g) {
          if (!g.allFinite()) fail(Errc::kNonFiniteGradient, "gradient of " + name + " is not finite at step " + step_label());
        },
        grads);

    const std::int64_t t = ++state_.step;
    const double lr = learning_rate(state_.spec, t);
    const double c1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(adam_.beta1);
    const T b2 = static_cast<T>(adam_.beta2);
    const T step_size = static_cast<T>(lr / c1);
    const T v_scale = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(adam_.epsilon);
    for_each_tensor(
        [&](const std::string& name, Mat<T>& p, const Mat<T>& g, Mat<T>& m, Mat<T>& v) {
          m = b1 * m + (T(1) - b1) * g;
          v = b2 * v + (T(1) - b2) * g.cwiseAbs2();
          p.array() -= step_size * m.array() / ((v.array() * v_scale).sqrt() + eps);
          if (!p.allFinite()) fail(Errc::kNonFiniteGradient, "parameter " + name + " became non-finite");
        },
        state_.params, grads, state_.adam_m, state_.adam_v);
    return loss;
  }

  /// Loss in evaluation mode (no dropout, no update).
  LossValue evaluate(const std::vector<TrainPair>& batch) const {
    return batch_loss<T>(state_.spec, state_.params, batch);
  }

 private:
  std::string step_label() const { return std::to_string(state_.step + 1); }

  TrainState<T> state_;
  AdamConfig adam_;
  std::mt19937_64 dropout_rng_;
};

}  // namespace s2m::nn
