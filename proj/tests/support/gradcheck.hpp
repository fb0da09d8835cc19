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

// Central finite-difference check of the hand-written backward pass, and
// small training pairs to run it on.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "s2m/model/train.hpp"
#include "s2m/task_gen.hpp"

namespace s2m::fixture {

struct GradCheck {
  double worst = 0.0;
  std::string worst_tensor;
  std::size_t tensors = 0;
  std::size_t entries = 0;
};

/// For every tensor, compares the analytic gradient with central differences
/// on the `picks` entries of largest analytic magnitude plus `picks` random
/// ones. The error of a tensor is ||a - n|| / max(||a||, ||n||, floor) over
/// those entries; the floor keeps tensors whose gradient is zero by
/// construction (key biases) from dividing rounding noise by itself. A small
/// step keeps ReLU kinks from being crossed. With a dropout seed, each loss
/// evaluation replays the same masks.
inline GradCheck gradient_check(const ModelSpec& spec, nn::ModelParams<double>& params,
                                const std::vector<TrainPair>& batch, std::optional<std::uint64_t> dropout_seed,
                                std::mt19937_64& rng, int picks = 4, double eps = 1e-6,
                                double floor = 1e-4) {
  const auto loss = [&](nn::ModelParams<double>* grads) {
    std::mt19937_64 drop(dropout_seed.value_or(0));
    return nn::batch_loss<double>(spec, params, batch, dropout_seed ? &drop : nullptr, grads).total;
  };
  nn::ModelParams<double> grads = nn::zeros_like(params);
  loss(&grads);

  GradCheck out;
  nn::for_each_tensor(
      [&](const std::string& name, nn::Mat<double>& p, const nn::Mat<double>& g) {
        const auto size = static_cast<std::size_t>(p.size());
        std::vector<std::size_t> order(size);
        std::iota(order.begin(), order.end(), std::size_t{0});
        const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(picks), size);
        std::partial_sort(order.begin(), order.begin() + static_cast<long>(top), order.end(),
                          [&](std::size_t a, std::size_t b) { return std::abs(g.data()[a]) > std::abs(g.data()[b]); });
        std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<long>(top));
        std::uniform_int_distribution<std::size_t> any(0, size - 1);
        for (int k = 0; k < picks; ++k) chosen.push_back(any(rng));

        double diff = 0.0, na = 0.0, nn_ = 0.0;
        for (std::size_t idx : chosen) {
          double& w = p.data()[idx];
          const double saved = w;
          w = saved + eps;
          const double up = loss(nullptr);
          w = saved - eps;
          const double down = loss(nullptr);
          w = saved;
          const double numeric = (up - down) / (2.0 * eps);
          const double analytic = g.data()[idx];
          diff += (analytic - numeric) * (analytic - numeric);
          na += analytic * analytic;
          nn_ += numeric * numeric;
        }
        const double err = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn_), floor});
        if (err > out.worst) {
          out.worst = err;
          out.worst_tensor = name;
        }
        ++out.tensors;
        out.entries += chosen.size();
      },
      params, grads);
  return out;
}

/// Random small training pairs. Gap-fill pairs use hand-placed spans so the
/// content can stay far below the 150-frame training budget.
inline std::vector<TrainPair> small_batch(Task task, std::size_t count, std::size_t min_len, std::size_t max_len,
                                          std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<int> key(30, 60);
  std::uniform_int_distribution<int> run(1, 5);
  std::bernoulli_distribution silent(0.15);
  std::vector<TrainPair> out;
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t n = len(rng);
    std::vector<int> content;
    while (content.size() < n) {
      const int k = silent(rng) ? kSilence : key(rng);
      for (int r = run(rng); r > 0 && content.size() < n; --r) content.push_back(k);
    }
    const TokenSeq seq = wrap(content);
    if (task == Task::kDenoise) {
      out.push_back(apply_noise(seq, rng));
      continue;
    }
    GapMask mask;
    const std::size_t third = n / 3;
    std::uniform_int_distribution<std::size_t> a_len(1, std::max<std::size_t>(1, third - 1));
    const std::size_t first = a_len(rng);
    mask.spans.push_back({1, first});
    const std::size_t second = a_len(rng);
    mask.spans.push_back({n - second, second});
    out.push_back(apply_gap_mask(seq, mask));
  }
  return out;
}

}  // namespace s2m::fixture
