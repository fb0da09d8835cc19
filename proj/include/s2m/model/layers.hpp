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

// Forward and backward passes of the transformer building blocks. Matrices
// hold one sequence position per row. Backward functions accumulate into the
// gradient structs and return the gradient of their input.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "s2m/model/params.hpp"

namespace s2m::nn {

inline constexpr double kNormEpsilon = 1e-5;

/// Column of the relative embedding table used between a query at
/// query_pos and a key at key_pos; distances beyond the window share the
/// boundary embedding.
inline int relative_bucket(int query_pos, int key_pos, int window) {
  return std::clamp(key_pos - query_pos, -window, window) + window;
}

// --- linear ---------------------------------------------------------------

template <typename T>
Mat<T> linear_forward(const Linear<T>& p, const Mat<T>& x) {
  Mat<T> y = x * p.weight;
  y.rowwise() += p.bias.row(0);
  return y;
}

template <typename T>
Mat<T> linear_backward(const Linear<T>& p, Linear<T>& g, const Mat<T>& x, const Mat<T>& dy) {
  g.weight.noalias() += x.transpose() * dy;
  g.bias += dy.colwise().sum();
  return dy * p.weight.transpose();
}

// --- layer norm -----------------------------------------------------------

template <typename T>
struct NormCache {
  Mat<T> normalized;
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
};

template <typename T>
Mat<T> layer_norm_forward(const LayerNormParams<T>& p, const Mat<T>& x, NormCache<T>* cache) {
  const auto d = static_cast<T>(x.cols());
  Mat<T> xhat(x.rows(), x.cols());
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const T mean = x.row(i).sum() / d;
    const auto centered = (x.row(i).array() - mean).eval();
    const T var = centered.square().sum() / d;
    inv_std(i) = T(1) / std::sqrt(var + static_cast<T>(kNormEpsilon));
    xhat.row(i) = centered * inv_std(i);
  }
  Mat<T> y = (xhat.array().rowwise() * p.gain.row(0).array()).matrix();
  y.rowwise() += p.bias.row(0);
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const LayerNormParams<T>& p, LayerNormParams<T>& g, const NormCache<T>& c,
                           const Mat<T>& dy) {
  g.gain += (dy.array() * c.normalized.array()).matrix().colwise().sum();
  g.bias += dy.colwise().sum();
  const Mat<T> dxhat = (dy.array().rowwise() * p.gain.row(0).array()).matrix();
  const auto d = static_cast<T>(dy.cols());
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T mean_d = dxhat.row(i).sum() / d;
    const T mean_dx = dxhat.row(i).dot(c.normalized.row(i)) / d;
    dx.row(i) = c.inv_std(i) * (dxhat.row(i).array() - mean_d - c.normalized.row(i).array() * mean_dx).matrix();
  }
  return dx;
}

// --- dropout --------------------------------------------------------------

/// Inverted dropout. With no generator (evaluation) the mask stays empty and
/// x is untouched.
template <typename T>
void dropout_forward(Mat<T>& x, double rate, std::mt19937_64* rng, Mat<T>& mask) {
  if (!rng || rate <= 0.0) {
    mask.resize(0, 0);
    return;
  }
  std::bernoulli_distribution keep(1.0 - rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  mask.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? scale : T(0);
  x.array() *= mask.array();
}

template <typename T>
Mat<T> dropout_backward(const Mat<T>& dy, const Mat<T>& mask) {
  if (mask.size() == 0) return dy;
  return (dy.array() * mask.array()).matrix();
}

// --- attention ------------------------------------------------------------

/// Scaled attention logits of one head, content term plus relative term.
/// Query row i sits at position query_offset + i; key row j at position j.
/// Causal masking hides keys after the query.
template <typename T>
Mat<T> head_logits(const Mat<T>& qh, const Mat<T>& kh, const Mat<T>& eh, int window, bool causal,
                   int query_offset = 0) {
  const T scale = T(1) / std::sqrt(static_cast<T>(qh.cols()));
  Mat<T> s = qh * kh.transpose();
  const Mat<T> qe = qh * eh.transpose();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const int qpos = query_offset + static_cast<int>(i);
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      s(i, j) = (s(i, j) + qe(i, relative_bucket(qpos, static_cast<int>(j), window))) * scale;
      if (causal && j > qpos) s(i, j) = -std::numeric_limits<T>::infinity();
    }
  }
  return s;
}

template <typename T>
void softmax_rows(Mat<T>& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const T m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

template <typename T>
struct AttentionCache {
  Mat<T> xq, xkv;
  Mat<T> q, k, v;
  std::vector<Mat<T>> probs;  // per head
  Mat<T> context;
};

template <typename T>
Mat<T> attention_forward(const AttentionParams<T>& p, const Mat<T>& xq, const Mat<T>& xkv, int heads, int window,
                         bool causal, AttentionCache<T>* cache) {
  const Eigen::Index dh = xq.cols() / heads;
  Mat<T> q = linear_forward(p.query, xq);
  Mat<T> k = linear_forward(p.key, xkv);
  Mat<T> v = linear_forward(p.value, xkv);
  Mat<T> context(xq.rows(), xq.cols());
  std::vector<Mat<T>> probs;
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * dh;
    Mat<T> s = head_logits<T>(q.middleCols(c0, dh), k.middleCols(c0, dh), p.relative.middleCols(c0, dh), window,
                              causal);
    softmax_rows(s);
    context.middleCols(c0, dh).noalias() = s * v.middleCols(c0, dh);
    if (cache) probs.push_back(std::move(s));
  }
  Mat<T> out = linear_forward(p.out, context);
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
  }
  return out;
}

/// Writes the gradients of the query-side and key/value-side inputs.
template <typename T>
void attention_backward(const AttentionParams<T>& p, AttentionParams<T>& g, const AttentionCache<T>& c,
                        const Mat<T>& dout, int heads, int window, Mat<T>& dxq, Mat<T>& dxkv) {
  const Eigen::Index dh = c.q.cols() / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Mat<T> dcontext = linear_backward(p.out, g.out, c.context, dout);
  Mat<T> dq(c.q.rows(), c.q.cols());
  Mat<T> dk(c.k.rows(), c.k.cols());
  Mat<T> dv(c.v.rows(), c.v.cols());
  const Eigen::Index buckets = p.relative.rows();
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * dh;
    const Mat<T>& prob = c.probs[static_cast<std::size_t>(h)];
    const auto qh = c.q.middleCols(c0, dh);
    const auto kh = c.k.middleCols(c0, dh);
    const auto vh = c.v.middleCols(c0, dh);
    const auto eh = p.relative.middleCols(c0, dh);
    const auto dch = dcontext.middleCols(c0, dh);

    dv.middleCols(c0, dh).noalias() = prob.transpose() * dch;
    const Mat<T> dprob = dch * vh.transpose();
    Mat<T> ds = prob.cwiseProduct(dprob);
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
      const T row = ds.row(i).sum();
      ds.row(i) -= prob.row(i) * row;
    }
    ds *= scale;

    Mat<T> dqe = Mat<T>::Zero(ds.rows(), buckets);
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
      for (Eigen::Index j = 0; j < ds.cols(); ++j) {
        dqe(i, relative_bucket(static_cast<int>(i), static_cast<int>(j), window)) += ds(i, j);
      }
    }
    dq.middleCols(c0, dh).noalias() = ds * kh + dqe * eh;
    dk.middleCols(c0, dh).noalias() = ds.transpose() * qh;
    g.relative.middleCols(c0, dh).noalias() += dqe.transpose() * qh;
  }
  dxq = linear_backward(p.query, g.query, c.xq, dq);
  dxkv = linear_backward(p.key, g.key, c.xkv, dk);
  dxkv += linear_backward(p.value, g.value, c.xkv, dv);
}

// --- feed-forward ---------------------------------------------------------

template <typename T>
struct FeedForwardCache {
  Mat<T> x;
  Mat<T> hidden;  // post-ReLU
};

template <typename T>
Mat<T> feed_forward_forward(const FeedForwardParams<T>& p, const Mat<T>& x, FeedForwardCache<T>* cache) {
  Mat<T> hidden = linear_forward(p.in, x).cwiseMax(T(0));
  Mat<T> y = linear_forward(p.out, hidden);
  if (cache) {
    cache->x = x;
    cache->hidden = std::move(hidden);
  }
  return y;
}

template <typename T>
Mat<T> feed_forward_backward(const FeedForwardParams<T>& p, FeedForwardParams<T>& g, const FeedForwardCache<T>& c,
                             const Mat<T>& dy) {
  Mat<T> dhidden = linear_backward(p.out, g.out, c.hidden, dy);
  dhidden = (c.hidden.array() > T(0)).select(dhidden, T(0));
  return linear_backward(p.in, g.in, c.x, dhidden);
}

}  // namespace s2m::nn
