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

// Parameter containers. Gradients and optimizer moments reuse the same
// structs, and for_each_tensor walks several of them in lockstep.

#pragma once

#include <cmath>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "s2m/model/spec.hpp"

namespace s2m::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
struct Linear {
  Mat<T> weight;  // in x out
  Mat<T> bias;    // 1 x out
};

template <typename T>
struct LayerNormParams {
  Mat<T> gain;  // 1 x d
  Mat<T> bias;  // 1 x d
};

template <typename T>
struct AttentionParams {
  Linear<T> query, key, value, out;
  Mat<T> relative;  // (2 * rel_window + 1) x d, head h owns columns [h*dh, (h+1)*dh)
};

template <typename T>
struct FeedForwardParams {
  Linear<T> in, out;
};

template <typename T>
struct EncoderLayerParams {
  LayerNormParams<T> norm1;
  AttentionParams<T> self_attn;
  LayerNormParams<T> norm2;
  FeedForwardParams<T> ff;
};

template <typename T>
struct DecoderLayerParams {
  LayerNormParams<T> norm1;
  AttentionParams<T> self_attn;
  LayerNormParams<T> norm2;
  AttentionParams<T> cross_attn;
  LayerNormParams<T> norm3;
  FeedForwardParams<T> ff;
};

template <typename T>
struct ModelParams {
  Mat<T> encoder_embedding;  // vocab x d
  Mat<T> decoder_embedding;  // vocab x d
  std::vector<EncoderLayerParams<T>> encoder;
  LayerNormParams<T> encoder_norm;
  std::vector<DecoderLayerParams<T>> decoder;
  LayerNormParams<T> decoder_norm;
  Linear<T> pitch_head;  // d x 89
  Linear<T> count_head;  // d x 1, empty for the denoiser
};

namespace visit_detail {

template <typename F, typename... P>
void linear(F& f, const std::string& name, P&... p) {
  f(name + ".weight", p.weight...);
  f(name + ".bias", p.bias...);
}

template <typename F, typename... P>
void norm(F& f, const std::string& name, P&... p) {
  f(name + ".gain", p.gain...);
  f(name + ".bias", p.bias...);
}

template <typename F, typename... P>
void attention(F& f, const std::string& name, P&... p) {
  linear(f, name + ".query", p.query...);
  linear(f, name + ".key", p.key...);
  linear(f, name + ".value", p.value...);
  linear(f, name + ".out", p.out...);
  f(name + ".relative", p.relative...);
}

template <typename F, typename... P>
void feed_forward(F& f, const std::string& name, P&... p) {
  linear(f, name + ".in", p.in...);
  linear(f, name + ".out", p.out...);
}

template <typename First, typename... Rest>
First& first(First& a, Rest&...) {
  return a;
}

}  // namespace visit_detail

/// Calls f(name, tensor_of_p1, tensor_of_p2, ...) for every parameter tensor,
/// in a fixed order. All arguments must share one structure.
template <typename F, typename... P>
void for_each_tensor(F&& f, P&... p) {
  namespace v = visit_detail;
  auto& head = v::first(p...);
  f(std::string("encoder_embedding"), p.encoder_embedding...);
  f(std::string("decoder_embedding"), p.decoder_embedding...);
  for (std::size_t i = 0; i < head.encoder.size(); ++i) {
    const std::string pre = "encoder." + std::to_string(i);
    v::norm(f, pre + ".norm1", p.encoder[i].norm1...);
    v::attention(f, pre + ".self_attn", p.encoder[i].self_attn...);
    v::norm(f, pre + ".norm2", p.encoder[i].norm2...);
    v::feed_forward(f, pre + ".ff", p.encoder[i].ff...);
  }
  v::norm(f, "encoder_norm", p.encoder_norm...);
  for (std::size_t i = 0; i < head.decoder.size(); ++i) {
    const std::string pre = "decoder." + std::to_string(i);
    v::norm(f, pre + ".norm1", p.decoder[i].norm1...);
    v::attention(f, pre + ".self_attn", p.decoder[i].self_attn...);
    v::norm(f, pre + ".norm2", p.decoder[i].norm2...);
    v::attention(f, pre + ".cross_attn", p.decoder[i].cross_attn...);
    v::norm(f, pre + ".norm3", p.decoder[i].norm3...);
    v::feed_forward(f, pre + ".ff", p.decoder[i].ff...);
  }
  v::norm(f, "decoder_norm", p.decoder_norm...);
  v::linear(f, "pitch_head", p.pitch_head...);
  if (head.count_head.weight.size() > 0) v::linear(f, "count_head", p.count_head...);
}

namespace init_detail {

template <typename T>
Mat<T> uniform(int rows, int cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
  return m;
}

template <typename T>
Mat<T> normal(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(n(rng));
  return m;
}

template <typename T>
Linear<T> linear(int in, int out, std::mt19937_64& rng) {
  return {uniform<T>(in, out, std::sqrt(6.0 / (in + out)), rng), Mat<T>::Zero(1, out)};
}

template <typename T>
LayerNormParams<T> norm(int d) {
  return {Mat<T>::Ones(1, d), Mat<T>::Zero(1, d)};
}

template <typename T>
AttentionParams<T> attention(const ModelSpec& s, std::mt19937_64& rng) {
  AttentionParams<T> a;
  a.query = linear<T>(s.d_model, s.d_model, rng);
  a.key = linear<T>(s.d_model, s.d_model, rng);
  a.value = linear<T>(s.d_model, s.d_model, rng);
  a.out = linear<T>(s.d_model, s.d_model, rng);
  a.relative = normal<T>(2 * s.rel_window + 1, s.d_model, 0.5, rng);
  return a;
}

template <typename T>
FeedForwardParams<T> feed_forward(const ModelSpec& s, std::mt19937_64& rng) {
  return {linear<T>(s.d_model, s.d_ff, rng), linear<T>(s.d_ff, s.d_model, rng)};
}

}  // namespace init_detail

template <typename T>
ModelParams<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
  namespace d = init_detail;
  spec.validate();
  std::mt19937_64 rng(seed);
  ModelParams<T> p;
  p.encoder_embedding = d::normal<T>(spec.vocab_size, spec.d_model, 1.0, rng);
  p.decoder_embedding = d::normal<T>(spec.vocab_size, spec.d_model, 1.0, rng);
  for (int i = 0; i < spec.n_layers; ++i) {
    EncoderLayerParams<T> l;
    l.norm1 = d::norm<T>(spec.d_model);
    l.self_attn = d::attention<T>(spec, rng);
    l.norm2 = d::norm<T>(spec.d_model);
    l.ff = d::feed_forward<T>(spec, rng);
    p.encoder.push_back(std::move(l));
  }
  p.encoder_norm = d::norm<T>(spec.d_model);
  for (int i = 0; i < spec.n_layers; ++i) {
    DecoderLayerParams<T> l;
    l.norm1 = d::norm<T>(spec.d_model);
    l.self_attn = d::attention<T>(spec, rng);
    l.norm2 = d::norm<T>(spec.d_model);
    l.cross_attn = d::attention<T>(spec, rng);
    l.norm3 = d::norm<T>(spec.d_model);
    l.ff = d::feed_forward<T>(spec, rng);
    p.decoder.push_back(std::move(l));
  }
  p.decoder_norm = d::norm<T>(spec.d_model);
  p.pitch_head = d::linear<T>(spec.d_model, kPitchClasses, rng);
  if (spec.has_count_head()) p.count_head = d::linear<T>(spec.d_model, 1, rng);
  return p;
}

/// Same structure, every tensor zero.
template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
  ModelParams<T> z = p;
  for_each_tensor([](const std::string&, Mat<T>& m) { m.setZero(); }, z);
  return z;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& src) {
  ModelParams<To> dst;
  dst.encoder.resize(src.encoder.size());
  dst.decoder.resize(src.decoder.size());
  if (src.count_head.weight.size() > 0) dst.count_head.weight.resize(1, 1);  // marks presence
  for_each_tensor([](const std::string&, Mat<To>& d, const Mat<From>& s) { d = s.template cast<To>(); }, dst,
                  src);
  return dst;
}

template <typename T>
std::size_t parameter_count(const ModelParams<T>& p) {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const Mat<T>& m) { n += static_cast<std::size_t>(m.size()); }, p);
  return n;
}

}  // namespace s2m::nn
