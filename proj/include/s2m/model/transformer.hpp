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

// Pre-norm encoder-decoder transformer with learned relative-position
// attention (self- and cross-attention) and no absolute position encoding.
// Outputs per decoder step: logits over the 89 pitch classes and, for the
// gap-fill variant, a sigmoid run-length prediction.

#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "s2m/error.hpp"
#include "s2m/model/layers.hpp"
#include "s2m/model/params.hpp"
#include "s2m/model/spec.hpp"

namespace s2m::nn {

template <typename T>
struct ForwardOutput {
  Mat<T> pitch_logits;  // steps x 89
  Mat<T> count;         // steps x 1 after the sigmoid; empty for the denoiser
};

template <typename T>
struct EncoderLayerCache {
  NormCache<T> norm1, norm2;
  AttentionCache<T> self_attn;
  FeedForwardCache<T> ff;
  Mat<T> drop1, drop2;
};

template <typename T>
struct DecoderLayerCache {
  NormCache<T> norm1, norm2, norm3;
  AttentionCache<T> self_attn, cross_attn;
  FeedForwardCache<T> ff;
  Mat<T> drop1, drop2, drop3;
};

template <typename T>
struct ForwardCache {
  std::vector<int> encoder_tokens, decoder_tokens;
  Mat<T> encoder_embed_drop, decoder_embed_drop;
  std::vector<EncoderLayerCache<T>> encoder;
  NormCache<T> encoder_norm;
  Mat<T> memory;
  std::vector<DecoderLayerCache<T>> decoder;
  NormCache<T> decoder_norm;
  Mat<T> decoder_out;
  Mat<T> count;
};

namespace detail {

inline void check_tokens(const ModelSpec& spec, std::span<const int> tokens, const char* what) {
  if (tokens.empty()) fail(Errc::kShapeMismatch, std::string(what) + " is empty");
  if (tokens.size() > static_cast<std::size_t>(spec.max_len)) {
    fail(Errc::kSequenceTooLong, std::string(what) + " of length " + std::to_string(tokens.size()) +
                                     " exceeds max_len " + std::to_string(spec.max_len));
  }
  for (int t : tokens) {
    if (t < 0 || t >= spec.vocab_size) fail(Errc::kShapeMismatch, std::string(what) + " has an out-of-vocabulary token");
  }
}

template <typename T>
Mat<T> embed(const Mat<T>& table, std::span<const int> tokens) {
  Mat<T> x(static_cast<Eigen::Index>(tokens.size()), table.cols());
  for (std::size_t i = 0; i < tokens.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = table.row(tokens[i]);
  return x;
}

template <typename T>
Mat<T> sigmoid(const Mat<T>& z) {
  return (T(1) / (T(1) + (-z.array()).exp())).matrix();
}

}  // namespace detail

/// Runs the encoder over enc_tokens and returns the normalized memory.
template <typename T>
Mat<T> encode(const ModelSpec& spec, const ModelParams<T>& p, std::span<const int> enc_tokens,
              std::mt19937_64* dropout_rng = nullptr, ForwardCache<T>* cache = nullptr) {
  detail::check_tokens(spec, enc_tokens, "encoder input");
  Mat<T> x = detail::embed(p.encoder_embedding, enc_tokens);
  Mat<T> mask;
  dropout_forward(x, spec.dropout, dropout_rng, mask);
  if (cache) {
    cache->encoder_tokens.assign(enc_tokens.begin(), enc_tokens.end());
    cache->encoder_embed_drop = std::move(mask);
    cache->encoder.resize(p.encoder.size());
  }
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const EncoderLayerParams<T>& lp = p.encoder[l];
    EncoderLayerCache<T> local;
    EncoderLayerCache<T>& c = cache ? cache->encoder[l] : local;
    const bool keep = cache != nullptr;

    const Mat<T> a = layer_norm_forward(lp.norm1, x, keep ? &c.norm1 : nullptr);
    Mat<T> s = attention_forward(lp.self_attn, a, a, spec.n_heads, spec.rel_window, false,
                                 keep ? &c.self_attn : nullptr);
    dropout_forward(s, spec.dropout, dropout_rng, c.drop1);
    x += s;
    const Mat<T> b = layer_norm_forward(lp.norm2, x, keep ? &c.norm2 : nullptr);
    Mat<T> f = feed_forward_forward(lp.ff, b, keep ? &c.ff : nullptr);
    dropout_forward(f, spec.dropout, dropout_rng, c.drop2);
    x += f;
  }
  return layer_norm_forward(p.encoder_norm, x, cache ? &cache->encoder_norm : nullptr);
}

/// Teacher-forced decoder pass over a whole decoder input.
template <typename T>
ForwardOutput<T> decode(const ModelSpec& spec, const ModelParams<T>& p, const Mat<T>& memory,
                        std::span<const int> dec_tokens, std::mt19937_64* dropout_rng = nullptr,
                        ForwardCache<T>* cache = nullptr) {
  detail::check_tokens(spec, dec_tokens, "decoder input");
  Mat<T> x = detail::embed(p.decoder_embedding, dec_tokens);
  Mat<T> mask;
  dropout_forward(x, spec.dropout, dropout_rng, mask);
  if (cache) {
    cache->decoder_tokens.assign(dec_tokens.begin(), dec_tokens.end());
    cache->decoder_embed_drop = std::move(mask);
    cache->decoder.resize(p.decoder.size());
  }
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const DecoderLayerParams<T>& lp = p.decoder[l];
    DecoderLayerCache<T> local;
    DecoderLayerCache<T>& c = cache ? cache->decoder[l] : local;
    const bool keep = cache != nullptr;

    const Mat<T> a = layer_norm_forward(lp.norm1, x, keep ? &c.norm1 : nullptr);
    Mat<T> s = attention_forward(lp.self_attn, a, a, spec.n_heads, spec.rel_window, true,
                                 keep ? &c.self_attn : nullptr);
    dropout_forward(s, spec.dropout, dropout_rng, c.drop1);
    x += s;
    const Mat<T> b = layer_norm_forward(lp.norm2, x, keep ? &c.norm2 : nullptr);
    Mat<T> ca = attention_forward(lp.cross_attn, b, memory, spec.n_heads, spec.rel_window, false,
                                  keep ? &c.cross_attn : nullptr);
    dropout_forward(ca, spec.dropout, dropout_rng, c.drop2);
    x += ca;
    const Mat<T> e = layer_norm_forward(lp.norm3, x, keep ? &c.norm3 : nullptr);
    Mat<T> f = feed_forward_forward(lp.ff, e, keep ? &c.ff : nullptr);
    dropout_forward(f, spec.dropout, dropout_rng, c.drop3);
    x += f;
  }
  Mat<T> y = layer_norm_forward(p.decoder_norm, x, cache ? &cache->decoder_norm : nullptr);
  ForwardOutput<T> out;
  out.pitch_logits = linear_forward(p.pitch_head, y);
  if (spec.has_count_head()) out.count = detail::sigmoid<T>(linear_forward(p.count_head, y));
  if (cache) {
    cache->decoder_out = std::move(y);
    cache->count = out.count;
  }
  return out;
}

/// Full forward pass. A dropout generator switches on training mode; pass a
/// cache to make a backward pass possible.
template <typename T>
ForwardOutput<T> forward(const ModelSpec& spec, const ModelParams<T>& p, std::span<const int> enc_tokens,
                         std::span<const int> dec_tokens, std::mt19937_64* dropout_rng = nullptr,
                         ForwardCache<T>* cache = nullptr) {
  Mat<T> memory = encode(spec, p, enc_tokens, dropout_rng, cache);
  ForwardOutput<T> out = decode(spec, p, memory, dec_tokens, dropout_rng, cache);
  if (cache) cache->memory = std::move(memory);
  return out;
}

/// Backpropagates gradients of the pitch logits and of the count head's
/// pre-sigmoid input (may be empty) through a cached forward pass.
template <typename T>
void backward(const ModelSpec& spec, const ModelParams<T>& p, const ForwardCache<T>& c, const Mat<T>& dlogits,
              const Mat<T>& dcount_logit, ModelParams<T>& g) {
  Mat<T> dy = linear_backward(p.pitch_head, g.pitch_head, c.decoder_out, dlogits);
  if (spec.has_count_head() && dcount_logit.size() > 0) {
    dy += linear_backward(p.count_head, g.count_head, c.decoder_out, dcount_logit);
  }
  Mat<T> dx = layer_norm_backward(p.decoder_norm, g.decoder_norm, c.decoder_norm, dy);
  Mat<T> dmemory = Mat<T>::Zero(c.memory.rows(), c.memory.cols());

  for (std::size_t l = p.decoder.size(); l-- > 0;) {
    const DecoderLayerParams<T>& lp = p.decoder[l];
    DecoderLayerParams<T>& lg = g.decoder[l];
    const DecoderLayerCache<T>& lc = c.decoder[l];

    Mat<T> df = dropout_backward(dx, lc.drop3);
    dx += layer_norm_backward(lp.norm3, lg.norm3, lc.norm3, feed_forward_backward(lp.ff, lg.ff, lc.ff, df));

    Mat<T> dca = dropout_backward(dx, lc.drop2);
    Mat<T> dq, dkv;
    attention_backward(lp.cross_attn, lg.cross_attn, lc.cross_attn, dca, spec.n_heads, spec.rel_window, dq, dkv);
    dmemory += dkv;
    dx += layer_norm_backward(lp.norm2, lg.norm2, lc.norm2, dq);

    Mat<T> ds = dropout_backward(dx, lc.drop1);
    attention_backward(lp.self_attn, lg.self_attn, lc.self_attn, ds, spec.n_heads, spec.rel_window, dq, dkv);
    dx += layer_norm_backward(lp.norm1, lg.norm1, lc.norm1, Mat<T>(dq + dkv));
  }
  dx = dropout_backward(dx, c.decoder_embed_drop);
  for (std::size_t i = 0; i < c.decoder_tokens.size(); ++i) {
    g.decoder_embedding.row(c.decoder_tokens[i]) += dx.row(static_cast<Eigen::Index>(i));
  }

  Mat<T> de = layer_norm_backward(p.encoder_norm, g.encoder_norm, c.encoder_norm, dmemory);
  for (std::size_t l = p.encoder.size(); l-- > 0;) {
    const EncoderLayerParams<T>& lp = p.encoder[l];
    EncoderLayerParams<T>& lg = g.encoder[l];
    const EncoderLayerCache<T>& lc = c.encoder[l];

    Mat<T> df = dropout_backward(de, lc.drop2);
    de += layer_norm_backward(lp.norm2, lg.norm2, lc.norm2, feed_forward_backward(lp.ff, lg.ff, lc.ff, df));

    Mat<T> ds = dropout_backward(de, lc.drop1);
    Mat<T> dq, dkv;
    attention_backward(lp.self_attn, lg.self_attn, lc.self_attn, ds, spec.n_heads, spec.rel_window, dq, dkv);
    de += layer_norm_backward(lp.norm1, lg.norm1, lc.norm1, Mat<T>(dq + dkv));
  }
  de = dropout_backward(de, c.encoder_embed_drop);
  for (std::size_t i = 0; i < c.encoder_tokens.size(); ++i) {
    g.encoder_embedding.row(c.encoder_tokens[i]) += de.row(static_cast<Eigen::Index>(i));
  }
}

/// Step-by-step decoding with cached keys and values; equivalent to the
/// teacher-forced decoder in evaluation mode.
template <typename T>
class IncrementalDecoder {
 public:
  struct Step {
    Eigen::Matrix<T, 1, Eigen::Dynamic> pitch_logits;
    T count = T(0);
  };

  IncrementalDecoder(const ModelSpec& spec, const ModelParams<T>& params, std::span<const int> enc_tokens)
      : spec_(spec), p_(params), memory_(encode(spec, params, enc_tokens)) {
    layers_.resize(p_.decoder.size());
    const Eigen::Index rows = spec_.max_len;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const AttentionParams<T>& cross = p_.decoder[l].cross_attn;
      layers_[l].cross_k = linear_forward(cross.key, memory_);
      layers_[l].cross_v = linear_forward(cross.value, memory_);
      layers_[l].self_k.resize(rows, spec_.d_model);
      layers_[l].self_v.resize(rows, spec_.d_model);
    }
  }

  int position() const { return position_; }
  const Mat<T>& memory() const { return memory_; }

  Step step(int token) {
    if (position_ >= spec_.max_len) fail(Errc::kSequenceTooLong, "decoder exceeded max_len");
    if (token < 0 || token >= spec_.vocab_size) fail(Errc::kShapeMismatch, "decoder token out of vocabulary");
    const int t = position_;
    Mat<T> x = p_.decoder_embedding.row(token);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const DecoderLayerParams<T>& lp = p_.decoder[l];
      LayerState& st = layers_[l];

      const Mat<T> a = layer_norm_forward<T>(lp.norm1, x, nullptr);
      st.self_k.row(t) = linear_forward(lp.self_attn.key, a);
      st.self_v.row(t) = linear_forward(lp.self_attn.value, a);
      x += attend(lp.self_attn, linear_forward(lp.self_attn.query, a), st.self_k.topRows(t + 1),
                  st.self_v.topRows(t + 1), t);
      const Mat<T> b = layer_norm_forward<T>(lp.norm2, x, nullptr);
      x += attend(lp.cross_attn, linear_forward(lp.cross_attn.query, b), st.cross_k, st.cross_v, t);
      const Mat<T> e = layer_norm_forward<T>(lp.norm3, x, nullptr);
      x += feed_forward_forward<T>(lp.ff, e, nullptr);
    }
    const Mat<T> y = layer_norm_forward<T>(p_.decoder_norm, x, nullptr);
    Step out;
    out.pitch_logits = linear_forward(p_.pitch_head, y);
    if (spec_.has_count_head()) out.count = detail::sigmoid<T>(linear_forward(p_.count_head, y))(0, 0);
    ++position_;
    return out;
  }

 private:
  struct LayerState {
    Mat<T> self_k, self_v, cross_k, cross_v;
  };

  Mat<T> attend(const AttentionParams<T>& ap, const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int qpos) const {
    const int heads = spec_.n_heads;
    const Eigen::Index dh = q.cols() / heads;
    Mat<T> context(1, q.cols());
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c0 = h * dh;
      Mat<T> s = head_logits<T>(q.middleCols(c0, dh), k.middleCols(c0, dh), ap.relative.middleCols(c0, dh),
                                spec_.rel_window, false, qpos);
      softmax_rows(s);
      context.middleCols(c0, dh).noalias() = s * v.middleCols(c0, dh);
    }
    return linear_forward(ap.out, context);
  }

  ModelSpec spec_;
  const ModelParams<T>& p_;
  Mat<T> memory_;
  std::vector<LayerState> layers_;
  int position_ = 0;
};

}  // namespace s2m::nn
