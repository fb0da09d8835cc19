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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <vector>

#include "s2m/model/checkpoint.hpp"
#include "s2m/model/train.hpp"
#include "s2m/model/transformer.hpp"
#include "s2m/toy_corpus.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace s2m {
namespace {

using nn::Mat;

ModelSpec tiny(Task t) {
  ModelSpec s = desk_preset(t);
  s.d_model = 16;
  s.n_heads = 2;
  s.d_ff = 24;
  s.rel_window = 4;
  s.max_len = 80;
  return s;
}

template <typename T>
bool same(const nn::ModelParams<T>& a, const nn::ModelParams<T>& b) {
  bool eq = true;
  nn::for_each_tensor([&](const std::string&, const Mat<T>& x, const Mat<T>& y) { eq = eq && x == y; }, a, b);
  return eq;
}

TEST(Spec, PresetsAndValidation) {
  const ModelSpec big = paper_preset(Task::kGapFill);
  EXPECT_EQ(big.d_model, 512);
  EXPECT_EQ(big.n_layers, 6);
  EXPECT_EQ(big.n_heads, 8);
  EXPECT_EQ(big.d_ff, 1024);
  EXPECT_EQ(big.rel_window, 128);
  const ModelSpec small = paper_preset(Task::kDenoise);
  EXPECT_EQ(small.d_model, 128);
  EXPECT_EQ(small.n_layers, 2);
  ModelSpec bad = desk_preset(Task::kDenoise);
  bad.n_heads = 3;
  EXPECT_THROW(bad.validate(), Error);
  const nlohmann::json j = desk_preset(Task::kGapFill);
  EXPECT_EQ(j.get<ModelSpec>(), desk_preset(Task::kGapFill));
}

TEST(Params, CountHeadOnlyForGapFill) {
  EXPECT_GT(nn::init_params<float>(tiny(Task::kGapFill), 1).count_head.weight.size(), 0);
  EXPECT_EQ(nn::init_params<float>(tiny(Task::kDenoise), 1).count_head.weight.size(), 0);
  EXPECT_TRUE(same(nn::init_params<float>(tiny(Task::kGapFill), 4), nn::init_params<float>(tiny(Task::kGapFill), 4)));
}

TEST(Layers, LayerNormRowsAreStandardized) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(3.0, 2.0);
  Mat<double> x(5, 16);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  nn::LayerNormParams<double> p{Mat<double>::Ones(1, 16), Mat<double>::Zero(1, 16)};
  const Mat<double> y = nn::layer_norm_forward<double>(p, x, nullptr);
  for (Eigen::Index i = 0; i < 5; ++i) {
    EXPECT_NEAR(y.row(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR(y.row(i).squaredNorm() / 16.0, 1.0, 1e-3);
  }
}

TEST(Layers, SoftmaxRowsSumToOne) {
  Mat<double> s(3, 4);
  s << 1, 2, 3, 4, -1000, 0, 1000, 2, 0, 0, 0, 0;
  nn::softmax_rows(s);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(s.row(i).sum(), 1.0, 1e-12);
  EXPECT_NEAR(s(2, 0), 0.25, 1e-15);
}

TEST(Layers, RelativeBucketClips) {
  EXPECT_EQ(nn::relative_bucket(10, 10, 3), 3);
  EXPECT_EQ(nn::relative_bucket(10, 12, 3), 5);
  EXPECT_EQ(nn::relative_bucket(10, 40, 3), 6);
  EXPECT_EQ(nn::relative_bucket(10, 0, 3), 0);
}

TEST(Forward, ShapesAndNormalization) {
  for (Task t : {Task::kGapFill, Task::kDenoise}) {
    const ModelSpec spec = tiny(t);
    const auto p = nn::init_params<float>(spec, 2);
    const std::vector<int> enc = {kStart, 10, 11, kGap, kGap, 0, kEnd};
    const std::vector<int> dec = {kStart, 5, 6};
    const auto out = nn::forward<float>(spec, p, enc, dec);
    ASSERT_EQ(out.pitch_logits.rows(), 3);
    ASSERT_EQ(out.pitch_logits.cols(), kPitchClasses);
    EXPECT_TRUE(out.pitch_logits.allFinite());
    EXPECT_EQ(out.count.size(), t == Task::kGapFill ? 3 : 0);
    for (Eigen::Index i = 0; i < 3; ++i) {
      Mat<double> row = out.pitch_logits.row(i).cast<double>();
      nn::softmax_rows(row);
      EXPECT_NEAR(row.sum(), 1.0, 1e-6);
    }
    if (t == Task::kGapFill) {
      EXPECT_TRUE((out.count.array() > 0.0f).all() && (out.count.array() < 1.0f).all());
    }
  }
}

TEST(Forward, InputValidation) {
  const ModelSpec spec = tiny(Task::kDenoise);
  const auto p = nn::init_params<float>(spec, 2);
  const std::vector<int> ok = {kStart, kEnd};
  const std::vector<int> long_seq(81, 3);
  const std::vector<int> oov = {kStart, 92};
  auto code = [&](std::vector<int> enc, std::vector<int> dec) {
    try {
      nn::forward<float>(spec, p, enc, dec);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::kIo;
  };
  EXPECT_EQ(code(long_seq, ok), Errc::kSequenceTooLong);
  EXPECT_EQ(code(ok, long_seq), Errc::kSequenceTooLong);
  EXPECT_EQ(code(oov, ok), Errc::kShapeMismatch);
  EXPECT_EQ(code({}, ok), Errc::kShapeMismatch);
}

TEST(Forward, DecoderIsCausal) {
  const ModelSpec spec = tiny(Task::kGapFill);
  const auto p = nn::init_params<double>(spec, 3);
  const std::vector<int> enc = {kStart, 20, kGap, kGap, 22, kEnd};
  std::vector<int> dec = {kStart, 20, 21, 21, 0};
  const auto a = nn::forward<double>(spec, p, enc, dec);
  dec[3] = 40;
  const auto b = nn::forward<double>(spec, p, enc, dec);
  EXPECT_EQ(a.pitch_logits.topRows(3), b.pitch_logits.topRows(3));
  EXPECT_NE(a.pitch_logits.row(3), b.pitch_logits.row(3));
}

TEST(Forward, ZeroRelativeEmbeddingsMatchContentOnlyReference) {
  const ModelSpec spec = tiny(Task::kGapFill);
  auto p = nn::init_params<double>(spec, 5);
  for (auto& l : p.encoder) l.self_attn.relative.setZero();
  for (auto& l : p.decoder) {
    l.self_attn.relative.setZero();
    l.cross_attn.relative.setZero();
  }
  const std::vector<int> enc = {kStart, 1, 2, 3, kGap, kGap, 88, 0, kEnd};
  const std::vector<int> dec = {kStart, 3, 3, 4};
  Eigen::VectorXd count;
  const Eigen::MatrixXd ref = oracle::content_only_forward(spec, p, enc, dec, &count);
  const auto out = nn::forward<double>(spec, p, enc, dec);
  EXPECT_LT((ref - out.pitch_logits).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((count - out.count.col(0)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(IncrementalDecoder, MatchesFullForward) {
  for (Task t : {Task::kGapFill, Task::kDenoise}) {
    const ModelSpec spec = tiny(t);
    const auto p = nn::init_params<double>(spec, 6);
    std::vector<int> enc = {kStart};
    for (int i = 0; i < 20; ++i) enc.push_back(i % 3 == 0 ? kGap : 30 + i);
    enc.push_back(kEnd);
    std::vector<int> dec = {kStart};
    for (int i = 0; i < 14; ++i) dec.push_back(25 + (i * 7) % 11);
    const auto full = nn::forward<double>(spec, p, enc, dec);
    nn::IncrementalDecoder<double> inc(spec, p, enc);
    for (std::size_t i = 0; i < dec.size(); ++i) {
      const auto s = inc.step(dec[i]);
      const auto r = static_cast<Eigen::Index>(i);
      EXPECT_LT((s.pitch_logits - full.pitch_logits.row(r)).cwiseAbs().maxCoeff(), 1e-10) << i;
      if (t == Task::kGapFill) {
        EXPECT_NEAR(s.count, full.count(r, 0), 1e-12);
      }
    }
  }
}

TEST(Loss, UniformLogits) {
  TrainPair p;
  p.task = Task::kDenoise;
  p.target_pitch = {0, 5, 88};
  p.loss_mask = {1, 1, 1};
  const auto l = nn::pair_loss<double>(Task::kDenoise, Mat<double>::Zero(3, kPitchClasses), {}, p);
  EXPECT_NEAR(l.nll, std::log(89.0), 1e-12);
  EXPECT_EQ(l.mse, 0.0);
}

TEST(Loss, PerfectPrediction) {
  TrainPair p;
  p.task = Task::kGapFill;
  p.target_pitch = {4, 7};
  p.target_count = {500, 1};
  p.loss_mask = {1, 1};
  Mat<double> logits = Mat<double>::Zero(2, kPitchClasses);
  logits(0, 4) = 60.0;
  logits(1, 7) = 60.0;
  Mat<double> count(2, 1);
  count << 1.0, 0.0;
  const auto l = nn::pair_loss<double>(Task::kGapFill, logits, count, p);
  EXPECT_LT(l.nll, 1e-20);
  EXPECT_EQ(l.mse, 0.0);
}

TEST(Loss, MaskSelectsSteps) {
  TrainPair p;
  p.task = Task::kDenoise;
  p.target_pitch = {1, 2};
  p.loss_mask = {1, 0};
  Mat<double> logits = Mat<double>::Zero(2, kPitchClasses);
  logits(1, 50) = 100.0;  // ignored step is badly wrong
  const auto l = nn::pair_loss<double>(Task::kDenoise, logits, {}, p);
  EXPECT_NEAR(l.nll, std::log(89.0), 1e-12);
  EXPECT_EQ(l.steps, 1u);
}

TEST(Loss, BatchRejectsOtherVariant) {
  const ModelSpec spec = tiny(Task::kGapFill);
  const auto p = nn::init_params<double>(spec, 1);
  std::mt19937_64 rng(1);
  const auto batch = fixture::small_batch(Task::kDenoise, 1, 10, 12, rng);
  try {
    nn::batch_loss<double>(spec, p, batch);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kModelVariantMismatch);
  }
}

TEST(Loss, BatchOrderDoesNotMatter) {
  const ModelSpec spec = tiny(Task::kGapFill);
  const auto p = nn::init_params<double>(spec, 1);
  std::mt19937_64 rng(2);
  auto batch = fixture::small_batch(Task::kGapFill, 4, 12, 30, rng);
  const double a = nn::batch_loss<double>(spec, p, batch).total;
  std::reverse(batch.begin(), batch.end());
  EXPECT_NEAR(nn::batch_loss<double>(spec, p, batch).total, a, 1e-12);
}

TEST(Gradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (Task t : {Task::kGapFill, Task::kDenoise}) {
    const ModelSpec spec = tiny(t);
    auto p = nn::init_params<double>(spec, 7);
    const auto batch = fixture::small_batch(t, 2, 10, 16, rng);
    EXPECT_LE(fixture::gradient_check(spec, p, batch, std::nullopt, rng).worst, 1e-4);
    EXPECT_LE(fixture::gradient_check(spec, p, batch, 99u, rng).worst, 1e-4);
  }
}

TEST(LearningRate, Schedule) {
  const ModelSpec s = desk_preset(Task::kDenoise);
  EXPECT_NEAR(nn::learning_rate(s, 1), std::pow(64.0, -0.5) * std::pow(400.0, -1.5), 1e-15);
  EXPECT_NEAR(nn::learning_rate(s, 400), std::pow(64.0, -0.5) / 20.0, 1e-15);
  EXPECT_NEAR(nn::learning_rate(s, 1600), std::pow(64.0, -0.5) / 40.0, 1e-15);
  EXPECT_LT(nn::learning_rate(s, 100), nn::learning_rate(s, 400));
  EXPECT_GT(nn::learning_rate(s, 400), nn::learning_rate(s, 800));
}

TEST(Trainer, DeterministicForSeedAndData) {
  const ModelSpec spec = tiny(Task::kGapFill);
  std::mt19937_64 rng(4);
  const auto batch = fixture::small_batch(Task::kGapFill, 3, 12, 20, rng);
  nn::Trainer<float> a(spec, 11), b(spec, 11);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(a.step(batch).total, b.step(batch).total);
  }
  EXPECT_TRUE(same(a.params(), b.params()));
  EXPECT_EQ(a.state().step, 5);
}

TEST(Trainer, LossDecreasesOnFixedBatch) {
  const ModelSpec spec = tiny(Task::kDenoise);
  std::mt19937_64 rng(5);
  const auto batch = fixture::small_batch(Task::kDenoise, 4, 10, 20, rng);
  nn::Trainer<float> t(spec, 1);
  const double before = t.evaluate(batch).total;
  for (int i = 0; i < 60; ++i) t.step(batch);
  EXPECT_LT(t.evaluate(batch).total, before);
}

TEST(Trainer, NonFiniteIsReported) {
  const ModelSpec spec = tiny(Task::kDenoise);
  auto state = nn::fresh_state<float>(spec, 1);
  state.params.pitch_head.bias(0, 0) = std::numeric_limits<float>::quiet_NaN();
  nn::Trainer<float> t(std::move(state), 1);
  std::mt19937_64 rng(6);
  try {
    t.step(fixture::small_batch(Task::kDenoise, 1, 10, 12, rng));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNonFiniteGradient);
  }
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    spec_ = tiny(Task::kGapFill);
    nn::Trainer<double> t(spec_, 3);
    std::mt19937_64 rng(7);
    const auto batch = fixture::small_batch(Task::kGapFill, 2, 12, 16, rng);
    for (int i = 0; i < 3; ++i) t.step(batch);
    state_ = t.state();
    bytes_ = nn::serialize_checkpoint(state_);
  }

  Errc parse_error(std::span<const std::uint8_t> b, std::optional<ModelSpec> expected = std::nullopt) {
    try {
      nn::parse_checkpoint<double>(b, expected);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::kIo;
  }

  ModelSpec spec_;
  nn::TrainState<double> state_;
  std::vector<std::uint8_t> bytes_;
};

TEST_F(CheckpointTest, RoundTripIsExact) {
  const auto back = nn::parse_checkpoint<double>(bytes_, spec_);
  EXPECT_EQ(back.spec, spec_);
  EXPECT_EQ(back.step, 3);
  EXPECT_TRUE(same(back.params, state_.params));
  EXPECT_TRUE(same(back.adam_m, state_.adam_m));
  EXPECT_TRUE(same(back.adam_v, state_.adam_v));
  const std::vector<int> enc = {kStart, 3, kGap, kEnd};
  const std::vector<int> dec = {kStart, 3};
  EXPECT_EQ(nn::forward<double>(spec_, back.params, enc, dec).pitch_logits,
            nn::forward<double>(spec_, state_.params, enc, dec).pitch_logits);
}

TEST_F(CheckpointTest, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "s2m_model_test.ckpt").string();
  nn::save_checkpoint(path, state_);
  EXPECT_TRUE(same(nn::load_checkpoint<double>(path).params, state_.params));
  std::filesystem::remove(path);
  EXPECT_THROW(nn::load_checkpoint<double>(path), Error);
}

TEST_F(CheckpointTest, SpecMismatch) {
  ModelSpec other = spec_;
  other.d_model = 32;
  EXPECT_EQ(parse_error(bytes_, other), Errc::kSpecMismatch);
}

TEST_F(CheckpointTest, Corruption) {
  auto cut = bytes_;
  cut.resize(cut.size() / 2);
  EXPECT_EQ(parse_error(cut), Errc::kCorruptCheckpoint);
  auto flipped = bytes_;
  flipped[flipped.size() / 2] ^= 0x10;
  EXPECT_EQ(parse_error(flipped), Errc::kCorruptCheckpoint);
  auto magic = bytes_;
  magic[0] = 'X';
  EXPECT_EQ(parse_error(magic), Errc::kCorruptCheckpoint);
  EXPECT_EQ(parse_error(std::span<const std::uint8_t>(bytes_).first(10)), Errc::kCorruptCheckpoint);
}

TEST_F(CheckpointTest, FloatLoadOfDoubleFile) {
  const auto f = nn::parse_checkpoint<float>(bytes_);
  EXPECT_FLOAT_EQ(f.params.pitch_head.weight(0, 0), static_cast<float>(state_.params.pitch_head.weight(0, 0)));
}

}  // namespace
}  // namespace s2m
