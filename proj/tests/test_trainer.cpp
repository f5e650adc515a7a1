// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "spikecsi/ops.hpp"
#include "spikecsi/trainer.hpp"
#include "test_support.hpp"

namespace spikecsi {
namespace {

CodecConfig small_codec() {
  CodecConfig cfg;
  cfg.system = SystemConfig::from_compression_ratio(8, 8, 8, 4, 3);  // F = 128, M = 32
  cfg.hidden_width = 32;
  return cfg;
}

TrainConfig small_train(std::size_t epochs = 3) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 16;
  tc.lambda_subset = 32;
  tc.seed = 7;
  return tc;
}

Dataset small_data(std::size_t n = 48, std::uint64_t seed = 3) { return synth_generate(small_codec().system, {2, 8}, n, seed); }

std::vector<Tensor<float>> snapshot(SpikingCodec<float>& codec) {
  std::vector<Tensor<float>> out;
  for (const Parameter<float>* p : codec.parameters()) out.push_back(p->value);
  return out;
}

TEST(Loss, Examples) {
  std::mt19937_64 rng(1);
  const Tensor<double> h = testing::random_tensor({2, 2, 2, 2}, rng);
  const Tensor<double> zero(h.shape());
  double energy = 0.0;
  for (double v : h.values()) energy += v * v;

  const std::vector<Tensor<double>> perfect{zero, h, h};
  EXPECT_EQ(pr_loss<double>(perfect, h, 0.5), 0.0);

  // T = 2, H-bar[1] = 0, H-bar[2] = H: only the weighted intermediate term.
  const std::vector<Tensor<double>> late{zero, zero, h};
  EXPECT_DOUBLE_EQ(pr_loss<double>(late, h, 0.5), 0.5 * energy / 2.0);

  // alpha = 0 keeps the final-step error alone.
  const std::vector<Tensor<double>> early{zero, h, zero};
  EXPECT_DOUBLE_EQ(pr_loss<double>(early, h, 0.0), energy / 2.0);
  EXPECT_DOUBLE_EQ(pr_loss<double>(early, h, 0.7), energy / 2.0);

  const std::vector<Tensor<double>> incomplete{zero};
  EXPECT_THROW(pr_loss<double>(incomplete, h, 0.5), StateError);
}

TEST(Loss, TapeValueMatchesDirectSum) {
  const CodecConfig cfg = small_codec();
  SpikingCodec<double> codec(cfg);
  codec.initialize(2);
  const Tensor<double> h = to_batch<double>(small_data(5).samples);
  Tape<double> tape;
  auto hv = tape.constant(h);
  const auto tr = record_feedback(tape, codec, hv, LambdaSchedule{{1.0, 0.9, 0.8}, 5}, {Mode::train});
  const double recorded = tape.value(record_loss(tape, tr, hv, 0.5))[0];
  std::vector<Tensor<double>> partial;
  for (auto v : tr.partial) partial.push_back(tape.value(v));
  EXPECT_NEAR(recorded, pr_loss<double>(partial, h, 0.5), 1e-9 * recorded);
  EXPECT_GE(recorded, 0.0);
}

TEST(Cosine, Examples) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 0.002), 0.002);
  EXPECT_NEAR(cosine_lr(50, 100, 0.002), 0.001, 1e-15);
  EXPECT_LT(cosine_lr(99, 100, 0.002), 0.002 * 1e-3);
  EXPECT_THROW(cosine_lr(100, 100, 0.002), RangeError);
  double prev = 1.0;
  for (std::size_t e = 0; e < 150; ++e) {
    const double lr = cosine_lr(e, 150, 0.002);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(Adam, ZeroGradientKeepsParametersAndDecaysMoments) {
  Parameter<double> p("p", Tensor<double>({3}, std::vector<double>{1.0, -2.0, 0.5}));
  std::vector<Parameter<double>*> ps{&p};
  AdamState<double> st;
  p.grad.fill(1.0);
  adam_step<double>(ps, st, 0.01);
  const Tensor<double> after_first = p.value;
  const double m1 = st.m[0][0], v1 = st.v[0][0];
  p.grad.fill(0.0);
  // A zero gradient still moves along the decayed first moment, so compare
  // against lr = 0 for the parameter and check the moment decay separately.
  adam_step<double>(ps, st, 0.0);
  EXPECT_EQ(p.value, after_first);
  EXPECT_DOUBLE_EQ(st.m[0][0], 0.9 * m1);
  EXPECT_DOUBLE_EQ(st.v[0][0], 0.999 * v1);
  EXPECT_EQ(st.step, 2u);

  Parameter<double> q("q", Tensor<double>({2}, 0.25));
  std::vector<Parameter<double>*> qs{&q};
  AdamState<double> fresh;
  adam_step<double>(qs, fresh, 0.01);
  EXPECT_EQ(q.value, Tensor<double>({2}, 0.25));
}

TEST(Adam, ConstantGradientStepsByLearningRate) {
  Parameter<double> p("p", Tensor<double>({2}, 0.0));
  std::vector<Parameter<double>*> ps{&p};
  AdamState<double> st;
  double prev0 = 0.0, prev1 = 0.0;
  for (int i = 0; i < 2000; ++i) {
    p.grad[0] = 3.0;
    p.grad[1] = -0.02;
    prev0 = p.value[0];
    prev1 = p.value[1];
    adam_step<double>(ps, st, 0.001);
  }
  EXPECT_NEAR(p.value[0] - prev0, -0.001, 1e-9);
  EXPECT_NEAR(p.value[1] - prev1, 0.001, 1e-7);
}

TEST(Adam, ShapeMismatchRejected) {
  Parameter<double> p("p", Tensor<double>({2}, 0.0));
  std::vector<Parameter<double>*> ps{&p};
  AdamState<double> st;
  st.m.emplace_back(Shape{3});
  st.v.emplace_back(Shape{3});
  EXPECT_THROW(adam_step<double>(ps, st, 0.1), DimensionError);
}

TEST(TrainConfig, Validation) {
  EXPECT_NO_THROW(TrainConfig{}.validate());
  TrainConfig tc;
  tc.alpha = -0.1;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.learning_rate = -1.0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.phases = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
}

TEST(Evaluate, ZeroOutputModelIsZeroDb) {
  const CodecConfig cfg = small_codec();
  SpikingCodec<float> codec(cfg);
  codec.initialize(1);
  for (Parameter<float>* p : codec.parameters()) {
    if (p->name.rfind("dec.", 0) == 0) p->value.fill(0.0f);
  }
  const Dataset ds = small_data(30);
  const EvalResult r = evaluate(codec, std::span<const ChannelSample>(ds.samples), LambdaSchedule::unit(3));
  ASSERT_EQ(r.step_nmse_db.size(), 3u);
  for (double db : r.step_nmse_db) EXPECT_NEAR(db, 0.0, 1e-12);
  EXPECT_EQ(r.samples, 30u);
  EXPECT_THROW(evaluate(codec, std::span<const ChannelSample>(), LambdaSchedule::unit(3)), ConfigError);
}

TEST(Evaluate, BatchSizeDoesNotChangeResults) {
  const CodecConfig cfg = small_codec();
  SpikingCodec<float> codec(cfg);
  codec.initialize(9);
  const Dataset ds = small_data(30);
  const std::span<const ChannelSample> data(ds.samples);
  const auto lam = estimate_lambda(codec, data);
  const auto a = evaluate(codec, data, lam, FeedbackStyle::progressive, 30);
  const auto b = evaluate(codec, data, lam, FeedbackStyle::progressive, 7);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(a.step_nmse_linear[t], b.step_nmse_linear[t], 1e-12);
}

TEST(Trainer, ZeroLearningRateLeavesParameters) {
  SpikingCodec<float> codec(small_codec());
  codec.initialize(1);
  TrainConfig tc = small_train();
  tc.learning_rate = 0.0;
  Trainer<float> tr(codec, tc);
  const auto before = snapshot(codec);
  const Dataset ds = small_data();
  const EpochMetrics m = tr.train_epoch(ds.samples);
  EXPECT_EQ(snapshot(codec), before);
  EXPECT_GT(m.loss, 0.0);
  EXPECT_EQ(m.step_nmse_db.size(), 3u);
  EXPECT_EQ(m.lambda.size(), 3u);
  EXPECT_EQ(m.lambda[0], 1.0);
  EXPECT_EQ(tr.epoch(), 1u);
}

TEST(Trainer, TrailingSingleSampleBatchIsTrained) {
  SpikingCodec<float> codec(small_codec());
  codec.initialize(1);
  TrainConfig tc = small_train();
  Trainer<float> tr(codec, tc);
  const Dataset ds = small_data(17);  // 16 + 1
  EXPECT_NO_THROW(tr.train_epoch(ds.samples));
  EXPECT_EQ(tr.optimizer().step, 2u);
}

TEST(Trainer, StaticStyleUsesUnitLambda) {
  SpikingCodec<float> codec(small_codec());
  codec.initialize(1);
  TrainConfig tc = small_train();
  tc.style = FeedbackStyle::static_input;
  Trainer<float> tr(codec, tc);
  const Dataset ds = small_data();
  const auto m = tr.train_epoch(ds.samples);
  EXPECT_EQ(m.lambda, (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(Trainer, FitFollowsCosineAndStops) {
  SpikingCodec<float> codec(small_codec());
  codec.initialize(1);
  Trainer<float> tr(codec, small_train(4));
  const Dataset ds = small_data();
  std::size_t calls = 0;
  const auto hist = tr.fit(ds.samples, [&](const EpochMetrics&) { ++calls; });
  ASSERT_EQ(hist.size(), 4u);
  EXPECT_EQ(calls, 4u);
  for (std::size_t e = 0; e < 4; ++e) EXPECT_DOUBLE_EQ(hist[e].lr, cosine_lr(e, 4, 0.002));
  EXPECT_TRUE(tr.fit(ds.samples).empty());
}

TEST(Trainer, DeterministicAcrossRuns) {
  const Dataset ds = small_data();
  auto run = [&] {
    SpikingCodec<float> codec(small_codec());
    codec.initialize(5);
    Trainer<float> tr(codec, small_train());
    std::vector<double> losses;
    for (const auto& m : tr.fit(ds.samples)) losses.push_back(m.loss);
    return std::make_pair(losses, encode_checkpoint(tr));
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Trainer, NonFiniteInputReportsLocation) {
  SpikingCodec<float> codec(small_codec());
  codec.initialize(1);
  TrainConfig tc = small_train();
  tc.augment = false;
  tc.lambda_subset = 16;
  Trainer<float> tr(codec, tc);
  Dataset ds = small_data();
  // Poison a sample outside the lambda subset so the failure is in training.
  ds.samples[40].real[0] = std::numeric_limits<float>::infinity();
  try {
    tr.train_epoch(ds.samples);
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("epoch 0, batch "), std::string::npos) << what;
    EXPECT_NE(what.find("enc.step1"), std::string::npos) << what;
  }

  ds.samples[0].imag[3] = std::numeric_limits<float>::quiet_NaN();
  try {
    tr.train_epoch(ds.samples);
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("lambda estimation"), std::string::npos) << e.what();
  }
}

// A single sample is memorized quickly; the loss must fall by 90%.
TEST(Trainer, OverfitsOneSample) {
  CodecConfig cfg;
  cfg.system = SystemConfig::from_compression_ratio(16, 32, 16, 16, 4);
  cfg.hidden_width = 256;
  SpikingCodec<float> codec(cfg);
  codec.initialize(42);
  TrainConfig tc;
  tc.epochs = 200;
  tc.augment = false;
  tc.seed = 42;
  Trainer<float> tr(codec, tc);
  const Dataset ds = synth_generate(cfg.system, {2, 8}, 1, 42);
  const auto hist = tr.fit(ds.samples);
  EXPECT_LE(hist.back().loss, 0.1 * hist.front().loss) << "first " << hist.front().loss << " last " << hist.back().loss;
}

// ---- checkpoints ----------------------------------------------------------------

TEST(Checkpoint, RoundTripReproducesEvaluation) {
  const Dataset ds = small_data();
  SpikingCodec<float> codec(small_codec());
  codec.initialize(3);
  Trainer<float> tr(codec, small_train());
  tr.fit(ds.samples);
  const auto path = std::filesystem::temp_directory_path() / "spikecsi_test_ckpt.bin";
  save_checkpoint(tr, path);

  SpikingCodec<float> other(small_codec());
  other.initialize(99);
  Trainer<float> restored(other, small_train());
  load_checkpoint(path, restored);
  std::filesystem::remove(path);

  const std::span<const ChannelSample> data(ds.samples);
  const auto a = evaluate(codec, data, tr.lambda());
  const auto b = evaluate(other, data, restored.lambda());
  EXPECT_EQ(a.step_nmse_linear, b.step_nmse_linear);
  EXPECT_EQ(restored.epoch(), tr.epoch());
  EXPECT_EQ(restored.lambda().values, tr.lambda().values);
  EXPECT_EQ(restored.optimizer().step, tr.optimizer().step);
  EXPECT_EQ(encode_checkpoint(restored), encode_checkpoint(tr));

  const CheckpointInfo info = peek_checkpoint(encode_checkpoint(tr));
  EXPECT_EQ(info.codec.system, small_codec().system);
  EXPECT_EQ(info.codec.hidden_width, 32u);
  EXPECT_EQ(info.epoch, 3u);
}

TEST(Checkpoint, RejectsMismatchedConfiguration) {
  SpikingCodec<float> codec(small_codec());
  codec.initialize(3);
  Trainer<float> tr(codec, small_train());
  const auto bytes = encode_checkpoint(tr);

  CodecConfig wider = small_codec();
  wider.hidden_width = 64;
  SpikingCodec<float> c2(wider);
  Trainer<float> t2(c2, small_train());
  EXPECT_THROW(decode_checkpoint(bytes, t2), ConfigError);

  CodecConfig longer = small_codec();
  longer.system.time_steps = 4;
  SpikingCodec<float> c3(longer);
  Trainer<float> t3(c3, small_train());
  EXPECT_THROW(decode_checkpoint(bytes, t3), ConfigError);

  TrainConfig stat = small_train();
  stat.style = FeedbackStyle::static_input;
  SpikingCodec<float> c4(small_codec());
  Trainer<float> t4(c4, stat);
  EXPECT_THROW(decode_checkpoint(bytes, t4), ConfigError);
}

TEST(Checkpoint, RejectsCorruptBytes) {
  SpikingCodec<float> codec(small_codec());
  codec.initialize(3);
  Trainer<float> tr(codec, small_train());
  const auto bytes = encode_checkpoint(tr);
  SpikingCodec<float> c2(small_codec());
  c2.initialize(4);
  Trainer<float> t2(c2, small_train());
  const auto before = snapshot(c2);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad, t2), FormatError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(decode_checkpoint(bad, t2), FormatError);
  EXPECT_THROW(decode_checkpoint(std::span<const std::uint8_t>(bytes.data(), bytes.size() / 2), t2), FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_checkpoint(bad, t2), FormatError);
  // Failed loads leave the target untouched.
  EXPECT_EQ(snapshot(c2), before);
}

TEST(Checkpoint, ResumeMatchesUninterruptedTraining) {
  const Dataset ds = small_data();
  SpikingCodec<float> full_codec(small_codec());
  full_codec.initialize(11);
  Trainer<float> full(full_codec, small_train(4));
  full.fit(ds.samples);

  SpikingCodec<float> first_codec(small_codec());
  first_codec.initialize(11);
  Trainer<float> first(first_codec, small_train(4));
  first.train_epoch(ds.samples);
  first.train_epoch(ds.samples);
  const auto bytes = encode_checkpoint(first);

  SpikingCodec<float> resumed_codec(small_codec());
  Trainer<float> resumed(resumed_codec, small_train(4));
  decode_checkpoint(bytes, resumed);
  resumed.fit(ds.samples);

  EXPECT_EQ(encode_checkpoint(resumed), encode_checkpoint(full));
}

}  // namespace
}  // namespace spikecsi
