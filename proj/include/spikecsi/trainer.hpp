// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "spikecsi/codec.hpp"

namespace spikecsi {

struct TrainConfig {
  double learning_rate = 0.002;
  std::size_t epochs = 1000;
  std::size_t batch_size = 200;
  double alpha = 0.5;  // weight of the intermediate-step errors
  std::uint64_t seed = 42;
  bool augment = true;
  unsigned phases = 16;  // K, rotation grid of the augmentation
  std::size_t lambda_subset = 800;  // leading training samples used for lambda
  // Kept for config compatibility: every kernel here is single threaded and
  // already reproducible, so the flag changes nothing at present.
  bool deterministic = true;
  double grad_clip = 10.0;  // global L2 norm; 0 disables
  FeedbackStyle style = FeedbackStyle::progressive;

  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam over `params`, using their accumulated grads.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, double lr, const AdamConfig& cfg = {});

/// base_lr * 0.5 * (1 + cos(pi * epoch / total)); RangeError unless epoch < total.
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double base_lr);

/// Per-sample-averaged ||H-bar[T] - H||^2 + alpha * sum_{t<T} ||H-bar[t] - H||^2.
/// `partial` is H-bar[0..T] as produced by the feedback loop.
template <typename T>
double pr_loss(std::span<const Tensor<T>> partial, const Tensor<T>& h, double alpha);

/// The same loss recorded on a tape.
template <typename T>
typename Tape<T>::Var record_loss(Tape<T>& tape, const TraceVars<T>& trace, typename Tape<T>::Var h, double alpha);

struct EvalResult {
  std::vector<double> step_nmse_linear;  // mean over samples, t = 1..T
  std::vector<double> step_nmse_db;
  double final_nmse_db = 0.0;
  std::size_t samples = 0;
};

/// Eval-mode feedback from rest states; NMSE of every partial reconstruction.
template <typename T>
EvalResult evaluate(SpikingCodec<T>& codec, std::span<const ChannelSample> data, const LambdaSchedule& lambda,
                    FeedbackStyle style = FeedbackStyle::progressive, std::size_t batch = 200);

struct EpochMetrics {
  std::size_t epoch = 0;  // 0-based
  double lr = 0.0;
  double loss = 0.0;  // mean per-sample loss over the epoch
  std::vector<double> step_nmse_db;  // train-mode, pre-update, augmented batches
  std::vector<double> lambda;
};

template <typename T>
class Trainer {
 public:
  Trainer(SpikingCodec<T>& codec, TrainConfig cfg);

  /// Refreshes lambda, then one shuffled pass of BPTT + Adam.
  EpochMetrics train_epoch(std::span<const ChannelSample> data);

  /// Runs the remaining epochs up to cfg.epochs, or at most `limit` of them;
  /// `on_epoch` sees each result. The lr schedule always spans cfg.epochs.
  std::vector<EpochMetrics> fit(std::span<const ChannelSample> data,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {},
                                std::size_t limit = std::numeric_limits<std::size_t>::max());

  /// Estimates lambda on the leading lambda_subset samples (unit schedule for
  /// the static ablation).
  void refresh_lambda(std::span<const ChannelSample> data);

  SpikingCodec<T>& codec() { return codec_; }
  const SpikingCodec<T>& codec() const { return codec_; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t epoch() const { return epoch_; }
  const LambdaSchedule& lambda() const { return lambda_; }
  AdamState<T>& optimizer() { return adam_; }
  const AdamState<T>& optimizer() const { return adam_; }
  std::mt19937_64& rng() { return rng_; }
  const std::mt19937_64& rng() const { return rng_; }

  void set_epoch(std::size_t e) { epoch_ = e; }
  void set_lambda(LambdaSchedule l) { lambda_ = std::move(l); }

 private:
  SpikingCodec<T>& codec_;
  TrainConfig cfg_;
  LambdaSchedule lambda_;
  AdamState<T> adam_;
  std::mt19937_64 rng_;
  std::size_t epoch_ = 0;
};

// ---- checkpoints ------------------------------------------------------------
//
// "SCSN", u16 version, codec config, feedback style, epoch, lambda, tensors (name, dtype,
// shape, data) for parameters and batch-norm running stats, Adam moments and
// step, RNG state text.

inline constexpr std::uint16_t kCheckpointVersion = 1;

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Trainer<T>& trainer);

/// Restores into a trainer whose codec was built from the same config;
/// ConfigError when the stored geometry or feedback style differs.
template <typename T>
void decode_checkpoint(std::span<const std::uint8_t> bytes, Trainer<T>& trainer);

struct CheckpointInfo {
  CodecConfig codec;
  FeedbackStyle style = FeedbackStyle::progressive;
  std::size_t epoch = 0;
};

/// Header fields of a checkpoint, for building a matching model.
CheckpointInfo peek_checkpoint(std::span<const std::uint8_t> bytes);

template <typename T>
void save_checkpoint(const Trainer<T>& trainer, const std::filesystem::path& path);

template <typename T>
void load_checkpoint(const std::filesystem::path& path, Trainer<T>& trainer);

}  // namespace spikecsi
