// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#pragma once

#include <Eigen/Core>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace spikecsi {

/// Antenna/subcarrier geometry and the feedback budget.
struct SystemConfig {
  std::size_t n_t = 32;     // BS antennas
  std::size_t n_c = 1024;   // subcarriers
  std::size_t n_s = 32;     // retained delay rows
  std::size_t codeword = 256;  // M, spikes per time step
  std::size_t time_steps = 6;  // T
  double input_scale = 25.0;   // target max-abs after scaling

  /// M = 2 N_t N_s / CR; throws ConfigError unless CR divides exactly.
  static SystemConfig from_compression_ratio(std::size_t n_t, std::size_t n_c, std::size_t n_s,
                                             std::size_t cr, std::size_t time_steps);

  std::size_t flat_size() const { return 2 * n_s * n_t; }
  double compression_ratio() const { return static_cast<double>(flat_size()) / static_cast<double>(codeword); }
  void validate() const;

  friend bool operator==(const SystemConfig&, const SystemConfig&) = default;
};

/// Truncated angle-delay channel as real and imaginary planes, each rows x cols
/// row-major (rows = N_s delay taps, cols = N_t angles).
struct ChannelSample {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> real;
  std::vector<float> imag;

  ChannelSample() = default;
  ChannelSample(std::size_t rows_, std::size_t cols_)
      : rows(rows_), cols(cols_), real(rows_ * cols_), imag(rows_ * cols_) {}

  std::size_t size() const { return rows * cols; }
  double energy() const;  // squared Frobenius norm
  double max_abs() const;

  friend bool operator==(const ChannelSample&, const ChannelSample&) = default;
};

enum class Split { train, val, test, unknown };

struct Dataset {
  std::vector<ChannelSample> samples;
  Split split = Split::unknown;
  std::string source;
  double scale_factor = 1.0;  // multiplier already applied to every value

  std::size_t rows() const { return samples.empty() ? 0 : samples.front().rows; }
  std::size_t cols() const { return samples.empty() ? 0 : samples.front().cols; }
  void validate() const;
};

using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unitary DFT matrix, F[k][n] = exp(-2 pi j k n / N) / sqrt(N).
ComplexMatrix dft_matrix(std::size_t n);

/// H_c = F_d H~ F_a^H with unitary DFTs; input is N_c x N_t.
ComplexMatrix to_angle_delay(const ComplexMatrix& spatial_frequency, const SystemConfig& cfg);

/// Keeps the first n_s delay rows.
ChannelSample truncate(const ComplexMatrix& angle_delay, std::size_t n_s);

/// Largest absolute plane value over the whole dataset.
double dataset_max_abs(const Dataset& ds);

/// Multiplies every value by `factor` (computed in double, stored as float).
ChannelSample scale_sample(const ChannelSample& sample, double factor);

/// Dataset-global linear map to max-abs == input_scale. Records the applied
/// factor in `scale_factor` (composed with any earlier scaling).
void scale_input(Dataset& ds, double input_scale);

/// Multiplies the complex channel by exp(-2 pi j k / K).
ChannelSample rotate_phase(const ChannelSample& sample, unsigned k, unsigned phases);

/// rotate_phase with k drawn uniformly from {0..K-1}.
ChannelSample augment_phase(const ChannelSample& sample, unsigned phases, std::mt19937_64& rng);

inline constexpr double kNmseFloorDb = -100.0;

/// ||H - H^||^2 / ||H||^2 for one sample.
double nmse_linear(const ChannelSample& truth, const ChannelSample& estimate);

/// 10 log10 of the mean per-sample ratio, clamped at kNmseFloorDb.
double nmse_db(std::span<const ChannelSample> truth, std::span<const ChannelSample> estimate);
double nmse_db(const ChannelSample& truth, const ChannelSample& estimate);
double linear_to_db(double ratio);

struct PathRange {
  std::size_t min_paths = 2;
  std::size_t max_paths = 8;
};

/// One-path component in the spatial-frequency domain whose angle-delay image
/// is concentrated at (delay, angle).
ComplexMatrix single_path_channel(const SystemConfig& cfg, double delay, double angle, std::complex<double> gain);

/// Synthetic sparse channels: per sample, L ~ U{min..max} paths with complex
/// Gaussian gains, integer delay taps in [0, 0.8 N_s) and angles on the DFT
/// grid with a +-0.1 bin jitter; transformed, truncated, then scaled as a
/// dataset to input_scale. Deterministic in `seed`.
Dataset synth_generate(const SystemConfig& cfg, PathRange paths, std::size_t count, std::uint64_t seed);

/// CSIF: "CSIF", u16 version, u32 count, u16 N_s, u16 N_t, f64 scale, then
/// per sample 2 N_s N_t little-endian f32 (real plane, then imag plane).
inline constexpr std::uint16_t kCsifVersion = 1;

std::vector<std::uint8_t> encode_csif(const Dataset& ds);
Dataset decode_csif(std::span<const std::uint8_t> bytes);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace spikecsi
