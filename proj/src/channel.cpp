// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#include "spikecsi/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "binary_io.hpp"
#include "spikecsi/error.hpp"

namespace spikecsi {

SystemConfig SystemConfig::from_compression_ratio(std::size_t n_t, std::size_t n_c, std::size_t n_s, std::size_t cr,
                                                  std::size_t time_steps) {
  SystemConfig cfg;
  cfg.n_t = n_t;
  cfg.n_c = n_c;
  cfg.n_s = n_s;
  cfg.time_steps = time_steps;
  if (cr == 0 || cfg.flat_size() % cr != 0) {
    throw ConfigError("compression ratio " + std::to_string(cr) + " does not divide 2*N_s*N_t = " +
                      std::to_string(cfg.flat_size()));
  }
  cfg.codeword = cfg.flat_size() / cr;
  cfg.validate();
  return cfg;
}

void SystemConfig::validate() const {
  if (n_t == 0 || n_c == 0 || n_s == 0) throw ConfigError("N_t, N_c and N_s must be positive");
  if (n_s > n_c) {
    throw ConfigError("N_s (" + std::to_string(n_s) + ") exceeds N_c (" + std::to_string(n_c) + ")");
  }
  if (codeword == 0) throw ConfigError("codeword width M must be positive");
  if (flat_size() % codeword != 0) {
    throw ConfigError("M = " + std::to_string(codeword) + " does not divide 2*N_s*N_t = " +
                      std::to_string(flat_size()));
  }
  if (time_steps == 0) throw ConfigError("T must be at least 1");
  if (!(input_scale > 0.0)) throw ConfigError("input_scale must be positive");
}

double ChannelSample::energy() const {
  double e = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    const double re = real[i], im = imag[i];
    e += re * re + im * im;
  }
  return e;
}

double ChannelSample::max_abs() const {
  double m = 0.0;
  for (std::size_t i = 0; i < size(); ++i) m = std::max({m, std::fabs(double(real[i])), std::fabs(double(imag[i]))});
  return m;
}

void Dataset::validate() const {
  for (const auto& s : samples) {
    if (s.rows != rows() || s.cols != cols() || s.real.size() != s.size() || s.imag.size() != s.size()) {
      throw DimensionError("dataset samples do not share one N_s x N_t shape");
    }
  }
}

ComplexMatrix dft_matrix(std::size_t n) {
  ComplexMatrix f(n, n);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t m = 0; m < n; ++m) {
      // Reduce k*m modulo n first so the angle stays accurate for large n.
      const double phase = -2.0 * std::numbers::pi * static_cast<double>((k * m) % n) / static_cast<double>(n);
      f(k, m) = std::polar(norm, phase);
    }
  }
  return f;
}

ComplexMatrix to_angle_delay(const ComplexMatrix& spatial_frequency, const SystemConfig& cfg) {
  if (static_cast<std::size_t>(spatial_frequency.rows()) != cfg.n_c ||
      static_cast<std::size_t>(spatial_frequency.cols()) != cfg.n_t) {
    throw DimensionError("to_angle_delay: expected " + std::to_string(cfg.n_c) + "x" + std::to_string(cfg.n_t) +
                         " channel, got " + std::to_string(spatial_frequency.rows()) + "x" +
                         std::to_string(spatial_frequency.cols()));
  }
  const ComplexMatrix fd = dft_matrix(cfg.n_c);
  const ComplexMatrix fa = dft_matrix(cfg.n_t);
  ComplexMatrix tmp = fd * spatial_frequency;
  return tmp * fa.adjoint();
}

ChannelSample truncate(const ComplexMatrix& angle_delay, std::size_t n_s) {
  const auto rows = static_cast<std::size_t>(angle_delay.rows());
  if (n_s > rows) {
    throw ConfigError("truncate: N_s = " + std::to_string(n_s) + " exceeds N_c = " + std::to_string(rows));
  }
  const auto cols = static_cast<std::size_t>(angle_delay.cols());
  ChannelSample out(n_s, cols);
  for (std::size_t r = 0; r < n_s; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto v = angle_delay(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      out.real[r * cols + c] = static_cast<float>(v.real());
      out.imag[r * cols + c] = static_cast<float>(v.imag());
    }
  }
  return out;
}

double dataset_max_abs(const Dataset& ds) {
  double m = 0.0;
  for (const auto& s : ds.samples) m = std::max(m, s.max_abs());
  return m;
}

ChannelSample scale_sample(const ChannelSample& sample, double factor) {
  ChannelSample out = sample;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.real[i] = static_cast<float>(static_cast<double>(sample.real[i]) * factor);
    out.imag[i] = static_cast<float>(static_cast<double>(sample.imag[i]) * factor);
  }
  return out;
}

void scale_input(Dataset& ds, double input_scale) {
  if (!(input_scale > 0.0)) throw ConfigError("input_scale must be positive");
  const double max_abs = dataset_max_abs(ds);
  if (!(max_abs > 0.0)) throw ConfigError("cannot scale an all-zero dataset");
  const double factor = input_scale / max_abs;
  for (auto& s : ds.samples) s = scale_sample(s, factor);
  ds.scale_factor *= factor;
}

ChannelSample rotate_phase(const ChannelSample& sample, unsigned k, unsigned phases) {
  if (phases == 0) throw ConfigError("phase count K must be at least 1");
  if (k >= phases) throw RangeError("phase index k must be below K");
  ChannelSample out = sample;
  // Quarter turns are applied as exact swaps/negations.
  if ((4 * k) % phases == 0) {
    const unsigned quarter = (4 * k) / phases;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const float a = sample.real[i], b = sample.imag[i];
      switch (quarter) {
        case 0: break;
        case 1: out.real[i] = b; out.imag[i] = -a; break;   // times -j
        case 2: out.real[i] = -a; out.imag[i] = -b; break;  // times -1
        default: out.real[i] = -b; out.imag[i] = a; break;  // times +j
      }
    }
    return out;
  }
  const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(phases);
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = sample.real[i], b = sample.imag[i];
    out.real[i] = static_cast<float>(a * c - b * s);
    out.imag[i] = static_cast<float>(a * s + b * c);
  }
  return out;
}

ChannelSample augment_phase(const ChannelSample& sample, unsigned phases, std::mt19937_64& rng) {
  if (phases == 0) throw ConfigError("phase count K must be at least 1");
  std::uniform_int_distribution<unsigned> pick(0, phases - 1);
  return rotate_phase(sample, pick(rng), phases);
}

double nmse_linear(const ChannelSample& truth, const ChannelSample& estimate) {
  if (truth.rows != estimate.rows || truth.cols != estimate.cols) {
    throw DimensionError("nmse: sample shapes differ");
  }
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double dr = double(truth.real[i]) - double(estimate.real[i]);
    const double di = double(truth.imag[i]) - double(estimate.imag[i]);
    err += dr * dr + di * di;
    const double tr = truth.real[i], ti = truth.imag[i];
    ref += tr * tr + ti * ti;
  }
  if (!(ref > 0.0)) throw MetricError("nmse: reference channel has zero norm");
  return err / ref;
}

double linear_to_db(double ratio) {
  if (!(ratio > 0.0)) return kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(ratio));
}

double nmse_db(std::span<const ChannelSample> truth, std::span<const ChannelSample> estimate) {
  if (truth.size() != estimate.size()) throw DimensionError("nmse: sample counts differ");
  if (truth.empty()) throw MetricError("nmse: no samples");
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) sum += nmse_linear(truth[i], estimate[i]);
  return linear_to_db(sum / static_cast<double>(truth.size()));
}

double nmse_db(const ChannelSample& truth, const ChannelSample& estimate) {
  return nmse_db(std::span<const ChannelSample>(&truth, 1), std::span<const ChannelSample>(&estimate, 1));
}

ComplexMatrix single_path_channel(const SystemConfig& cfg, double delay, double angle, std::complex<double> gain) {
  ComplexMatrix h(cfg.n_c, cfg.n_t);
  const double nc = static_cast<double>(cfg.n_c), nt = static_cast<double>(cfg.n_t);
  const double norm = 1.0 / std::sqrt(nc * nt);
  for (std::size_t n = 0; n < cfg.n_c; ++n) {
    const auto freq = std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(n) * delay / nc);
    for (std::size_t a = 0; a < cfg.n_t; ++a) {
      const auto steer = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(a) * angle / nt);
      h(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(a)) = gain * freq * steer * norm;
    }
  }
  return h;
}

Dataset synth_generate(const SystemConfig& cfg, PathRange paths, std::size_t count, std::uint64_t seed) {
  cfg.validate();
  if (count == 0) throw ConfigError("synth_generate: count must be at least 1");
  if (paths.min_paths == 0 || paths.min_paths > paths.max_paths) {
    throw ConfigError("synth_generate: invalid path range");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> n_paths(paths.min_paths, paths.max_paths);
  const auto delay_taps = static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(cfg.n_s)));
  std::uniform_int_distribution<std::size_t> delay(0, delay_taps - 1);
  std::uniform_int_distribution<std::size_t> angle(0, cfg.n_t - 1);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const ComplexMatrix fd = dft_matrix(cfg.n_c);
  const ComplexMatrix fa_h = dft_matrix(cfg.n_t).adjoint();

  Dataset ds;
  ds.source = "synthetic seed=" + std::to_string(seed);
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ComplexMatrix h = ComplexMatrix::Zero(cfg.n_c, cfg.n_t);
    const std::size_t l = n_paths(rng);
    for (std::size_t p = 0; p < l; ++p) {
      const double re = gauss(rng), im = gauss(rng);
      const std::complex<double> gain(re / std::numbers::sqrt2, im / std::numbers::sqrt2);
      const double d = static_cast<double>(delay(rng));
      const double a = static_cast<double>(angle(rng)) + jitter(rng);
      h += single_path_channel(cfg, d, a, gain);
    }
    ComplexMatrix tmp = fd * h;
    ds.samples.push_back(truncate(tmp * fa_h, cfg.n_s));
  }
  scale_input(ds, cfg.input_scale);
  return ds;
}

namespace {
constexpr char kCsifMagic[4] = {'C', 'S', 'I', 'F'};
}

std::vector<std::uint8_t> encode_csif(const Dataset& ds) {
  ds.validate();
  if (ds.samples.size() > 0xFFFFFFFFu || ds.rows() > 0xFFFF || ds.cols() > 0xFFFF) {
    throw ConfigError("dataset too large for the CSIF header fields");
  }
  binio::Writer w;
  w.bytes(kCsifMagic, 4);
  w.u16(kCsifVersion);
  w.u32(static_cast<std::uint32_t>(ds.samples.size()));
  w.u16(static_cast<std::uint16_t>(ds.rows()));
  w.u16(static_cast<std::uint16_t>(ds.cols()));
  w.f64(ds.scale_factor);
  w.buffer().reserve(w.buffer().size() + ds.samples.size() * ds.rows() * ds.cols() * 8);
  for (const auto& s : ds.samples) {
    for (float v : s.real) w.f32(v);
    for (float v : s.imag) w.f32(v);
  }
  return std::move(w.buffer());
}

Dataset decode_csif(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (!std::equal(magic, magic + 4, kCsifMagic)) throw FormatError("bad CSIF magic", 0);
  const std::uint64_t version_at = r.offset();
  const std::uint16_t version = r.u16("version");
  if (version != kCsifVersion) {
    throw FormatError("unsupported CSIF version " + std::to_string(version), version_at);
  }
  const std::uint32_t count = r.u32("sample count");
  const std::uint64_t dims_at = r.offset();
  const std::uint16_t n_s = r.u16("N_s");
  const std::uint16_t n_t = r.u16("N_t");
  if (n_s == 0 || n_t == 0) throw FormatError("CSIF dimensions must be positive", dims_at);
  Dataset ds;
  ds.scale_factor = r.f64("scale factor");
  const std::uint64_t record_bytes = 8ull * n_s * n_t;
  if (r.remaining() < record_bytes * count) {
    throw FormatError("CSIF declares " + std::to_string(count) + " samples but the payload holds " +
                          std::to_string(r.remaining() / record_bytes),
                      r.offset() + (r.remaining() / record_bytes) * record_bytes);
  }
  if (r.remaining() != record_bytes * count) {
    throw FormatError("trailing bytes after the last CSIF record", r.offset() + record_bytes * count);
  }
  ds.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ChannelSample s(n_s, n_t);
    for (float& v : s.real) v = r.f32("real plane");
    for (float& v : s.imag) v = r.f32("imag plane");
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  binio::write_file(path, encode_csif(ds));
}

Dataset load_dataset(const std::filesystem::path& path) {
  Dataset ds = decode_csif(binio::read_file(path));
  ds.source = path.string();
  return ds;
}

}  // namespace spikecsi
