// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

// Command-line front end: gen-data, train, eval, energy.

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <CLI11.hpp>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>

#include "spikecsi/energy.hpp"
#include "spikecsi/run_config.hpp"
#include "spikecsi/trainer.hpp"

namespace fs = std::filesystem;
using namespace spikecsi;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

// Errors from reading a dataset or checkpoint are data errors, whatever
// their type.
struct DataError : Error {
  using Error::Error;
};

struct CommonFlags {
  std::string config;
  std::string profile;
  std::optional<std::uint64_t> seed;
};

void log(const std::string& msg) { fmt::print(stderr, "[spikecsi] {}\n", msg); }

RunConfig resolve_config(const CommonFlags& f) {
  std::optional<std::string> profile;
  if (!f.profile.empty()) profile = f.profile;
  RunConfig cfg = f.config.empty() ? parse_run_config("", profile) : load_run_config(f.config, profile);
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.train.seed = *f.seed;
    std::erase_if(cfg.defaulted, [](const std::string& s) { return s.starts_with("seed="); });
  }
  log(fmt::format("profile {}, seed {}", cfg.profile, cfg.seed));
  if (!f.config.empty()) {
    for (const auto& d : cfg.defaulted) log("default " + d);
  }
  return cfg;
}

template <typename Fn>
auto as_data(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(e.what());
  }
}

Dataset read_dataset(const std::string& path, const SystemConfig& sys) {
  Dataset ds = as_data([&] { return load_dataset(path); });
  if (ds.rows() != sys.n_s || ds.cols() != sys.n_t) {
    throw DataError(fmt::format("{} holds {}x{} channels, configuration expects {}x{}", path, ds.rows(), ds.cols(),
                                sys.n_s, sys.n_t));
  }
  return ds;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

// Writes to a sibling file first so an interrupted run never leaves a torn
// checkpoint behind.
void save_atomically(const Trainer<float>& trainer, const fs::path& path) {
  fs::path tmp = path;
  tmp += ".tmp";
  save_checkpoint(trainer, tmp);
  fs::rename(tmp, path);
}

std::string join(const std::vector<double>& v, const char* spec) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += fmt::format(fmt::runtime(spec), v[i]);
  }
  return out;
}

int cmd_gen_data(const CommonFlags& flags, const std::string& out) {
  const RunConfig cfg = resolve_config(flags);
  log(fmt::format("generating {} samples ({}x{}, paths {}..{})", cfg.samples, cfg.codec.system.n_s,
                  cfg.codec.system.n_t, cfg.paths.min_paths, cfg.paths.max_paths));
  Dataset ds = synth_generate(cfg.codec.system, cfg.paths, cfg.samples, cfg.seed);
  save_dataset(ds, out);
  log(fmt::format("wrote {} (scale factor {:.6g})", out, ds.scale_factor));
  return kOk;
}

int cmd_train(const CommonFlags& flags, const std::string& data, const std::string& out, const std::string& resume,
              std::string metrics, std::optional<std::size_t> stop_after) {
  const RunConfig cfg = resolve_config(flags);
  const Dataset ds = read_dataset(data, cfg.codec.system);
  if (ds.samples.size() <= cfg.holdout + 1) throw DataError("dataset too small for the configured holdout");
  const std::span<const ChannelSample> all(ds.samples);
  const auto train = all.first(all.size() - cfg.holdout);
  const auto held = all.last(cfg.holdout);
  if (metrics.empty()) metrics = out + ".metrics.csv";

  SpikingCodec<float> codec(cfg.codec);
  codec.initialize(cfg.seed);
  Trainer<float> trainer(codec, cfg.train);
  if (!resume.empty()) {
    const auto bytes = as_data([&] { return read_bytes(resume); });
    as_data([&] {
      decode_checkpoint<float>(bytes, trainer);
      return 0;
    });
    log(fmt::format("resumed from {} at epoch {}", resume, trainer.epoch()));
  }
  log(fmt::format("training on {} samples, holding out {}, {} parameters", train.size(), held.size(),
                  codec.parameter_count()));

  const bool append = !resume.empty() && fs::exists(metrics);
  std::ofstream csv(metrics, append ? std::ios::app : std::ios::trunc);
  if (!csv) throw Error("cannot write " + metrics);
  const std::size_t steps = cfg.codec.system.time_steps;
  if (!append) {
    csv << "epoch,lr,loss";
    for (std::size_t t = 1; t <= steps; ++t) csv << ",train_nmse_db_t" << t;
    for (std::size_t t = 1; t <= steps; ++t) csv << ",lambda_t" << t;
    if (!held.empty()) csv << ",holdout_nmse_db";
    csv << '\n';
  }

  double best = 0.0;
  std::size_t best_epoch = 0;
  bool have_best = false;
  trainer.fit(train, [&](const EpochMetrics& m) {
    csv << fmt::format("{},{:.10g},{:.10g}", m.epoch, m.lr, m.loss);
    for (double v : m.step_nmse_db) csv << fmt::format(",{:.6f}", v);
    for (double v : m.lambda) csv << fmt::format(",{:.10g}", v);
    std::string extra;
    if (!held.empty()) {
      const EvalResult r = evaluate(codec, held, trainer.lambda(), cfg.train.style, cfg.eval_batch);
      csv << fmt::format(",{:.6f}", r.final_nmse_db);
      if (!have_best || r.final_nmse_db < best) {
        best = r.final_nmse_db;
        best_epoch = m.epoch;
        have_best = true;
      }
      extra = fmt::format(" holdout {:.3f} dB", r.final_nmse_db);
    }
    csv << '\n';
    csv.flush();
    save_atomically(trainer, out);
    log(fmt::format("epoch {} lr {:.3g} loss {:.4f} nmse [{}] dB{}", m.epoch, m.lr, m.loss,
                    join(m.step_nmse_db, "{:.2f}"), extra));
  }, stop_after.value_or(std::numeric_limits<std::size_t>::max()));
  save_atomically(trainer, out);
  if (have_best) log(fmt::format("validation-best holdout NMSE {:.3f} dB at epoch {}", best, best_epoch));
  log("checkpoint " + out + ", metrics " + metrics);
  return kOk;
}

struct LoadedModel {
  CheckpointInfo info;
  SpikingCodec<float> codec;
  LambdaSchedule lambda;
};

LoadedModel load_model(const std::string& path) {
  const auto bytes = as_data([&] { return read_bytes(path); });
  const CheckpointInfo info = as_data([&] { return peek_checkpoint(bytes); });
  LoadedModel m{info, SpikingCodec<float>(info.codec), {}};
  TrainConfig tc;
  tc.style = info.style;
  Trainer<float> trainer(m.codec, tc);
  as_data([&] {
    decode_checkpoint<float>(bytes, trainer);
    return 0;
  });
  m.lambda = trainer.lambda();
  return m;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint, const std::string& data) {
  const RunConfig cfg = resolve_config(flags);
  LoadedModel m = load_model(checkpoint);
  const Dataset ds = read_dataset(data, m.info.codec.system);
  const EvalResult r = evaluate(m.codec, ds.samples, m.lambda, m.info.style, cfg.eval_batch);
  fmt::print("samples        {}\n", r.samples);
  fmt::print("feedback bits  {}\n", feedback_bits(m.info.codec.system));
  fmt::print("lambda         {}\n", join(m.lambda.values, "{:.6f}"));
  for (std::size_t t = 0; t < r.step_nmse_db.size(); ++t) {
    fmt::print("nmse t={}      {:.4f} dB\n", t + 1, r.step_nmse_db[t]);
  }
  fmt::print("final nmse     {:.4f} dB\n", r.final_nmse_db);
  return kOk;
}

int cmd_energy(const CommonFlags& flags, const std::string& checkpoint, const std::string& data,
               const std::string& out, const std::vector<double>& rates) {
  const RunConfig cfg = resolve_config(flags);
  EnergyReport report;
  if (!rates.empty()) {
    if (rates.size() != 2) throw ConfigError("--rates takes codeword_rho,decoder_rho");
    for (double r : rates) {
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError(fmt::format("--rates: {} is not a firing rate in [0, 1]", r));
    }
    report = assemble_audit(cfg.codec, constant_firing(cfg.codec.system.time_steps, rates[0], rates[1]), cfg.energy);
  } else {
    if (checkpoint.empty() || data.empty()) throw ConfigError("energy needs --checkpoint and --data, or --rates");
    LoadedModel m = load_model(checkpoint);
    const Dataset ds = read_dataset(data, m.info.codec.system);
    report = audit_model(m.codec, ds.samples, m.lambda, cfg.energy, cfg.eval_batch);
  }
  const std::string text = format_report(report);
  if (!out.empty()) {
    write_text(out + ".txt", text);
    write_text(out + ".csv", format_csv(report));
    log("wrote " + out + ".txt and " + out + ".csv");
  }
  fmt::print("{}", text);
  fmt::print("total_uJ {:.6f}\n", report.total_joules() * 1e6);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking CSI feedback codec: data generation, training, evaluation and energy audit"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string seed_text;
  app.add_option("--config", flags.config, "key=value configuration file")->check(CLI::ExistingFile);
  app.add_option("--profile", flags.profile, "base profile")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--seed", seed_text, "overrides the configured seed");

  std::string data, out, checkpoint, metrics;
  std::vector<double> rates;
  std::optional<std::size_t> stop_after;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic CSIF dataset");
  gen->add_option("--out", out, "output .csif path")->required();

  auto* train = app.add_subcommand("train", "train a codec, writing a checkpoint and per-epoch metrics");
  train->add_option("--data", data, "CSIF dataset")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "checkpoint to write")->required();
  train->add_option("--checkpoint", checkpoint, "resume from this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--metrics", metrics, "metrics CSV (default <out>.metrics.csv)");
  train->add_option("--stop-after", stop_after, "train at most this many epochs now; resume later with --checkpoint");

  auto* eval = app.add_subcommand("eval", "report per-step NMSE of a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data)->required()->check(CLI::ExistingFile);

  auto* energy = app.add_subcommand("energy", "MAC/AC energy audit");
  energy->add_option("--checkpoint", checkpoint)->check(CLI::ExistingFile);
  energy->add_option("--data", data)->check(CLI::ExistingFile);
  energy->add_option("--out", out, "report prefix; writes <out>.txt and <out>.csv");
  energy->add_option("--rates", rates, "analytic mode: codeword_rho,decoder_rho")->delimiter(',');

  // The global flags are accepted after the subcommand name as well.
  for (auto* sub : {gen, train, eval, energy}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (!seed_text.empty()) {
      std::uint64_t s = 0;
      const auto [ptr, ec] = std::from_chars(seed_text.data(), seed_text.data() + seed_text.size(), s);
      if (ec != std::errc() || ptr != seed_text.data() + seed_text.size()) {
        throw ConfigError("--seed must be a non-negative integer");
      }
      flags.seed = s;
    }
    if (gen->parsed()) return cmd_gen_data(flags, out);
    if (train->parsed()) return cmd_train(flags, data, out, checkpoint, metrics, stop_after);
    if (eval->parsed()) return cmd_eval(flags, checkpoint, data);
    if (energy->parsed()) return cmd_energy(flags, checkpoint, data, out, rates);
  } catch (const ConfigError& e) {
    log(fmt::format("configuration error: {}", e.what()));
    return kConfig;
  } catch (const DataError& e) {
    log(fmt::format("data error: {}", e.what()));
    return kData;
  } catch (const FormatError& e) {
    log(fmt::format("data error: {}", e.what()));
    return kData;
  } catch (const NumericError& e) {
    log(fmt::format("numeric abort: {}", e.what()));
    return kNumeric;
  } catch (const std::exception& e) {
    log(fmt::format("error: {}", e.what()));
    return 1;
  }
  return kOk;
}
