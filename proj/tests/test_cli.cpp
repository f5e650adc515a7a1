// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "spikecsi/run_config.hpp"

namespace fs = std::filesystem;

namespace spikecsi {
namespace {

// ---- config parsing ----------------------------------------------------------------

TEST(RunConfig, DeskDefaults) {
  const RunConfig c = parse_run_config("");
  EXPECT_EQ(c.profile, "desk");
  EXPECT_EQ(c.codec.system.time_steps, 4u);
  EXPECT_EQ(c.codec.system.compression_ratio(), 16.0);
  EXPECT_EQ(c.train.epochs, 150u);
  EXPECT_EQ(c.train.batch_size, 200u);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.samples, 4000u);
  EXPECT_EQ(c.defaulted.size(), run_config_keys().size() - 1);
}

TEST(RunConfig, FullScaleProfile) {
  const RunConfig c = parse_run_config("profile = paper\n");
  EXPECT_EQ(c.codec.system.time_steps, 6u);
  EXPECT_EQ(c.codec.system.codeword, 256u);
  EXPECT_EQ(c.codec.hidden_width, 4096u);
  EXPECT_EQ(c.train.epochs, 1000u);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 0.002);
  EXPECT_TRUE(c.train.augment);
  // The command-line profile wins over the file.
  EXPECT_EQ(parse_run_config("profile=paper\n", "desk").profile, "desk");
  EXPECT_THROW(parse_run_config("profile=huge\n"), ConfigError);
}

TEST(RunConfig, CommentsWhitespaceAndOverrides) {
  const RunConfig c = parse_run_config("# header\n\n  cr = 8   # inline\nepochs=3\nfeedback=static\naugment=true\n");
  EXPECT_EQ(c.codec.system.codeword, 2u * 16 * 16 / 8);
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.train.style, FeedbackStyle::static_input);
  EXPECT_TRUE(c.train.augment);
  for (const std::string& d : c.defaulted) {
    EXPECT_FALSE(d.starts_with("cr=")) << d;
    EXPECT_FALSE(d.starts_with("epochs=")) << d;
  }
}

void expect_config_error(const std::string& text, const std::string& needle) {
  try {
    parse_run_config(text);
    FAIL() << "accepted: " << text;
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(RunConfig, Rejections) {
  expect_config_error("epochs=3\nbogus=1\n", "line 2: unknown key 'bogus'");
  expect_config_error("cr=8\ncr=4\n", "duplicate key 'cr'");
  expect_config_error("epochs\n", "line 1: expected key=value");
  expect_config_error("epochs=\n", "empty key or value");
  expect_config_error("epochs=three\n", "epochs");
  expect_config_error("epochs=-3\n", "epochs");
  expect_config_error("augment=maybe\n", "augment");
  expect_config_error("feedback=sideways\n", "feedback");
  expect_config_error("n_s=40\n", "exceeds N_c");
  expect_config_error("cr=7\n", "");
  expect_config_error("holdout=4000\n", "holdout");
  expect_config_error("e_mac=0\n", "energy");
  expect_config_error("min_paths=5\nmax_paths=2\n", "path range");
}

TEST(RunConfig, FormatRoundTrips) {
  const RunConfig a = parse_run_config("cr=8\nlearning_rate=0.0035\nalpha=0.25\nseed=9\nv_reset=-0.125\n");
  const RunConfig b = parse_run_config(format_run_config(a));
  EXPECT_EQ(format_run_config(a), format_run_config(b));
  EXPECT_DOUBLE_EQ(b.train.learning_rate, 0.0035);
  EXPECT_EQ(b.train.seed, 9u);
  EXPECT_EQ(b.codec.lif.v_reset, -0.125);
}

// ---- command line ------------------------------------------------------------------

struct Result {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("spikecsi_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write("tiny.cfg",
          "n_t=8\nn_c=16\nn_s=8\ncr=8\ntime_steps=2\nhidden_width=32\nsamples=40\nholdout=8\n"
          "batch_size=16\nlambda_subset=16\nepochs=3\nseed=7\n");
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name, std::ios::binary) << text;
  }

  std::string read(const std::string& name) const {
    std::ifstream in(dir_ / name, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  Result run(const std::string& args) const {
    const std::string cmd = std::string(SPIKECSI_CLI) + " " + args + " 2>" + path("stderr.txt");
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  Result tiny(const std::string& args) const { return run("--config " + path("tiny.cfg") + " " + args); }

  fs::path dir_;
};

TEST_F(Cli, GenDataIsByteIdenticalAcrossRuns) {
  ASSERT_EQ(tiny("gen-data --out " + path("a.csif")).code, 0);
  ASSERT_EQ(tiny("gen-data --out " + path("b.csif")).code, 0);
  EXPECT_EQ(read("a.csif"), read("b.csif"));
  EXPECT_NE(read("stderr.txt").find("seed 7"), std::string::npos);

  const Dataset ds = load_dataset(path("a.csif"));
  EXPECT_EQ(ds.samples.size(), 40u);
  EXPECT_EQ(ds.rows(), 8u);
  EXPECT_EQ(ds.cols(), 8u);
  float peak = 0.0f;
  for (const ChannelSample& s : ds.samples) {
    for (float v : s.real) peak = std::max(peak, std::abs(v));
    for (float v : s.imag) peak = std::max(peak, std::abs(v));
  }
  EXPECT_NEAR(peak, 25.0f, 1e-4f);

  ASSERT_EQ(tiny("--seed 8 gen-data --out " + path("c.csif")).code, 0);
  EXPECT_NE(read("a.csif"), read("c.csif"));
}

TEST_F(Cli, ConfigErrorsExitTwoWithoutOutput) {
  write("bad.cfg", "n_c=4\nn_s=8\n");
  EXPECT_EQ(run("--config " + path("bad.cfg") + " gen-data --out " + path("x.csif")).code, 2);
  EXPECT_FALSE(fs::exists(path("x.csif")));
  write("unknown.cfg", "colour=blue\n");
  EXPECT_EQ(run("--config " + path("unknown.cfg") + " gen-data --out " + path("x.csif")).code, 2);
  EXPECT_NE(read("stderr.txt").find("unknown key 'colour'"), std::string::npos);
  EXPECT_EQ(run("gen-data").code, 2);
  EXPECT_EQ(run("--profile huge gen-data --out " + path("x.csif")).code, 2);
  EXPECT_EQ(tiny("--seed -1 gen-data --out " + path("x.csif")).code, 2);
  EXPECT_FALSE(fs::exists(path("x.csif")));
}

TEST_F(Cli, DataErrorsExitThree) {
  write("junk.csif", "not a dataset");
  EXPECT_EQ(tiny("train --data " + path("junk.csif") + " --out " + path("m.ckpt")).code, 3);
  EXPECT_FALSE(fs::exists(path("m.ckpt")));

  // A dataset of the wrong geometry is rejected before training.
  ASSERT_EQ(run("--profile desk --seed 1 gen-data --out " + path("big.csif")).code, 0);
  EXPECT_EQ(tiny("train --data " + path("big.csif") + " --out " + path("m.ckpt")).code, 3);
  EXPECT_FALSE(fs::exists(path("m.ckpt")));

  write("ckpt.bin", "garbage");
  ASSERT_EQ(tiny("gen-data --out " + path("d.csif")).code, 0);
  EXPECT_EQ(tiny("eval --checkpoint " + path("ckpt.bin") + " --data " + path("d.csif")).code, 3);
}

TEST_F(Cli, NonFiniteDataIsANumericAbort) {
  ASSERT_EQ(tiny("gen-data --out " + path("d.csif")).code, 0);
  Dataset ds = load_dataset(path("d.csif"));
  ds.samples[20].real[5] = std::numeric_limits<float>::quiet_NaN();
  save_dataset(ds, path("nan.csif"));
  EXPECT_EQ(tiny("train --data " + path("nan.csif") + " --out " + path("m.ckpt")).code, 4);
  EXPECT_NE(read("stderr.txt").find("epoch 0"), std::string::npos) << read("stderr.txt");
}

TEST_F(Cli, ZeroEpochsWritesInitialModel) {
  std::string cfg = read("tiny.cfg");
  cfg.replace(cfg.find("epochs=3"), 8, "epochs=0");
  write("zero.cfg", cfg);
  ASSERT_EQ(run("--config " + path("zero.cfg") + " gen-data --out " + path("d.csif")).code, 0);
  ASSERT_EQ(run("--config " + path("zero.cfg") + " train --data " + path("d.csif") + " --out " + path("m.ckpt")).code,
            0);
  ASSERT_TRUE(fs::exists(path("m.ckpt")));
  std::istringstream csv(read("m.ckpt.metrics.csv"));
  std::string header, extra;
  std::getline(csv, header);
  EXPECT_TRUE(header.starts_with("epoch,lr,loss"));
  EXPECT_FALSE(std::getline(csv, extra));
  const std::string bytes = read("m.ckpt");
  EXPECT_EQ(peek_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.end())).epoch, 0u);
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

TEST_F(Cli, TrainEvalAndEnergy) {
  ASSERT_EQ(tiny("gen-data --out " + path("d.csif")).code, 0);
  ASSERT_EQ(tiny("train --data " + path("d.csif") + " --out " + path("m.ckpt")).code, 0);

  const auto rows = csv_rows(read("m.ckpt.metrics.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].size(), 3u + 2u + 2u + 1u);
  double prev_lr = 1.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(std::stoul(rows[i][0]), i - 1);
    const double lr = std::stod(rows[i][1]);
    EXPECT_LE(lr, prev_lr);
    prev_lr = lr;
    EXPECT_EQ(rows[i][5], "1");  // lambda[1]
  }

  const std::string eval_args = "eval --checkpoint " + path("m.ckpt") + " --data " + path("d.csif");
  const Result e1 = tiny(eval_args);
  const Result e2 = tiny(eval_args);
  ASSERT_EQ(e1.code, 0);
  EXPECT_EQ(e1.out, e2.out);
  // T * M = 2 * 16.
  EXPECT_NE(e1.out.find("feedback bits  32\n"), std::string::npos) << e1.out;
  EXPECT_NE(e1.out.find("samples        40\n"), std::string::npos) << e1.out;
  EXPECT_NE(e1.out.find("nmse t=2"), std::string::npos);

  const Result en =
      tiny("energy --checkpoint " + path("m.ckpt") + " --data " + path("d.csif") + " --out " + path("energy"));
  ASSERT_EQ(en.code, 0);
  const auto energy_rows = csv_rows(read("energy.csv"));
  double sum = 0.0;
  for (std::size_t i = 1; i < energy_rows.size(); ++i) {
    if (!energy_rows[i][0].starts_with("ut_extra.")) sum += std::stod(energy_rows[i][5]);
  }
  const auto at = en.out.find("total_uJ ");
  ASSERT_NE(at, std::string::npos);
  const double printed = std::stod(en.out.substr(at + 9));
  EXPECT_NEAR(sum * 1e6, printed, 1e-6);  // printed to 6 decimals
  EXPECT_EQ(read("energy.txt") + "total_uJ " + en.out.substr(at + 9), en.out);
}

TEST_F(Cli, AnalyticEnergyWithSilentDecoder) {
  const Result r = run("--profile paper energy --rates 0.5,0");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("analytic rates"), std::string::npos);
  const auto row = r.out.find("dec.output");
  ASSERT_NE(row, std::string::npos);
  EXPECT_NE(r.out.substr(row, r.out.find('\n', row) - row).find(" 0.0 ops"), std::string::npos) << r.out;
  EXPECT_EQ(run("--profile paper energy --rates 0.5").code, 2);
  EXPECT_EQ(run("--profile paper energy --rates 0.5,2").code, 2);
  EXPECT_EQ(run("energy").code, 2);
}

TEST_F(Cli, ResumeMatchesUninterruptedRun) {
  ASSERT_EQ(tiny("gen-data --out " + path("d.csif")).code, 0);
  ASSERT_EQ(tiny("train --data " + path("d.csif") + " --out " + path("full.ckpt")).code, 0);

  ASSERT_EQ(tiny("train --stop-after 1 --data " + path("d.csif") + " --out " + path("part.ckpt")).code, 0);
  EXPECT_EQ(csv_rows(read("part.ckpt.metrics.csv")).size(), 2u);
  ASSERT_EQ(tiny("train --data " + path("d.csif") + " --checkpoint " + path("part.ckpt") + " --out " +
                 path("part.ckpt"))
                .code,
            0);
  EXPECT_EQ(read("full.ckpt"), read("part.ckpt"));
  EXPECT_EQ(read("full.ckpt.metrics.csv"), read("part.ckpt.metrics.csv"));
}

}  // namespace
}  // namespace spikecsi
