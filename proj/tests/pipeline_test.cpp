/*
 * Copyright 2026 The qlower Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "cli.hpp"
#include "qlower/error.hpp"
#include "qlower/fixtures.hpp"
#include "qlower/model_io.hpp"
#include "qlower/pipeline.hpp"
#include "test_util.hpp"

namespace qlower {
namespace {

namespace fs = std::filesystem;

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "qlower");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    setenv("QLOWER_LOG", "quiet", 1);
    dir_ = testing_dir("work");
    model_ = (dir_ / "model").string();
    save_model(fixture_cnn(61), model_);
  }

  std::string write_config(const std::string& name, int frac_bits) {
    const auto path = (dir_ / name).string();
    std::ofstream(path) << R"({"model": ")" << model_ << R"(", "seed": 3,
      "quant": {"w_bits": 8, "a_bits": 8, "method": "minmax"},
      "fuse": {"mode": "channelwise", "int_bits": 4, "frac_bits": )"
                        << frac_bits << R"(},
      "export": {"format": "hex"}})";
    return path;
  }

  fs::path dir_;
  std::string model_;
};

TEST_F(Cli, PipelineProducesBundleAndReport) {
  const auto cfg = write_config("demo.json", 12);
  const auto out = (dir_ / "out").string();
  EXPECT_EQ(run_cli({"pipeline", "--config", cfg, "--out", out}), 0);
  EXPECT_TRUE(fs::exists(fs::path(out) / "bundle" / "manifest.json"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "report.json"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "calibrated" / "manifest.json"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "fused" / "manifest.json"));
}

TEST_F(Cli, PipelineIsReproducible) {
  const auto cfg = write_config("demo.json", 12);
  const auto a = (dir_ / "a").string();
  const auto b = (dir_ / "b").string();
  ASSERT_EQ(run_cli({"pipeline", "--config", cfg, "--out", a}), 0);
  ASSERT_EQ(run_cli({"pipeline", "--config", cfg, "--out", b}), 0);
  EXPECT_EQ(dir_digest(a), dir_digest(b));
}

TEST_F(Cli, LossyFixedPointFailsVerification) {
  const auto cfg = write_config("lossy.json", 0);
  const auto out = (dir_ / "lossy").string();
  EXPECT_EQ(run_cli({"pipeline", "--config", cfg, "--out", out}), 3);
  EXPECT_FALSE(fs::exists(fs::path(out) / "bundle"));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({"calibrate", "--model", (dir_ / "missing").string(), "--out", "x"}), 4);
  EXPECT_EQ(run_cli({"calibrate", "--bogus-flag"}), 1);
  EXPECT_EQ(run_cli({}), 1);
  const auto bad = (dir_ / "bad.json").string();
  std::ofstream(bad) << R"({"model": "m", "quant": {"w_bits": 8, "colour": 1}})";
  EXPECT_EQ(run_cli({"pipeline", "--config", bad}), 2);
}

TEST_F(Cli, StagesComposeThroughFiles) {
  const auto c = (dir_ / "c").string();
  const auto p = (dir_ / "p").string();
  const auto f = (dir_ / "f").string();
  const auto b = (dir_ / "b").string();
  ASSERT_EQ(run_cli({"prune", "--model", model_, "--out", p}), 0);
  ASSERT_EQ(run_cli({"calibrate", "--model", p, "--out", c, "--seed", "4"}), 0);
  ASSERT_EQ(run_cli({"fuse", "--model", c, "--out", f}), 0);
  EXPECT_EQ(run_cli({"verify", "--model", f, "--reference", c}), 0);
  EXPECT_EQ(run_cli({"run", "--model", f, "--assert-int-only", "--out", (dir_ / "r.json").string()}), 0);
  ASSERT_EQ(run_cli({"export", "--model", f, "--out", b, "--format", "rawbin"}), 0);
  EXPECT_TRUE(fs::exists(fs::path(b) / "weights" / "conv0.bin"));
}

TEST(PipelineConfig, JsonRoundTripAndUnknownKeys) {
  const auto cfg = pipeline_config_from_json(
      R"({"model": "m", "seed": 9, "fuse": {"int_bits": 12, "frac_bits": 4},
          "sparsity": {"mode": "nm", "n": 2, "m": 4}})");
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.fuse.fp, (FpSpec{12, 4}));
  ASSERT_TRUE(cfg.sparsity.has_value());
  const auto again = pipeline_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(again), to_json(cfg));
  try {
    pipeline_config_from_json(R"({"model": "m", "bogus": 1})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(PipelineConfig, MissingModelNamesPath) {
  PipelineConfig cfg;
  cfg.model = "/nonexistent/model_dir";
  try {
    run_pipeline(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/model_dir"), std::string::npos);
  }
}

}  // namespace
}  // namespace qlower
