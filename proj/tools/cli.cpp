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

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "qlower/calibrate.hpp"
#include "qlower/compare.hpp"
#include "qlower/error.hpp"
#include "qlower/executor.hpp"
#include "qlower/export.hpp"
#include "qlower/fixtures.hpp"
#include "qlower/fusion.hpp"
#include "qlower/instrument.hpp"
#include "qlower/model_io.hpp"
#include "qlower/pipeline.hpp"
#include "qlower/sparsity.hpp"

namespace qlower {

namespace {

using json = nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitVerify = 3;
constexpr int kExitIo = 4;

// QLOWER_LOG=quiet silences progress; anything else prints it.
bool quiet() {
  const char* v = std::getenv("QLOWER_LOG");
  return v && std::string(v) == "quiet";
}

void log_event(const std::string& stage, const json& fields) {
  if (quiet()) return;
  json j = fields;
  j["stage"] = stage;
  std::cerr << j.dump() << "\n";
}

void log_error(const std::string& stage, const std::string& kind, const std::string& msg) {
  std::cerr << json{{"stage", stage}, {"level", "error"}, {"kind", kind}, {"message", msg}}.dump()
            << "\n";
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kIo:
    case ErrorKind::kMissingBlob:
    case ErrorKind::kByteCountMismatch:
      return kExitIo;
    default:
      return kExitConfig;
  }
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot write '" + path + "'");
  f << text;
}

Graph load_checked(const std::string& path) {
  require(std::filesystem::exists(path), ErrorKind::kIo, "model path '" + path + "' does not exist");
  return load_model(path);
}

struct Args {
  std::string model, calib, out, config, reference, input, kind = "cnn", method = "minmax";
  std::string fuse_mode = "channelwise", layernorm_mode = "instant", format = "hex";
  std::string sparsity_mode = "nm";
  int w_bits = 8, a_bits = 8, int_bits = 4, frac_bits = 12, batches = 8, batch_size = 16;
  int word_bits = 0, words_per_line = 1, n = 2, m = 4, group_axis = 1;
  double sparsity = 0.5, percentile = 0.0, max_lsb = 8.0, min_argmax = 0.9;
  std::uint64_t seed = 0;
  bool prefuse = false, pack = false, assert_int_only = false, per_tensor = false;
};

int do_fixture(const Args& a) {
  Graph g;
  if (a.kind == "cnn") g = fixture_cnn(a.seed);
  else if (a.kind == "attention") g = fixture_attention(a.seed);
  else if (a.kind == "vit") g = fixture_vit_block(a.seed);
  else if (a.kind == "gamma") g = fixture_gamma_spread(a.seed);
  else fail(ErrorKind::kConfig, "unknown fixture kind '" + a.kind + "'");
  save_model(g, a.out);
  log_event("fixture", {{"kind", a.kind}, {"out", a.out}});
  return 0;
}

int do_calibrate(const Args& a) {
  QConfig q;
  if (!a.config.empty()) {
    q = qconfig_from_json(read_text(a.config));
  } else {
    q.w_bits = a.w_bits;
    q.a_bits = a.a_bits;
    q.method = calib_method_from_string(a.method);
    q.prefuse = a.prefuse;
    q.act_percentile = a.percentile;
    q.per_channel_w = !a.per_tensor;
    q.layernorm_mode = a.layernorm_mode;
  }
  const Graph g = load_checked(a.model);
  const auto batches = load_or_random_batches(g, a.calib, a.batches, a.batch_size, a.seed);
  const Graph cg = calibrate_graph(g, batches, q);
  save_model(cg, a.out);
  log_event("calibrate", {{"out", a.out}, {"batches", batches.size()}, {"method", to_string(q.method)}});
  return 0;
}

int do_prune(const Args& a) {
  SparsityConfig s;
  if (!a.config.empty()) {
    s = sparsity_config_from_json(read_text(a.config));
  } else {
    s.mode = sparsity_mode_from_string(a.sparsity_mode);
    s.target = a.sparsity;
    s.n = a.n;
    s.m = a.m;
    s.group_axis = a.group_axis;
  }
  const Graph g = prune_graph(load_checked(a.model), s);
  save_model(g, a.out);
  log_event("prune", {{"out", a.out}, {"mode", to_string(s.mode)}});
  return 0;
}

int do_fuse(const Args& a) {
  FuseMode f;
  if (!a.config.empty()) {
    f = fuse_mode_from_json(read_text(a.config));
  } else {
    f.kind = fuse_kind_from_string(a.fuse_mode);
    f.fp = {a.int_bits, a.frac_bits};
  }
  const Graph fg = fuse_graph(load_checked(a.model), f);
  save_model(fg, a.out);
  log_event("fuse", {{"out", a.out}, {"int_bits", f.fp.int_bits}, {"frac_bits", f.fp.frac_bits}});
  return 0;
}

int do_verify(const Args& a) {
  const Graph cg = load_checked(a.reference);
  const Graph fg = load_checked(a.model);
  const auto data = load_or_random_batches(cg, a.input, a.batches, a.batch_size, a.seed);
  const auto v = verify_paths(cg, fg, data, {a.max_lsb, a.min_argmax});
  std::cout << v.report.to_json(false) << "\n";
  log_event("verify", {{"passed", v.passed}, {"reason", v.reason}});
  return v.passed ? 0 : kExitVerify;
}

int do_export(const Args& a) {
  ExportConfig e;
  if (!a.config.empty()) {
    e = export_config_from_json(read_text(a.config));
  } else {
    e.format = export_format_from_string(a.format);
    e.word_bits = a.word_bits;
    e.words_per_line = a.words_per_line;
    e.pack = a.pack;
  }
  export_model(load_checked(a.model), a.out, e);
  log_event("export", {{"out", a.out}, {"format", to_string(e.format)}});
  return 0;
}

int do_run(const Args& a) {
  const Graph fg = load_checked(a.model);
  std::string text;
  if (!a.reference.empty()) {
    const Graph cg = load_checked(a.reference);
    const auto data = load_or_random_batches(cg, a.input, a.batches, a.batch_size, a.seed);
    text = compare_paths(cg, fg, data).to_json(true);
  } else {
    const auto data = load_or_random_batches(fg, a.input, a.batches, a.batch_size, a.seed);
    IntRunOptions opts;
    opts.assert_int_only = a.assert_int_only;
    json j;
    j["samples"] = 0;
    auto& preds = j["argmax"] = json::array();
    std::int64_t rows = 0;
    for (const auto& x : data) {
      const Tensor xq = quantize_input(fg, x);
      const Tensor y = exec_int(fg, xq, nullptr, opts);
      for (auto p : argmax_rows(y)) preds.push_back(p);
      rows += static_cast<std::int64_t>(argmax_rows(y).size());
    }
    j["samples"] = rows;
    j["int_only"] = a.assert_int_only;
    text = j.dump(2);
  }
  if (a.out.empty()) {
    std::cout << text << "\n";
  } else {
    write_text(a.out, text + "\n");
  }
  log_event("run", {{"model", a.model}});
  return 0;
}

int do_pipeline(const Args& a, bool seed_set, bool out_set) {
  PipelineConfig c = pipeline_config_from_json(read_text(a.config));
  if (seed_set) c.seed = a.seed;
  if (out_set) c.out = a.out;
  if (!a.model.empty()) c.model = a.model;
  const auto r = run_pipeline(c, [](const std::string& stage, const std::string& j) {
    log_event(stage, json::parse(j));
  });
  if (!r.verify.passed) {
    log_error("verify", "VerifyFailed", r.verify.reason);
    return kExitVerify;
  }
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"qlower: post-training quantization, fusion and integer lowering"};
  app.require_subcommand(1);
  Args a;

  auto* fixture = app.add_subcommand("fixture", "write a randomly initialized fixture model");
  fixture->add_option("--kind", a.kind, "cnn | attention | vit | gamma");
  fixture->add_option("--seed", a.seed);
  fixture->add_option("--out", a.out)->required();

  auto* calibrate = app.add_subcommand("calibrate", "annotate a float model with quant params");
  calibrate->add_option("--model", a.model)->required();
  calibrate->add_option("--calib", a.calib, "tensor container with calibration batches");
  calibrate->add_option("--out", a.out)->required();
  calibrate->add_option("--config", a.config, "quant section JSON");
  calibrate->add_option("--w-bits", a.w_bits);
  calibrate->add_option("--a-bits", a.a_bits);
  calibrate->add_option("--method", a.method, "minmax | mse | adaround");
  calibrate->add_option("--percentile", a.percentile);
  calibrate->add_option("--layernorm-mode", a.layernorm_mode, "instant | running");
  calibrate->add_flag("--prefuse", a.prefuse, "fold batchnorm into weights first");
  calibrate->add_flag("--per-tensor", a.per_tensor, "per-tensor weight params");
  calibrate->add_option("--batches", a.batches);
  calibrate->add_option("--batch-size", a.batch_size);
  calibrate->add_option("--seed", a.seed);

  auto* prune = app.add_subcommand("prune", "sparsify float weights");
  prune->add_option("--model", a.model)->required();
  prune->add_option("--out", a.out)->required();
  prune->add_option("--config", a.config, "sparsity section JSON");
  prune->add_option("--mode", a.sparsity_mode, "nm | elementwise");
  prune->add_option("--sparsity", a.sparsity);
  prune->add_option("--n", a.n);
  prune->add_option("--m", a.m);
  prune->add_option("--group-axis", a.group_axis);

  auto* fuse = app.add_subcommand("fuse", "lower a calibrated model to integer-only form");
  fuse->add_option("--model", a.model)->required();
  fuse->add_option("--out", a.out)->required();
  fuse->add_option("--config", a.config, "fuse section JSON");
  fuse->add_option("--mode", a.fuse_mode, "channelwise | prefuse");
  fuse->add_option("--int-bits", a.int_bits);
  fuse->add_option("--frac-bits", a.frac_bits);

  auto* verify = app.add_subcommand("verify", "compare the integer and fake-quant paths");
  verify->add_option("--model", a.model, "fused model")->required();
  verify->add_option("--reference", a.reference, "calibrated model")->required();
  verify->add_option("--input", a.input, "tensor container");
  verify->add_option("--max-lsb", a.max_lsb);
  verify->add_option("--min-argmax", a.min_argmax);
  verify->add_option("--batches", a.batches);
  verify->add_option("--batch-size", a.batch_size);
  verify->add_option("--seed", a.seed);

  auto* exp = app.add_subcommand("export", "write a deployment bundle");
  exp->add_option("--model", a.model)->required();
  exp->add_option("--out", a.out)->required();
  exp->add_option("--config", a.config, "export section JSON");
  exp->add_option("--format", a.format, "hex | binstr | rawbin | decimal_json");
  exp->add_option("--word-bits", a.word_bits);
  exp->add_option("--words-per-line", a.words_per_line);
  exp->add_flag("--pack", a.pack);

  auto* run = app.add_subcommand("run", "execute a fused model and report");
  run->add_option("--model", a.model, "fused model")->required();
  run->add_option("--reference", a.reference, "calibrated model; emits a path comparison");
  run->add_option("--input", a.input, "tensor container");
  run->add_option("--out", a.out, "report file (stdout when absent)");
  run->add_flag("--assert-int-only", a.assert_int_only);
  run->add_option("--batches", a.batches);
  run->add_option("--batch-size", a.batch_size);
  run->add_option("--seed", a.seed);

  auto* pipeline = app.add_subcommand("pipeline", "calibrate, prune, fuse, verify and export");
  pipeline->add_option("--config", a.config)->required();
  pipeline->add_option("--model", a.model, "overrides the config");
  auto* pseed = pipeline->add_option("--seed", a.seed, "overrides the config");
  auto* pout = pipeline->add_option("--out", a.out, "overrides the config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string stage = sub->get_name();
  try {
    if (stage == "fixture") return do_fixture(a);
    if (stage == "calibrate") return do_calibrate(a);
    if (stage == "prune") return do_prune(a);
    if (stage == "fuse") return do_fuse(a);
    if (stage == "verify") return do_verify(a);
    if (stage == "export") return do_export(a);
    if (stage == "run") return do_run(a);
    return do_pipeline(a, pseed->count() > 0, pout->count() > 0);
  } catch (const Error& e) {
    log_error(stage, std::string(to_string(e.kind())), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    log_error(stage, "Internal", e.what());
    return kExitConfig;
  }
}

}  // namespace qlower
