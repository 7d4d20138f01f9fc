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

#include "qlower/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "json_io.hpp"
#include "qlower/error.hpp"
#include "qlower/fixtures.hpp"
#include "qlower/model_io.hpp"

namespace qlower {

using detail::json;

namespace {

json parse(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, "malformed " + what + " JSON: " + e.what());
  }
}

void only_keys(const json& j, const std::set<std::string>& keys, const std::string& section) {
  require(j.is_object(), ErrorKind::kConfig, section + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    require(keys.count(it.key()) > 0, ErrorKind::kConfig,
            "unknown key '" + it.key() + "' in " + section);
  }
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

QConfig qconfig_from(const json& j) {
  only_keys(j, {"w_bits", "a_bits", "method", "per_channel", "symmetric_a", "signed_a",
                "calib_batches", "percentile", "prefuse", "layernorm_mode", "probs_frac",
                "adaround"},
            "quant");
  QConfig q;
  take(j, "w_bits", q.w_bits);
  take(j, "a_bits", q.a_bits);
  std::string method = to_string(q.method);
  take(j, "method", method);
  q.method = calib_method_from_string(method);
  take(j, "per_channel", q.per_channel_w);
  take(j, "symmetric_a", q.symmetric_a);
  take(j, "signed_a", q.signed_a);
  take(j, "calib_batches", q.calib_batches);
  take(j, "percentile", q.act_percentile);
  take(j, "prefuse", q.prefuse);
  take(j, "layernorm_mode", q.layernorm_mode);
  take(j, "probs_frac", q.probs_frac);
  if (j.contains("adaround")) {
    const auto& a = j["adaround"];
    only_keys(a, {"iters", "lambda", "beta_start", "beta_end", "warmup", "lr"}, "adaround");
    take(a, "iters", q.adaround.iters);
    take(a, "lambda", q.adaround.lambda_reg);
    take(a, "beta_start", q.adaround.beta_start);
    take(a, "beta_end", q.adaround.beta_end);
    take(a, "warmup", q.adaround.warmup);
    take(a, "lr", q.adaround.lr);
  }
  validate_qconfig(q);
  return q;
}

json qconfig_to(const QConfig& q) {
  return json{{"w_bits", q.w_bits},
              {"a_bits", q.a_bits},
              {"method", to_string(q.method)},
              {"per_channel", q.per_channel_w},
              {"symmetric_a", q.symmetric_a},
              {"signed_a", q.signed_a},
              {"calib_batches", q.calib_batches},
              {"percentile", q.act_percentile},
              {"prefuse", q.prefuse},
              {"layernorm_mode", q.layernorm_mode},
              {"probs_frac", q.probs_frac},
              {"adaround",
               {{"iters", q.adaround.iters},
                {"lambda", q.adaround.lambda_reg},
                {"beta_start", q.adaround.beta_start},
                {"beta_end", q.adaround.beta_end},
                {"warmup", q.adaround.warmup},
                {"lr", q.adaround.lr}}}};
}

FuseMode fuse_from(const json& j) {
  only_keys(j, {"mode", "int_bits", "frac_bits", "lut_entries", "lut_frac", "gelu_clip"}, "fuse");
  FuseMode f;
  std::string mode = to_string(f.kind);
  take(j, "mode", mode);
  f.kind = fuse_kind_from_string(mode);
  take(j, "int_bits", f.fp.int_bits);
  take(j, "frac_bits", f.fp.frac_bits);
  take(j, "lut_entries", f.lut_entries);
  take(j, "lut_frac", f.lut_frac);
  take(j, "gelu_clip", f.gelu_clip);
  require(f.fp.int_bits >= 1 && f.fp.frac_bits >= 0 && f.fp.total_bits() <= 32, ErrorKind::kConfig,
          "fixed-point split must have int_bits >= 1, frac_bits >= 0 and at most 32 bits");
  return f;
}

json fuse_to(const FuseMode& f) {
  return json{{"mode", to_string(f.kind)},       {"int_bits", f.fp.int_bits},
              {"frac_bits", f.fp.frac_bits},     {"lut_entries", f.lut_entries},
              {"lut_frac", f.lut_frac},          {"gelu_clip", f.gelu_clip}};
}

SparsityConfig sparsity_from(const json& j) {
  only_keys(j, {"mode", "sparsity", "n", "m", "group_axis", "schedule"}, "sparsity");
  SparsityConfig s;
  std::string mode = to_string(s.mode);
  take(j, "mode", mode);
  s.mode = sparsity_mode_from_string(mode);
  take(j, "sparsity", s.target);
  take(j, "n", s.n);
  take(j, "m", s.m);
  take(j, "group_axis", s.group_axis);
  if (j.contains("schedule")) {
    const auto& c = j["schedule"];
    only_keys(c, {"s_init", "s_final", "total_steps"}, "schedule");
    SparsitySchedule sc;
    take(c, "s_init", sc.s_init);
    take(c, "s_final", sc.s_final);
    take(c, "total_steps", sc.total_steps);
    s.schedule = sc;
  }
  require(s.mode != SparsityMode::kNm || (s.n >= 0 && s.n < s.m), ErrorKind::kConfig,
          "N:M sparsity needs 0 <= n < m");
  require(s.target >= 0 && s.target < 1, ErrorKind::kConfig, "sparsity must be in [0, 1)");
  return s;
}

json sparsity_to(const SparsityConfig& s) {
  json j{{"mode", to_string(s.mode)}, {"sparsity", s.target}, {"n", s.n}, {"m", s.m},
         {"group_axis", s.group_axis}};
  if (s.schedule) {
    j["schedule"] = {{"s_init", s.schedule->s_init},
                     {"s_final", s.schedule->s_final},
                     {"total_steps", s.schedule->total_steps}};
  }
  return j;
}

ExportConfig export_from(const json& j) {
  only_keys(j, {"format", "word_bits", "words_per_line", "axis_order", "pack"}, "export");
  ExportConfig e;
  std::string fmt = to_string(e.format);
  take(j, "format", fmt);
  e.format = export_format_from_string(fmt);
  take(j, "word_bits", e.word_bits);
  take(j, "words_per_line", e.words_per_line);
  take(j, "axis_order", e.axis_order);
  take(j, "pack", e.pack);
  require(e.words_per_line >= 1, ErrorKind::kConfig, "words_per_line must be >= 1");
  require(e.word_bits >= 0 && e.word_bits <= 32, ErrorKind::kConfig, "word_bits must be in [0, 32]");
  return e;
}

json export_to(const ExportConfig& e) {
  return json{{"format", to_string(e.format)}, {"word_bits", e.word_bits},
              {"words_per_line", e.words_per_line}, {"axis_order", e.axis_order},
              {"pack", e.pack}};
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot write '" + p.string() + "'");
  f << s;
}

}  // namespace

QConfig qconfig_from_json(const std::string& text) { return qconfig_from(parse(text, "quant")); }
FuseMode fuse_mode_from_json(const std::string& text) { return fuse_from(parse(text, "fuse")); }
SparsityConfig sparsity_config_from_json(const std::string& text) {
  return sparsity_from(parse(text, "sparsity"));
}
ExportConfig export_config_from_json(const std::string& text) {
  return export_from(parse(text, "export"));
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
  const auto j = parse(text, "pipeline config");
  only_keys(j, {"model", "calib", "out", "seed", "calib_batches", "eval_batches", "batch_size",
                "quant", "fuse", "sparsity", "export", "verify"},
            "pipeline config");
  PipelineConfig c;
  take(j, "model", c.model);
  take(j, "calib", c.calib);
  take(j, "out", c.out);
  take(j, "seed", c.seed);
  take(j, "calib_batches", c.calib_batches);
  take(j, "eval_batches", c.eval_batches);
  take(j, "batch_size", c.batch_size);
  if (j.contains("quant")) c.quant = qconfig_from(j["quant"]);
  if (j.contains("fuse")) c.fuse = fuse_from(j["fuse"]);
  if (j.contains("sparsity") && !j["sparsity"].is_null()) c.sparsity = sparsity_from(j["sparsity"]);
  if (j.contains("export")) c.export_cfg = export_from(j["export"]);
  if (j.contains("verify")) {
    only_keys(j["verify"], {"max_layer_lsb", "min_argmax"}, "verify");
    take(j["verify"], "max_layer_lsb", c.verify.max_layer_lsb);
    take(j["verify"], "min_argmax", c.verify.min_argmax);
  }
  // The calibration must match the fusion the graph is headed for.
  c.quant.prefuse = c.fuse.kind == FuseKind::kPrefuse;
  require(c.calib_batches >= 1 && c.eval_batches >= 1 && c.batch_size >= 1, ErrorKind::kConfig,
          "batch counts and sizes must be positive");
  return c;
}

std::string to_json(const PipelineConfig& c) {
  json j{{"model", c.model},
         {"calib", c.calib},
         {"out", c.out},
         {"seed", c.seed},
         {"calib_batches", c.calib_batches},
         {"eval_batches", c.eval_batches},
         {"batch_size", c.batch_size},
         {"quant", qconfig_to(c.quant)},
         {"fuse", fuse_to(c.fuse)},
         {"export", export_to(c.export_cfg)},
         {"verify", {{"max_layer_lsb", c.verify.max_layer_lsb}, {"min_argmax", c.verify.min_argmax}}}};
  if (c.sparsity) j["sparsity"] = sparsity_to(*c.sparsity);
  return j.dump(2);
}

VerifyResult verify_paths(const Graph& calibrated, const Graph& fused,
                          const std::vector<Tensor>& batches, const VerifyTolerance& tol) {
  VerifyResult v;
  v.report = compare_paths(calibrated, fused, batches);
  if (v.report.max_layer_lsb() > tol.max_layer_lsb) {
    v.passed = false;
    for (const auto& l : v.report.layers) {
      if (l.max_lsb > tol.max_layer_lsb) {
        v.reason = "edge '" + l.edge + "' diverges by " + std::to_string(l.max_lsb) +
                   " LSB (limit " + std::to_string(tol.max_layer_lsb) + ")";
        break;
      }
    }
  } else if (v.report.argmax_agreement < tol.min_argmax) {
    v.passed = false;
    v.reason = "argmax agreement " + std::to_string(v.report.argmax_agreement) +
               " below " + std::to_string(tol.min_argmax);
  }
  return v;
}

std::vector<Tensor> load_or_random_batches(const Graph& g, const std::string& path, int count,
                                           int batch_size, std::uint64_t seed) {
  if (!path.empty()) {
    std::vector<Tensor> out;
    for (auto& [name, t] : load_tensors(path)) out.push_back(std::move(t));
    require(!out.empty(), ErrorKind::kEmptyCalibration, "no tensors in '" + path + "'");
    return out;
  }
  require(!g.inputs.empty(), ErrorKind::kInvalidGraph, "graph has no inputs");
  Shape s = g.inputs[0].shape;
  s[0] = batch_size;
  return random_batches(s, count, seed);
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineLog& log) {
  auto note = [&](const std::string& stage, const json& j) {
    if (log) log(stage, j.dump());
  };
  require(!cfg.model.empty(), ErrorKind::kConfig, "pipeline config has no model path");
  require(std::filesystem::exists(cfg.model), ErrorKind::kIo,
          "model path '" + cfg.model + "' does not exist");
  const std::filesystem::path out(cfg.out);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  require(!ec, ErrorKind::kIo, "cannot create output directory '" + cfg.out + "'");

  Graph g = load_model(cfg.model);
  note("load", {{"model", cfg.model}, {"nodes", g.nodes.size()}});
  if (cfg.sparsity) {
    g = prune_graph(g, *cfg.sparsity);
    note("prune", {{"mode", to_string(cfg.sparsity->mode)}});
  }
  QConfig q = cfg.quant;
  q.prefuse = cfg.fuse.kind == FuseKind::kPrefuse;
  const auto calib = load_or_random_batches(g, cfg.calib, cfg.calib_batches, cfg.batch_size, cfg.seed);
  const Graph cg = calibrate_graph(g, calib, q);
  save_model(cg, out / "calibrated");
  note("calibrate", {{"batches", calib.size()}, {"method", to_string(q.method)}});

  const Graph fg = fuse_graph(cg, cfg.fuse);
  save_model(fg, out / "fused");
  note("fuse", {{"mode", to_string(cfg.fuse.kind)},
                {"int_bits", cfg.fuse.fp.int_bits},
                {"frac_bits", cfg.fuse.fp.frac_bits}});

  const auto eval = load_or_random_batches(g, "", cfg.eval_batches, cfg.batch_size, cfg.seed + 1);
  PipelineResult r;
  r.verify = verify_paths(cg, fg, eval, cfg.verify);
  write_text(out / "report.json", r.verify.report.to_json(false) + "\n");
  note("verify", {{"passed", r.verify.passed},
                  {"max_layer_lsb", r.verify.report.max_layer_lsb()},
                  {"argmax_agreement", r.verify.report.argmax_agreement},
                  {"reason", r.verify.reason}});
  if (!r.verify.passed) return r;

  r.bundle_dir = (out / "bundle").string();
  std::filesystem::remove_all(out / "bundle", ec);
  export_model(fg, out / "bundle", cfg.export_cfg);
  note("export", {{"bundle", r.bundle_dir}, {"format", to_string(cfg.export_cfg.format)}});
  return r;
}

}  // namespace qlower
