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

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "qlower/calibrate.hpp"
#include "qlower/compare.hpp"
#include "qlower/export.hpp"
#include "qlower/fusion.hpp"
#include "qlower/sparsity.hpp"

namespace qlower {

struct VerifyTolerance {
  /// Largest teacher-forced per-layer divergence, in output LSBs.
  double max_layer_lsb = 8.0;
  /// Smallest argmax agreement of the integer path with fake quantization.
  double min_argmax = 0.9;
};

/// calibrate -> (prune) -> fuse -> verify -> export.
struct PipelineConfig {
  std::string model;
  /// Tensor container with calibration batches; random batches when empty.
  std::string calib;
  std::string out = "qlower_out";
  std::uint64_t seed = 0;
  int calib_batches = 8;
  int eval_batches = 4;
  int batch_size = 16;
  QConfig quant;
  FuseMode fuse;
  std::optional<SparsityConfig> sparsity;
  ExportConfig export_cfg;
  VerifyTolerance verify;
};

/// Parses the JSON form; unknown keys are kConfig errors.
PipelineConfig pipeline_config_from_json(const std::string& text);
std::string to_json(const PipelineConfig& cfg);

// JSON sections shared with the individual CLI stages.
QConfig qconfig_from_json(const std::string& text);
FuseMode fuse_mode_from_json(const std::string& text);
SparsityConfig sparsity_config_from_json(const std::string& text);
ExportConfig export_config_from_json(const std::string& text);

struct VerifyResult {
  ExecReport report;
  bool passed = true;
  std::string reason;
};

VerifyResult verify_paths(const Graph& calibrated, const Graph& fused,
                          const std::vector<Tensor>& batches, const VerifyTolerance& tol);

struct PipelineResult {
  VerifyResult verify;
  std::string bundle_dir;
};

/// Structured progress: stage name plus a JSON object.
using PipelineLog = std::function<void(const std::string& stage, const std::string& json)>;

/// Runs every stage, persisting intermediate graphs under cfg.out
/// (calibrated/, fused/, bundle/, report.json). Stops before export when
/// verification fails. Same config and seed give byte-identical outputs.
PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineLog& log = {});

/// Calibration batches from a container, or seeded random ones shaped like
/// the model input with `batch_size` rows.
std::vector<Tensor> load_or_random_batches(const Graph& g, const std::string& path, int count,
                                           int batch_size, std::uint64_t seed);

}  // namespace qlower
