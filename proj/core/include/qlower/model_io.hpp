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

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qlower/graph.hpp"

namespace qlower {

/// Interchange container: `manifest.json` plus `tensors/*.bin` raw
/// little-endian row-major blobs, as a directory or a single `.zip`.
///
/// Errors: kIo (no manifest), kMissingBlob, kByteCountMismatch, kUnknownOp,
/// kCyclicGraph, kInvalidGraph (any other violation); messages name the
/// offending node or tensor.
Graph load_model(const std::filesystem::path& path);

/// Writes `g` so that load_model reproduces it exactly. kIo on unwritable
/// paths.
void save_model(const Graph& g, const std::filesystem::path& path);

/// Manifest text exactly as save_model writes it.
std::string model_manifest(const Graph& g);

using NamedTensor = std::pair<std::string, Tensor>;

/// Tensor-only container (same manifest/blob layout, no graph), used for
/// calibration and evaluation batches.
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);
void save_tensors(const std::filesystem::path& path,
                  const std::vector<NamedTensor>& tensors);

}  // namespace qlower
