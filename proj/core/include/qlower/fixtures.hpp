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
#include <vector>

#include "qlower/graph.hpp"
#include "qlower/tensor.hpp"

namespace qlower {

// Randomly initialized models used by the tests, the benchmarks and the
// `fixture` CLI helper. Same seed, same model.

/// `blocks` x (conv3x3 -> batchnorm -> relu) then a linear classifier, on
/// [N, 3, 8, 8] inputs. The first conv keeps the resolution, later ones
/// use stride 2.
Graph fixture_cnn(std::uint64_t seed, int blocks = 3, std::int64_t width = 8,
                  std::int64_t classes = 10);

/// One multi-head attention node on [N, tokens, embed].
Graph fixture_attention(std::uint64_t seed, std::int64_t tokens = 8, std::int64_t embed = 16,
                        std::int64_t heads = 2);

/// Pre-norm transformer block: layernorm -> attention -> add -> layernorm
/// -> linear -> gelu -> linear -> add.
Graph fixture_vit_block(std::uint64_t seed, std::int64_t tokens = 8, std::int64_t embed = 16,
                        std::int64_t heads = 2);

/// conv -> batchnorm layers whose batchnorm gamma spans `spread` x across
/// channels (log-uniform).
Graph fixture_gamma_spread(std::uint64_t seed, int layers = 3, double spread = 100.0);

/// `count` standard-normal tensors of `shape`.
std::vector<Tensor> random_batches(const Shape& shape, int count, std::uint64_t seed,
                                   double stddev = 1.0);

/// Uniform random float tensor in [lo, hi).
Tensor random_uniform(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

}  // namespace qlower
