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

#include <string>
#include <vector>

#include "qlower/graph.hpp"

namespace qlower {

/// Resolves the shape of every edge (including attention internals such as
/// "<node>:scores"). Deterministic and idempotent. Throws kShapeMismatch
/// naming the node on inconsistent shapes.
Graph infer_shapes(const Graph& g);

/// Output shape of a single node given its input shapes.
std::vector<Shape> node_output_shapes(const Graph& g, const Node& node,
                                      const std::vector<Shape>& in_shapes);

struct Violation {
  std::string where;  // node id, tensor name or edge name
  std::string message;

  std::string str() const { return where + ": " + message; }
};

/// Every invariant violation in `g`; empty means valid. Never throws.
std::vector<Violation> validate(const Graph& g);

/// Node ids on a dependency cycle, or empty when acyclic.
std::vector<std::string> find_cycle(const Graph& g);

/// Stable topological reorder of `g.nodes`. Throws kCyclicGraph listing the
/// node ids on the cycle.
void topo_sort(Graph& g);

}  // namespace qlower
