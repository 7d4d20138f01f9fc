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

#include "qlower/model_io.hpp"

#include <set>

#include "archive.hpp"
#include "json_io.hpp"
#include "qlower/analysis.hpp"
#include "qlower/error.hpp"

namespace fs = std::filesystem;

namespace qlower {

using detail::json;

namespace {

constexpr int kFormatVersion = 1;

json tensor_entries(const std::vector<std::pair<std::string, const Tensor*>>& ts,
                    detail::FileMap& files) {
  json arr = json::array();
  std::set<std::string> used;
  for (const auto& [name, t] : ts) {
    std::string stem = detail::sanitize_file_stem(name);
    std::string file = "tensors/" + stem + ".bin";
    for (int i = 1; used.count(file); ++i) {
      file = "tensors/" + stem + "_" + std::to_string(i) + ".bin";
    }
    used.insert(file);
    auto blob = detail::encode_blob(*t);
    arr.push_back(json{{"name", name},
                       {"shape", t->shape()},
                       {"dtype", t->dtype().storage_name()},
                       {"bits", t->dtype().bits},
                       {"signed", t->dtype().is_signed},
                       {"file", file},
                       {"byte_len", blob.size()}});
    files[file] = std::move(blob);
  }
  return arr;
}

Tensor read_tensor_entry(const json& e, const detail::FileMap& files) {
  const auto name = e.at("name").get<std::string>();
  const auto shape = e.at("shape").get<Shape>();
  for (auto d : shape) {
    require(d > 0, ErrorKind::kShapeMismatch,
            "tensor '" + name + "' has non-positive extent");
  }
  const auto dtype = detail::dtype_from_json(e.at("dtype").get<std::string>(),
                                             e.value("bits", 32),
                                             e.value("signed", true));
  const auto file = e.at("file").get<std::string>();
  const auto byte_len = e.at("byte_len").get<std::int64_t>();
  const auto expected = element_count(shape) * dtype.storage_bytes();
  require(byte_len == expected, ErrorKind::kByteCountMismatch,
          "tensor '" + name + "': manifest byte_len " +
              std::to_string(byte_len) + " but shape " + shape_to_string(shape) +
              " " + dtype.storage_name() + " needs " + std::to_string(expected));
  auto it = files.find(file);
  require(it != files.end(), ErrorKind::kMissingBlob,
          "tensor '" + name + "': blob '" + file + "' is missing");
  return detail::decode_blob(name, shape, dtype, it->second);
}

detail::FileMap load_files(const fs::path& path) {
  auto files = detail::read_container(path);
  require(files.count("manifest.json") > 0, ErrorKind::kIo,
          "'" + path.string() + "' has no manifest.json");
  return files;
}

json parse_manifest(const detail::FileMap& files) {
  const auto& bytes = files.at("manifest.json");
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("manifest.json: ") + e.what());
  }
}

json build_manifest(const Graph& g, detail::FileMap& files) {
  json m;
  m["version"] = kFormatVersion;
  json inputs = json::array();
  for (const auto& in : g.inputs) {
    inputs.push_back(json{{"name", in.name},
                          {"shape", in.shape},
                          {"dtype", in.dtype.storage_name()},
                          {"bits", in.dtype.bits},
                          {"signed", in.dtype.is_signed}});
  }
  m["inputs"] = inputs;
  m["outputs"] = g.outputs;
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    nodes.push_back(json{{"id", n.id},
                         {"kind", to_string(n.kind)},
                         {"attrs", detail::attrs_to_json(n.attrs)},
                         {"inputs", n.inputs},
                         {"outputs", n.outputs},
                         {"params", n.params}});
  }
  m["nodes"] = nodes;

  std::vector<std::pair<std::string, const Tensor*>> ts;
  for (const auto& [name, t] : g.tensors) ts.emplace_back(name, &t);
  m["tensors"] = tensor_entries(ts, files);
  for (auto& e : m["tensors"]) {
    const auto name = e["name"].get<std::string>();
    if (auto* qp = g.weight_qp(name)) e["quant"] = detail::quant_to_json(*qp);
  }
  json edges = json::object();
  for (const auto& [edge, shape] : g.edge_shapes) edges[edge]["shape"] = shape;
  for (const auto& [edge, qp] : g.edge_quant) {
    edges[edge]["quant"] = detail::quant_to_json(qp);
  }
  m["edges"] = edges;
  m["meta"] = g.meta;
  return m;
}

}  // namespace

std::string model_manifest(const Graph& g) {
  detail::FileMap files;
  return build_manifest(g, files).dump(2) + "\n";
}

void save_model(const Graph& g, const fs::path& path) {
  detail::FileMap files;
  const auto text = build_manifest(g, files).dump(2) + "\n";
  files["manifest.json"] = std::vector<std::uint8_t>(text.begin(), text.end());
  detail::write_container(path, files);
}

Graph load_model(const fs::path& path) {
  const auto files = load_files(path);
  const json m = parse_manifest(files);
  Graph g;
  try {
    for (const auto& in : m.at("inputs")) {
      ValueInfo vi;
      vi.name = in.at("name").get<std::string>();
      vi.shape = in.at("shape").get<Shape>();
      vi.dtype = detail::dtype_from_json(in.value("dtype", "float32"),
                                         in.value("bits", 32),
                                         in.value("signed", true));
      g.inputs.push_back(vi);
    }
    g.outputs = m.at("outputs").get<std::vector<std::string>>();
    for (const auto& jn : m.at("nodes")) {
      Node n;
      n.id = jn.at("id").get<std::string>();
      const auto kind = jn.at("kind").get<std::string>();
      auto k = op_kind_from_string(kind);
      require(k.has_value(), ErrorKind::kUnknownOp,
              "node '" + n.id + "' has unknown op kind '" + kind + "'");
      n.kind = *k;
      n.attrs = detail::attrs_from_json(jn.value("attrs", json::object()));
      n.inputs = jn.at("inputs").get<std::vector<std::string>>();
      n.outputs = jn.at("outputs").get<std::vector<std::string>>();
      n.params = jn.value("params", json::object())
                     .get<std::map<std::string, std::string>>();
      g.nodes.push_back(std::move(n));
    }
    for (const auto& e : m.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      g.tensors.emplace(name, read_tensor_entry(e, files));
      if (e.contains("quant")) {
        g.weight_quant[name] = detail::quant_from_json(e["quant"]);
      }
    }
    if (m.contains("edges")) {
      for (auto it = m["edges"].begin(); it != m["edges"].end(); ++it) {
        if (it.value().contains("shape")) {
          g.edge_shapes[it.key()] = it.value()["shape"].get<Shape>();
        }
        if (it.value().contains("quant")) {
          g.edge_quant[it.key()] = detail::quant_from_json(it.value()["quant"]);
        }
      }
    }
    if (m.contains("meta")) {
      g.meta = m["meta"].get<std::map<std::string, std::string>>();
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed manifest: ") + e.what());
  }

  topo_sort(g);
  const auto violations = validate(g);
  if (!violations.empty()) {
    fail(ErrorKind::kInvalidGraph, "invalid model '" + path.string() +
                                       "': " + violations.front().str());
  }
  return g;
}

std::vector<NamedTensor> load_tensors(const fs::path& path) {
  const auto files = load_files(path);
  const json m = parse_manifest(files);
  std::vector<NamedTensor> out;
  try {
    for (const auto& e : m.at("tensors")) {
      out.emplace_back(e.at("name").get<std::string>(),
                       read_tensor_entry(e, files));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed tensor manifest: ") + e.what());
  }
  return out;
}

void save_tensors(const fs::path& path, const std::vector<NamedTensor>& tensors) {
  detail::FileMap files;
  std::vector<std::pair<std::string, const Tensor*>> ts;
  for (const auto& [name, t] : tensors) ts.emplace_back(name, &t);
  json m;
  m["version"] = kFormatVersion;
  m["tensors"] = tensor_entries(ts, files);
  const auto text = m.dump(2) + "\n";
  files["manifest.json"] = std::vector<std::uint8_t>(text.begin(), text.end());
  detail::write_container(path, files);
}

}  // namespace qlower
