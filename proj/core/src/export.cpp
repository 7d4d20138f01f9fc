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

#include "qlower/export.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json_io.hpp"
#include "qlower/analysis.hpp"
#include "qlower/error.hpp"
#include "qlower/fixed_point.hpp"
#include "qlower/fusion.hpp"

namespace qlower {

using detail::json;

std::string to_string(ExportFormat f) {
  switch (f) {
    case ExportFormat::kHex: return "hex";
    case ExportFormat::kBinstr: return "binstr";
    case ExportFormat::kRawbin: return "rawbin";
    case ExportFormat::kDecimalJson: return "decimal_json";
  }
  return "hex";
}

ExportFormat export_format_from_string(const std::string& name) {
  for (auto f : {ExportFormat::kHex, ExportFormat::kBinstr, ExportFormat::kRawbin,
                 ExportFormat::kDecimalJson}) {
    if (to_string(f) == name) return f;
  }
  fail(ErrorKind::kConfig, "unknown export format '" + name + "'");
}

namespace {

std::vector<int> axis_order(const ExportConfig& cfg, int rank) {
  if (cfg.axis_order.empty()) {
    std::vector<int> id(static_cast<std::size_t>(rank));
    std::iota(id.begin(), id.end(), 0);
    return id;
  }
  auto sorted = cfg.axis_order;
  std::sort(sorted.begin(), sorted.end());
  bool ok = static_cast<int>(sorted.size()) == rank;
  for (int i = 0; ok && i < rank; ++i) ok = sorted[static_cast<std::size_t>(i)] == i;
  require(ok, ErrorKind::kConfig, "axis_order is not a permutation of " + std::to_string(rank) + " axes");
  return cfg.axis_order;
}

// Row-major index in the source tensor of each position of the unrolled
// sequence.
std::vector<std::size_t> unroll_map(const Shape& shape, const std::vector<int>& order) {
  const auto strides = strides_of(shape);
  const auto count = element_count(shape);
  std::vector<std::size_t> out(static_cast<std::size_t>(count));
  std::vector<std::int64_t> idx(order.size(), 0);
  for (std::int64_t k = 0; k < count; ++k) {
    std::int64_t src = 0;
    for (std::size_t a = 0; a < order.size(); ++a) {
      src += idx[a] * strides[static_cast<std::size_t>(order[a])];
    }
    out[static_cast<std::size_t>(k)] = static_cast<std::size_t>(src);
    for (int a = static_cast<int>(order.size()) - 1; a >= 0; --a) {
      auto& i = idx[static_cast<std::size_t>(a)];
      if (++i < shape[static_cast<std::size_t>(order[static_cast<std::size_t>(a)])]) break;
      i = 0;
    }
  }
  return out;
}

int word_bits_for(const ExportConfig& cfg, int tensor_bits) {
  const int wb = cfg.word_bits > 0 ? cfg.word_bits : tensor_bits;
  require(wb >= 1 && wb <= 32, ErrorKind::kConfig, "word_bits must be in [1, 32]");
  return wb;
}

// Unrolled two's-complement words.
std::vector<std::uint64_t> to_words(const Tensor& t, const ExportConfig& cfg, int wb) {
  require(!t.is_float(), ErrorKind::kInvalidArgument, "export needs an integer tensor");
  const auto map = unroll_map(t.shape(), axis_order(cfg, t.rank()));
  const std::int64_t lo = t.dtype().is_signed ? -(std::int64_t{1} << (wb - 1)) : 0;
  const std::int64_t hi = t.dtype().is_signed ? (std::int64_t{1} << (wb - 1)) - 1
                                              : (std::int64_t{1} << wb) - 1;
  const std::uint64_t mask = (std::uint64_t{1} << wb) - 1;
  std::vector<std::uint64_t> out;
  out.reserve(map.size());
  for (auto src : map) {
    const auto v = t.ints()[src];
    require(v >= lo && v <= hi, ErrorKind::kValueOutOfRange,
            "value " + std::to_string(v) + " at index " + std::to_string(src) +
                " exceeds " + std::to_string(wb) + "-bit words");
    out.push_back(static_cast<std::uint64_t>(v) & mask);
  }
  return out;
}

Tensor from_words(const std::vector<std::uint64_t>& words, const TensorLayout& l,
                  const ExportConfig& cfg, int wb) {
  const auto count = element_count(l.shape);
  require(static_cast<std::int64_t>(words.size()) == count, ErrorKind::kByteCountMismatch,
          "expected " + std::to_string(count) + " words, found " + std::to_string(words.size()));
  const auto map = unroll_map(l.shape, axis_order(cfg, static_cast<int>(l.shape.size())));
  std::vector<std::int64_t> data(static_cast<std::size_t>(count));
  for (std::size_t k = 0; k < words.size(); ++k) {
    auto v = static_cast<std::int64_t>(words[k]);
    if (l.is_signed && wb < 64 && (words[k] >> (wb - 1)) & 1) v -= std::int64_t{1} << wb;
    data[map[k]] = v;
  }
  return Tensor::from_ints(l.shape, std::move(data), l.bits, l.is_signed);
}

std::string word_text(std::uint64_t w, int wb, bool hex) {
  std::string s;
  if (hex) {
    const int digits = (wb + 3) / 4;
    for (int d = digits - 1; d >= 0; --d) s.push_back("0123456789ABCDEF"[(w >> (4 * d)) & 0xF]);
  } else {
    for (int b = wb - 1; b >= 0; --b) s.push_back(((w >> b) & 1) ? '1' : '0');
  }
  return s;
}

std::string export_text(const Tensor& t, const ExportConfig& cfg, bool hex) {
  require(cfg.words_per_line >= 1, ErrorKind::kConfig, "words_per_line must be >= 1");
  const int wb = word_bits_for(cfg, t.dtype().bits);
  const auto words = to_words(t, cfg, wb);
  std::string out;
  for (std::size_t i = 0; i < words.size(); i += static_cast<std::size_t>(cfg.words_per_line)) {
    const auto end = std::min(words.size(), i + static_cast<std::size_t>(cfg.words_per_line));
    // Highest lane first so lane 0 sits in the least significant digits.
    for (auto k = end; k > i; --k) out += word_text(words[k - 1], wb, hex);
    out.push_back('\n');
  }
  return out;
}

Tensor parse_text(const std::string& text, const TensorLayout& l, const ExportConfig& cfg, bool hex) {
  const int wb = word_bits_for(cfg, l.bits);
  const std::size_t width = hex ? static_cast<std::size_t>((wb + 3) / 4) : static_cast<std::size_t>(wb);
  std::vector<std::uint64_t> words;
  std::istringstream in(text);
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    require(line.size() % width == 0, ErrorKind::kParse,
            "line " + std::to_string(lineno) + " is not a whole number of words");
    const auto lanes = line.size() / width;
    for (std::size_t lane = 0; lane < lanes; ++lane) {
      const auto pos = line.size() - (lane + 1) * width;
      std::uint64_t w = 0;
      for (std::size_t c = pos; c < pos + width; ++c) {
        const char ch = line[c];
        int d = -1;
        if (hex) {
          if (ch >= '0' && ch <= '9') d = ch - '0';
          else if (ch >= 'A' && ch <= 'F') d = ch - 'A' + 10;
          else if (ch >= 'a' && ch <= 'f') d = ch - 'a' + 10;
          w = (w << 4) | static_cast<std::uint64_t>(d);
        } else {
          if (ch == '0' || ch == '1') d = ch - '0';
          w = (w << 1) | static_cast<std::uint64_t>(d);
        }
        require(d >= 0, ErrorKind::kParse,
                std::string("invalid digit '") + ch + "' on line " + std::to_string(lineno));
      }
      require(wb >= 64 || (w >> wb) == 0, ErrorKind::kParse,
              "word on line " + std::to_string(lineno) + " exceeds " + std::to_string(wb) + " bits");
      words.push_back(w);
    }
  }
  return from_words(words, l, cfg, wb);
}

int byte_width(int wb) {
  if (wb <= 8) return 1;
  if (wb <= 16) return 2;
  return 4;
}

}  // namespace

std::string export_hex(const Tensor& t, const ExportConfig& cfg) { return export_text(t, cfg, true); }

Tensor parse_hex(const std::string& text, const TensorLayout& layout, const ExportConfig& cfg) {
  return parse_text(text, layout, cfg, true);
}

std::string export_binstr(const Tensor& t, const ExportConfig& cfg) {
  return export_text(t, cfg, false);
}

Tensor parse_binstr(const std::string& text, const TensorLayout& layout, const ExportConfig& cfg) {
  return parse_text(text, layout, cfg, false);
}

std::vector<std::uint8_t> export_rawbin(const Tensor& t, const ExportConfig& cfg) {
  const int wb = word_bits_for(cfg, t.dtype().bits);
  const auto words = to_words(t, cfg, wb);
  std::vector<std::uint8_t> out;
  if (cfg.pack) {
    require(wb <= 4, ErrorKind::kConfig, "packing needs words of at most 4 bits");
    for (std::size_t i = 0; i < words.size(); i += 2) {
      std::uint8_t b = static_cast<std::uint8_t>(words[i] & 0xF);
      if (i + 1 < words.size()) b = static_cast<std::uint8_t>(b | ((words[i + 1] & 0xF) << 4));
      out.push_back(b);
    }
    return out;
  }
  const int bw = byte_width(wb);
  for (auto w : words) {
    for (int b = 0; b < bw; ++b) out.push_back(static_cast<std::uint8_t>((w >> (8 * b)) & 0xFF));
  }
  return out;
}

Tensor parse_rawbin(const std::vector<std::uint8_t>& bytes, const TensorLayout& layout,
                    const ExportConfig& cfg) {
  const int wb = word_bits_for(cfg, layout.bits);
  const auto count = static_cast<std::size_t>(element_count(layout.shape));
  std::vector<std::uint64_t> words;
  const std::uint64_t mask = (std::uint64_t{1} << wb) - 1;
  if (cfg.pack) {
    require(wb <= 4, ErrorKind::kConfig, "packing needs words of at most 4 bits");
    require(bytes.size() == (count + 1) / 2, ErrorKind::kByteCountMismatch,
            "expected " + std::to_string((count + 1) / 2) + " bytes, found " + std::to_string(bytes.size()));
    for (std::size_t i = 0; i < count; ++i) {
      const auto b = bytes[i / 2];
      words.push_back(((i % 2 == 0) ? b : (b >> 4)) & mask);
    }
  } else {
    const auto bw = static_cast<std::size_t>(byte_width(wb));
    require(bytes.size() == count * bw, ErrorKind::kByteCountMismatch,
            "expected " + std::to_string(count * bw) + " bytes, found " + std::to_string(bytes.size()));
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t w = 0;
      for (std::size_t b = 0; b < bw; ++b) w |= static_cast<std::uint64_t>(bytes[i * bw + b]) << (8 * b);
      words.push_back(w & mask);
    }
  }
  return from_words(words, layout, cfg, wb);
}

std::string export_decimal_json(const Tensor& t, const ExportConfig& cfg) {
  const int wb = word_bits_for(cfg, t.dtype().bits);
  to_words(t, cfg, wb);  // range check
  const auto map = unroll_map(t.shape(), axis_order(cfg, t.rank()));
  std::vector<std::int64_t> vals;
  vals.reserve(map.size());
  for (auto src : map) vals.push_back(t.ints()[src]);
  json j{{"shape", t.shape()}, {"bits", t.dtype().bits}, {"signed", t.dtype().is_signed},
         {"values", vals}};
  return j.dump() + "\n";
}

Tensor parse_decimal_json(const std::string& text, const TensorLayout& layout,
                          const ExportConfig& cfg) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed decimal json: ") + e.what());
  }
  const auto vals = j.at("values").get<std::vector<std::int64_t>>();
  const int wb = word_bits_for(cfg, layout.bits);
  std::vector<std::uint64_t> words;
  const std::uint64_t mask = (std::uint64_t{1} << wb) - 1;
  for (auto v : vals) words.push_back(static_cast<std::uint64_t>(v) & mask);
  return from_words(words, layout, cfg, wb);
}

namespace {

bool is_weight_role(const std::string& role) {
  return role == "weight" || role == "wq" || role == "wk" || role == "wv" || role == "wo";
}

std::string extension(ExportFormat f) {
  switch (f) {
    case ExportFormat::kHex: return ".hex";
    case ExportFormat::kBinstr: return ".binstr";
    case ExportFormat::kRawbin: return ".bin";
    case ExportFormat::kDecimalJson: return ".json";
  }
  return ".hex";
}

// Scales are carried as IEEE-754 bit patterns so the manifest holds
// integers only and round-trips exactly.
json quant_json(const QuantParams& qp) {
  std::vector<std::int64_t> bits;
  for (double s : qp.scale) bits.push_back(double_bits(s));
  return json{{"scale_bits", bits}, {"zero_point", qp.zero_point}, {"bits", qp.bits},
              {"signed", qp.is_signed}, {"symmetric", qp.symmetric}, {"axis", qp.axis}};
}

QuantParams quant_parse(const json& j) {
  QuantParams qp;
  qp.scale.clear();
  for (auto b : j.at("scale_bits").get<std::vector<std::int64_t>>()) qp.scale.push_back(bits_double(b));
  qp.zero_point = j.at("zero_point").get<std::vector<std::int64_t>>();
  qp.bits = j.at("bits").get<int>();
  qp.is_signed = j.at("signed").get<bool>();
  qp.symmetric = j.at("symmetric").get<bool>();
  qp.axis = j.at("axis").get<int>();
  return qp;
}

json config_json(const ExportConfig& cfg) {
  return json{{"format", to_string(cfg.format)}, {"word_bits", cfg.word_bits},
              {"words_per_line", cfg.words_per_line}, {"axis_order", cfg.axis_order},
              {"pack", cfg.pack}};
}

ExportConfig config_parse(const json& j) {
  ExportConfig cfg;
  cfg.format = export_format_from_string(j.at("format").get<std::string>());
  cfg.word_bits = j.at("word_bits").get<int>();
  cfg.words_per_line = j.at("words_per_line").get<int>();
  cfg.axis_order = j.at("axis_order").get<std::vector<int>>();
  cfg.pack = j.at("pack").get<bool>();
  return cfg;
}

void write_file(const std::filesystem::path& p, const std::string& data) {
  std::ofstream f(p, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot write '" + p.string() + "'");
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  require(static_cast<bool>(f), ErrorKind::kIo, "short write to '" + p.string() + "'");
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string encode_weight(const Tensor& t, const ExportConfig& cfg) {
  switch (cfg.format) {
    case ExportFormat::kHex: return export_hex(t, cfg);
    case ExportFormat::kBinstr: return export_binstr(t, cfg);
    case ExportFormat::kRawbin: {
      const auto b = export_rawbin(t, cfg);
      return {b.begin(), b.end()};
    }
    case ExportFormat::kDecimalJson: return export_decimal_json(t, cfg);
  }
  return {};
}

Tensor decode_weight(const std::string& data, const TensorLayout& l, const ExportConfig& cfg) {
  switch (cfg.format) {
    case ExportFormat::kHex: return parse_hex(data, l, cfg);
    case ExportFormat::kBinstr: return parse_binstr(data, l, cfg);
    case ExportFormat::kRawbin: return parse_rawbin({data.begin(), data.end()}, l, cfg);
    case ExportFormat::kDecimalJson: return parse_decimal_json(data, l, cfg);
  }
  return {};
}

json tensor_json(const std::string& name, const Tensor& t) {
  return json{{"tensor", name}, {"shape", t.shape()}, {"bits", t.dtype().bits},
              {"signed", t.dtype().is_signed}};
}

TensorLayout layout_of(const json& j) {
  return {j.at("shape").get<Shape>(), j.at("bits").get<int>(), j.at("signed").get<bool>()};
}

}  // namespace

void export_model(const Graph& g, const std::filesystem::path& dir, const ExportConfig& cfg) {
  require(g.stage() == kStageFused, ErrorKind::kNotFullyFused,
          "export needs a fused graph, got stage '" + g.stage() + "'");
  if (auto name = first_float_tensor(g)) {
    fail(ErrorKind::kNotFullyFused, "tensor '" + *name + "' is still floating point");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir / "weights", ec);
  std::filesystem::create_directories(dir / "scale", ec);
  require(!ec, ErrorKind::kIo, "cannot create bundle directory '" + dir.string() + "'");

  json m;
  m["format"] = "qlower-bundle";
  m["version"] = 1;
  m["export"] = config_json(cfg);
  m["meta"] = g.meta;
  m["outputs"] = g.outputs;
  auto& ins = m["inputs"] = json::array();
  for (const auto& in : g.inputs) {
    ins.push_back({{"name", in.name}, {"shape", in.shape}, {"dtype", to_string(in.dtype)}});
  }
  auto& layers = m["layers"] = json::array();
  for (const auto& n : g.nodes) {
    const auto stem = detail::sanitize_file_stem(n.id);
    json layer{{"id", n.id}, {"op", to_string(n.kind)}, {"inputs", n.inputs},
               {"outputs", n.outputs}, {"attrs", detail::attrs_to_json(n.attrs)}};
    json weights = json::object();
    json scale = json::object();
    for (const auto& [role, name] : n.params) {
      const Tensor& t = g.tensors.at(name);
      auto info = tensor_json(name, t);
      if (is_weight_role(role)) {
        const auto file = "weights/" + stem + (role == "weight" ? "" : "." + role) + extension(cfg.format);
        write_file(dir / file, encode_weight(t, cfg));
        info["file"] = file;
        weights[role] = info;
      } else {
        std::vector<std::int64_t> vals(t.ints().begin(), t.ints().end());
        info["values"] = vals;
        scale[role] = info;
      }
    }
    if (!weights.empty()) layer["weights"] = weights;
    if (!scale.empty()) {
      const auto file = "scale/" + stem + ".json";
      write_file(dir / file, scale.dump(2) + "\n");
      layer["scale"] = file;
    }
    layers.push_back(layer);
  }
  json wq = json::object();
  for (const auto& [name, qp] : g.weight_quant) wq[name] = quant_json(qp);
  json eq = json::object();
  for (const auto& [name, qp] : g.edge_quant) eq[name] = quant_json(qp);
  m["weight_quant"] = wq;
  m["edge_quant"] = eq;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

Graph import_bundle(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  require(std::filesystem::exists(mpath), ErrorKind::kIo,
          "no manifest.json in '" + dir.string() + "'");
  json m;
  try {
    m = json::parse(read_file(mpath));
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed bundle manifest: ") + e.what());
  }
  try {
    const auto cfg = config_parse(m.at("export"));
    Graph g;
    g.meta = m.at("meta").get<std::map<std::string, std::string>>();
    g.outputs = m.at("outputs").get<std::vector<std::string>>();
    for (const auto& in : m.at("inputs")) {
      ValueInfo vi;
      vi.name = in.at("name").get<std::string>();
      vi.shape = in.at("shape").get<Shape>();
      vi.dtype = DataType::float32();
      g.inputs.push_back(vi);
    }
    for (const auto& l : m.at("layers")) {
      Node n;
      n.id = l.at("id").get<std::string>();
      const auto op = l.at("op").get<std::string>();
      auto kind = op_kind_from_string(op);
      require(kind.has_value(), ErrorKind::kUnknownOp, "unknown op '" + op + "' in layer '" + n.id + "'");
      n.kind = *kind;
      n.inputs = l.at("inputs").get<std::vector<std::string>>();
      n.outputs = l.at("outputs").get<std::vector<std::string>>();
      n.attrs = detail::attrs_from_json(l.at("attrs"));
      if (l.contains("weights")) {
        for (auto it = l["weights"].begin(); it != l["weights"].end(); ++it) {
          const auto& info = it.value();
          const auto name = info.at("tensor").get<std::string>();
          const auto file = dir / info.at("file").get<std::string>();
          require(std::filesystem::exists(file), ErrorKind::kMissingBlob,
                  "missing weight file '" + file.string() + "' for layer '" + n.id + "'");
          g.tensors[name] = decode_weight(read_file(file), layout_of(info), cfg);
          n.params[it.key()] = name;
        }
      }
      if (l.contains("scale")) {
        const auto file = dir / l.at("scale").get<std::string>();
        require(std::filesystem::exists(file), ErrorKind::kMissingBlob,
                "missing scale file '" + file.string() + "' for layer '" + n.id + "'");
        const auto s = json::parse(read_file(file));
        for (auto it = s.begin(); it != s.end(); ++it) {
          const auto& info = it.value();
          const auto name = info.at("tensor").get<std::string>();
          const auto lay = layout_of(info);
          auto vals = info.at("values").get<std::vector<std::int64_t>>();
          require(static_cast<std::int64_t>(vals.size()) == element_count(lay.shape),
                  ErrorKind::kByteCountMismatch, "tensor '" + name + "' has the wrong value count");
          g.tensors[name] = Tensor::from_ints(lay.shape, std::move(vals), lay.bits, lay.is_signed);
          n.params[it.key()] = name;
        }
      }
      g.nodes.push_back(std::move(n));
    }
    for (auto it = m.at("weight_quant").begin(); it != m.at("weight_quant").end(); ++it) {
      g.weight_quant[it.key()] = quant_parse(it.value());
    }
    for (auto it = m.at("edge_quant").begin(); it != m.at("edge_quant").end(); ++it) {
      g.edge_quant[it.key()] = quant_parse(it.value());
    }
    return infer_shapes(g);
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed bundle: ") + e.what());
  }
}

}  // namespace qlower
