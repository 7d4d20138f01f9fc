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

#include "json_io.hpp"

#include <cstring>

#include "qlower/error.hpp"

namespace qlower::detail {

json quant_to_json(const QuantParams& qp) {
  return json{{"scale", qp.scale},   {"zero_point", qp.zero_point},
              {"bits", qp.bits},     {"signed", qp.is_signed},
              {"symmetric", qp.symmetric}, {"axis", qp.axis}};
}

QuantParams quant_from_json(const json& j) {
  try {
    QuantParams qp;
    qp.scale = j.at("scale").get<std::vector<double>>();
    qp.zero_point = j.at("zero_point").get<std::vector<std::int64_t>>();
    qp.bits = j.at("bits").get<int>();
    qp.is_signed = j.at("signed").get<bool>();
    qp.symmetric = j.at("symmetric").get<bool>();
    qp.axis = j.value("axis", 0);
    return qp;
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed quant params: ") + e.what());
  }
}

json attrs_to_json(const Attributes& attrs) {
  json out = json::object();
  for (const auto& [key, value] : attrs.values()) {
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::vector<std::int64_t>>) {
            out[key] = json{{"ints", v}};
          } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            out[key] = json{{"reals", v}};
          } else {
            out[key] = v;
          }
        },
        value);
  }
  return out;
}

Attributes attrs_from_json(const json& j) {
  Attributes attrs;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& v = it.value();
    if (v.is_number_integer()) {
      attrs.set(it.key(), v.get<std::int64_t>());
    } else if (v.is_number_float()) {
      attrs.set(it.key(), v.get<double>());
    } else if (v.is_string()) {
      attrs.set(it.key(), v.get<std::string>());
    } else if (v.is_object() && v.contains("ints")) {
      attrs.set(it.key(), v["ints"].get<std::vector<std::int64_t>>());
    } else if (v.is_object() && v.contains("reals")) {
      attrs.set(it.key(), v["reals"].get<std::vector<double>>());
    } else {
      fail(ErrorKind::kParse, "unsupported attribute value for '" + it.key() + "'");
    }
  }
  return attrs;
}

DataType dtype_from_json(const std::string& storage, int bits, bool is_signed) {
  if (storage == "float32") return DataType::float32();
  const bool u = storage.rfind("uint", 0) == 0;
  const bool s = !u && storage.rfind("int", 0) == 0;
  require(u || s, ErrorKind::kParse, "unknown dtype '" + storage + "'");
  DataType dt = DataType::int_type(bits, is_signed);
  require(dt.storage_name() == storage, ErrorKind::kParse,
          "dtype '" + storage + "' inconsistent with bits=" +
              std::to_string(bits));
  return dt;
}

std::string sanitize_file_stem(const std::string& name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? "t" : out;
}

std::vector<std::uint8_t> encode_blob(const Tensor& t) {
  const int width = t.dtype().storage_bytes();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(t.size() * width));
  if (t.is_float()) {
    auto f = t.floats();
    for (std::size_t i = 0; i < f.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &f[i], 4);
      for (int b = 0; b < 4; ++b) out[i * 4 + b] = (bits >> (8 * b)) & 0xFF;
    }
    return out;
  }
  auto v = t.ints();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto u = static_cast<std::uint64_t>(v[i]);
    for (int b = 0; b < width; ++b) {
      out[i * width + b] = static_cast<std::uint8_t>((u >> (8 * b)) & 0xFF);
    }
  }
  return out;
}

Tensor decode_blob(const std::string& name, const Shape& shape,
                   const DataType& dtype, const std::vector<std::uint8_t>& bytes) {
  const int width = dtype.storage_bytes();
  const auto expected = element_count(shape) * width;
  require(static_cast<std::int64_t>(bytes.size()) == expected,
          ErrorKind::kByteCountMismatch,
          "tensor '" + name + "': shape " + shape_to_string(shape) + " " +
              dtype.storage_name() + " needs " + std::to_string(expected) +
              " bytes, blob has " + std::to_string(bytes.size()));
  if (dtype.is_float) {
    std::vector<float> data(static_cast<std::size_t>(element_count(shape)));
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[i * 4 + b]} << (8 * b);
      std::memcpy(&data[i], &bits, 4);
    }
    return Tensor::from_floats(shape, std::move(data));
  }
  std::vector<std::int64_t> data(static_cast<std::size_t>(element_count(shape)));
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < width; ++b) {
      u |= std::uint64_t{bytes[i * width + b]} << (8 * b);
    }
    std::int64_t v = static_cast<std::int64_t>(u);
    if (dtype.is_signed && width < 8) {
      const int sh = 64 - 8 * width;
      v = static_cast<std::int64_t>(u << sh) >> sh;
    }
    data[i] = v;
  }
  return Tensor::from_ints(shape, std::move(data), dtype.bits, dtype.is_signed);
}

}  // namespace qlower::detail
