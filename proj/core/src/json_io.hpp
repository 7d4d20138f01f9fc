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

// JSON encoders shared by the model container and the deployment bundle.

#include <json.hpp>

#include "qlower/graph.hpp"
#include "qlower/quant_params.hpp"
#include "qlower/tensor.hpp"

namespace qlower::detail {

using json = nlohmann::json;

json quant_to_json(const QuantParams& qp);
QuantParams quant_from_json(const json& j);

json attrs_to_json(const Attributes& attrs);
Attributes attrs_from_json(const json& j);

/// Parses "float32", "int8", "uint16", ... together with the logical bits.
DataType dtype_from_json(const std::string& storage, int bits, bool is_signed);

std::string sanitize_file_stem(const std::string& name);

/// Little-endian blob encoding of a tensor in its storage width.
std::vector<std::uint8_t> encode_blob(const Tensor& t);
Tensor decode_blob(const std::string& name, const Shape& shape,
                   const DataType& dtype, const std::vector<std::uint8_t>& bytes);

}  // namespace qlower::detail
