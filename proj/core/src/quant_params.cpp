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

#include "qlower/quant_params.hpp"

#include <cmath>

#include "qlower/error.hpp"

namespace qlower {

QuantParams QuantParams::per_tensor(double scale, std::int64_t zero_point,
                                    int bits, bool is_signed, bool symmetric) {
  QuantParams qp;
  qp.scale = {scale};
  qp.zero_point = {zero_point};
  qp.bits = bits;
  qp.is_signed = is_signed;
  qp.symmetric = symmetric;
  return qp;
}

std::int64_t QuantParams::qmin() const {
  if (!is_signed) return 0;
  const std::int64_t half = std::int64_t{1} << (bits - 1);
  return symmetric ? -(half - 1) : -half;
}

std::int64_t QuantParams::qmax() const {
  if (!is_signed) return (std::int64_t{1} << bits) - 1;
  return (std::int64_t{1} << (bits - 1)) - 1;
}

std::vector<std::string> check_quant_params(const QuantParams& qp) {
  std::vector<std::string> out;
  if (qp.bits < 2 || qp.bits > 16) {
    out.push_back("bits " + std::to_string(qp.bits) + " outside 2..16");
    return out;
  }
  if (qp.scale.empty()) out.push_back("empty scale");
  if (qp.scale.size() != qp.zero_point.size()) {
    out.push_back("scale length " + std::to_string(qp.scale.size()) +
                  " differs from zero_point length " +
                  std::to_string(qp.zero_point.size()));
  }
  for (std::size_t i = 0; i < qp.scale.size(); ++i) {
    if (!(qp.scale[i] > 0.0) || !std::isfinite(qp.scale[i])) {
      out.push_back("scale[" + std::to_string(i) + "] is not positive");
    }
  }
  for (std::size_t i = 0; i < qp.zero_point.size(); ++i) {
    const auto z = qp.zero_point[i];
    if (qp.symmetric && z != 0) {
      out.push_back("symmetric params with nonzero zero_point[" +
                    std::to_string(i) + "]");
    }
    if (z < qp.qmin() || z > qp.qmax()) {
      out.push_back("zero_point[" + std::to_string(i) + "]=" +
                    std::to_string(z) + " outside integer range");
    }
  }
  return out;
}

void require_valid(const QuantParams& qp) {
  auto v = check_quant_params(qp);
  if (!v.empty()) fail(ErrorKind::kInvalidArgument, "invalid quant params: " + v[0]);
}

double FixedPointCode::value() const {
  return std::ldexp(static_cast<double>(code), -frac_bits);
}

bool FixedPointCode::fits() const {
  const int w = total_bits();
  if (w >= 64) return true;
  const std::int64_t lim = std::int64_t{1} << (w - 1);
  return code >= -lim && code < lim;
}

}  // namespace qlower
