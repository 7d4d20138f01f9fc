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

#include "qlower/error.hpp"

namespace qlower {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kIo: return "Io";
    case ErrorKind::kMissingBlob: return "MissingBlob";
    case ErrorKind::kByteCountMismatch: return "ByteCountMismatch";
    case ErrorKind::kUnknownOp: return "UnknownOp";
    case ErrorKind::kCyclicGraph: return "CyclicGraph";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kInvalidGraph: return "InvalidGraph";
    case ErrorKind::kNonFinite: return "NonFinite";
    case ErrorKind::kEmptyCalibration: return "EmptyCalibration";
    case ErrorKind::kUnfusablePattern: return "UnfusablePattern";
    case ErrorKind::kFixedPointOverflow: return "FixedPointOverflow";
    case ErrorKind::kMissingAnnotation: return "MissingAnnotation";
    case ErrorKind::kAccumulatorOverflow: return "AccumulatorOverflow";
    case ErrorKind::kFloatOpInIntegerPath: return "FloatOpInIntegerPath";
    case ErrorKind::kValueOutOfRange: return "ValueOutOfRange";
    case ErrorKind::kNotFullyFused: return "NotFullyFused";
    case ErrorKind::kParse: return "Parse";
    case ErrorKind::kConfig: return "Config";
  }
  return "Unknown";
}

}  // namespace qlower
