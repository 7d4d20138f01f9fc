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

#include <stdexcept>
#include <string>
#include <string_view>

namespace qlower {

enum class ErrorKind {
  kInvalidArgument,
  kIo,
  kMissingBlob,
  kByteCountMismatch,
  kUnknownOp,
  kCyclicGraph,
  kShapeMismatch,
  kInvalidGraph,
  kNonFinite,
  kEmptyCalibration,
  kUnfusablePattern,
  kFixedPointOverflow,
  kMissingAnnotation,
  kAccumulatorOverflow,
  kFloatOpInIntegerPath,
  kValueOutOfRange,
  kNotFullyFused,
  kParse,
  kConfig,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers can map it
/// to an exit code or assert on it in tests.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace qlower
