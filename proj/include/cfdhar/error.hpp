// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cfdhar {

enum class ErrorCode {
  kConfiguration,
  kShape,
  kContract,
  kNumeric,
  kIndex,
  kSchema,
  kParse,
  kFormat,
  kRange,
  kConsistency,
  kIncompatible,
  kCorruption,
  kSampling,
  kArgument,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cfdhar
