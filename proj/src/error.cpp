// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/error.hpp"

namespace cfdhar {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfiguration: return "configuration";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kContract: return "contract";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kIndex: return "index";
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kRange: return "range";
    case ErrorCode::kConsistency: return "consistency";
    case ErrorCode::kIncompatible: return "incompatible";
    case ErrorCode::kCorruption: return "corruption";
    case ErrorCode::kSampling: return "sampling";
    case ErrorCode::kArgument: return "argument";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace cfdhar
