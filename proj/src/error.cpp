// Copyright 2026 The tilesearch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "tilesearch/error.hpp"

namespace tilesearch {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kCorruptIndex: return "corrupt-index";
    case ErrorCode::kDuplicateRecord: return "duplicate-record";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kInvalidConfig: return "invalid-config";
    case ErrorCode::kInvalidImage: return "invalid-image";
    case ErrorCode::kProviderUnavailable: return "provider-unavailable";
    case ErrorCode::kProviderContractViolation: return "provider-contract-violation";
    case ErrorCode::kDegenerateQuery: return "degenerate-query";
    case ErrorCode::kIo: return "io-error";
  }
  return "unknown";
}

}  // namespace tilesearch
