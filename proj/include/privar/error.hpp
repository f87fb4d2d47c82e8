//
// Copyright 2026 The privar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#pragma once

#include <stdexcept>
#include <string>

namespace privar {

enum class ErrorCode {
  kDomain,          // argument outside the operation's valid range
  kInvalidArgument, // malformed configuration or payload
  kIo,              // file could not be read or written
  kEmptyInput,      // nothing left to work with
  kBudgetTooSmall,  // session budget below the 2*epsilon setup cost
  kNotFound,        // unknown session id
};

inline const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDomain: return "DomainError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kBudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::kNotFound: return "NotFound";
  }
  return "Unknown";
}

// All library failures are reported as privar::Error. Recoverable protocol
// signals (BudgetExhausted, empty visibility sets) are values, not errors.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace privar
