// stpt/error.hpp
//
// Copyright 2026 The stpt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace stpt {

// Error categories surfaced through the C API as status codes and printed by
// the CLI as machine-parsable one-liners.
enum class ErrorCategory {
  kConfig,     // bad key, bad value, schema violation
  kParse,      // malformed file contents
  kIo,         // filesystem / read / write failures
  kIntegrity,  // data violates a documented invariant
  kState,      // operation called in an unusable state (missing ckpt, ...)
  kNumeric,    // non-finite loss or other numerical failure
  kInternal,   // bug guard
};

const char* to_string(ErrorCategory c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

inline void require(bool cond, ErrorCategory category, const std::string& message) {
  if (!cond) fail(category, message);
}

}  // namespace stpt
