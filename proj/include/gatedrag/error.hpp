// Copyright 2026 The gatedrag Authors.
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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <fmt/format.h>

namespace gatedrag {

enum class ErrorCode {
  invalid_input,
  invalid_config,
  io,
  format,
  data_integrity,
  internal,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the core carries one of the codes above; the C
/// API maps them onto status values and the CLI onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

template <typename... Args>
[[noreturn]] void fail(ErrorCode code, fmt::format_string<Args...> f,
                       Args&&... args) {
  throw Error(code, fmt::format(f, std::forward<Args>(args)...));
}

}  // namespace gatedrag

#define GATEDRAG_REQUIRE(cond, code, ...)        \
  do {                                           \
    if (!(cond)) ::gatedrag::fail(code, __VA_ARGS__); \
  } while (0)
