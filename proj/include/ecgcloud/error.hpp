// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ecgcloud {

/// Base for every error raised by the library. `code()` is a stable
/// upper-snake identifier that also surfaces on the wire.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Input that can never succeed no matter how often it is retried.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace ecgcloud
