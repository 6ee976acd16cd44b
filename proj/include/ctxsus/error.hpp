// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#pragma once

#include <stdexcept>
#include <string>

namespace ctxsus {

/// Error categories shared by the C++ core and the C API status codes.
enum class ErrorCode {
  invalid_argument = 1,
  config = 2,
  provider = 3,
  infeasible = 4,
  io = 5,
  dimension = 6,
  undefined = 7,
  internal = 99,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace ctxsus
