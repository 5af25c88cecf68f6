// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ratelqg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: wrong dimensions, unknown keys, bad flag values.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A model assumption or budget precondition does not hold.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Iteration did not converge, or a factorization failed on-path.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Bitstream could not be decoded. `position()` is the bit offset of the failure.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t position)
      : Error(what + " at bit " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace ratelqg
