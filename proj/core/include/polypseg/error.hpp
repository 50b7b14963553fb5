// Copyright 2026 The polypseg Authors.
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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polypseg {

/// Broad failure classes. The CLI maps these onto exit codes.
enum class ErrorKind {
  kStructural,    // dataset layout is wrong (missing images/ or masks/)
  kValidation,    // data or arguments violate an invariant
  kIo,            // file could not be read, decoded or written
  kConfig,        // bad configuration value or unknown key
  kShape,         // tensor shapes are incompatible
  kLookup,        // unknown name (tap, parameter, id)
  kCapability,    // operation not available for this object
  kIntegrity,     // checksum mismatch or truncated archive
  kNumeric,       // non-finite values during optimization
  kPrecondition,  // caller broke a documented precondition
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace polypseg
