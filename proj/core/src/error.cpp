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

#include "polypseg/error.hpp"

namespace polypseg {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kStructural: return "structural";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kLookup: return "lookup";
    case ErrorKind::kCapability: return "capability";
    case ErrorKind::kIntegrity: return "integrity";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kPrecondition: return "precondition";
  }
  return "unknown";
}

}  // namespace polypseg
