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

// Command-line front end. Commands run in-process so tests can drive them.
//
// Exit codes:
//   0  success
//   2  config error (bad flags, malformed or unknown config keys)
//   3  data validation error (dataset layout, mask/image mismatch)
//   4  runtime or numeric error
//   5  I/O error (missing or corrupt checkpoint, unwritable output)

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "polypseg/error.hpp"

namespace polypseg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;
inline constexpr int kExitIo = 5;

int exit_code(ErrorKind kind);

/// Runs one command. `args` excludes the program name. Failures print a
/// single line `error class=<kind> code=<exit>: <message>` to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace polypseg::cli
