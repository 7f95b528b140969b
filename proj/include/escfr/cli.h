// Copyright 2026 The ESCFR Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ESCFR_CLI_H_
#define ESCFR_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace escfr {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

// Runs the command line `args` (without the program name). Normal output goes
// to `out`, diagnostics to `err`. Never throws.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int RunCli(int argc, char** argv);

}  // namespace escfr

#endif  // ESCFR_CLI_H_
