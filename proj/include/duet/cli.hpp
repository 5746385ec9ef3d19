/* Copyright 2026 The DUET Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef DUET_CLI_HPP_
#define DUET_CLI_HPP_

#include <iosfwd>

namespace duet {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitCheckpoint = 4,
  kExitData = 5,
  kExitRuntime = 6,
};

// Entry point of the `duet` tool: synth, train, serve, device, simulate, eval.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace duet

#endif  // DUET_CLI_HPP_
