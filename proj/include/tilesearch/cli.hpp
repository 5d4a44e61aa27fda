// Copyright 2026 The tilesearch Authors
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

#include <ostream>

namespace tilesearch {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitPartial = 2;  // ingest finished with per-tile failures

/// Entry point of the `tilesearch` tool:
///   ingest | build | query | eval | serve
/// Each subcommand except serve accepts --config <file.json> whose
/// top-level keys name long flags ("store", "max_parallel", ...); flags
/// given on the command line win. serve reads a service config.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tilesearch
