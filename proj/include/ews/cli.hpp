// Copyright 2026 The EWS Authors.
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

// Command-line front end: gen-data, train, backtest, explain, report.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "json.hpp"

#include "ews/panel.hpp"

namespace ews {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Parses argv, runs one subcommand and returns its exit code. Summary lines
// go to `out`, diagnostics and usage text to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct ExplainConfig {
  std::size_t background = 100;
  std::size_t samples = 300;               // explained windows
  std::size_t feature_permutations = 64;   // per-feature scheme
  std::size_t cell_permutations = 32;      // per-cell scheme
  std::optional<int> year;                 // label year to explain; latest by default
  std::string cohort_feature = "debt_to_asset";
  double threshold = 0.5;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ExplainConfig from_json(const nlohmann::json& j);
};

// Rebuilds windows for a checkpoint: imputes the panel, applies the stored
// standardizer and uses the stored window length and lead.
WindowTensor checkpoint_windows(const PanelTable& panel, const nlohmann::json& extra);

}  // namespace ews
