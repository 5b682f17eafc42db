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

#include <cstdint>
#include <string>
#include <string_view>

namespace ews {

// Writes to `path.tmp` and renames over `path`, so readers never observe a
// truncated file.
void write_file_atomic(const std::string& path, std::string_view content);

std::string read_file(const std::string& path);

// SplitMix64 finaliser; derives independent sub-seeds from a run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace ews
