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

// Long-format firm-year panels: CSV ingest, gap imputation, train-only
// z-scoring and sliding-window reconstruction into S x L x F tensors.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ews/tensor.hpp"

namespace ews {

struct PanelSchema {
  std::vector<std::string> continuous;
  std::vector<std::string> flags;  // binary indicators, never standardised

  // Ten continuous financial indicators plus two compliance-status flags.
  static PanelSchema standard();

  std::size_t feature_count() const { return continuous.size() + flags.size(); }
  // Continuous columns first, then flags.
  std::vector<std::string> feature_names() const;
  bool is_flag(std::size_t feature) const { return feature >= continuous.size(); }
  std::size_t index_of(const std::string& name) const;
  std::uint64_t hash() const;

  bool operator==(const PanelSchema&) const = default;
};

struct PanelRow {
  std::string firm_id;
  int year = 0;
  std::vector<std::optional<double>> features;  // schema order
  int label = 0;

  bool operator==(const PanelRow&) const = default;
};

struct PanelTable {
  PanelSchema schema;
  std::vector<PanelRow> rows;  // sorted by (firm_id, year) after normalize()

  // Sorts rows and enforces unique (firm, year) and 0/1 labels.
  void normalize();
  std::vector<int> years() const;

  bool operator==(const PanelTable&) const = default;
};

// Columns: firm_id, year, every schema feature, label (any order). Empty
// cells and "NA" are missing features. Throws DataError with the 1-based
// line number on duplicates, missing labels or malformed numbers.
PanelTable load_panel(const std::string& path, const PanelSchema& schema);
PanelTable parse_panel(std::istream& in, const PanelSchema& schema,
                       const std::string& source = "<stream>");
// Canonical CSV with shortest round-trip number formatting.
std::string panel_to_csv(const PanelTable& panel);

// Rows with first <= year <= last.
PanelTable restrict_years(const PanelTable& panel, int first, int last);

struct ImputeResult {
  PanelTable panel;
  std::vector<std::string> dropped_firms;  // some feature never observed
};

// Per firm and feature: interior gaps linearly interpolated by year, trailing
// gaps forward-filled, leading gaps back-filled. Flags use carry-forward
// (back-fill when leading) instead of interpolation.
ImputeResult impute(const PanelTable& panel);

class Standardizer {
 public:
  static constexpr double kMinStd = 1e-8;

  Standardizer() = default;
  Standardizer(std::vector<double> mean, std::vector<double> std,
               std::vector<bool> passthrough);

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& std() const { return std_; }
  const std::vector<bool>& passthrough() const { return passthrough_; }

  double transform(std::size_t feature, double value) const;
  PanelTable apply(const PanelTable& panel) const;

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);

  bool operator==(const Standardizer&) const = default;

 private:
  std::vector<double> mean_;
  std::vector<double> std_;  // population
  std::vector<bool> passthrough_;
};

// Population mean/std per continuous feature over observed cells. Throws
// ConfigError on an empty panel.
Standardizer fit_standardizer(const PanelTable& training_rows);

struct WindowTensor {
  Tensor x;  // S x L x F; default-constructed when S = 0
  std::vector<int> labels;
  std::vector<std::string> firm_ids;
  std::vector<int> label_years;
  std::vector<int> end_years;
  int lead = 1;
  std::size_t length = 0;  // L
  std::vector<std::string> feature_names;

  std::size_t samples() const { return labels.size(); }
  std::size_t window_length() const { return length; }
  std::size_t features() const { return feature_names.size(); }
  double positive_ratio() const;

  WindowTensor select(std::span<const std::size_t> indices) const;
  WindowTensor filter(const std::function<bool(std::size_t)>& keep) const;
  // Window cell value for sample s, step t, feature f.
  double at(std::size_t s, std::size_t t, std::size_t f) const;

  bool operator==(const WindowTensor&) const = default;
};

// One window per firm per run of `length` consecutive observed years ending
// at t whenever year t + lead carries a label. Windows are ordered by firm
// then end year. Throws DataError if a window cell is missing.
WindowTensor build_windows(const PanelTable& panel, std::size_t length, int lead);

// Versioned binary cache; loading checks the embedded schema hash.
void save_window_cache(const std::string& path, const WindowTensor& windows,
                       const PanelSchema& schema);
WindowTensor load_window_cache(const std::string& path, const PanelSchema& schema);

}  // namespace ews
