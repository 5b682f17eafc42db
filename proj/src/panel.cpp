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

#include "ews/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "ews/errors.hpp"
#include "ews/io.hpp"

namespace ews {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_double(const std::string& cell, std::size_t line, const std::string& column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
    throw DataError("line " + std::to_string(line) + ": bad number '" + cell +
                    "' in column " + column);
  return v;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA"; }

// Two-pass mean; exact for constant columns.
double stable_mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  double m = s / static_cast<double>(xs.size());
  double r = 0.0;
  for (double x : xs) r += x - m;
  return m + r / static_cast<double>(xs.size());
}

constexpr char kCacheMagic[8] = {'E', 'W', 'S', 'W', 'I', 'N', 'D', 'W'};
constexpr std::uint32_t kCacheVersion = 1;

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("window cache truncated");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  std::string s(get<std::uint32_t>(in), '\0');
  in.read(s.data(), static_cast<std::streamsize>(s.size()));
  if (!in) throw DataError("window cache truncated");
  return s;
}

}  // namespace

PanelSchema PanelSchema::standard() {
  return {{"tobins_q", "debt_to_asset", "book_to_market", "asset_growth",
           "current_liability_ratio", "financial_debt_ratio", "current_asset_ratio",
           "receivables_ratio", "total_revenue", "operating_cash_flow"},
          {"st_flag", "star_st_flag"}};
}

std::vector<std::string> PanelSchema::feature_names() const {
  std::vector<std::string> names = continuous;
  names.insert(names.end(), flags.begin(), flags.end());
  return names;
}

std::size_t PanelSchema::index_of(const std::string& name) const {
  const auto names = feature_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("unknown feature '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::uint64_t PanelSchema::hash() const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
    h = (h ^ 0xffu) * 1099511628211ULL;
  };
  for (const auto& c : continuous) feed(c);
  feed("|flags|");
  for (const auto& f : flags) feed(f);
  return h;
}

void PanelTable::normalize() {
  const std::size_t f = schema.feature_count();
  for (const auto& r : rows) {
    if (r.features.size() != f)
      throw DataError("row for " + r.firm_id + " has " + std::to_string(r.features.size()) +
                      " features, schema has " + std::to_string(f));
    if (r.label != 0 && r.label != 1)
      throw DataError("label for " + r.firm_id + " " + std::to_string(r.year) + " is not 0/1");
  }
  std::stable_sort(rows.begin(), rows.end(), [](const PanelRow& a, const PanelRow& b) {
    return std::tie(a.firm_id, a.year) < std::tie(b.firm_id, b.year);
  });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].firm_id == rows[i - 1].firm_id && rows[i].year == rows[i - 1].year)
      throw DataError("duplicate firm-year " + rows[i].firm_id + " " +
                      std::to_string(rows[i].year));
}

std::vector<int> PanelTable::years() const {
  std::set<int> ys;
  for (const auto& r : rows) ys.insert(r.year);
  return {ys.begin(), ys.end()};
}

PanelTable parse_panel(std::istream& in, const PanelSchema& schema,
                       const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv(line);

  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (!column.emplace(header[i], i).second)
      throw DataError(source + ": duplicate column '" + header[i] + "'");
  auto require = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) throw DataError(source + ": missing column '" + name + "'");
    return it->second;
  };
  const std::size_t firm_col = require("firm_id"), year_col = require("year"),
                    label_col = require("label");
  std::vector<std::size_t> feature_cols;
  for (const auto& name : schema.feature_names()) feature_cols.push_back(require(name));
  if (column.size() != schema.feature_count() + 3)
    throw DataError(source + ": header has columns outside the schema");

  PanelTable table;
  table.schema = schema;
  std::map<std::pair<std::string, int>, std::size_t> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw DataError(source + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    PanelRow row;
    row.firm_id = cells[firm_col];
    if (row.firm_id.empty())
      throw DataError(source + ": line " + std::to_string(line_no) + ": empty firm_id");
    const double year = parse_double(cells[year_col], line_no, "year");
    if (year != std::floor(year))
      throw DataError(source + ": line " + std::to_string(line_no) + ": non-integer year");
    row.year = static_cast<int>(year);
    if (is_missing(cells[label_col]))
      throw DataError(source + ": line " + std::to_string(line_no) + ": missing label");
    const double label = parse_double(cells[label_col], line_no, "label");
    if (label != 0.0 && label != 1.0)
      throw DataError(source + ": line " + std::to_string(line_no) + ": label must be 0 or 1");
    row.label = static_cast<int>(label);
    row.features.reserve(feature_cols.size());
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
      const auto& cell = cells[feature_cols[f]];
      if (is_missing(cell))
        row.features.emplace_back();
      else
        row.features.emplace_back(parse_double(cell, line_no, header[feature_cols[f]]));
    }
    const auto key = std::make_pair(row.firm_id, row.year);
    if (const auto it = seen.find(key); it != seen.end())
      throw DataError(source + ": line " + std::to_string(line_no) + " duplicates firm " +
                      row.firm_id + " year " + std::to_string(row.year) + " from line " +
                      std::to_string(it->second));
    seen.emplace(key, line_no);
    table.rows.push_back(std::move(row));
  }
  table.normalize();
  return table;
}

PanelTable load_panel(const std::string& path, const PanelSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return parse_panel(in, schema, path);
}

std::string panel_to_csv(const PanelTable& panel) {
  std::ostringstream os;
  os << "firm_id,year";
  for (const auto& n : panel.schema.feature_names()) os << ',' << n;
  os << ",label\n";
  for (const auto& r : panel.rows) {
    os << r.firm_id << ',' << r.year;
    for (const auto& v : r.features) {
      os << ',';
      if (v) os << format_double(*v);
      else os << "NA";
    }
    os << ',' << r.label << '\n';
  }
  return os.str();
}

PanelTable restrict_years(const PanelTable& panel, int first, int last) {
  PanelTable out;
  out.schema = panel.schema;
  for (const auto& r : panel.rows)
    if (r.year >= first && r.year <= last) out.rows.push_back(r);
  return out;
}

ImputeResult impute(const PanelTable& panel) {
  ImputeResult result;
  result.panel.schema = panel.schema;
  const std::size_t nf = panel.schema.feature_count();
  std::size_t begin = 0;
  while (begin < panel.rows.size()) {
    std::size_t end = begin;
    while (end < panel.rows.size() && panel.rows[end].firm_id == panel.rows[begin].firm_id) ++end;
    std::vector<PanelRow> firm(panel.rows.begin() + static_cast<std::ptrdiff_t>(begin),
                               panel.rows.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(firm.begin(), firm.end(),
              [](const PanelRow& a, const PanelRow& b) { return a.year < b.year; });
    bool usable = true;
    for (std::size_t f = 0; f < nf && usable; ++f) {
      std::vector<std::size_t> observed;
      for (std::size_t i = 0; i < firm.size(); ++i)
        if (firm[i].features[f]) observed.push_back(i);
      if (observed.empty()) {
        usable = false;
        break;
      }
      std::size_t next = 0;  // index into observed of first observation at or after i
      for (std::size_t i = 0; i < firm.size(); ++i) {
        while (next < observed.size() && observed[next] < i) ++next;
        if (firm[i].features[f]) continue;
        const bool has_prev = next > 0;
        const bool has_next = next < observed.size();
        double v;
        if (has_prev && has_next && !panel.schema.is_flag(f)) {
          const auto& a = firm[observed[next - 1]];
          const auto& b = firm[observed[next]];
          const double w = static_cast<double>(firm[i].year - a.year) /
                           static_cast<double>(b.year - a.year);
          v = *a.features[f] + w * (*b.features[f] - *a.features[f]);
        } else if (has_prev) {
          v = *firm[observed[next - 1]].features[f];
        } else {
          v = *firm[observed[next]].features[f];
        }
        firm[i].features[f] = v;
      }
    }
    if (usable)
      for (auto& r : firm) result.panel.rows.push_back(std::move(r));
    else
      result.dropped_firms.push_back(panel.rows[begin].firm_id);
    begin = end;
  }
  result.panel.normalize();
  return result;
}

Standardizer::Standardizer(std::vector<double> mean, std::vector<double> std,
                           std::vector<bool> passthrough)
    : mean_(std::move(mean)), std_(std::move(std)), passthrough_(std::move(passthrough)) {
  if (mean_.size() != std_.size() || mean_.size() != passthrough_.size())
    throw DimensionError("standardizer vectors differ in length");
}

double Standardizer::transform(std::size_t feature, double value) const {
  if (passthrough_.at(feature)) return value;
  return (value - mean_[feature]) / std::max(std_[feature], kMinStd);
}

PanelTable Standardizer::apply(const PanelTable& panel) const {
  if (panel.schema.feature_count() != mean_.size())
    throw DimensionError("standardizer fitted on " + std::to_string(mean_.size()) +
                         " features, panel has " +
                         std::to_string(panel.schema.feature_count()));
  PanelTable out = panel;
  for (auto& r : out.rows)
    for (std::size_t f = 0; f < r.features.size(); ++f)
      if (r.features[f]) r.features[f] = transform(f, *r.features[f]);
  return out;
}

nlohmann::json Standardizer::to_json() const {
  return {{"mean", mean_}, {"std", std_}, {"passthrough", passthrough_}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  return Standardizer(j.at("mean").get<std::vector<double>>(),
                      j.at("std").get<std::vector<double>>(),
                      j.at("passthrough").get<std::vector<bool>>());
}

Standardizer fit_standardizer(const PanelTable& rows) {
  if (rows.rows.empty()) throw ConfigError("fit_standardizer: empty training subset");
  const std::size_t nf = rows.schema.feature_count();
  std::vector<double> mean(nf, 0.0), std(nf, 1.0);
  std::vector<bool> passthrough(nf, false);
  for (std::size_t f = 0; f < nf; ++f) {
    if (rows.schema.is_flag(f)) {
      passthrough[f] = true;
      mean[f] = 0.0;
      std[f] = 1.0;
      continue;
    }
    std::vector<double> xs;
    xs.reserve(rows.rows.size());
    for (const auto& r : rows.rows)
      if (r.features[f]) xs.push_back(*r.features[f]);
    if (xs.empty())
      throw ConfigError("fit_standardizer: feature " + rows.schema.feature_names()[f] +
                        " has no observed values");
    mean[f] = stable_mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - mean[f]) * (x - mean[f]);
    std[f] = std::sqrt(ss / static_cast<double>(xs.size()));
  }
  return Standardizer(std::move(mean), std::move(std), std::move(passthrough));
}

double WindowTensor::positive_ratio() const {
  if (labels.empty()) return 0.0;
  return static_cast<double>(std::count(labels.begin(), labels.end(), 1)) /
         static_cast<double>(labels.size());
}

double WindowTensor::at(std::size_t s, std::size_t t, std::size_t f) const {
  return x[(s * length + t) * features() + f];
}

WindowTensor WindowTensor::select(std::span<const std::size_t> indices) const {
  WindowTensor out;
  out.lead = lead;
  out.length = length;
  out.feature_names = feature_names;
  const std::size_t cell = length * features();
  std::vector<double> data;
  data.reserve(indices.size() * cell);
  for (std::size_t i : indices) {
    if (i >= samples()) throw ContractError("WindowTensor::select: index out of range");
    data.insert(data.end(), x.data() + i * cell, x.data() + (i + 1) * cell);
    out.labels.push_back(labels[i]);
    out.firm_ids.push_back(firm_ids[i]);
    out.label_years.push_back(label_years[i]);
    out.end_years.push_back(end_years[i]);
  }
  if (!indices.empty()) out.x = Tensor({indices.size(), length, features()}, std::move(data));
  return out;
}

WindowTensor WindowTensor::filter(const std::function<bool(std::size_t)>& keep) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < samples(); ++i)
    if (keep(i)) idx.push_back(i);
  return select(idx);
}

WindowTensor build_windows(const PanelTable& panel, std::size_t length, int lead) {
  if (length < 1) throw ConfigError("build_windows: window length must be >= 1");
  if (lead < 1) throw ConfigError("build_windows: lead must be >= 1");
  WindowTensor out;
  out.lead = lead;
  out.length = length;
  out.feature_names = panel.schema.feature_names();
  const std::size_t nf = panel.schema.feature_count();

  std::vector<const PanelRow*> sorted;
  sorted.reserve(panel.rows.size());
  for (const auto& r : panel.rows) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const PanelRow* a, const PanelRow* b) {
    return std::tie(a->firm_id, a->year) < std::tie(b->firm_id, b->year);
  });

  std::vector<double> data;
  std::size_t begin = 0;
  while (begin < sorted.size()) {
    std::size_t end = begin;
    while (end < sorted.size() && sorted[end]->firm_id == sorted[begin]->firm_id) ++end;
    std::map<int, const PanelRow*> by_year;
    for (std::size_t i = begin; i < end; ++i) by_year[sorted[i]->year] = sorted[i];
    for (std::size_t i = begin; i < end; ++i) {
      const int t = sorted[i]->year;
      const auto target = by_year.find(t + lead);
      if (target == by_year.end()) continue;
      bool consecutive = true;
      std::vector<const PanelRow*> span;
      for (int y = t - static_cast<int>(length) + 1; y <= t && consecutive; ++y) {
        const auto it = by_year.find(y);
        if (it == by_year.end()) consecutive = false;
        else span.push_back(it->second);
      }
      if (!consecutive) continue;
      for (const PanelRow* r : span)
        for (std::size_t f = 0; f < nf; ++f) {
          if (!r->features[f])
            throw DataError("build_windows: missing " + out.feature_names[f] + " for " +
                            r->firm_id + " " + std::to_string(r->year) +
                            " (impute first)");
          data.push_back(*r->features[f]);
        }
      out.labels.push_back(target->second->label);
      out.firm_ids.push_back(sorted[i]->firm_id);
      out.label_years.push_back(t + lead);
      out.end_years.push_back(t);
    }
    begin = end;
  }
  if (!out.labels.empty())
    out.x = Tensor({out.labels.size(), length, nf}, std::move(data));
  return out;
}

void save_window_cache(const std::string& path, const WindowTensor& w,
                       const PanelSchema& schema) {
  if (w.features() != schema.feature_count())
    throw DimensionError("window cache: schema does not match window features");
  std::ostringstream out(std::ios::binary);
  out.write(kCacheMagic, sizeof(kCacheMagic));
  put(out, kCacheVersion);
  put(out, schema.hash());
  put<std::uint64_t>(out, w.samples());
  put<std::uint64_t>(out, w.length);
  put<std::uint64_t>(out, w.features());
  put<std::int32_t>(out, w.lead);
  for (const auto& n : w.feature_names) put_string(out, n);
  for (std::size_t s = 0; s < w.samples(); ++s) {
    put_string(out, w.firm_ids[s]);
    put<std::int32_t>(out, w.labels[s]);
    put<std::int32_t>(out, w.label_years[s]);
    put<std::int32_t>(out, w.end_years[s]);
  }
  for (double v : w.x.values()) put(out, v);
  write_file_atomic(path, out.str());
}

WindowTensor load_window_cache(const std::string& path, const PanelSchema& schema) {
  std::istringstream in(read_file(path), std::ios::binary);
  char magic[sizeof(kCacheMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + sizeof(magic), kCacheMagic))
    throw DataError(path + ": not a window cache");
  if (get<std::uint32_t>(in) != kCacheVersion)
    throw DataError(path + ": unsupported window cache version");
  if (get<std::uint64_t>(in) != schema.hash())
    throw DataError(path + ": window cache built for a different schema");
  WindowTensor w;
  const auto s = get<std::uint64_t>(in);
  w.length = get<std::uint64_t>(in);
  const auto f = get<std::uint64_t>(in);
  w.lead = get<std::int32_t>(in);
  for (std::size_t i = 0; i < f; ++i) w.feature_names.push_back(get_string(in));
  for (std::size_t i = 0; i < s; ++i) {
    w.firm_ids.push_back(get_string(in));
    w.labels.push_back(get<std::int32_t>(in));
    w.label_years.push_back(get<std::int32_t>(in));
    w.end_years.push_back(get<std::int32_t>(in));
  }
  if (s > 0) {
    std::vector<double> data(s * w.length * f);
    for (double& v : data) v = get<double>(in);
    w.x = Tensor({s, w.length, f}, std::move(data));
  }
  return w;
}

}  // namespace ews
