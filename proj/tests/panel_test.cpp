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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <vector>

#include "ews/errors.hpp"
#include "ews/panel.hpp"

namespace ews {
namespace {

PanelSchema tiny_schema() { return {{"a", "b"}, {"flag"}}; }

PanelTable parse(const std::string& csv, const PanelSchema& schema = tiny_schema()) {
  std::istringstream in(csv);
  return parse_panel(in, schema);
}

// One firm, one continuous feature, consecutive years from 2014.
PanelTable series(const std::vector<std::optional<double>>& values) {
  PanelTable t;
  t.schema = {{"x"}, {}};
  for (std::size_t i = 0; i < values.size(); ++i)
    t.rows.push_back({"f1", 2014 + static_cast<int>(i), {values[i]}, 0});
  return t;
}

std::vector<double> imputed(const PanelTable& t) {
  std::vector<double> out;
  for (const auto& r : impute(t).panel.rows) out.push_back(*r.features[0]);
  return out;
}

PanelTable random_panel(std::mt19937_64& rng, int firms, int first, int last) {
  PanelTable t;
  t.schema = tiny_schema();
  std::normal_distribution<double> n(0.0, 3.0);
  std::bernoulli_distribution coin(0.3);
  for (int f = 0; f < firms; ++f)
    for (int y = first; y <= last; ++y)
      t.rows.push_back({"firm" + std::to_string(f), y,
                        {n(rng) + 5.0, n(rng) * 10.0, coin(rng) ? 1.0 : 0.0},
                        coin(rng) ? 1 : 0});
  t.normalize();
  return t;
}

TEST(LoadPanel, WellFormedThreeRows) {
  const auto t = parse(
      "firm_id,year,a,b,flag,label\n"
      "f1,2014,1.5,2,0,0\n"
      "f1,2015,2.5,3,1,1\n"
      "f2,2014,0,-1e3,0,0\n");
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[1].label, 1);
  EXPECT_DOUBLE_EQ(*t.rows[2].features[1], -1000.0);
}

TEST(LoadPanel, ColumnsInAnyOrder) {
  const auto t = parse("label,flag,b,a,year,firm_id\n1,0,2,3,2014,f\n");
  EXPECT_DOUBLE_EQ(*t.rows[0].features[0], 3.0);
  EXPECT_DOUBLE_EQ(*t.rows[0].features[1], 2.0);
}

TEST(LoadPanel, DuplicateFirmYearRejectedWithRowNumber) {
  try {
    parse("firm_id,year,a,b,flag,label\nf1,2014,1,2,0,0\nf2,2014,1,2,0,0\nf1,2014,1,2,0,1\n");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(LoadPanel, NaCellIsMissing) {
  const auto t = parse("firm_id,year,a,b,flag,label\nf1,2014,NA,,0,0\n");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_FALSE(t.rows[0].features[0].has_value());
  EXPECT_FALSE(t.rows[0].features[1].has_value());
  EXPECT_TRUE(t.rows[0].features[2].has_value());
}

TEST(LoadPanel, Errors) {
  EXPECT_THROW(parse("firm_id,year,a,b,flag,label\nf1,2014,1,2,0,NA\n"), DataError);
  EXPECT_THROW(parse("firm_id,year,a,b,flag,label\nf1,2014,1,2,0,2\n"), DataError);
  EXPECT_THROW(parse("firm_id,year,a,flag,label\nf1,2014,1,0,0\n"), DataError);
  EXPECT_THROW(parse("firm_id,year,a,b,flag,label,extra\nf1,2014,1,2,0,0,9\n"), DataError);
  EXPECT_THROW(parse("firm_id,year,a,b,flag,label\nf1,2014,x,2,0,0\n"), DataError);
  EXPECT_THROW(parse("firm_id,year,a,b,flag,label\nf1,2014,1,2\n"), DataError);
  EXPECT_THROW(load_panel("/nonexistent/panel.csv", tiny_schema()), DataError);
}

TEST(LoadPanel, CsvRoundTrip) {
  std::mt19937_64 rng(5);
  auto t = random_panel(rng, 4, 2014, 2018);
  t.rows[3].features[1].reset();
  EXPECT_EQ(parse(panel_to_csv(t)), t);
}

TEST(Impute, MidpointInterpolation) {
  EXPECT_EQ(imputed(series({1.0, std::nullopt, 3.0})), (std::vector<double>{1, 2, 3}));
}

TEST(Impute, TrailingForwardFill) {
  EXPECT_EQ(imputed(series({1.0, 2.0, std::nullopt, std::nullopt})),
            (std::vector<double>{1, 2, 2, 2}));
}

TEST(Impute, LeadingBackFill) {
  EXPECT_EQ(imputed(series({std::nullopt, 5.0, 6.0})), (std::vector<double>{5, 5, 6}));
}

TEST(Impute, InterpolatesByYearAcrossGaps) {
  PanelTable t;
  t.schema = {{"x"}, {}};
  t.rows = {{"f", 2014, {0.0}, 0}, {"f", 2015, {std::nullopt}, 0}, {"f", 2018, {8.0}, 0}};
  EXPECT_DOUBLE_EQ(*impute(t).panel.rows[1].features[0], 2.0);
}

TEST(Impute, FlagsCarryForward) {
  PanelTable t;
  t.schema = {{}, {"flag"}};
  t.rows = {{"f", 2014, {0.0}, 0}, {"f", 2015, {std::nullopt}, 0}, {"f", 2016, {1.0}, 0}};
  EXPECT_DOUBLE_EQ(*impute(t).panel.rows[1].features[0], 0.0);
}

TEST(Impute, NeverObservedFeatureDropsFirm) {
  PanelTable t;
  t.schema = {{"x", "y"}, {}};
  t.rows = {{"bad", 2014, {1.0, std::nullopt}, 0}, {"bad", 2015, {2.0, std::nullopt}, 0},
            {"good", 2014, {1.0, 1.0}, 0}};
  const auto r = impute(t);
  EXPECT_EQ(r.dropped_firms, std::vector<std::string>{"bad"});
  ASSERT_EQ(r.panel.rows.size(), 1u);
  EXPECT_EQ(r.panel.rows[0].firm_id, "good");
}

TEST(Standardizer, CenteringExample) {
  const auto s = fit_standardizer(series({1.0, 2.0, 3.0}));
  EXPECT_DOUBLE_EQ(s.mean()[0], 2.0);
  EXPECT_NEAR(s.std()[0], std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_DOUBLE_EQ(s.transform(0, 2.0), 0.0);
  EXPECT_NEAR(s.transform(0, 4.0), 2.4494897427831779, 1e-12);
}

TEST(Standardizer, ConstantFeatureMapsToZero) {
  const auto s = fit_standardizer(series({0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}));
  EXPECT_EQ(s.std()[0], 0.0);
  EXPECT_EQ(s.transform(0, 0.1), 0.0);
}

TEST(Standardizer, FlagsPassThrough) {
  std::mt19937_64 rng(2);
  const auto t = random_panel(rng, 5, 2014, 2016);
  const auto s = fit_standardizer(t);
  const auto z = s.apply(t);
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    EXPECT_EQ(z.rows[i].features[2], t.rows[i].features[2]);
}

TEST(Standardizer, EmptySubsetIsConfigError) {
  PanelTable t;
  t.schema = tiny_schema();
  EXPECT_THROW(fit_standardizer(t), ConfigError);
}

TEST(Standardizer, ZeroMeanUnitVariance) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto t = random_panel(rng, 30, 2014, 2020);
    const auto z = fit_standardizer(t).apply(t);
    for (std::size_t f = 0; f < 2; ++f) {
      double m = 0.0, v = 0.0;
      for (const auto& r : z.rows) m += *r.features[f];
      m /= static_cast<double>(z.rows.size());
      for (const auto& r : z.rows) v += (*r.features[f] - m) * (*r.features[f] - m);
      v /= static_cast<double>(z.rows.size());
      EXPECT_NEAR(m, 0.0, 1e-9);
      EXPECT_NEAR(v, 1.0, 1e-9);
    }
  }
}

TEST(Standardizer, JsonRoundTrip) {
  std::mt19937_64 rng(3);
  const auto s = fit_standardizer(random_panel(rng, 3, 2014, 2016));
  EXPECT_EQ(Standardizer::from_json(nlohmann::json::parse(s.to_json().dump())), s);
}

TEST(Standardizer, TestYearMutationLeavesTrainingUntouched) {
  std::mt19937_64 rng(11);
  const auto full = random_panel(rng, 20, 2014, 2022);
  auto mutated = full;
  for (auto& r : mutated.rows)
    if (r.year == 2022) {
      r.features[0] = 1e6;
      r.label = 1 - r.label;
    }
  const auto s1 = fit_standardizer(restrict_years(full, 2014, 2020));
  const auto s2 = fit_standardizer(restrict_years(mutated, 2014, 2020));
  EXPECT_EQ(s1, s2);
  const auto w1 = build_windows(s1.apply(full), 3, 1);
  const auto w2 = build_windows(s2.apply(mutated), 3, 1);
  auto train = [](const WindowTensor& w) {
    return w.filter([&](std::size_t i) { return w.label_years[i] <= 2021; });
  };
  EXPECT_EQ(train(w1), train(w2));
}

TEST(Windows, ElevenYearsGiveEightWindows) {
  std::mt19937_64 rng(1);
  const auto w = build_windows(random_panel(rng, 1, 2014, 2024), 3, 1);
  ASSERT_EQ(w.samples(), 8u);
  EXPECT_EQ(w.label_years.front(), 2017);
  EXPECT_EQ(w.label_years.back(), 2024);
  for (std::size_t s = 0; s < w.samples(); ++s)
    EXPECT_EQ(w.label_years[s], w.end_years[s] + 1);
}

TEST(Windows, ThreeYearsGiveNone) {
  std::mt19937_64 rng(1);
  const auto w = build_windows(random_panel(rng, 1, 2014, 2016), 3, 1);
  EXPECT_EQ(w.samples(), 0u);
  EXPECT_EQ(w.window_length(), 3u);
  EXPECT_EQ(w.features(), 3u);
}

TEST(Windows, LabelComesFromLeadYear) {
  std::mt19937_64 rng(4);
  const auto t = random_panel(rng, 1, 2014, 2017);
  for (int lead = 1; lead <= 2; ++lead) {
    const auto w = build_windows(t, 2, lead);
    for (std::size_t s = 0; s < w.samples(); ++s) {
      const int ly = w.label_years[s];
      const auto it = std::find_if(t.rows.begin(), t.rows.end(),
                                   [&](const PanelRow& r) { return r.year == ly; });
      EXPECT_EQ(w.labels[s], it->label);
    }
  }
  const auto w = build_windows(t, 2, 1);
  EXPECT_EQ(w.end_years[0], 2015);
  EXPECT_EQ(w.label_years[0], 2016);
  // Earliest year sits at step 0.
  EXPECT_DOUBLE_EQ(w.at(0, 0, 0), *t.rows[0].features[0]);
  EXPECT_DOUBLE_EQ(w.at(0, 1, 0), *t.rows[1].features[0]);
}

TEST(Windows, GapsAreNeverBridged) {
  std::mt19937_64 rng(6);
  auto t = random_panel(rng, 1, 2014, 2024);
  std::erase_if(t.rows, [](const PanelRow& r) { return r.year == 2018; });
  const auto w = build_windows(t, 3, 1);
  for (std::size_t s = 0; s < w.samples(); ++s) {
    EXPECT_FALSE(w.end_years[s] >= 2018 && w.end_years[s] - 2 <= 2018);
    EXPECT_NE(w.label_years[s], 2018);
  }
  // 2014-2017 yields one window, 2019-2024 yields three.
  EXPECT_EQ(w.samples(), 4u);
}

TEST(Windows, RowOrderIrrelevant) {
  std::mt19937_64 rng(8);
  const auto t = random_panel(rng, 6, 2014, 2022);
  auto reversed = t;
  std::reverse(reversed.rows.begin(), reversed.rows.end());
  EXPECT_EQ(build_windows(t, 3, 2), build_windows(reversed, 3, 2));
}

TEST(Windows, MissingCellIsDataError) {
  auto t = series({1.0, std::nullopt, 3.0, 4.0});
  EXPECT_THROW(build_windows(t, 2, 1), DataError);
}

TEST(Windows, InvalidArgumentsAreConfigErrors) {
  const auto t = series({1.0, 2.0});
  EXPECT_THROW(build_windows(t, 0, 1), ConfigError);
  EXPECT_THROW(build_windows(t, 1, 0), ConfigError);
}

TEST(Windows, SelectKeepsMetadataAligned) {
  std::mt19937_64 rng(9);
  const auto w = build_windows(random_panel(rng, 3, 2014, 2020), 2, 1);
  const std::vector<std::size_t> idx{4, 0};
  const auto s = w.select(idx);
  ASSERT_EQ(s.samples(), 2u);
  EXPECT_EQ(s.firm_ids[0], w.firm_ids[4]);
  EXPECT_EQ(s.at(1, 1, 2), w.at(0, 1, 2));
}

TEST(WindowCache, RoundTripAndSchemaCheck) {
  std::mt19937_64 rng(10);
  const auto t = random_panel(rng, 4, 2014, 2020);
  const auto w = build_windows(t, 3, 1);
  const auto path = (std::filesystem::temp_directory_path() / "ews_window_cache.bin").string();
  save_window_cache(path, w, t.schema);
  EXPECT_EQ(load_window_cache(path, t.schema), w);
  PanelSchema other{{"a", "c"}, {"flag"}};
  EXPECT_THROW(load_window_cache(path, other), DataError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace ews
