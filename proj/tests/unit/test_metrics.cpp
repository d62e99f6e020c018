// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>

#include "cml/errors.hpp"
#include "cml/metrics.hpp"
#include "metric_oracles.hpp"
#include "test_util.hpp"

using namespace cml;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("percent change") {
  CHECK(percent_change(81.0, 82.5) == doctest::Approx(1.8519).epsilon(1e-4));
  CHECK(percent_change(40.0, 40.0) == 0.0);
  CHECK(percent_change(50.0, 25.0) == -50.0);
  CHECK_THROWS_AS(percent_change(0.0, 1.0), InputError);
  CHECK_THROWS_AS(percent_change(-1.0, 1.0), InputError);
}

TEST_CASE("row metrics on a worked row") {
  const std::vector<double> row{2.0, -1.0, -3.0, 0.5};
  CHECK(avg_percent_loss(row) == 2.0);
  CHECK(num_improved_langs(row) == 2);
  const auto r = gain_loss_ratios(row);
  CHECK(r.sum_ratio == 0.625);
  CHECK(r.max_ratio == doctest::Approx(0.6667).epsilon(1e-4));
  CHECK(avg_percent_loss(std::vector<double>{1, 0, 2}) == 0.0);
  CHECK(avg_percent_loss(std::vector<double>{-5}) == 5.0);
  CHECK(num_improved_langs(std::vector<double>(6, 1.0)) == 6);
  CHECK(num_improved_langs(std::vector<double>(6, 0.0)) == 0);
  const auto none = gain_loss_ratios(std::vector<double>{1.0, 0.0});
  CHECK(none.sum_ratio == kInf);
  CHECK(none.max_ratio == kInf);
  const auto no_gain = gain_loss_ratios(std::vector<double>{-1.0, 0.0});
  CHECK(no_gain.sum_ratio == 0.0);
  CHECK(no_gain.max_ratio == 0.0);
}

TEST_CASE("worst case stage") {
  CHECK(worst_case_stage(std::vector<double>{0.3, 1.2, 0.7}) == 2);
  CHECK(worst_case_stage(std::vector<double>{4.0}) == 1);
  CHECK(worst_case_stage(std::vector<double>{0.5, 0.5}) == 1);
  CHECK_THROWS_AS(worst_case_stage(std::vector<double>{}), InputError);
}

TEST_CASE("ordering edit distance") {
  const std::map<std::string, double> a{{"a", 3}, {"b", 2}, {"c", 1}};
  const std::map<std::string, double> b{{"a", 3}, {"b", 1}, {"c", 2}};
  CHECK(ordering_edit_distance(a, a) == 0);
  CHECK(ordering_edit_distance(a, b) == 2);
  const std::map<std::string, double> f{{"a", 4}, {"b", 3}, {"c", 2}, {"d", 1}};
  const std::map<std::string, double> r{{"a", 1}, {"b", 2}, {"c", 3}, {"d", 4}};
  CHECK(ordering_edit_distance(f, r) == 4);
  CHECK(change_ordering({{"y", 1}, {"x", 1}, {"z", 2}}) == std::vector<std::string>{"z", "x", "y"});
  CHECK_THROWS_AS(ordering_edit_distance(a, f), CoverageError);
}

TEST_CASE("random rows agree with brute force") {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    const auto row = oracle::random_row(rng, n);
    CHECK(test::same_bits(avg_percent_loss(row), oracle::avg_loss(row)));
    CHECK(num_improved_langs(row) == oracle::improved(row));
    const auto r = gain_loss_ratios(row);
    const auto [s, m] = oracle::ratios(row);
    CHECK(test::same_bits(r.sum_ratio, s));
    CHECK(test::same_bits(r.max_ratio, m));
    CHECK((avg_percent_loss(row) == 0.0) == (r.sum_ratio == kInf));
    CHECK(worst_case_stage(row) == oracle::worst_stage(row));

    std::map<std::string, double> ra, rb;
    const auto other = oracle::random_row(rng, n);
    for (std::size_t i = 0; i < n; ++i) {
      ra[std::string(1, static_cast<char>('a' + i))] = row[i];
      rb[std::string(1, static_cast<char>('a' + i))] = other[i];
    }
    CHECK(change_ordering(ra) == oracle::ordering(ra));
    CHECK(ordering_edit_distance(ra, rb) == oracle::edit_distance(oracle::ordering(ra), oracle::ordering(rb)));

    std::vector<double> scaled;
    for (double c : row) scaled.push_back(4.0 * c);
    CHECK(num_improved_langs(scaled) == num_improved_langs(row));
    CHECK(avg_percent_loss(scaled) == 4.0 * avg_percent_loss(row));
    CHECK(gain_loss_ratios(scaled).sum_ratio == r.sum_ratio);
  }
}

TEST_CASE("change matrix construction") {
  Rng rng(4);
  const std::vector<std::string> langs{"p", "q", "r", "s"};
  PerfRecord before;
  std::map<std::string, PerfRecord> after;
  for (const auto& l : langs) before[l] = rng.uniform(20, 90);
  for (const auto& row : langs) {
    for (const auto& col : langs) after[row][col] = rng.uniform(20, 90);
  }
  const auto m = build_change_matrix(before, after);
  CHECK(m.languages == langs);
  for (const auto& row : langs) {
    for (const auto& col : langs) {
      CHECK(m.at(row, col) == 100.0 * (after[row][col] - before[col]) / before[col]);
    }
  }
  std::map<std::string, PerfRecord> same;
  for (const auto& l : langs) same[l] = before;
  for (const auto& r : build_change_matrix(before, same).values) {
    for (double x : r) CHECK(x == 0.0);
  }
  CHECK(build_change_matrix({{"x", 50}}, {{"x", {{"x", 60}}}}).size() == 1);
  auto missing = after;
  missing.erase("s");
  CHECK_THROWS_AS(build_change_matrix(before, missing), CoverageError);
  auto short_row = after;
  short_row["q"].erase("p");
  CHECK_THROWS_AS(build_change_matrix(before, short_row), CoverageError);

  const auto avg = average_matrices({m, m});
  CHECK(avg == m);
}

TEST_CASE("closest language check") {
  const DistanceMatrix d({"a", "b", "c"}, {0, 0.1, 0.3, 0.1, 0, 0.2, 0.3, 0.2, 0});
  ChangeMatrix all{{"a", "b", "c"}, {{0, 2, 1}, {2, 0, 1}, {1, 2, 0}}};
  CHECK(closest_language_check(d, all) == 1.0);
  ChangeMatrix two = all;
  two.values[2] = {2, 1, 0};
  CHECK(closest_language_check(d, two) == doctest::Approx(2.0 / 3.0));
  ChangeMatrix small{{"a", "b"}, {{0, 0}, {0, 0}}};
  CHECK_THROWS_AS(closest_language_check(d, small), InputError);

  Rng rng(8);
  const std::vector<std::string> langs{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> dv(25, 0.0);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = i + 1; j < 5; ++j) dv[i * 5 + j] = dv[j * 5 + i] = static_cast<double>(rng.below(4)) / 4.0;
    }
    const DistanceMatrix dm(langs, dv);
    ChangeMatrix cm{langs, std::vector<std::vector<double>>(5, std::vector<double>(5))};
    for (auto& r : cm.values) {
      for (auto& x : r) x = static_cast<double>(rng.below(5)) - 2.0;
    }
    std::size_t ok = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      std::size_t n1 = 99, n2 = 99;
      for (std::size_t j = 0; j < 5; ++j) {
        if (j == i) continue;
        if (n1 == 99 || dv[i * 5 + j] < dv[i * 5 + n1]) {
          n2 = n1;
          n1 = j;
        } else if (n2 == 99 || dv[i * 5 + j] < dv[i * 5 + n2]) {
          n2 = j;
        }
      }
      ok += cm.values[i][n1] >= cm.values[i][n2];
    }
    CHECK(closest_language_check(dm, cm) == static_cast<double>(ok) / 5.0);
  }
}

TEST_CASE("reports average rows") {
  ChangeMatrix m{{"a", "b"}, {{1.0, -1.0}, {2.0, 0.0}}};
  const auto rep = metrics_report(m);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[1].sum_ratio == kInf);
  CHECK(rep.mean.sum_ratio == kInf);
  CHECK(rep.mean.avg_percent_loss == 0.5);
  CHECK(rep.mean.num_improved_langs == 1.0);
  ChangeMatrix bad{{"a"}, {{std::nan("")}}};
  CHECK_THROWS_AS(metrics_report(bad), NumericFault);
}

TEST_CASE("heatmap csv") {
  ChangeMatrix m{{"a", "b"}, {{1.23456, -0.00001}, {-2.5, 0.0}}};
  const auto text = heatmap_to_csv(m);
  CHECK(text == "continuation,a,b\na,1.2346,0.0000\nb,-2.5000,0.0000\n");
  const auto back = heatmap_from_csv(text);
  CHECK(back == round_to_csv_precision(m));
  CHECK(heatmap_to_csv(back) == text);
  CHECK_THROWS(heatmap_from_csv("continuation,a\nb,1\n"));
}
