// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cml/uriel.hpp"

namespace cml {

/// Per-language score in percent.
using PerfRecord = std::map<std::string, double>;

/// 100 * (new - old) / old. Throws InputError when old <= 0.
double percent_change(double old_score, double new_score);

/// values[i][j] is the percent change on languages[j] after continuing on languages[i].
struct ChangeMatrix {
  std::vector<std::string> languages;
  std::vector<std::vector<double>> values;

  std::size_t size() const { return languages.size(); }
  double at(const std::string& row, const std::string& col) const;
  std::size_t index_of(const std::string& lang) const;
  void validate() const;
  friend bool operator==(const ChangeMatrix&, const ChangeMatrix&) = default;
};

/// Throws CoverageError unless `before` and every row of `after` cover the same languages.
ChangeMatrix build_change_matrix(const PerfRecord& before, const std::map<std::string, PerfRecord>& after);
/// Cell-wise arithmetic mean. Throws CoverageError on differing language lists.
ChangeMatrix average_matrices(const std::vector<ChangeMatrix>& matrices);

double avg_percent_loss(std::span<const double> changes);
std::size_t num_improved_langs(std::span<const double> changes);

struct GainLossRatios {
  double sum_ratio = 0.0;
  double max_ratio = 0.0;
};

/// Both ratios are +inf without losses and 0 with losses but no gains.
GainLossRatios gain_loss_ratios(std::span<const double> changes);

/// 1-based index of the maximum, earliest on ties. Throws InputError when empty.
std::size_t worst_case_stage(std::span<const double> avg_losses);

/// Languages sorted by change descending, ties by id.
std::vector<std::string> change_ordering(const std::map<std::string, double>& row);
std::size_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b);
/// Throws CoverageError when the rows cover different languages.
std::size_t ordering_edit_distance(const std::map<std::string, double>& row_a, const std::map<std::string, double>& row_b);

/// Fraction of rows L whose change on the nearest language is >= the change on
/// the second nearest (distance ties by id). Throws InputError below 3 languages.
double closest_language_check(const DistanceMatrix& distances, const ChangeMatrix& matrix);

struct RowMetrics {
  double avg_percent_loss = 0.0;
  double num_improved_langs = 0.0;
  double sum_ratio = 0.0;
  double max_ratio = 0.0;
  friend bool operator==(const RowMetrics&, const RowMetrics&) = default;
};

RowMetrics row_metrics(std::span<const double> changes);
/// Arithmetic mean of each field; any infinite ratio makes that mean infinite.
RowMetrics mean_metrics(const std::vector<RowMetrics>& rows);

struct MetricsReport {
  std::vector<std::string> row_labels;
  std::vector<RowMetrics> rows;
  RowMetrics mean;
  std::optional<std::size_t> worst_case_stage;
  std::size_t seeds = 1;
};

/// One report row per matrix row plus the row average.
MetricsReport metrics_report(const ChangeMatrix& matrix);

/// Header `continuation,<langs...>`, one line per row, cells with 4 decimals.
std::string heatmap_to_csv(const ChangeMatrix& matrix);
ChangeMatrix heatmap_from_csv(const std::string& text);
/// Rounds every cell to 4 decimals, the precision kept by the CSV form.
ChangeMatrix round_to_csv_precision(const ChangeMatrix& matrix);

}  // namespace cml
