// SPDX-License-Identifier: Apache-2.0
#include "cml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "cml/errors.hpp"

namespace cml {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::set<std::string> keys(const std::map<std::string, double>& m) {
  std::set<std::string> out;
  for (const auto& [k, v] : m) out.insert(k);
  return out;
}
}  // namespace

double percent_change(double old_score, double new_score) {
  if (!(old_score > 0.0)) throw InputError("percent change needs a positive base score");
  return 100.0 * (new_score - old_score) / old_score;
}

std::size_t ChangeMatrix::index_of(const std::string& lang) const {
  auto it = std::find(languages.begin(), languages.end(), lang);
  if (it == languages.end()) throw CoverageError("language '" + lang + "' not in change matrix");
  return static_cast<std::size_t>(it - languages.begin());
}

double ChangeMatrix::at(const std::string& row, const std::string& col) const {
  return values[index_of(row)][index_of(col)];
}

void ChangeMatrix::validate() const {
  if (values.size() != languages.size()) throw ContractViolation("change matrix row count mismatch");
  for (const auto& r : values) {
    if (r.size() != languages.size()) throw ContractViolation("change matrix is not square");
    for (double x : r) {
      if (!std::isfinite(x)) throw NumericFault("non-finite change matrix entry");
    }
  }
}

ChangeMatrix build_change_matrix(const PerfRecord& before, const std::map<std::string, PerfRecord>& after) {
  const auto langs = keys(before);
  std::set<std::string> row_langs;
  for (const auto& [k, v] : after) row_langs.insert(k);
  if (row_langs != langs) throw CoverageError("continuation rows do not cover the evaluation languages");
  ChangeMatrix m;
  m.languages.assign(langs.begin(), langs.end());
  for (const auto& row : m.languages) {
    const auto& rec = after.at(row);
    if (keys(rec) != langs) throw CoverageError("row '" + row + "' evaluates a different language set");
    std::vector<double> r;
    for (const auto& col : m.languages) r.push_back(percent_change(before.at(col), rec.at(col)));
    m.values.push_back(std::move(r));
  }
  return m;
}

ChangeMatrix average_matrices(const std::vector<ChangeMatrix>& matrices) {
  if (matrices.empty()) throw InputError("nothing to average");
  ChangeMatrix out = matrices.front();
  for (std::size_t k = 1; k < matrices.size(); ++k) {
    if (matrices[k].languages != out.languages) throw CoverageError("matrices cover different languages");
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (std::size_t j = 0; j < out.size(); ++j) out.values[i][j] += matrices[k].values[i][j];
    }
  }
  const double n = static_cast<double>(matrices.size());
  for (auto& r : out.values) {
    for (double& x : r) x /= n;
  }
  return out;
}

double avg_percent_loss(std::span<const double> changes) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double c : changes) {
    if (c < 0.0) {
      sum += -c;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::size_t num_improved_langs(std::span<const double> changes) {
  return static_cast<std::size_t>(std::count_if(changes.begin(), changes.end(), [](double c) { return c > 0.0; }));
}

GainLossRatios gain_loss_ratios(std::span<const double> changes) {
  double gains = 0.0, losses = 0.0, max_gain = 0.0, worst_loss = 0.0;
  bool any_loss = false;
  for (double c : changes) {
    if (c > 0.0) {
      gains += c;
      max_gain = std::max(max_gain, c);
    } else if (c < 0.0) {
      any_loss = true;
      losses += c;
      worst_loss = std::min(worst_loss, c);
    }
  }
  if (!any_loss) return {kInf, kInf};
  return {gains / std::abs(losses), max_gain / std::abs(worst_loss)};
}

std::size_t worst_case_stage(std::span<const double> avg_losses) {
  if (avg_losses.empty()) throw InputError("empty trajectory");
  std::size_t best = 0;
  for (std::size_t i = 1; i < avg_losses.size(); ++i) {
    if (avg_losses[i] > avg_losses[best]) best = i;
  }
  return best + 1;
}

std::vector<std::string> change_ordering(const std::map<std::string, double>& row) {
  std::vector<std::pair<std::string, double>> items(row.begin(), row.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  for (auto& [k, v] : items) out.push_back(k);
  return out;
}

std::size_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::size_t ordering_edit_distance(const std::map<std::string, double>& row_a,
                                   const std::map<std::string, double>& row_b) {
  if (keys(row_a) != keys(row_b)) throw CoverageError("rows cover different languages");
  return levenshtein(change_ordering(row_a), change_ordering(row_b));
}

double closest_language_check(const DistanceMatrix& distances, const ChangeMatrix& matrix) {
  if (matrix.size() < 3) throw InputError("closest-language check needs at least 3 languages");
  std::size_t satisfied = 0;
  for (const auto& lang : matrix.languages) {
    std::vector<std::pair<double, std::string>> others;
    for (const auto& other : matrix.languages) {
      if (other != lang) others.emplace_back(distances.at(lang, other), other);
    }
    std::sort(others.begin(), others.end());
    const double c1 = matrix.at(lang, others[0].second);
    const double c2 = matrix.at(lang, others[1].second);
    if (c1 >= c2) ++satisfied;
  }
  return static_cast<double>(satisfied) / static_cast<double>(matrix.size());
}

RowMetrics row_metrics(std::span<const double> changes) {
  const auto r = gain_loss_ratios(changes);
  return {avg_percent_loss(changes), static_cast<double>(num_improved_langs(changes)), r.sum_ratio, r.max_ratio};
}

RowMetrics mean_metrics(const std::vector<RowMetrics>& rows) {
  if (rows.empty()) throw InputError("nothing to average");
  RowMetrics m;
  for (const auto& r : rows) {
    m.avg_percent_loss += r.avg_percent_loss;
    m.num_improved_langs += r.num_improved_langs;
    m.sum_ratio += r.sum_ratio;
    m.max_ratio += r.max_ratio;
  }
  const double n = static_cast<double>(rows.size());
  m.avg_percent_loss /= n;
  m.num_improved_langs /= n;
  m.sum_ratio /= n;
  m.max_ratio /= n;
  return m;
}

MetricsReport metrics_report(const ChangeMatrix& matrix) {
  matrix.validate();
  MetricsReport rep;
  rep.row_labels = matrix.languages;
  for (const auto& r : matrix.values) rep.rows.push_back(row_metrics(r));
  rep.mean = mean_metrics(rep.rows);
  return rep;
}

std::string heatmap_to_csv(const ChangeMatrix& matrix) {
  matrix.validate();
  std::string out = "continuation";
  for (const auto& l : matrix.languages) out += "," + l;
  out += "\n";
  char buf[64];
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    out += matrix.languages[i];
    for (double x : matrix.values[i]) {
      std::snprintf(buf, sizeof buf, "%.4f", x);
      out += std::string(buf) == "-0.0000" ? ",0.0000" : "," + std::string(buf);
    }
    out += "\n";
  }
  return out;
}

ChangeMatrix heatmap_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    return f;
  };
  if (!std::getline(is, line)) throw InputError("empty heatmap CSV");
  auto header = split(line);
  if (header.empty() || header[0] != "continuation") throw InputError("heatmap CSV header must start with 'continuation'");
  ChangeMatrix m;
  m.languages.assign(header.begin() + 1, header.end());
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split(line);
    if (row >= m.size() || f.size() != m.size() + 1 || f[0] != m.languages[row]) {
      throw InputError("heatmap CSV row " + std::to_string(row + 1) + " does not match the header");
    }
    std::vector<double> r;
    for (std::size_t j = 1; j < f.size(); ++j) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(f[j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != f[j].size()) throw InputError("bad heatmap cell '" + f[j] + "'");
      r.push_back(x);
    }
    m.values.push_back(std::move(r));
    ++row;
  }
  if (row != m.size()) throw InputError("heatmap CSV has " + std::to_string(row) + " rows, expected " + std::to_string(m.size()));
  return m;
}

ChangeMatrix round_to_csv_precision(const ChangeMatrix& matrix) { return heatmap_from_csv(heatmap_to_csv(matrix)); }

}  // namespace cml
