// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cml {

struct SyntacticVector {
  std::string language;
  std::vector<double> values;
};

/// Symmetric pairwise distances with a zero diagonal, row-major over `languages`.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  /// Validates shape, zero diagonal, symmetry (1e-12), finiteness and range [0, 2].
  DistanceMatrix(std::vector<std::string> languages, std::vector<double> values);

  const std::vector<std::string>& languages() const noexcept { return languages_; }
  std::size_t size() const noexcept { return languages_.size(); }
  double at(std::size_t i, std::size_t j) const { return values_[i * languages_.size() + j]; }
  double at(const std::string& a, const std::string& b) const { return at(index_of(a), index_of(b)); }
  std::size_t index_of(const std::string& language) const;
  bool contains(const std::string& language) const;

 private:
  std::vector<std::string> languages_;
  std::vector<double> values_;
};

/// 1 - (u . v) / (|u| |v|). Throws InputError on dimension mismatch or zero norm.
double cosine_distance(const SyntacticVector& u, const SyntacticVector& v);
double cosine_distance(const std::vector<double>& u, const std::vector<double>& v);

DistanceMatrix build_distance_matrix(const std::vector<SyntacticVector>& vectors);

/// Mean of row `language` without the diagonal. Needs at least two languages.
double avg_distance_to_rest(const std::string& language, const DistanceMatrix& distances);

/// Least-squares line through the six (average distance, division factor)
/// pairs of the reference LAFT-URIEL schedule.
inline constexpr double kDivisionSlope = 477.2486410721002;
inline constexpr double kDivisionIntercept = -157.62167675179194;

/// factor(d) = max(min_factor, round_to_step(slope * d + intercept)).
struct DivisionFactorFn {
  double slope = kDivisionSlope;
  double intercept = kDivisionIntercept;
  double step = 5.0;
  double min_factor = 1.0;
};

/// Rounds half away from zero to the nearest multiple of `step` (no rounding when step <= 0).
double round_to_step(double x, double step);
/// Throws InputError for negative or non-finite d.
double division_factor(double avg_distance, const DivisionFactorFn& fn = {});

/// Ordinary least squares y = slope * x + intercept.
std::pair<double, double> fit_line(const std::vector<std::pair<double, double>>& points);

/// CSV with header `lang,f0,f1,...`.
std::vector<SyntacticVector> read_vectors_csv(const std::filesystem::path& path);
std::string vectors_to_csv(const std::vector<SyntacticVector>& vectors);
/// Square CSV: header `lang,<l1>,<l2>,...`, then one row per language.
DistanceMatrix read_distance_csv(const std::filesystem::path& path);
DistanceMatrix parse_distance_csv(const std::string& text);
std::string distance_to_csv(const DistanceMatrix& distances);

}  // namespace cml
