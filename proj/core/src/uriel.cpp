// SPDX-License-Identifier: Apache-2.0
#include "cml/uriel.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cml/errors.hpp"
#include "cml/serialize.hpp"

namespace cml {

DistanceMatrix::DistanceMatrix(std::vector<std::string> languages, std::vector<double> values)
    : languages_(std::move(languages)), values_(std::move(values)) {
  const std::size_t n = languages_.size();
  if (values_.size() != n * n) throw InputError("distance matrix is not square over its language list");
  std::set<std::string> uniq(languages_.begin(), languages_.end());
  if (uniq.size() != n) throw InputError("duplicate language in distance matrix");
  for (std::size_t i = 0; i < n; ++i) {
    if (at(i, i) != 0.0) throw InputError("distance matrix diagonal must be zero");
    for (std::size_t j = 0; j < n; ++j) {
      const double v = at(i, j);
      if (!std::isfinite(v) || v < 0.0 || v > 2.0) throw InputError("distance entries must be finite and in [0, 2]");
      if (std::abs(v - at(j, i)) > 1e-12) throw InputError("distance matrix is not symmetric");
    }
  }
}

std::size_t DistanceMatrix::index_of(const std::string& language) const {
  for (std::size_t i = 0; i < languages_.size(); ++i) {
    if (languages_[i] == language) return i;
  }
  throw InputError("language '" + language + "' not in distance matrix");
}

bool DistanceMatrix::contains(const std::string& language) const {
  for (const auto& l : languages_) {
    if (l == language) return true;
  }
  return false;
}

double cosine_distance(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) throw InputError("syntactic vectors differ in dimension");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw InputError("syntactic vector has zero norm");
  double d = 1.0 - dot / std::sqrt(nu * nv);
  // Keep rounding noise inside the documented range.
  if (d < 0.0) d = 0.0;
  if (d > 2.0) d = 2.0;
  return d;
}

double cosine_distance(const SyntacticVector& u, const SyntacticVector& v) {
  try {
    return cosine_distance(u.values, v.values);
  } catch (const InputError& e) {
    throw InputError(std::string(e.what()) + " (" + u.language + ", " + v.language + ")");
  }
}

DistanceMatrix build_distance_matrix(const std::vector<SyntacticVector>& vectors) {
  const std::size_t n = vectors.size();
  std::vector<std::string> langs;
  std::vector<double> values(n * n, 0.0);
  for (const auto& v : vectors) langs.push_back(v.language);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = cosine_distance(vectors[i], vectors[j]);
      values[i * n + j] = d;
      values[j * n + i] = d;
    }
  }
  return DistanceMatrix(std::move(langs), std::move(values));
}

double avg_distance_to_rest(const std::string& language, const DistanceMatrix& distances) {
  if (distances.size() < 2) throw InputError("average distance needs at least two languages");
  const std::size_t i = distances.index_of(language);
  double s = 0.0;
  for (std::size_t j = 0; j < distances.size(); ++j) {
    if (j != i) s += distances.at(i, j);
  }
  return s / static_cast<double>(distances.size() - 1);
}

double round_to_step(double x, double step) {
  if (step <= 0.0) return x;
  return std::round(x / step) * step;
}

double division_factor(double avg_distance, const DivisionFactorFn& fn) {
  if (!std::isfinite(avg_distance) || avg_distance < 0.0) {
    throw InputError("average distance must be finite and >= 0");
  }
  const double raw = round_to_step(fn.slope * avg_distance + fn.intercept, fn.step);
  return std::max(fn.min_factor, raw);
}

std::pair<double, double> fit_line(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw InputError("line fit needs at least two points");
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [x, y] : points) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  if (sxx == 0.0) throw InputError("line fit needs distinct x values");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

double parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw InputError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw InputError("bad number '" + s + "'");
  }
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<SyntacticVector> read_vectors_csv(const std::filesystem::path& path) {
  std::istringstream is(read_file(path));
  std::string line;
  if (!std::getline(is, line)) throw InputError("empty vector file " + path.string());
  const auto header = split(strip_cr(line), ',');
  if (header.empty() || header[0] != "lang") throw InputError("vector file header must start with 'lang'");
  std::vector<SyntacticVector> out;
  while (std::getline(is, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) throw InputError("ragged row in vector file: " + line);
    SyntacticVector v{cells[0], {}};
    for (std::size_t i = 1; i < cells.size(); ++i) v.values.push_back(parse_double(cells[i]));
    out.push_back(std::move(v));
  }
  return out;
}

std::string vectors_to_csv(const std::vector<SyntacticVector>& vectors) {
  std::ostringstream os;
  os << "lang";
  const std::size_t dim = vectors.empty() ? 0 : vectors[0].values.size();
  for (std::size_t i = 0; i < dim; ++i) os << ",f" << i;
  os << "\n";
  for (const auto& v : vectors) {
    os << v.language;
    for (double x : v.values) os << "," << fmt17(x);
    os << "\n";
  }
  return os.str();
}

DistanceMatrix parse_distance_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw InputError("empty distance file");
  auto header = split(strip_cr(line), ',');
  if (header.empty() || header[0] != "lang") throw InputError("distance file header must start with 'lang'");
  std::vector<std::string> langs(header.begin() + 1, header.end());
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) throw InputError("ragged row in distance file: " + line);
    if (row >= langs.size() || cells[0] != langs[row]) throw InputError("distance rows must follow header order");
    for (std::size_t i = 1; i < cells.size(); ++i) values.push_back(parse_double(cells[i]));
    ++row;
  }
  if (row != langs.size()) throw InputError("distance file is not square");
  return DistanceMatrix(std::move(langs), std::move(values));
}

DistanceMatrix read_distance_csv(const std::filesystem::path& path) { return parse_distance_csv(read_file(path)); }

std::string distance_to_csv(const DistanceMatrix& d) {
  std::ostringstream os;
  os << "lang";
  for (const auto& l : d.languages()) os << "," << l;
  os << "\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    os << d.languages()[i];
    for (std::size_t j = 0; j < d.size(); ++j) os << "," << fmt17(d.at(i, j));
    os << "\n";
  }
  return os.str();
}

}  // namespace cml
