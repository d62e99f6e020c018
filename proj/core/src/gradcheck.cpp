// SPDX-License-Identifier: Apache-2.0
#include "cml/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cml/errors.hpp"

namespace cml {

double GradCheckReport::max_rel_err() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.rel_err);
  return m;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_difference_check(const NamedParamStore& store, const LossFn& loss_fn,
                                        const std::vector<Coordinate>& sample, double h) {
  GradMap grads;
  {
    Tape tape;
    grads = backward_pass(loss_fn(tape, store));
  }
  NamedParamStore work = store;
  auto eval = [&]() {
    Tape tape;
    return loss_fn(tape, work).value().item();
  };
  GradCheckReport report;
  for (const Coordinate& c : sample) {
    if (c.index >= work.value(c.name).numel()) {
      throw InputError("coordinate " + c.name + "[" + std::to_string(c.index) + "] out of range");
    }
    const double original = work.value(c.name)[c.index];
    work.mutable_value(c.name)[c.index] = original + h;
    const double up = eval();
    work.mutable_value(c.name)[c.index] = original - h;
    const double down = eval();
    work.mutable_value(c.name)[c.index] = original;

    GradCheckEntry e;
    e.coord = c;
    auto it = grads.find(c.name);
    e.analytic = it == grads.end() ? 0.0 : it->second[c.index];
    e.numeric = (up - down) / (2.0 * h);
    e.rel_err = relative_error(e.analytic, e.numeric);
    report.entries.push_back(e);
  }
  return report;
}

std::vector<Coordinate> sample_coordinates(const NamedParamStore& store, std::size_t count, Rng& rng,
                                           const GroupFilter& filter) {
  std::vector<std::pair<std::string, std::size_t>> sizes;
  std::size_t total = 0;
  for (const auto& [name, entry] : store.entries()) {
    if (!filter(entry.group)) continue;
    sizes.emplace_back(name, entry.value.numel());
    total += entry.value.numel();
  }
  if (total == 0) throw InputError("no parameters match the sampling filter");
  std::vector<Coordinate> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t flat = rng.below(total);
    for (const auto& [name, n] : sizes) {
      if (flat < n) {
        out.push_back({name, flat});
        break;
      }
      flat -= n;
    }
  }
  return out;
}

}  // namespace cml
