// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cml/autograd.hpp"
#include "cml/param_store.hpp"
#include "cml/random.hpp"

namespace cml {

struct Coordinate {
  std::string name;
  std::size_t index = 0;
  friend auto operator<=>(const Coordinate&, const Coordinate&) = default;
};

/// Builds a scalar loss on `tape` from the parameters in `store`. Must be deterministic.
using LossFn = std::function<Var(Tape& tape, const NamedParamStore& store)>;

struct GradCheckEntry {
  Coordinate coord;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err() const;
};

/// rel_err = |a - n| / max(|a|, |n|, 1e-12), with n the central difference at step h.
double relative_error(double analytic, double numeric);

/// Compares backward_pass against central finite differences at each
/// coordinate. The store is only read; perturbations happen on a private copy.
GradCheckReport finite_difference_check(const NamedParamStore& store, const LossFn& loss_fn,
                                        const std::vector<Coordinate>& sample, double h = 1e-5);

/// Uniformly drawn coordinates (with replacement) among parameters passing `filter`.
std::vector<Coordinate> sample_coordinates(const NamedParamStore& store, std::size_t count, Rng& rng,
                                           const GroupFilter& filter = filters::all());

}  // namespace cml
