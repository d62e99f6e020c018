// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cml/autograd.hpp"
#include "cml/param_store.hpp"

namespace cml {

enum class OptimMode { SGD, AdamW };

struct OptimConfig {
  OptimMode mode = OptimMode::AdamW;
  std::map<GroupKind, double> lr{{GroupKind::Base, 1e-3},
                                 {GroupKind::Adapter, 1e-3},
                                 {GroupKind::Head, 1e-3},
                                 {GroupKind::LayerNorm, 1e-3}};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;

  static OptimConfig uniform(double lr, OptimMode mode = OptimMode::AdamW);
  double lr_for(const ParamGroup& group) const;
  void validate() const;
};

/// Sets lr(Adapter) = adapter_lr and lr(Base) = lr(LayerNorm) = adapter_lr / division_factor.
/// The head keeps whatever `cfg` already holds. Throws ConfigError for a factor below 1.
OptimConfig configure_groups(OptimConfig cfg, double adapter_lr, double division_factor);

/// Per-parameter trainability; names without an entry are fully trainable.
using MaskSet = std::map<std::string, std::vector<std::uint8_t>>;

std::size_t count_trainable(const MaskSet& masks);

/// Masks every parameter passing `scope`; true exactly at the `keep` coordinates.
MaskSet apply_trainability_mask(const NamedParamStore& store, const std::set<std::pair<std::string, std::size_t>>& keep,
                                const GroupFilter& scope = filters::all());

struct OptState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t step = 0;
};

/// SGD:   theta -= lr * g
/// AdamW: m = b1 m + (1-b1) g; v = b2 v + (1-b2) g^2;
///        theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
///
/// Only coordinates that are present in the gradient map, unmasked, outside
/// the frozen groups and with lr > 0 are touched (value, moments and decay).
class Optimizer {
 public:
  explicit Optimizer(OptimConfig cfg);

  void step(NamedParamStore& store, const GradMap& grads, const MaskSet& masks = {},
            const std::set<ParamGroup>& frozen = {});

  const OptimConfig& config() const noexcept { return cfg_; }
  void set_config(OptimConfig cfg);
  const OptState& state() const noexcept { return state_; }
  void set_state(OptState state) { state_ = std::move(state); }

 private:
  OptimConfig cfg_;
  OptState state_;
};

/// Functional form of a single step; returns the updated state.
OptState optimizer_step(NamedParamStore& store, const GradMap& grads, const OptimConfig& cfg, const MaskSet& masks,
                        const std::set<ParamGroup>& frozen, OptState state);

}  // namespace cml
