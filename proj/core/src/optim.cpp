// SPDX-License-Identifier: Apache-2.0
#include "cml/optim.hpp"

#include <cmath>

#include "cml/errors.hpp"

namespace cml {

OptimConfig OptimConfig::uniform(double lr, OptimMode mode) {
  OptimConfig c;
  c.mode = mode;
  for (auto& [k, v] : c.lr) v = lr;
  return c;
}

double OptimConfig::lr_for(const ParamGroup& group) const {
  auto it = lr.find(group.kind);
  return it == lr.end() ? 0.0 : it->second;
}

void OptimConfig::validate() const {
  for (const auto& [k, v] : lr) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("learning rates must be finite and >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

OptimConfig configure_groups(OptimConfig cfg, double adapter_lr, double division_factor) {
  if (!(division_factor >= 1.0)) {
    throw ConfigError("division factor must be >= 1, got " + std::to_string(division_factor));
  }
  cfg.lr[GroupKind::Adapter] = adapter_lr;
  cfg.lr[GroupKind::Base] = adapter_lr / division_factor;
  cfg.lr[GroupKind::LayerNorm] = adapter_lr / division_factor;
  cfg.validate();
  return cfg;
}

std::size_t count_trainable(const MaskSet& masks) {
  std::size_t n = 0;
  for (const auto& [name, m] : masks) {
    for (auto b : m) n += b ? 1 : 0;
  }
  return n;
}

MaskSet apply_trainability_mask(const NamedParamStore& store, const std::set<std::pair<std::string, std::size_t>>& keep,
                                const GroupFilter& scope) {
  MaskSet masks;
  for (const auto& [name, entry] : store.entries()) {
    if (scope(entry.group)) masks.emplace(name, std::vector<std::uint8_t>(entry.value.numel(), 0));
  }
  for (const auto& [name, idx] : keep) {
    auto it = masks.find(name);
    if (it == masks.end()) throw InputError("mask coordinate names unknown or out-of-scope parameter '" + name + "'");
    if (idx >= it->second.size()) {
      throw InputError("mask coordinate " + name + "[" + std::to_string(idx) + "] out of range");
    }
    it->second[idx] = 1;
  }
  return masks;
}

Optimizer::Optimizer(OptimConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

void Optimizer::set_config(OptimConfig cfg) {
  cfg.validate();
  cfg_ = std::move(cfg);
}

void Optimizer::step(NamedParamStore& store, const GradMap& grads, const MaskSet& masks,
                     const std::set<ParamGroup>& frozen) {
  state_ = optimizer_step(store, grads, cfg_, masks, frozen, std::move(state_));
}

OptState optimizer_step(NamedParamStore& store, const GradMap& grads, const OptimConfig& cfg, const MaskSet& masks,
                        const std::set<ParamGroup>& frozen, OptState state) {
  cfg.validate();
  for (const auto& [name, g] : grads) {
    if (!store.contains(name)) throw ContractViolation("gradient for unknown parameter '" + name + "'");
    if (g.shape() != store.value(name).shape()) throw ContractViolation("gradient shape mismatch for '" + name + "'");
    if (!g.all_finite()) throw NumericFault("non-finite gradient for '" + name + "'");
    if (auto it = masks.find(name); it != masks.end() && it->second.size() != g.numel()) {
      throw ContractViolation("mask size mismatch for '" + name + "'");
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  for (const auto& [name, g] : grads) {
    const ParamGroup& group = store.group(name);
    bool is_frozen = false;
    for (const auto& f : frozen) is_frozen = is_frozen || f.covers(group);
    const double lr = cfg.lr_for(group);
    if (is_frozen || lr == 0.0) continue;
    const std::vector<std::uint8_t>* mask = nullptr;
    if (auto it = masks.find(name); it != masks.end()) mask = &it->second;

    Tensor& theta = store.mutable_value(name);
    const std::size_t n = theta.numel();
    if (cfg.mode == OptimMode::SGD) {
      for (std::size_t i = 0; i < n; ++i) {
        if (mask && !(*mask)[i]) continue;
        theta[i] -= lr * g[i];
      }
      continue;
    }
    auto [mit, m_new] = state.m.try_emplace(name, theta.shape(), 0.0);
    auto [vit, v_new] = state.v.try_emplace(name, theta.shape(), 0.0);
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask && !(*mask)[i]) continue;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * theta[i]);
    }
  }
  return state;
}

}  // namespace cml
