#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtnas/autodiff/tensor.hpp"

namespace mtnas::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with per-parameter moments and per-parameter step counts, so
/// parameters that sit out a step (unselected pool modules, frozen shared
/// layers) keep their state untouched. Minimizes: value -= lr · m̂ / (√v̂ + ε).
class Adam {
 public:
  struct State {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t steps = 0;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Updates each parameter from its grad. Grads are left untouched.
  /// Throws NumericError if a grad or an updated value is not finite.
  void step(std::span<Parameter* const> params);

  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  /// Moments keyed by parameter name, for checkpointing.
  std::unordered_map<std::string, State> export_state() const;
  /// Restores moments for the given parameters by name; unknown names start fresh.
  void import_state(const std::unordered_map<std::string, State>& state, std::span<Parameter* const> params);
  void reset() { state_.clear(); }

 private:
  AdamConfig config_;
  std::unordered_map<const Parameter*, std::pair<std::string, State>> state_;
};

}  // namespace mtnas::ad
