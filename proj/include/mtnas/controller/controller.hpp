#pragma once

// LSTM policy over module sequences. Step 1 reads the task embedding; every
// later step reads a learned embedding of the previous action. Each step
// emits logits over the L pool modules plus Stop (index L). Reaching
// max_depth forces Stop with probability one, so that step carries no
// log-probability term.

#include <cstddef>
#include <span>
#include <vector>

#include "mtnas/architecture/architecture.hpp"
#include "mtnas/layers/layers.hpp"
#include "mtnas/rng.hpp"

namespace mtnas::ctrl {

using ad::ParamList;
using ad::Parameter;
using ad::Tape;
using ad::Var;
using arch::ActionSequence;

struct ControllerConfig {
  std::size_t tasks = 1;
  std::size_t pool_size = 4;
  std::size_t task_embed_dim = 15;
  std::size_t hidden = 50;
  std::size_t max_depth = 5;
};

class ControllerPolicy {
 public:
  explicit ControllerPolicy(ControllerConfig config);
  ControllerPolicy(const ControllerPolicy&) = delete;
  ControllerPolicy& operator=(const ControllerPolicy&) = delete;

  void init_uniform(Rng& rng, double scale = layers::kInitScale);
  void zero_parameters();

  /// Draws a sequence. With probability epsilon a step is uniform over the
  /// L+1 choices, otherwise it follows the policy; recorded log-probs are
  /// always the policy's own.
  ActionSequence sample(std::size_t task, double epsilon, Rng& rng) const;
  /// Per-step argmax, ties to the lower index.
  ActionSequence greedy(std::size_t task) const;
  /// Step distributions along the greedy path (one vector per decision
  /// actually taken, the Stop step included).
  std::vector<std::vector<double>> trace(std::size_t task) const;
  /// Σ log π(a_t | prefix), including the terminal Stop unless forced.
  /// Throws BoundsError for an invalid action or a sequence longer than
  /// max_depth.
  Var log_prob_of(Tape& tape, std::size_t task, std::span<const int> actions);

  const ControllerConfig& config() const { return config_; }
  std::size_t stop_action() const { return config_.pool_size; }
  std::size_t choices() const { return config_.pool_size + 1; }
  ParamList params();

  Parameter task_embeddings;    // [tasks × S]
  Parameter action_embeddings;  // [(L+1) × S]
  layers::LstmCell cell;
  layers::Linear output;

 private:
  struct Walker;

  ControllerConfig config_;
};

}  // namespace mtnas::ctrl
