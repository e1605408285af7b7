#include "mtnas/controller/controller.hpp"

#include <algorithm>
#include <cmath>

#include "mtnas/errors.hpp"

namespace mtnas::ctrl {

// Steps the policy LSTM on a tape, one decision at a time.
struct ControllerPolicy::Walker {
  ControllerPolicy& policy;
  Tape& tape;
  Var h, c;
  Var input;

  Walker(ControllerPolicy& p, Tape& t, std::size_t task) : policy(p), tape(t) {
    const int index = static_cast<int>(task);
    input = ad::embedding_gather(tape.param(policy.task_embeddings), std::span<const int>(&index, 1));
  }

  /// Log-probabilities [1×(L+1)] of the next decision.
  Var step() {
    auto [h2, c2] = policy.cell.step(tape, input, h, c);
    h = h2;
    c = c2;
    return ad::log_softmax(policy.output.forward(tape, h));
  }

  void feed(int action) {
    input = ad::embedding_gather(tape.param(policy.action_embeddings), std::span<const int>(&action, 1));
  }
};

ControllerPolicy::ControllerPolicy(ControllerConfig config)
    : task_embeddings("controller.task_embeddings", {config.tasks, config.task_embed_dim}),
      action_embeddings("controller.action_embeddings", {config.pool_size + 1, config.task_embed_dim}),
      cell("controller.lstm", config.task_embed_dim, config.hidden),
      output("controller.output", config.hidden, config.pool_size + 1),
      config_(config) {
  if (config.tasks == 0 || config.pool_size == 0 || config.task_embed_dim == 0 || config.hidden == 0) {
    throw ContractError("controller: tasks, pool size, embedding width and hidden width must be positive");
  }
  if (config.max_depth == 0) throw ContractError("controller: max_depth must be positive");
}

void ControllerPolicy::init_uniform(Rng& rng, double scale) { layers::init_uniform(params(), rng, scale); }

void ControllerPolicy::zero_parameters() {
  for (Parameter* p : params()) std::fill(p->value.begin(), p->value.end(), 0.0);
}

ParamList ControllerPolicy::params() {
  ParamList out{&task_embeddings, &action_embeddings};
  for (Parameter* p : cell.params()) out.push_back(p);
  for (Parameter* p : output.params()) out.push_back(p);
  return out;
}

ActionSequence ControllerPolicy::sample(std::size_t task, double epsilon, Rng& rng) const {
  if (task >= config_.tasks) throw BoundsError("controller: task index " + std::to_string(task));
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractError("controller: exploration must lie in [0,1]");
  Tape tape;
  Walker walk(const_cast<ControllerPolicy&>(*this), tape, task);
  ActionSequence seq;
  const std::size_t n = choices();
  while (seq.actions.size() < config_.max_depth) {
    const Var logp = walk.step();
    std::size_t choice;
    if (rng.bernoulli(epsilon)) {
      choice = rng.below(n);
    } else {
      const double u = rng.uniform();
      double acc = 0.0;
      choice = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += std::exp(logp.at(i));
        if (u < acc) {
          choice = i;
          break;
        }
      }
    }
    seq.log_probs.push_back(logp.at(choice));
    if (choice == stop_action()) return seq;
    seq.actions.push_back(static_cast<int>(choice));
    walk.feed(static_cast<int>(choice));
  }
  return seq;
}

ActionSequence ControllerPolicy::greedy(std::size_t task) const {
  if (task >= config_.tasks) throw BoundsError("controller: task index " + std::to_string(task));
  Tape tape;
  Walker walk(const_cast<ControllerPolicy&>(*this), tape, task);
  ActionSequence seq;
  while (seq.actions.size() < config_.max_depth) {
    const auto logp = walk.step().value();
    const std::size_t choice = static_cast<std::size_t>(std::max_element(logp.begin(), logp.end()) - logp.begin());
    seq.log_probs.push_back(logp[choice]);
    if (choice == stop_action()) return seq;
    seq.actions.push_back(static_cast<int>(choice));
    walk.feed(static_cast<int>(choice));
  }
  return seq;
}

std::vector<std::vector<double>> ControllerPolicy::trace(std::size_t task) const {
  if (task >= config_.tasks) throw BoundsError("controller: task index " + std::to_string(task));
  Tape tape;
  Walker walk(const_cast<ControllerPolicy&>(*this), tape, task);
  std::vector<std::vector<double>> out;
  for (std::size_t depth = 0; depth < config_.max_depth; ++depth) {
    const auto logp = walk.step().value();
    std::vector<double> probs(logp.size());
    std::transform(logp.begin(), logp.end(), probs.begin(), [](double v) { return std::exp(v); });
    const std::size_t choice = static_cast<std::size_t>(std::max_element(logp.begin(), logp.end()) - logp.begin());
    out.push_back(std::move(probs));
    if (choice == stop_action()) break;
    walk.feed(static_cast<int>(choice));
  }
  return out;
}

Var ControllerPolicy::log_prob_of(Tape& tape, std::size_t task, std::span<const int> actions) {
  if (task >= config_.tasks) throw BoundsError("controller: task index " + std::to_string(task));
  if (actions.size() > config_.max_depth) {
    throw BoundsError("controller: sequence of " + std::to_string(actions.size()) + " exceeds max depth " +
                      std::to_string(config_.max_depth));
  }
  for (int a : actions) {
    if (a < 0 || static_cast<std::size_t>(a) >= config_.pool_size) {
      throw BoundsError("controller: action " + std::to_string(a) + " outside pool of " +
                        std::to_string(config_.pool_size));
    }
  }
  Walker walk(*this, tape, task);
  std::vector<Var> terms;
  for (int a : actions) {
    terms.push_back(ad::pick(walk.step(), std::span<const int>(&a, 1)));
    walk.feed(a);
  }
  if (actions.size() < config_.max_depth) {
    const int stop = static_cast<int>(stop_action());
    terms.push_back(ad::pick(walk.step(), std::span<const int>(&stop, 1)));
  }
  if (terms.empty()) return tape.constant({1}, 0.0);
  if (terms.size() == 1) return terms.front();
  return ad::sum(ad::concat(terms));
}

}  // namespace mtnas::ctrl
