#pragma once

// Rewards, reward normalization, the per-batch on-line update, the epoch
// loop with early stopping, per-task fine-tuning and evaluation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mtnas/architecture/architecture.hpp"
#include "mtnas/autodiff/adam.hpp"
#include "mtnas/controller/controller.hpp"
#include "mtnas/rng.hpp"
#include "mtnas/tasks/batch.hpp"
#include "mtnas/tasks/task.hpp"

namespace mtnas::train {

using arch::ActionSequence;
using arch::MultiTaskModel;
using arch::TaskNetwork;
using ctrl::ControllerPolicy;

struct TrainConfig {
  std::size_t samples_per_task = 4;  // N
  double temperature = 1.0 / 30.0;   // τ
  double epsilon = 0.2;              // exploration probability
  std::size_t batch_size = 64;
  double theta_lr = 1e-3;
  double phi_lr = 1e-3;
  std::size_t max_depth = 5;
  std::size_t patience = 12;
  std::size_t max_epochs = 100;
  std::size_t fine_tune_epochs = 20;
  std::size_t eval_batch_size = 256;
  std::uint64_t seed = 1;
};

/// Throws ConfigError naming the first invalid field.
void validate(const TrainConfig& config);

struct RewardRecord {
  ActionSequence actions;
  double raw = 0.0;
  double normalized = 0.0;
};

/// Mean per-example log-likelihood of the batch under the network (≤ 0).
double compute_reward(const TaskNetwork& net, const tasks::Batch& batch);

/// exp(R_i/τ) / Σ_j exp(R_j/τ), max-shifted. Throws NumericError on
/// non-finite input and ContractError on an empty list or τ ≤ 0.
std::vector<double> normalize_rewards(std::span<const double> rewards, double temperature);

/// What the controller is rewarded by: improve() takes one θ step for an
/// architecture, reward() measures it.
class RewardEnvironment {
 public:
  virtual ~RewardEnvironment() = default;
  virtual void improve(std::size_t task, const std::vector<int>& actions) = 0;
  virtual double reward(std::size_t task, const std::vector<int>& actions) = 0;
};

/// Trains and scores searched task networks on the current batch.
class NetworkEnvironment : public RewardEnvironment {
 public:
  /// Chooses the parameters a θ step may touch; defaults to the whole network.
  using Selector = std::function<ad::ParamList(const TaskNetwork&)>;

  NetworkEnvironment(MultiTaskModel& model, ad::Adam& optimizer, Selector trainable = {});

  void set_batch(const tasks::Batch& batch) { batch_ = &batch; }
  void improve(std::size_t task, const std::vector<int>& actions) override;
  double reward(std::size_t task, const std::vector<int>& actions) override;

 private:
  MultiTaskModel& model_;
  ad::Adam& optimizer_;
  Selector trainable_;
  const tasks::Batch* batch_ = nullptr;
};

/// One gradient-ascent step on the mean batch log-likelihood; returns the
/// reward before the step.
double ascend(const TaskNetwork& net, const tasks::Batch& batch, ad::Adam& optimizer, const ad::ParamList& params);

/// Ascends Σ_i R̄_i · log π(a_i) for one task.
void controller_update(ControllerPolicy& policy, ad::Adam& optimizer, std::size_t task,
                       std::span<const RewardRecord> records);

/// Samples N architectures, takes one θ step for each, scores all of them
/// with the final θ, normalizes, and updates the controller.
std::vector<RewardRecord> train_batch_for_task(ControllerPolicy& policy, ad::Adam& phi_optimizer,
                                               RewardEnvironment& env, std::size_t task, const TrainConfig& config,
                                               Rng& rng);

/// Example accuracy (classification) or token accuracy under Viterbi
/// decoding (tagging). Throws ContractError on an empty split.
double evaluate(const TaskNetwork& net, const std::vector<tasks::Sample>& samples, std::size_t batch_size = 256);

class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience = 12) : patience_(patience) {}

  /// Records one evaluation; returns true when it matches or beats the best,
  /// i.e. when the caller should retain the current state. Only a strict
  /// improvement resets the patience count, so ties keep the later state
  /// without extending training.
  bool update(double metric);
  bool should_stop() const { return evaluations_ > 0 && since_best_ >= patience_; }

  double best() const { return best_; }
  /// 1-based index of the latest evaluation that reached the best value, 0
  /// before any evaluation.
  std::size_t best_index() const { return best_index_; }
  std::size_t evaluations() const { return evaluations_; }
  std::size_t since_best() const { return since_best_; }
  std::size_t patience() const { return patience_; }
  void restore(double best, std::size_t best_index, std::size_t evaluations, std::size_t since_best);

 private:
  std::size_t patience_;
  double best_ = 0.0;
  std::size_t best_index_ = 0;
  std::size_t evaluations_ = 0;
  std::size_t since_best_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::vector<double> dev_metric;
  std::vector<double> reward_mean;
  std::vector<std::vector<int>> architectures;
  double dev_average = 0.0;
};

struct History {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
};

/// Runs the epoch loop of one experiment. With a policy the model must use
/// the searched scheme; without one it trains the fixed baseline networks.
class Trainer {
 public:
  Trainer(MultiTaskModel& model, const tasks::TaskSuite& suite, TrainConfig config, ControllerPolicy* policy);

  /// One pass of round-robin batches over all tasks followed by a dev
  /// evaluation; keeps a snapshot of the best epoch.
  const EpochRecord& run_epoch();
  bool finished() const;
  /// Runs epochs until finished, calling `on_epoch` after each, then restores
  /// the best snapshot.
  const History& train(const std::function<void(const EpochRecord&)>& on_epoch = {});
  void restore_best();

  /// Current network of a task: greedy architecture or fixed baseline.
  TaskNetwork network(std::size_t task) const;

  const TrainConfig& config() const { return config_; }
  const History& history() const { return history_; }
  History& history() { return history_; }
  Rng& rng() { return rng_; }
  ad::Adam& theta_optimizer() { return theta_opt_; }
  ad::Adam& phi_optimizer() { return phi_opt_; }
  EarlyStopper& stopper() { return stopper_; }
  /// Every trained parameter (model then controller).
  ad::ParamList params();
  /// Values of params() at the best epoch; empty before the first epoch.
  std::vector<std::vector<double>>& best_snapshot() { return best_; }

 private:
  MultiTaskModel& model_;
  const tasks::TaskSuite& suite_;
  TrainConfig config_;
  ControllerPolicy* policy_;
  Rng rng_;
  ad::Adam theta_opt_;
  ad::Adam phi_opt_;
  EarlyStopper stopper_;
  History history_;
  std::vector<std::vector<double>> best_;
};

struct FineTuneResult {
  std::unique_ptr<arch::PrivateCopy> copy;
  TaskNetwork network;
  double dev_before = 0.0;
  double dev_after = 0.0;
  std::size_t epochs = 0;
};

/// Trains a private copy of the task's private partition with the shared
/// partition frozen, keeping the best dev epoch (the starting point counts).
FineTuneResult fine_tune_task(MultiTaskModel& model, const tasks::TaskSpec& task, const TaskNetwork& net,
                              const TrainConfig& config);

}  // namespace mtnas::train
