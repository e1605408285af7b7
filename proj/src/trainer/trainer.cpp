#include "mtnas/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtnas/errors.hpp"

namespace mtnas::train {
namespace {

std::vector<std::vector<double>> snapshot(const ad::ParamList& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const ad::Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const ad::ParamList& params, const std::vector<std::vector<double>>& values) {
  if (values.size() != params.size()) throw ContractError("snapshot does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].size() != params[i]->size()) throw ContractError("snapshot size mismatch for " + params[i]->name);
    params[i]->value = values[i];
  }
}

}  // namespace

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (c.samples_per_task == 0) fail("samples_per_task must be at least 1");
  if (!(c.temperature > 0.0) || !std::isfinite(c.temperature)) fail("temperature must be positive");
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) fail("epsilon must lie in [0,1]");
  if (c.batch_size == 0) fail("batch_size must be at least 1");
  if (!(c.theta_lr > 0.0) || !std::isfinite(c.theta_lr)) fail("theta_lr must be positive");
  if (!(c.phi_lr > 0.0) || !std::isfinite(c.phi_lr)) fail("phi_lr must be positive");
  if (c.max_depth == 0) fail("max_depth must be at least 1");
  if (c.patience == 0) fail("patience must be at least 1");
  if (c.max_epochs == 0) fail("max_epochs must be at least 1");
  if (c.eval_batch_size == 0) fail("eval_batch_size must be at least 1");
}

double compute_reward(const TaskNetwork& net, const tasks::Batch& batch) {
  if (batch.size() == 0) throw ContractError("compute_reward: empty batch");
  ad::Tape tape;
  return net.reward(tape, batch).item();
}

std::vector<double> normalize_rewards(std::span<const double> rewards, double temperature) {
  if (rewards.empty()) throw ContractError("normalize_rewards: no rewards");
  if (!(temperature > 0.0)) throw ContractError("normalize_rewards: temperature must be positive");
  for (double r : rewards) {
    if (!std::isfinite(r)) throw NumericError("normalize_rewards: non-finite reward");
  }
  const double top = *std::max_element(rewards.begin(), rewards.end());
  std::vector<double> out(rewards.size());
  double total = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    out[i] = std::exp((rewards[i] - top) / temperature);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double ascend(const TaskNetwork& net, const tasks::Batch& batch, ad::Adam& optimizer, const ad::ParamList& params) {
  const ad::ParamList all = net.params();
  ad::zero_grad(all);
  ad::Tape tape;
  const ad::Var r = net.reward(tape, batch);
  tape.backward(ad::scale(r, -1.0));
  optimizer.step(params);
  ad::zero_grad(all);
  return r.item();
}

NetworkEnvironment::NetworkEnvironment(MultiTaskModel& model, ad::Adam& optimizer, Selector trainable)
    : model_(model), optimizer_(optimizer), trainable_(std::move(trainable)) {}

void NetworkEnvironment::improve(std::size_t task, const std::vector<int>& actions) {
  if (batch_ == nullptr) throw ContractError("environment: no batch set");
  const TaskNetwork net = arch::assemble_searched(model_, task, actions);
  ascend(net, *batch_, optimizer_, trainable_ ? trainable_(net) : net.params());
}

double NetworkEnvironment::reward(std::size_t task, const std::vector<int>& actions) {
  if (batch_ == nullptr) throw ContractError("environment: no batch set");
  return compute_reward(arch::assemble_searched(model_, task, actions), *batch_);
}

void controller_update(ControllerPolicy& policy, ad::Adam& optimizer, std::size_t task,
                       std::span<const RewardRecord> records) {
  const ad::ParamList params = policy.params();
  ad::zero_grad(params);
  ad::Tape tape;
  std::vector<ad::Var> terms;
  for (const RewardRecord& r : records) {
    terms.push_back(ad::scale(policy.log_prob_of(tape, task, r.actions.actions), -r.normalized));
  }
  const ad::Var loss = terms.size() == 1 ? terms.front() : ad::sum(ad::concat(terms));
  tape.backward(loss);
  optimizer.step(params);
  ad::zero_grad(params);
}

std::vector<RewardRecord> train_batch_for_task(ControllerPolicy& policy, ad::Adam& phi_optimizer,
                                               RewardEnvironment& env, std::size_t task, const TrainConfig& config,
                                               Rng& rng) {
  std::vector<RewardRecord> records(config.samples_per_task);
  for (auto& r : records) r.actions = policy.sample(task, config.epsilon, rng);
  for (const auto& r : records) env.improve(task, r.actions.actions);

  // θ no longer changes, so equal architectures score equally.
  std::map<std::vector<int>, double> scored;
  std::vector<double> raw;
  for (auto& r : records) {
    auto it = scored.find(r.actions.actions);
    if (it == scored.end()) it = scored.emplace(r.actions.actions, env.reward(task, r.actions.actions)).first;
    r.raw = it->second;
    raw.push_back(r.raw);
  }
  const std::vector<double> norm = normalize_rewards(raw, config.temperature);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].normalized = norm[i];
  controller_update(policy, phi_optimizer, task, records);
  return records;
}

double evaluate(const TaskNetwork& net, const std::vector<tasks::Sample>& samples, std::size_t batch_size) {
  if (samples.empty()) throw ContractError("evaluate: empty split");
  if (batch_size == 0) throw ContractError("evaluate: batch size must be positive");
  std::size_t correct = 0, total = 0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const tasks::Batch batch = tasks::make_batch(net.type, samples, idx);
    ad::Tape tape;
    const arch::Predictions pred = net.predict(tape, batch);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      if (net.type == tasks::TaskType::Classification) {
        correct += pred.labels[b] == batch.labels[b];
        ++total;
      } else {
        for (std::size_t t = 0; t < batch.lengths[b]; ++t) correct += pred.tags[b][t] == batch.tags[b][t];
        total += batch.lengths[b];
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

bool EarlyStopper::update(double metric) {
  ++evaluations_;
  if (best_index_ == 0 || metric > best_) {
    best_ = metric;
    best_index_ = evaluations_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  if (metric < best_) return false;
  best_index_ = evaluations_;
  return true;
}

void EarlyStopper::restore(double best, std::size_t best_index, std::size_t evaluations, std::size_t since_best) {
  best_ = best;
  best_index_ = best_index;
  evaluations_ = evaluations;
  since_best_ = since_best;
}

Trainer::Trainer(MultiTaskModel& model, const tasks::TaskSuite& suite, TrainConfig config, ControllerPolicy* policy)
    : model_(model),
      suite_(suite),
      config_(config),
      policy_(policy),
      rng_(mix_seed(config.seed, 1)),
      theta_opt_(ad::AdamConfig{.learning_rate = config.theta_lr}),
      phi_opt_(ad::AdamConfig{.learning_rate = config.phi_lr}),
      stopper_(config.patience) {
  validate(config_);
  if (suite.tasks.size() != model.task_count()) throw ContractError("trainer: suite and model disagree on task count");
  const bool searched = model.scheme() == arch::SharingScheme::Searched;
  if (searched != (policy != nullptr)) {
    throw ContractError("trainer: a controller is required exactly for the searched scheme");
  }
  if (policy != nullptr && (policy->config().tasks != model.task_count() ||
                            policy->config().pool_size != model.pool().size() ||
                            policy->config().max_depth != config.max_depth)) {
    throw ContractError("trainer: controller shape does not match the model");
  }
  for (const auto& t : suite.tasks) {
    if (t.train.empty() || t.dev.empty()) throw ContractError("trainer: task " + t.name + " needs train and dev data");
  }
}

ad::ParamList Trainer::params() {
  ad::ParamList out = model_.params();
  if (policy_ != nullptr) {
    for (ad::Parameter* p : policy_->params()) out.push_back(p);
  }
  return out;
}

TaskNetwork Trainer::network(std::size_t task) const {
  if (policy_ != nullptr) return arch::assemble_searched(model_, task, policy_->greedy(task).actions);
  return arch::assemble_baseline(model_, task);
}

const EpochRecord& Trainer::run_epoch() {
  const std::size_t n = suite_.tasks.size();
  std::vector<tasks::BatchIterator> iters;
  std::size_t cycles = 0;
  for (const auto& t : suite_.tasks) {
    iters.emplace_back(t, config_.batch_size);
    iters.back().start_epoch(rng_);
    cycles = std::max(cycles, iters.back().batches_per_epoch());
  }

  std::vector<double> reward_sum(n, 0.0);
  std::vector<std::size_t> reward_count(n, 0);
  NetworkEnvironment env(model_, theta_opt_);
  for (std::size_t c = 0; c < cycles; ++c) {
    for (std::size_t k = 0; k < n; ++k) {
      auto batch = iters[k].next();
      if (!batch) {
        iters[k].start_epoch(rng_);
        batch = iters[k].next();
      }
      try {
        if (policy_ != nullptr) {
          env.set_batch(*batch);
          const auto records = train_batch_for_task(*policy_, phi_opt_, env, k, config_, rng_);
          for (const auto& r : records) reward_sum[k] += r.raw;
          reward_count[k] += records.size();
        } else {
          const TaskNetwork net = arch::assemble_baseline(model_, k);
          reward_sum[k] += ascend(net, *batch, theta_opt_, net.params());
          reward_count[k] += 1;
        }
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(history_.epochs.size() + 1) +
                           ", batch " + std::to_string(c) + ", task " + suite_.tasks[k].name + ")");
      }
    }
  }

  EpochRecord rec;
  rec.epoch = history_.epochs.size() + 1;
  for (std::size_t k = 0; k < n; ++k) {
    const TaskNetwork net = network(k);
    rec.architectures.push_back(net.actions);
    rec.dev_metric.push_back(evaluate(net, suite_.tasks[k].dev, config_.eval_batch_size));
    rec.reward_mean.push_back(reward_sum[k] / static_cast<double>(std::max<std::size_t>(1, reward_count[k])));
  }
  rec.dev_average = std::accumulate(rec.dev_metric.begin(), rec.dev_metric.end(), 0.0) / static_cast<double>(n);
  if (stopper_.update(rec.dev_average)) {
    best_ = snapshot(params());
    history_.best_epoch = rec.epoch;
  }
  history_.epochs.push_back(std::move(rec));
  return history_.epochs.back();
}

bool Trainer::finished() const {
  return stopper_.should_stop() || history_.epochs.size() >= config_.max_epochs;
}

const History& Trainer::train(const std::function<void(const EpochRecord&)>& on_epoch) {
  while (!finished()) {
    const EpochRecord& rec = run_epoch();
    if (on_epoch) on_epoch(rec);
  }
  restore_best();
  return history_;
}

void Trainer::restore_best() {
  if (!best_.empty()) restore(params(), best_);
}

FineTuneResult fine_tune_task(MultiTaskModel& model, const tasks::TaskSpec& task, const TaskNetwork& net,
                              const TrainConfig& config) {
  FineTuneResult result;
  result.copy = arch::copy_private(model, net.task);
  result.network = net.with_private(*result.copy);
  const ad::ParamList owned = result.network.private_params();

  ad::Adam optimizer(ad::AdamConfig{.learning_rate = config.theta_lr});
  Rng rng(mix_seed(config.seed, 1000 + net.task));
  tasks::BatchIterator iter(task, config.batch_size);
  EarlyStopper stopper(config.patience);

  result.dev_before = evaluate(result.network, task.dev, config.eval_batch_size);
  stopper.update(result.dev_before);
  std::vector<std::vector<double>> best = snapshot(owned);
  for (std::size_t e = 0; e < config.fine_tune_epochs && !stopper.should_stop(); ++e) {
    iter.start_epoch(rng);
    while (auto batch = iter.next()) ascend(result.network, *batch, optimizer, owned);
    ++result.epochs;
    if (stopper.update(evaluate(result.network, task.dev, config.eval_batch_size))) best = snapshot(owned);
  }
  restore(owned, best);
  result.dev_after = stopper.best();
  return result;
}

}  // namespace mtnas::train
