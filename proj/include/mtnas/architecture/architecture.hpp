#pragma once

// Module pool, per-task parts, and assembly of task networks.
//
// A MultiTaskModel owns every parameter of one experiment: the shared pool,
// word embeddings, and each task's private parts. Task networks are cheap
// views holding pointers into the model, so networks of different tasks
// alias the same pool storage. The model is pinned in memory (not copyable
// or movable) because optimizer state is keyed by parameter address.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtnas/layers/crf.hpp"
#include "mtnas/layers/layers.hpp"
#include "mtnas/rng.hpp"
#include "mtnas/tasks/batch.hpp"
#include "mtnas/tasks/task.hpp"

namespace mtnas::arch {

using ad::ParamList;
using ad::Tape;
using ad::Var;
using layers::AvgPoolLinearHead;
using layers::BiLstmModule;
using layers::CrfHead;
using layers::CrossStitchUnit;
using layers::EmbeddingTable;
using layers::Linear;
using layers::SeqFeatures;

enum class SharingScheme { Searched, FullyShared, StackSharePrivate, ParallelSharePrivate, CrossStitch, SingleTask };

std::string to_string(SharingScheme scheme);
/// Accepts the names produced by to_string; throws ConfigError otherwise.
SharingScheme parse_scheme(std::string_view name);

class ModulePool {
 public:
  ModulePool() = default;
  ModulePool(std::size_t count, std::size_t width);

  std::size_t size() const { return modules_.size(); }
  std::size_t width() const { return width_; }
  /// Throws BoundsError for an index outside [0, size()).
  BiLstmModule& at(std::size_t i);
  ParamList params();

 private:
  std::vector<BiLstmModule> modules_;
  std::size_t width_ = 0;
};

/// Module indices chosen by the controller (Stop implied at the end) and the
/// policy's log-probability of each realized step, Stop included unless it
/// was forced by the depth cap.
struct ActionSequence {
  std::vector<int> actions;
  std::vector<double> log_probs;

  bool empty() const { return actions.empty(); }
  std::size_t size() const { return actions.size(); }
};

/// "[0,2,2]" style rendering.
std::string to_string(const std::vector<int>& actions);

struct ModelConfig {
  std::size_t pool_size = 4;
  std::size_t width = 32;
  std::size_t embed_dim = 32;
  std::size_t cross_stitch_layers = 2;
};

/// Everything a task owns apart from its (possibly group-shared) embedding.
struct TaskParts {
  tasks::TaskType type = tasks::TaskType::Classification;
  std::size_t embedding_index = 0;
  std::optional<Linear> projection;
  std::optional<BiLstmModule> private_module;
  std::optional<AvgPoolLinearHead> classifier;
  std::optional<CrfHead> tagger;
  std::vector<BiLstmModule> column;  // cross-stitch layers

  ParamList params();
  ParamList head_params();
};

class MultiTaskModel {
 public:
  MultiTaskModel(const tasks::TaskSuite& suite, SharingScheme scheme, ModelConfig config, Rng& rng);
  MultiTaskModel(const MultiTaskModel&) = delete;
  MultiTaskModel& operator=(const MultiTaskModel&) = delete;

  SharingScheme scheme() const { return scheme_; }
  const ModelConfig& config() const { return config_; }
  std::size_t task_count() const { return parts_.size(); }

  ModulePool& pool() { return pool_; }
  TaskParts& parts(std::size_t task);
  EmbeddingTable& embedding(std::size_t task);
  std::vector<CrossStitchUnit>& stitches() { return stitches_; }
  /// Width the head of every task was built for.
  std::size_t head_width() const;

  /// Every parameter, in a stable order.
  ParamList params();

 private:
  SharingScheme scheme_;
  ModelConfig config_;
  ModulePool pool_;
  std::vector<EmbeddingTable> embeddings_;
  std::vector<TaskParts> parts_;
  std::vector<CrossStitchUnit> stitches_;
};

/// Owned copy of one task's private partition, trained in isolation by
/// per-task fine-tuning.
struct PrivateCopy {
  EmbeddingTable embedding;
  TaskParts parts;
};

enum class Wiring {
  PrivateOnly,  // embed → P → head
  SharedOnly,   // embed → shared chain → head
  Stacked,      // embed → shared chain → P → head
  Parallel,     // embed → (shared chain ⊕ P) → head
  CrossStitch,  // per-task columns mixed after every layer
};

struct Predictions {
  std::vector<int> labels;             // classification
  std::vector<std::vector<int>> tags;  // tagging
};

/// A task's computation graph over model-owned (or copied) parameters.
struct TaskNetwork {
  std::size_t task = 0;
  SharingScheme scheme = SharingScheme::Searched;
  Wiring wiring = Wiring::PrivateOnly;
  tasks::TaskType type = tasks::TaskType::Classification;
  std::size_t width = 0;  // module width d
  std::vector<int> actions;

  EmbeddingTable* embedding = nullptr;
  Linear* projection = nullptr;
  std::vector<BiLstmModule*> shared;
  BiLstmModule* private_module = nullptr;
  AvgPoolLinearHead* classifier = nullptr;
  CrfHead* tagger = nullptr;
  std::vector<std::vector<BiLstmModule*>> columns;  // [task][layer]
  std::vector<Linear*> column_projections;          // [task], null when absent
  std::vector<CrossStitchUnit*> stitches;

  /// Features entering the head.
  SeqFeatures encode(Tape& tape, const tasks::Batch& batch) const;
  std::size_t head_input_width() const;

  /// [B] per-example log-likelihoods: log p(gold class), or the CRF sequence
  /// log-likelihood divided by the sequence length.
  Var log_likelihoods(Tape& tape, const tasks::Batch& batch) const;
  /// Mean of log_likelihoods, shape [1]. Throws ContractError on an empty batch.
  Var reward(Tape& tape, const tasks::Batch& batch) const;
  Predictions predict(Tape& tape, const tasks::Batch& batch) const;

  ParamList shared_params() const;
  ParamList private_params() const;
  ParamList params() const;

  /// Same topology with the private partition redirected to `copy`.
  TaskNetwork with_private(PrivateCopy& copy) const;
};

/// Throws BoundsError when an action is outside the pool.
TaskNetwork assemble_searched(MultiTaskModel& model, std::size_t task, const std::vector<int>& actions);
/// Throws ContractError for the Searched scheme.
TaskNetwork assemble_baseline(MultiTaskModel& model, std::size_t task);
std::vector<TaskNetwork> assemble_baseline(MultiTaskModel& model);

struct Partition {
  ParamList shared;
  ParamList owned;  // private
};
Partition parameter_partition(const TaskNetwork& net);

std::unique_ptr<PrivateCopy> copy_private(MultiTaskModel& model, std::size_t task);

}  // namespace mtnas::arch
