#pragma once

// Experiment configuration: one JSON document with nested sections. Unknown
// keys anywhere are rejected, and the whole document is validated before any
// output is created.
//
// {
//   "seed": 1,
//   "output_dir": "runs/example",
//   "scheme": "searched",            // searched | fs | ssp | psp | cs | single
//   "suite": {"kind": "cluster", ...},  // cluster | hierarchy | csv | conll
//   "model": {"pool_size": 4, "width": 32, "embed_dim": 32, ...},
//   "controller": {"task_embed_dim": 15, "hidden": 50},
//   "train": {"samples_per_task": 4, "temperature": 0.0333, ...}
// }

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtnas/architecture/architecture.hpp"
#include "mtnas/controller/controller.hpp"
#include "mtnas/tasks/synthetic.hpp"
#include "mtnas/trainer/trainer.hpp"

namespace mtnas::harness {

enum class SuiteKind { Cluster, Hierarchy, Csv, Conll };

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "run";
  arch::SharingScheme scheme = arch::SharingScheme::Searched;

  SuiteKind suite_kind = SuiteKind::Cluster;
  tasks::SyntheticSpec synthetic;             // seed defaults to the experiment seed
  bool synthetic_seed_set = false;
  std::vector<std::filesystem::path> paths;   // csv / conll files, one task each

  arch::ModelConfig model;
  std::filesystem::path embedding_file;       // optional word vectors
  std::size_t task_embed_dim = 15;
  std::size_t controller_hidden = 50;
  train::TrainConfig train;
};

/// Throws ConfigError with the offending key path.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);
/// Applies a seed override to the experiment and to everything derived from it.
void override_seed(ExperimentConfig& config, std::uint64_t seed);

/// The tasks, model, controller and trainer of one run.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  const tasks::TaskSuite& suite() const { return suite_; }
  arch::MultiTaskModel& model() { return *model_; }
  /// Null for baseline schemes.
  ctrl::ControllerPolicy* policy() { return policy_.get(); }
  train::Trainer& trainer() { return *trainer_; }

 private:
  ExperimentConfig config_;
  tasks::TaskSuite suite_;
  std::unique_ptr<arch::MultiTaskModel> model_;
  std::unique_ptr<ctrl::ControllerPolicy> policy_;
  std::unique_ptr<train::Trainer> trainer_;
};

tasks::TaskSuite build_suite(const ExperimentConfig& config);

}  // namespace mtnas::harness
