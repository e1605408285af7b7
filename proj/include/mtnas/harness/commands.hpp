#pragma once

// Subcommands of the experiment runner. Each writes its files atomically into
// an output directory and returns what it wrote.

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtnas/harness/checkpoint.hpp"
#include "mtnas/harness/config.hpp"

namespace mtnas::harness {

struct TrainOptions {
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
  std::ostream* log = nullptr;                  // per-epoch progress lines
};

/// Trains, checkpointing after every epoch (last.ckpt), then restores the
/// best epoch (best.ckpt), fine-tunes every task and writes results.csv.
/// Files: config.json, metrics.csv, last.ckpt, best.ckpt, results.csv.
std::filesystem::path cmd_train(const ExperimentConfig& config, const TrainOptions& options = {});

/// Per-task metric on one split (dev or test), written to eval_<split>.csv.
std::filesystem::path cmd_eval(const std::filesystem::path& checkpoint, const std::string& split,
                               const std::filesystem::path& out_dir);

/// search_report.json, action_probs.csv and shared_prefix.csv.
std::filesystem::path cmd_search_report(const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir);

/// embeddings.csv: task_id,name,cluster_id,e_1..e_S
std::filesystem::path cmd_export_embeddings(const std::filesystem::path& checkpoint,
                                            const std::filesystem::path& out_dir);

/// selection_coords.csv: task_id,step1..step{max_depth}, -1 after Stop.
std::filesystem::path cmd_export_selection_coords(const std::filesystem::path& checkpoint,
                                                  const std::filesystem::path& out_dir);

/// Rendering helpers shared by the commands and the tests.
std::string metrics_csv(const tasks::TaskSuite& suite, const train::History& history);
nlohmann::json search_report(Experiment& experiment);
std::vector<std::vector<std::size_t>> shared_prefix_matrix(const std::vector<std::vector<int>>& paths);

}  // namespace mtnas::harness
