// Command-line front end for the experiment harness.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mtnas/errors.hpp"
#include "mtnas/harness/commands.hpp"

namespace fs = std::filesystem;
using namespace mtnas::harness;

int main(int argc, char** argv) {
  CLI::App app{"Multi-task architecture search: train, evaluate and inspect runs"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out, split = "test";
  std::optional<std::uint64_t> seed;
  std::string resume;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "Train a configured experiment");
  train->add_option("--config", config_path, "Experiment config (JSON)");
  train->add_option("--seed", seed, "Override the experiment seed");
  train->add_option("--out", out, "Override the output directory");
  train->add_option("--resume", resume, "Continue from a checkpoint (uses its stored config)");
  train->add_flag("--quiet", quiet, "Suppress per-epoch progress");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", split, "dev or test");
  eval->add_option("--out", out, "Output directory (default: the checkpoint's directory)");

  auto* report = app.add_subcommand("search-report", "Greedy architectures and step probabilities per task");
  report->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  report->add_option("--out", out, "Output directory (default: the checkpoint's directory)");

  auto* emb = app.add_subcommand("export-embeddings", "Write the learned task embeddings as CSV");
  emb->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  emb->add_option("--out", out, "Output directory (default: the checkpoint's directory)");

  auto* coords = app.add_subcommand("export-selection-coords", "Write greedy module sequences as coordinates");
  coords->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  coords->add_option("--out", out, "Output directory (default: the checkpoint's directory)");

  CLI11_PARSE(app, argc, argv);

  auto out_dir = [&]() -> fs::path {
    if (!out.empty()) return out;
    const fs::path parent = fs::path(checkpoint).parent_path();
    return parent.empty() ? fs::path(".") : parent;
  };

  try {
    if (train->parsed()) {
      if (config_path.empty() == resume.empty()) {
        std::cerr << "train: pass exactly one of --config or --resume\n";
        return 2;
      }
      // Everything is validated here, before any output exists.
      ExperimentConfig config = resume.empty() ? load_config(config_path) : checkpoint_config(resume);
      if (seed) {
        if (!resume.empty()) {
          std::cerr << "train: --seed cannot change a resumed run\n";
          return 2;
        }
        override_seed(config, *seed);
      }
      if (!out.empty()) config.output_dir = out;
      TrainOptions options;
      if (!resume.empty()) options.resume = fs::path(resume);
      if (!quiet) options.log = &std::cout;
      std::cout << cmd_train(config, options).string() << '\n';
    } else if (eval->parsed()) {
      std::cout << cmd_eval(checkpoint, split, out_dir()).string() << '\n';
    } else if (report->parsed()) {
      std::cout << cmd_search_report(checkpoint, out_dir()).string() << '\n';
    } else if (emb->parsed()) {
      std::cout << cmd_export_embeddings(checkpoint, out_dir()).string() << '\n';
    } else if (coords->parsed()) {
      std::cout << cmd_export_selection_coords(checkpoint, out_dir()).string() << '\n';
    }
  } catch (const mtnas::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 2;
  } catch (const mtnas::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
