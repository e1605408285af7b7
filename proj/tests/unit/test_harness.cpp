#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "mtnas/errors.hpp"
#include "mtnas/harness/checkpoint.hpp"
#include "mtnas/harness/commands.hpp"
#include "mtnas/harness/config.hpp"

using namespace mtnas;
using namespace mtnas::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "mtnas_unit" / "harness" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    if (!line.empty() && line.back() == ',') row.emplace_back();
    rows.push_back(row);
  }
  return rows;
}

json tiny_doc(const fs::path& out, const std::string& scheme = "searched") {
  return json{{"seed", 7},
              {"output_dir", out.string()},
              {"scheme", scheme},
              {"suite", {{"kind", "cluster"}, {"samples_per_task", 60}, {"tasks_per_cluster", 2}, {"noise", 0.1}}},
              {"model", {{"pool_size", 2}, {"width", 6}, {"embed_dim", 6}}},
              {"controller", {{"task_embed_dim", 5}, {"hidden", 8}}},
              {"train", {{"max_epochs", 3}, {"batch_size", 16}, {"max_depth", 3}, {"fine_tune_epochs", 1}}}};
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config parsing, defaults and round trip") {
  const ExperimentConfig c = parse_config(tiny_doc("out"));
  CHECK(c.seed == 7);
  CHECK(c.scheme == arch::SharingScheme::Searched);
  CHECK(c.model.pool_size == 2);
  CHECK(c.train.max_epochs == 3);
  CHECK(c.train.temperature == doctest::Approx(1.0 / 30.0));
  CHECK(c.task_embed_dim == 5);
  const ExperimentConfig again = parse_config(to_json(c));
  CHECK(to_json(again) == to_json(c));
  const ExperimentConfig defaults = parse_config(json::object());
  CHECK(defaults.train.samples_per_task == 4);
  CHECK(defaults.train.epsilon == 0.2);
}

TEST_CASE("config errors name the offending key") {
  auto expect_error = [](json doc, const std::string& fragment) {
    try {
      parse_config(doc);
      FAIL("accepted an invalid config");
    } catch (const ConfigError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
    }
  };
  json d = tiny_doc("x");
  d["train"]["temprature"] = 0.1;
  expect_error(d, "train.temprature");
  d = tiny_doc("x");
  d["bogus"] = 1;
  expect_error(d, "bogus");
  d = tiny_doc("x");
  d["model"]["width"] = 7;
  expect_error(d, "model.width");
  d = tiny_doc("x");
  d["model"]["width"] = "wide";
  expect_error(d, "model.width");
  d = tiny_doc("x");
  d["scheme"] = "mixture";
  expect_error(d, "mixture");
  d = tiny_doc("x");
  d["suite"]["kind"] = "csv";
  expect_error(d, "suite.paths");
  d = tiny_doc("x");
  d["train"]["temperature"] = -1.0;
  expect_error(d, "temperature");
}

TEST_CASE("seed override reaches the derived data seed") {
  ExperimentConfig c = parse_config(tiny_doc("x"));
  override_seed(c, 99);
  CHECK(c.seed == 99);
  const auto a = build_suite(c);
  ExperimentConfig d = parse_config(tiny_doc("x"));
  const auto b = build_suite(d);
  bool differs = false;
  for (std::size_t i = 0; i < a.tasks[0].train.size() && !differs; ++i)
    differs = a.tasks[0].train[i].tokens != b.tasks[0].train[i].tokens;
  CHECK(differs);
}

TEST_CASE("invalid config leaves no partial outputs") {
  const fs::path out = scratch("invalid") / "run";
  json d = tiny_doc(out);
  d["train"]["epsilon"] = 3.0;
  CHECK_THROWS_AS(cmd_train(parse_config(d)), ConfigError);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("train writes metrics, checkpoints and results with the documented schema") {
  const fs::path out = scratch("train") / "run";
  const ExperimentConfig c = parse_config(tiny_doc(out));
  CHECK(cmd_train(c) == out);
  for (const char* f : {"config.json", "metrics.csv", "last.ckpt", "best.ckpt", "results.csv"})
    CHECK_MESSAGE(fs::exists(out / f), f);
  const auto metrics = read_csv(out / "metrics.csv");
  REQUIRE(!metrics.empty());
  CHECK(metrics[0] == std::vector<std::string>{"epoch", "task", "split", "metric", "reward_mean"});
  const std::size_t tasks = 4, splits = 1;
  CHECK(metrics.size() == 1 + c.train.max_epochs * tasks * splits);
  for (std::size_t r = 1; r < metrics.size(); ++r) {
    CHECK(metrics[r].size() == 5);
    const double m = std::stod(metrics[r][3]);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
    CHECK(std::stod(metrics[r][4]) <= 0.0);
  }
  const auto results = read_csv(out / "results.csv");
  CHECK(results.size() == 1 + tasks);
  CHECK(results[0].front() == "task_id");
  for (std::size_t r = 1; r < results.size(); ++r) CHECK(std::stod(results[r][4]) >= std::stod(results[r][3]) - 1e-9);
  CHECK(parse_config(json::parse(slurp(out / "config.json"))).seed == 7);
  std::string magic = slurp(out / "best.ckpt").substr(0, 8);
  CHECK(magic == "MTNASCKP");
}

TEST_CASE("fixed-seed reruns are byte-identical") {
  const fs::path a = scratch("det_a") / "run";
  const fs::path b = scratch("det_b") / "run";
  json da = tiny_doc(a), db = tiny_doc(b);
  cmd_train(parse_config(da));
  cmd_train(parse_config(db));
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));
  // Checkpoint headers embed output_dir, so the payload is compared after it.
  auto payload = [](const std::string& s) {
    const std::size_t start = 8 + 4 + 8;
    std::uint64_t len = 0;
    for (int i = 7; i >= 0; --i) len = (len << 8) | static_cast<unsigned char>(s[12 + i]);
    return s.substr(start + len);
  };
  const std::string ca = slurp(a / "best.ckpt"), cb = slurp(b / "best.ckpt");
  CHECK(payload(ca) == payload(cb));
  CHECK(payload(ca).size() % 8 == 0);
}

TEST_CASE("checkpoint round trip restores every parameter and the history") {
  const fs::path dir = scratch("roundtrip");
  ExperimentConfig c = parse_config(tiny_doc(dir / "run"));
  c.train.max_epochs = 2;
  Experiment ex(c);
  ex.trainer().train();
  save_checkpoint(dir / "x.ckpt", ex);
  auto back = load_checkpoint(dir / "x.ckpt");
  const auto p1 = ex.trainer().params();
  const auto p2 = back->trainer().params();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->value == p2[i]->value);
  CHECK(back->trainer().history().epochs.size() == 2);
  CHECK(back->trainer().history().best_epoch == ex.trainer().history().best_epoch);
  CHECK(to_json(back->config()) == to_json(ex.config()));
  for (std::size_t k = 0; k < 4; ++k) CHECK(back->trainer().network(k).actions == ex.trainer().network(k).actions);
}

TEST_CASE("resuming an interrupted run matches the uninterrupted run") {
  const fs::path dir = scratch("resume");
  const ExperimentConfig full_cfg = parse_config(tiny_doc(dir / "full"));
  cmd_train(full_cfg);

  struct Interrupted {};
  ExperimentConfig part_cfg = parse_config(tiny_doc(dir / "part"));
  {
    Experiment ex(part_cfg);
    fs::create_directories(part_cfg.output_dir);
    CHECK_THROWS_AS(ex.trainer().train([&](const train::EpochRecord& e) {
      save_checkpoint(part_cfg.output_dir / "last.ckpt", ex);
      if (e.epoch == 1) throw Interrupted{};
    }),
                    Interrupted);
  }
  TrainOptions opts;
  opts.resume = part_cfg.output_dir / "last.ckpt";
  cmd_train(checkpoint_config(*opts.resume), opts);
  CHECK(slurp(dir / "full" / "metrics.csv") == slurp(dir / "part" / "metrics.csv"));
  CHECK(slurp(dir / "full" / "results.csv") == slurp(dir / "part" / "results.csv"));
  auto full = load_checkpoint(dir / "full" / "last.ckpt");
  auto part = load_checkpoint(dir / "part" / "last.ckpt");
  const auto p1 = full->trainer().params();
  const auto p2 = part->trainer().params();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->value == p2[i]->value);
}

TEST_CASE("malformed checkpoints are rejected") {
  const fs::path dir = scratch("bad");
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), ContractError);
  write_atomic(dir / "foreign.ckpt", "NOTACKPT and some bytes");
  CHECK_THROWS_AS(load_checkpoint(dir / "foreign.ckpt"), ParseError);
  ExperimentConfig c = parse_config(tiny_doc(dir / "run"));
  c.train.max_epochs = 1;
  Experiment ex(c);
  save_checkpoint(dir / "good.ckpt", ex);
  const std::string good = slurp(dir / "good.ckpt");
  write_atomic(dir / "short.ckpt", good.substr(0, good.size() - 5));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), ParseError);
  std::string version = good;
  version[8] = 9;
  write_atomic(dir / "version.ckpt", version);
  CHECK_THROWS_AS(load_checkpoint(dir / "version.ckpt"), ParseError);
  CHECK_NOTHROW(load_checkpoint(dir / "good.ckpt"));
}

TEST_CASE("export commands: embeddings, selection coordinates and action probabilities") {
  const fs::path dir = scratch("export");
  ExperimentConfig c = parse_config(tiny_doc(dir / "run"));
  c.train.max_epochs = 1;
  Experiment ex(c);
  save_checkpoint(dir / "untrained.ckpt", ex);

  const auto emb = read_csv(cmd_export_embeddings(dir / "untrained.ckpt", dir));
  REQUIRE(emb.size() == 5);
  CHECK(emb[0].size() == 3 + c.task_embed_dim);
  CHECK(emb[0][3] == "e_1");
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(emb[k + 1][0] == std::to_string(k));
    CHECK(emb[k + 1][2] == std::to_string(ex.suite().tasks[k].cluster_id));
    for (std::size_t d = 0; d < c.task_embed_dim; ++d)
      CHECK(std::stod(emb[k + 1][3 + d]) == ex.policy()->task_embeddings.value[k * c.task_embed_dim + d]);
  }

  const auto coords = read_csv(cmd_export_selection_coords(dir / "untrained.ckpt", dir));
  REQUIRE(coords.size() == 5);
  CHECK(coords[0].size() == 1 + c.train.max_depth);
  for (std::size_t k = 1; k < coords.size(); ++k) {
    bool stopped = false;
    for (std::size_t d = 1; d < coords[k].size(); ++d) {
      const int v = std::stoi(coords[k][d]);
      CHECK(v >= -1);
      CHECK(v < static_cast<int>(c.model.pool_size));
      if (stopped) CHECK(v == -1);
      stopped = stopped || v == -1;
    }
  }

  cmd_search_report(dir / "untrained.ckpt", dir);
  const auto probs = read_csv(dir / "action_probs.csv");
  CHECK(probs[0] == std::vector<std::string>{"task_id", "step", "m0", "m1", "stop"});
  for (std::size_t r = 1; r < probs.size(); ++r) {
    double total = 0.0;
    for (std::size_t j = 2; j < probs[r].size(); ++j) total += std::stod(probs[r][j]);
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
  const json report = json::parse(slurp(dir / "search_report.json"));
  CHECK(report.at("stop_action") == 2);
  CHECK(report.at("tasks").size() == 4);
  const auto prefix = read_csv(dir / "shared_prefix.csv");
  CHECK(prefix.size() == 5);

  // A zero-parameter controller is uniform over the L + 1 choices.
  ex.policy()->zero_parameters();
  save_checkpoint(dir / "zero.ckpt", ex);
  cmd_search_report(dir / "zero.ckpt", dir);
  const auto uniform = read_csv(dir / "action_probs.csv");
  for (std::size_t r = 1; r < uniform.size(); ++r)
    for (std::size_t j = 2; j < uniform[r].size(); ++j) CHECK(std::stod(uniform[r][j]) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("controller exports require a searched checkpoint") {
  const fs::path dir = scratch("nocontroller");
  ExperimentConfig c = parse_config(tiny_doc(dir / "run", "fs"));
  Experiment ex(c);
  CHECK(ex.policy() == nullptr);
  save_checkpoint(dir / "fs.ckpt", ex);
  CHECK_THROWS_AS(cmd_export_embeddings(dir / "fs.ckpt", dir), ContractError);
  CHECK_THROWS_AS(cmd_search_report(dir / "fs.ckpt", dir), ContractError);
  CHECK_THROWS_AS(cmd_export_selection_coords(dir / "fs.ckpt", dir), ContractError);
  CHECK_FALSE(fs::exists(dir / "embeddings.csv"));
  CHECK_NOTHROW(cmd_eval(dir / "fs.ckpt", "dev", dir));
  CHECK(read_csv(dir / "eval_dev.csv").size() == 5);
  CHECK_THROWS_AS(cmd_eval(dir / "fs.ckpt", "train", dir), ConfigError);
}

TEST_CASE("single-task baseline on the 4-task cluster suite stays below the noise ceiling") {
  const fs::path out = scratch("single") / "run";
  json d{{"seed", 1},
         {"output_dir", out.string()},
         {"scheme", "single"},
         {"suite", {{"kind", "cluster"}, {"tasks_per_cluster", 2}, {"noise", 0.1}}},
         {"train", {{"max_epochs", 15}, {"fine_tune_epochs", 0}}}};
  cmd_train(parse_config(d));
  const auto results = read_csv(out / "results.csv");
  REQUIRE(results.size() == 5);
  double mean = 0.0;
  for (std::size_t r = 1; r < results.size(); ++r) mean += std::stod(results[r][5]) / 4.0;
  CHECK(mean >= 0.75);
  CHECK(mean <= 0.92);
}

TEST_CASE("shared prefix matrix") {
  const auto m = shared_prefix_matrix({{0, 1, 2}, {0, 1}, {}, {1}});
  CHECK(m[0][0] == 3);
  CHECK(m[0][1] == 2);
  CHECK(m[1][0] == 2);
  CHECK(m[0][2] == 0);
  CHECK(m[0][3] == 0);
  CHECK(m[2][2] == 0);
}

}  // TEST_SUITE
