#include "mtnas/harness/commands.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "mtnas/errors.hpp"

namespace mtnas::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

ctrl::ControllerPolicy& require_policy(Experiment& ex) {
  if (ex.policy() == nullptr) {
    throw ContractError("checkpoint has no controller (scheme " + arch::to_string(ex.config().scheme) + ")");
  }
  return *ex.policy();
}

std::vector<std::vector<int>> greedy_paths(Experiment& ex) {
  std::vector<std::vector<int>> out;
  for (std::size_t k = 0; k < ex.suite().tasks.size(); ++k) out.push_back(ex.trainer().network(k).actions);
  return out;
}

}  // namespace

std::string metrics_csv(const tasks::TaskSuite& suite, const train::History& history) {
  std::ostringstream os;
  os << "epoch,task,split,metric,reward_mean\n";
  for (const auto& e : history.epochs) {
    for (std::size_t k = 0; k < suite.tasks.size(); ++k) {
      os << e.epoch << ',' << csv_field(suite.tasks[k].name) << ",dev," << fmt(e.dev_metric[k]) << ','
         << fmt(e.reward_mean[k]) << '\n';
    }
  }
  return os.str();
}

fs::path cmd_train(const ExperimentConfig& config, const TrainOptions& options) {
  std::unique_ptr<Experiment> ex;
  if (options.resume) {
    ex = load_checkpoint(*options.resume);
  } else {
    ex = std::make_unique<Experiment>(config);
  }
  const fs::path out = config.output_dir;
  fs::create_directories(out);
  write_atomic(out / "config.json", to_json(ex->config()).dump(2) + "\n");

  train::Trainer& tr = ex->trainer();
  const auto& suite = ex->suite();
  tr.train([&](const train::EpochRecord& e) {
    write_atomic(out / "metrics.csv", metrics_csv(suite, tr.history()));
    save_checkpoint(out / "last.ckpt", *ex);
    if (options.log != nullptr) {
      *options.log << "epoch " << e.epoch << " dev " << std::fixed << std::setprecision(4) << e.dev_average;
      for (std::size_t k = 0; k < e.architectures.size() && ex->policy() != nullptr; ++k) {
        *options.log << ' ' << suite.tasks[k].name << '=' << arch::to_string(e.architectures[k]);
      }
      *options.log << std::defaultfloat << '\n';
    }
  });
  write_atomic(out / "metrics.csv", metrics_csv(suite, tr.history()));
  save_checkpoint(out / "best.ckpt", *ex);

  std::ostringstream rs;
  rs << "task_id,name,architecture,dev_before,dev_after,test\n";
  for (std::size_t k = 0; k < suite.tasks.size(); ++k) {
    const auto& task = suite.tasks[k];
    const arch::TaskNetwork net = tr.network(k);
    const train::FineTuneResult ft = train::fine_tune_task(ex->model(), task, net, ex->config().train);
    const double test = train::evaluate(ft.network, task.test, ex->config().train.eval_batch_size);
    rs << k << ',' << csv_field(task.name) << ',' << csv_field(arch::to_string(net.actions)) << ','
       << fmt(ft.dev_before) << ',' << fmt(ft.dev_after) << ',' << fmt(test) << '\n';
    if (options.log != nullptr) *options.log << "fine-tuned " << task.name << " test " << test << '\n';
  }
  write_atomic(out / "results.csv", rs.str());
  return out;
}

fs::path cmd_eval(const fs::path& checkpoint, const std::string& split, const fs::path& out_dir) {
  tasks::Split s;
  if (split == "dev") {
    s = tasks::Split::Dev;
  } else if (split == "test") {
    s = tasks::Split::Test;
  } else {
    throw ConfigError("split must be dev or test, got '" + split + "'");
  }
  auto ex = load_checkpoint(checkpoint);
  std::ostringstream os;
  os << "task_id,name,split,metric\n";
  for (std::size_t k = 0; k < ex->suite().tasks.size(); ++k) {
    const auto& task = ex->suite().tasks[k];
    const double m = train::evaluate(ex->trainer().network(k), task.split(s), ex->config().train.eval_batch_size);
    os << k << ',' << csv_field(task.name) << ',' << split << ',' << fmt(m) << '\n';
  }
  const fs::path path = out_dir / ("eval_" + split + ".csv");
  write_atomic(path, os.str());
  return path;
}

std::vector<std::vector<std::size_t>> shared_prefix_matrix(const std::vector<std::vector<int>>& paths) {
  const std::size_t n = paths.size();
  std::vector<std::vector<std::size_t>> m(n, std::vector<std::size_t>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto& a = paths[i];
      const auto& b = paths[j];
      std::size_t len = 0;
      while (len < a.size() && len < b.size() && a[len] == b[len]) ++len;
      m[i][j] = len;
    }
  }
  return m;
}

json search_report(Experiment& ex) {
  ctrl::ControllerPolicy& policy = require_policy(ex);
  const auto paths = greedy_paths(ex);
  json tasks = json::array();
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const auto& t = ex.suite().tasks[k];
    tasks.push_back({{"task_id", k},
                     {"name", t.name},
                     {"cluster_id", t.cluster_id},
                     {"level", t.level},
                     {"actions", paths[k]},
                     {"step_probabilities", policy.trace(k)}});
  }
  return {{"pool_size", policy.config().pool_size},
          {"stop_action", policy.stop_action()},
          {"max_depth", policy.config().max_depth},
          {"tasks", tasks},
          {"shared_prefix", shared_prefix_matrix(paths)}};
}

fs::path cmd_search_report(const fs::path& checkpoint, const fs::path& out_dir) {
  auto ex = load_checkpoint(checkpoint);
  const json report = search_report(*ex);
  write_atomic(out_dir / "search_report.json", report.dump(2) + "\n");

  const std::size_t choices = report.at("pool_size").get<std::size_t>() + 1;
  std::ostringstream probs;
  probs << "task_id,step";
  for (std::size_t c = 0; c + 1 < choices; ++c) probs << ",m" << c;
  probs << ",stop\n";
  for (const auto& t : report.at("tasks")) {
    const auto trace = t.at("step_probabilities").get<std::vector<std::vector<double>>>();
    for (std::size_t s = 0; s < trace.size(); ++s) {
      probs << t.at("task_id").get<std::size_t>() << ',' << s + 1;
      for (double p : trace[s]) probs << ',' << fmt(p);
      probs << '\n';
    }
  }
  write_atomic(out_dir / "action_probs.csv", probs.str());

  const auto matrix = report.at("shared_prefix").get<std::vector<std::vector<std::size_t>>>();
  std::ostringstream pm;
  pm << "task";
  for (std::size_t j = 0; j < matrix.size(); ++j) pm << ',' << csv_field(ex->suite().tasks[j].name);
  pm << '\n';
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    pm << csv_field(ex->suite().tasks[i].name);
    for (std::size_t v : matrix[i]) pm << ',' << v;
    pm << '\n';
  }
  write_atomic(out_dir / "shared_prefix.csv", pm.str());
  return out_dir / "search_report.json";
}

fs::path cmd_export_embeddings(const fs::path& checkpoint, const fs::path& out_dir) {
  auto ex = load_checkpoint(checkpoint);
  ctrl::ControllerPolicy& policy = require_policy(*ex);
  const std::size_t s = policy.config().task_embed_dim;
  std::ostringstream os;
  os << "task_id,name,cluster_id";
  for (std::size_t d = 1; d <= s; ++d) os << ",e_" << d;
  os << '\n';
  for (std::size_t k = 0; k < ex->suite().tasks.size(); ++k) {
    const auto& t = ex->suite().tasks[k];
    os << k << ',' << csv_field(t.name) << ',' << t.cluster_id;
    for (std::size_t d = 0; d < s; ++d) os << ',' << fmt(policy.task_embeddings.value[k * s + d]);
    os << '\n';
  }
  const fs::path path = out_dir / "embeddings.csv";
  write_atomic(path, os.str());
  return path;
}

fs::path cmd_export_selection_coords(const fs::path& checkpoint, const fs::path& out_dir) {
  auto ex = load_checkpoint(checkpoint);
  ctrl::ControllerPolicy& policy = require_policy(*ex);
  const std::size_t depth = policy.config().max_depth;
  std::ostringstream os;
  os << "task_id";
  for (std::size_t d = 1; d <= depth; ++d) os << ",step" << d;
  os << '\n';
  const auto paths = greedy_paths(*ex);
  for (std::size_t k = 0; k < paths.size(); ++k) {
    os << k;
    for (std::size_t d = 0; d < depth; ++d) os << ',' << (d < paths[k].size() ? paths[k][d] : -1);
    os << '\n';
  }
  const fs::path path = out_dir / "selection_coords.csv";
  write_atomic(path, os.str());
  return path;
}

}  // namespace mtnas::harness
