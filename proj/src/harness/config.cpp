#include "mtnas/harness/config.hpp"

#include <fstream>
#include <set>

#include "mtnas/errors.hpp"
#include "mtnas/tasks/loaders.hpp"

namespace mtnas::harness {
namespace {

using nlohmann::json;

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        // Programmatic documents store small integers as signed.
        const bool ok = it->is_number_unsigned() || (it->is_number_integer() && it->get<std::int64_t>() >= 0);
        if (!ok) throw ConfigError(where(key) + " must be a non-negative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError(where(key) + " must be a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError(where(key) + " must be true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError(where(key) + " must be a string");
      }
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  bool has(const char* key) const { return doc_.contains(key); }

  Section child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    auto it = doc_.find(key);
    return Section(it == doc_.end() ? empty : *it, path_.empty() ? key : path_ + "." + key);
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + where(it.key().c_str()));
    }
  }

  std::string where(const char* key = nullptr) const {
    std::string p = path_;
    if (key != nullptr) p = p.empty() ? key : p + "." + key;
    return "'" + (p.empty() ? std::string("<root>") : p) + "'";
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

SuiteKind parse_kind(const std::string& s) {
  if (s == "cluster") return SuiteKind::Cluster;
  if (s == "hierarchy") return SuiteKind::Hierarchy;
  if (s == "csv") return SuiteKind::Csv;
  if (s == "conll") return SuiteKind::Conll;
  throw ConfigError("suite.kind '" + s + "' (expected cluster, hierarchy, csv or conll)");
}

std::string kind_name(SuiteKind k) {
  switch (k) {
    case SuiteKind::Cluster:
      return "cluster";
    case SuiteKind::Hierarchy:
      return "hierarchy";
    case SuiteKind::Csv:
      return "csv";
    case SuiteKind::Conll:
      return "conll";
  }
  return "cluster";
}

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  Section root(doc, "");
  root.read("seed", c.seed);
  std::string out = c.output_dir.string();
  root.read("output_dir", out);
  c.output_dir = out;
  std::string scheme = arch::to_string(c.scheme);
  root.read("scheme", scheme);
  c.scheme = arch::parse_scheme(scheme);

  {
    Section s = root.child("suite");
    std::string kind = "cluster";
    s.read("kind", kind);
    c.suite_kind = parse_kind(kind);
    tasks::SyntheticSpec& sp = c.synthetic;
    sp.kind = c.suite_kind == SuiteKind::Hierarchy ? tasks::GeneratorKind::Hierarchy : tasks::GeneratorKind::Cluster;
    s.read("clusters", sp.clusters);
    s.read("tasks_per_cluster", sp.tasks_per_cluster);
    s.read("vocab_size", sp.vocab_size);
    s.read("lexicon_size", sp.lexicon_size);
    s.read("shared_lexicon", sp.shared_lexicon);
    s.read("max_sentiment_words", sp.max_sentiment_words);
    s.read("min_length", sp.min_length);
    s.read("max_length", sp.max_length);
    s.read("noise", sp.noise);
    s.read("samples_per_task", sp.samples_per_task);
    s.read("max_train_samples", sp.max_train_samples);
    s.read("levels", sp.levels);
    c.synthetic_seed_set = s.has("seed");
    s.read("seed", sp.seed);
    if (!c.synthetic_seed_set) sp.seed = c.seed;
    if (const json* p = s.raw("paths")) {
      if (!p->is_array()) throw ConfigError("'suite.paths' must be an array of strings");
      for (const auto& v : *p) {
        if (!v.is_string()) throw ConfigError("'suite.paths' must be an array of strings");
        c.paths.emplace_back(v.get<std::string>());
      }
    }
    s.finish();
  }
  {
    Section m = root.child("model");
    m.read("pool_size", c.model.pool_size);
    m.read("width", c.model.width);
    m.read("embed_dim", c.model.embed_dim);
    m.read("cross_stitch_layers", c.model.cross_stitch_layers);
    std::string file;
    m.read("embedding_file", file);
    c.embedding_file = file;
    m.finish();
  }
  {
    Section m = root.child("controller");
    m.read("task_embed_dim", c.task_embed_dim);
    m.read("hidden", c.controller_hidden);
    m.finish();
  }
  {
    Section t = root.child("train");
    train::TrainConfig& tc = c.train;
    t.read("samples_per_task", tc.samples_per_task);
    t.read("temperature", tc.temperature);
    t.read("epsilon", tc.epsilon);
    t.read("batch_size", tc.batch_size);
    t.read("theta_lr", tc.theta_lr);
    t.read("phi_lr", tc.phi_lr);
    t.read("max_depth", tc.max_depth);
    t.read("patience", tc.patience);
    t.read("max_epochs", tc.max_epochs);
    t.read("fine_tune_epochs", tc.fine_tune_epochs);
    t.read("eval_batch_size", tc.eval_batch_size);
    t.finish();
  }
  root.finish();
  c.train.seed = c.seed;

  train::validate(c.train);
  check(c.model.width > 0 && c.model.width % 2 == 0, "'model.width' must be even and positive");
  check(c.model.embed_dim > 0, "'model.embed_dim' must be positive");
  check(c.model.pool_size > 0, "'model.pool_size' must be positive");
  check(c.model.cross_stitch_layers > 0, "'model.cross_stitch_layers' must be positive");
  check(c.task_embed_dim > 0 && c.controller_hidden > 0, "controller widths must be positive");
  check(!c.output_dir.empty(), "'output_dir' must not be empty");
  if (c.suite_kind == SuiteKind::Csv || c.suite_kind == SuiteKind::Conll) {
    check(!c.paths.empty(), "'suite.paths' must list at least one file for csv/conll suites");
    for (const auto& p : c.paths) check(std::filesystem::exists(p), "data file not found: " + p.string());
  } else {
    check(c.paths.empty(), "'suite.paths' only applies to csv/conll suites");
    // Surfaces generator-level errors (lexicon fit, lengths) before any compute.
    if (c.suite_kind == SuiteKind::Cluster) {
      check(c.synthetic.clusters >= 2 && c.synthetic.tasks_per_cluster >= 2,
            "cluster suite needs at least 2 clusters and 2 tasks per cluster");
      tasks::cluster_lexicon(c.synthetic);
    }
    check(c.synthetic.min_length > 0 && c.synthetic.min_length <= c.synthetic.max_length,
          "suite lengths need 0 < min_length <= max_length");
    check(c.synthetic.noise >= 0.0 && c.synthetic.noise <= 0.5, "'suite.noise' must lie in [0, 0.5]");
    check(c.synthetic.samples_per_task >= 10, "'suite.samples_per_task' must be at least 10");
    check(c.suite_kind != SuiteKind::Hierarchy || (c.synthetic.levels >= 1 && c.synthetic.levels <= 3),
          "'suite.levels' must lie in [1, 3]");
  }
  if (!c.embedding_file.empty()) {
    check(std::filesystem::exists(c.embedding_file), "embedding file not found: " + c.embedding_file.string());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  json suite = {{"kind", kind_name(c.suite_kind)}};
  if (c.suite_kind == SuiteKind::Csv || c.suite_kind == SuiteKind::Conll) {
    json paths = json::array();
    for (const auto& p : c.paths) paths.push_back(p.string());
    suite["paths"] = paths;
  } else {
    const auto& s = c.synthetic;
    suite.update({{"clusters", s.clusters},
                  {"tasks_per_cluster", s.tasks_per_cluster},
                  {"vocab_size", s.vocab_size},
                  {"lexicon_size", s.lexicon_size},
                  {"shared_lexicon", s.shared_lexicon},
                  {"max_sentiment_words", s.max_sentiment_words},
                  {"min_length", s.min_length},
                  {"max_length", s.max_length},
                  {"noise", s.noise},
                  {"samples_per_task", s.samples_per_task},
                  {"max_train_samples", s.max_train_samples},
                  {"levels", s.levels},
                  {"seed", s.seed}});
  }
  json model = {{"pool_size", c.model.pool_size},
                {"width", c.model.width},
                {"embed_dim", c.model.embed_dim},
                {"cross_stitch_layers", c.model.cross_stitch_layers}};
  if (!c.embedding_file.empty()) model["embedding_file"] = c.embedding_file.string();
  const auto& t = c.train;
  return {{"seed", c.seed},
          {"output_dir", c.output_dir.string()},
          {"scheme", arch::to_string(c.scheme)},
          {"suite", suite},
          {"model", model},
          {"controller", {{"task_embed_dim", c.task_embed_dim}, {"hidden", c.controller_hidden}}},
          {"train",
           {{"samples_per_task", t.samples_per_task},
            {"temperature", t.temperature},
            {"epsilon", t.epsilon},
            {"batch_size", t.batch_size},
            {"theta_lr", t.theta_lr},
            {"phi_lr", t.phi_lr},
            {"max_depth", t.max_depth},
            {"patience", t.patience},
            {"max_epochs", t.max_epochs},
            {"fine_tune_epochs", t.fine_tune_epochs},
            {"eval_batch_size", t.eval_batch_size}}}};
}

void override_seed(ExperimentConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.train.seed = seed;
  if (!config.synthetic_seed_set) config.synthetic.seed = seed;
}

tasks::TaskSuite build_suite(const ExperimentConfig& c) {
  switch (c.suite_kind) {
    case SuiteKind::Cluster:
    case SuiteKind::Hierarchy:
      return tasks::generate(c.synthetic);
    case SuiteKind::Csv:
    case SuiteKind::Conll: {
      std::vector<tasks::RawTask> raw;
      for (const auto& p : c.paths) {
        raw.push_back(c.suite_kind == SuiteKind::Csv ? tasks::read_csv_classification(p, p.stem().string())
                                                     : tasks::read_conll(p, p.stem().string()));
      }
      return tasks::build_suite(raw, c.seed);
    }
  }
  throw ConfigError("unsupported suite");
}

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
  suite_ = build_suite(config_);
  for (const auto& t : suite_.tasks) tasks::validate(t, suite_.vocab_size());
  Rng init(mix_seed(config_.seed, 2));
  model_ = std::make_unique<arch::MultiTaskModel>(suite_, config_.scheme, config_.model, init);
  if (!config_.embedding_file.empty()) {
    const auto vectors = tasks::read_word_vectors(config_.embedding_file, suite_.vocabulary, config_.model.embed_dim);
    for (std::size_t k = 0; k < model_->task_count(); ++k) {
      auto& table = model_->embedding(k).weights;
      for (std::size_t w = 0; w < vectors.size(); ++w) {
        if (vectors[w].empty()) continue;
        std::copy(vectors[w].begin(), vectors[w].end(), table.value.begin() + w * config_.model.embed_dim);
      }
    }
  }
  if (config_.scheme == arch::SharingScheme::Searched) {
    ctrl::ControllerConfig cc;
    cc.tasks = suite_.tasks.size();
    cc.pool_size = config_.model.pool_size;
    cc.task_embed_dim = config_.task_embed_dim;
    cc.hidden = config_.controller_hidden;
    cc.max_depth = config_.train.max_depth;
    policy_ = std::make_unique<ctrl::ControllerPolicy>(cc);
    Rng prng(mix_seed(config_.seed, 3));
    policy_->init_uniform(prng);
  }
  trainer_ = std::make_unique<train::Trainer>(*model_, suite_, config_.train, policy_.get());
}

}  // namespace mtnas::harness
