#include "mtnas/architecture/architecture.hpp"

#include <algorithm>
#include <array>
#include <sstream>
#include <unordered_set>

#include "mtnas/errors.hpp"

namespace mtnas::arch {
namespace {

using tasks::TaskType;

constexpr std::array<std::pair<SharingScheme, const char*>, 6> kSchemeNames{{
    {SharingScheme::Searched, "searched"},
    {SharingScheme::FullyShared, "fs"},
    {SharingScheme::StackSharePrivate, "ssp"},
    {SharingScheme::ParallelSharePrivate, "psp"},
    {SharingScheme::CrossStitch, "cs"},
    {SharingScheme::SingleTask, "single"},
}};

void append(ParamList& out, const ParamList& more) { out.insert(out.end(), more.begin(), more.end()); }

SeqFeatures run_chain(Tape& tape, const std::vector<BiLstmModule*>& chain, SeqFeatures x) {
  for (BiLstmModule* m : chain) x = m->forward(tape, x);
  return x;
}

SeqFeatures project(Tape& tape, Linear* projection, SeqFeatures x) {
  if (projection == nullptr) return x;
  for (Var& step : x.steps) step = projection->forward(tape, step);
  return x;
}

SeqFeatures concat_features(const SeqFeatures& a, const SeqFeatures& b) {
  SeqFeatures out;
  out.lengths = a.lengths;
  for (std::size_t t = 0; t < a.max_length(); ++t) {
    const std::array<Var, 2> parts{a.steps[t], b.steps[t]};
    out.steps.push_back(ad::concat(parts));
  }
  return out;
}

}  // namespace

std::string to_string(SharingScheme scheme) {
  for (const auto& [s, name] : kSchemeNames) {
    if (s == scheme) return name;
  }
  return "unknown";
}

SharingScheme parse_scheme(std::string_view name) {
  for (const auto& [s, n] : kSchemeNames) {
    if (name == n) return s;
  }
  throw ConfigError("unknown sharing scheme '" + std::string(name) + "' (expected searched, fs, ssp, psp, cs, single)");
}

std::string to_string(const std::vector<int>& actions) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < actions.size(); ++i) os << (i ? "," : "") << actions[i];
  os << ']';
  return os.str();
}

ModulePool::ModulePool(std::size_t count, std::size_t width) : width_(width) {
  modules_.reserve(count);
  for (std::size_t i = 0; i < count; ++i) modules_.emplace_back("pool.m" + std::to_string(i), width);
}

BiLstmModule& ModulePool::at(std::size_t i) {
  if (i >= modules_.size()) {
    throw BoundsError("module index " + std::to_string(i) + " outside pool of " + std::to_string(modules_.size()));
  }
  return modules_[i];
}

ParamList ModulePool::params() {
  ParamList out;
  for (auto& m : modules_) append(out, m.params());
  return out;
}

ParamList TaskParts::params() {
  ParamList out;
  if (projection) append(out, projection->params());
  if (private_module) append(out, private_module->params());
  for (auto& m : column) append(out, m.params());
  append(out, head_params());
  return out;
}

ParamList TaskParts::head_params() {
  if (classifier) return classifier->params();
  if (tagger) return tagger->params();
  return {};
}

MultiTaskModel::MultiTaskModel(const tasks::TaskSuite& suite, SharingScheme scheme, ModelConfig config, Rng& rng)
    : scheme_(scheme), config_(config) {
  if (suite.tasks.empty()) throw ContractError("model: no tasks");
  if (suite.vocab_size() == 0) throw ContractError("model: empty vocabulary");
  if (config.embed_dim == 0) throw ContractError("model: embedding width must be positive");
  const std::size_t d = config.width;
  const std::size_t n = suite.tasks.size();

  std::size_t pool_size = 0;
  switch (scheme) {
    case SharingScheme::Searched:
      if (config.pool_size == 0) throw ContractError("model: pool must hold at least one module");
      pool_size = config.pool_size;
      break;
    case SharingScheme::FullyShared:
    case SharingScheme::StackSharePrivate:
    case SharingScheme::ParallelSharePrivate:
      pool_size = 1;
      break;
    default:
      break;
  }
  pool_ = ModulePool(pool_size, d);

  // A single-task baseline shares nothing, not even word embeddings.
  const bool per_task_embedding = scheme == SharingScheme::SingleTask;
  if (per_task_embedding) {
    embeddings_.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      embeddings_.emplace_back("task" + std::to_string(k) + ".embedding", suite.vocab_size(), config.embed_dim);
    }
  } else {
    embeddings_.emplace_back("embedding", suite.vocab_size(), config.embed_dim);
  }

  const bool wide_head = scheme == SharingScheme::Searched || scheme == SharingScheme::ParallelSharePrivate;
  const bool has_private = scheme == SharingScheme::Searched || scheme == SharingScheme::StackSharePrivate ||
                           scheme == SharingScheme::ParallelSharePrivate || scheme == SharingScheme::SingleTask;
  parts_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const tasks::TaskSpec& spec = suite.tasks[k];
    if (spec.label_count() == 0) throw ContractError("model: task " + spec.name + " has no labels");
    const std::string prefix = "task" + std::to_string(k);
    TaskParts& p = parts_[k];
    p.type = spec.type;
    p.embedding_index = per_task_embedding ? k : 0;
    if (config.embed_dim != d) p.projection.emplace(prefix + ".projection", config.embed_dim, d);
    if (has_private) p.private_module.emplace(prefix + ".private", d);
    if (scheme == SharingScheme::CrossStitch) {
      p.column.reserve(config.cross_stitch_layers);
      for (std::size_t l = 0; l < config.cross_stitch_layers; ++l) {
        p.column.emplace_back(prefix + ".column" + std::to_string(l), d);
      }
    }
    const std::size_t head_in = wide_head ? 2 * d : d;
    if (spec.type == TaskType::Classification) {
      p.classifier.emplace(prefix + ".head", head_in, spec.label_count());
    } else {
      p.tagger.emplace(prefix + ".head", head_in, spec.label_count());
    }
  }
  if (scheme == SharingScheme::CrossStitch) {
    if (config.cross_stitch_layers == 0) throw ContractError("model: cross-stitch needs at least one layer");
    for (std::size_t l = 0; l < config.cross_stitch_layers; ++l) stitches_.emplace_back("stitch" + std::to_string(l), n);
  }

  ParamList all = params();
  ParamList uniform;
  for (ad::Parameter* p : all) {
    if (p->name.starts_with("stitch")) continue;
    uniform.push_back(p);
  }
  layers::init_uniform(uniform, rng);
  for (auto& s : stitches_) s.init_near_identity(rng);
}

TaskParts& MultiTaskModel::parts(std::size_t task) {
  if (task >= parts_.size()) throw BoundsError("task index " + std::to_string(task));
  return parts_[task];
}

EmbeddingTable& MultiTaskModel::embedding(std::size_t task) { return embeddings_.at(parts(task).embedding_index); }

std::size_t MultiTaskModel::head_width() const {
  const bool wide = scheme_ == SharingScheme::Searched || scheme_ == SharingScheme::ParallelSharePrivate;
  return wide ? 2 * config_.width : config_.width;
}

ParamList MultiTaskModel::params() {
  ParamList out = pool_.params();
  for (auto& e : embeddings_) append(out, e.params());
  for (auto& p : parts_) append(out, p.params());
  for (auto& s : stitches_) append(out, s.params());
  return out;
}

SeqFeatures TaskNetwork::encode(Tape& tape, const tasks::Batch& batch) const {
  SeqFeatures x = embedding->lookup(tape, batch.tokens, batch.lengths, batch.max_length);
  if (wiring == Wiring::CrossStitch) {
    const std::size_t n = columns.size();
    std::vector<SeqFeatures> h(n);
    for (std::size_t j = 0; j < n; ++j) h[j] = project(tape, column_projections[j], x);
    for (std::size_t l = 0; l < stitches.size(); ++l) {
      for (std::size_t j = 0; j < n; ++j) h[j] = columns[j][l]->forward(tape, h[j]);
      std::vector<Var> step(n);
      for (std::size_t t = 0; t < x.max_length(); ++t) {
        for (std::size_t j = 0; j < n; ++j) step[j] = h[j].steps[t];
        const std::vector<Var> mixed = stitches[l]->mix(tape, step);
        for (std::size_t j = 0; j < n; ++j) h[j].steps[t] = mixed[j];
      }
    }
    return h[task];
  }
  x = project(tape, projection, x);
  switch (wiring) {
    case Wiring::PrivateOnly:
      return private_module->forward(tape, x);
    case Wiring::SharedOnly:
      return run_chain(tape, shared, x);
    case Wiring::Stacked:
      return private_module->forward(tape, run_chain(tape, shared, x));
    case Wiring::Parallel:
      return concat_features(run_chain(tape, shared, x), private_module->forward(tape, x));
    default:
      throw ContractError("network: unsupported wiring");
  }
}

std::size_t TaskNetwork::head_input_width() const { return wiring == Wiring::Parallel ? 2 * width : width; }

Var TaskNetwork::log_likelihoods(Tape& tape, const tasks::Batch& batch) const {
  if (batch.size() == 0) throw ContractError("network: empty batch");
  const SeqFeatures h = encode(tape, batch);
  if (type == TaskType::Classification) {
    if (batch.labels.size() != batch.size()) throw ContractError("network: batch is missing class labels");
    return ad::pick(classifier->log_probs(tape, h), batch.labels);
  }
  if (batch.tags.size() != batch.size()) throw ContractError("network: batch is missing tags");
  Var ll = tagger->log_likelihood(tape, h, batch.tags);
  std::vector<double> inv(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) inv[b] = 1.0 / static_cast<double>(batch.lengths[b]);
  return ad::mul(ll, tape.constant({batch.size()}, std::move(inv)));
}

Var TaskNetwork::reward(Tape& tape, const tasks::Batch& batch) const {
  Var ll = log_likelihoods(tape, batch);
  return ad::scale(ad::sum(ll), 1.0 / static_cast<double>(batch.size()));
}

Predictions TaskNetwork::predict(Tape& tape, const tasks::Batch& batch) const {
  Predictions out;
  const SeqFeatures h = encode(tape, batch);
  if (type == TaskType::Classification) {
    Var lp = classifier->log_probs(tape, h);
    const std::size_t c = lp.cols();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto row = lp.value().subspan(b * c, c);
      out.labels.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  } else {
    out.tags = tagger->decode(tape, h);
  }
  return out;
}

Partition parameter_partition(const TaskNetwork& net) {
  Partition part;
  std::unordered_set<const ad::Parameter*> seen;
  auto add = [&](ParamList& dst, const ParamList& src) {
    for (ad::Parameter* p : src) {
      if (seen.insert(p).second) dst.push_back(p);
    }
  };
  add(part.owned, net.embedding->params());
  if (net.projection) add(part.owned, net.projection->params());
  if (net.private_module) add(part.owned, net.private_module->params());
  if (net.classifier) add(part.owned, net.classifier->params());
  if (net.tagger) add(part.owned, net.tagger->params());
  if (net.wiring == Wiring::CrossStitch) {
    if (net.column_projections[net.task]) add(part.owned, net.column_projections[net.task]->params());
    for (BiLstmModule* m : net.columns[net.task]) add(part.owned, m->params());
    for (std::size_t j = 0; j < net.columns.size(); ++j) {
      if (j == net.task) continue;
      if (net.column_projections[j]) add(part.shared, net.column_projections[j]->params());
      for (BiLstmModule* m : net.columns[j]) add(part.shared, m->params());
    }
    for (CrossStitchUnit* s : net.stitches) add(part.shared, s->params());
  }
  for (BiLstmModule* m : net.shared) add(part.shared, m->params());
  return part;
}

ParamList TaskNetwork::shared_params() const { return parameter_partition(*this).shared; }
ParamList TaskNetwork::private_params() const { return parameter_partition(*this).owned; }

ParamList TaskNetwork::params() const {
  Partition p = parameter_partition(*this);
  append(p.shared, p.owned);
  return p.shared;
}

TaskNetwork TaskNetwork::with_private(PrivateCopy& copy) const {
  TaskNetwork net = *this;
  TaskParts& p = copy.parts;
  net.embedding = &copy.embedding;
  net.projection = p.projection ? &*p.projection : nullptr;
  net.private_module = p.private_module ? &*p.private_module : nullptr;
  net.classifier = p.classifier ? &*p.classifier : nullptr;
  net.tagger = p.tagger ? &*p.tagger : nullptr;
  if (net.wiring == Wiring::CrossStitch) {
    net.column_projections[task] = net.projection;
    for (std::size_t l = 0; l < p.column.size(); ++l) net.columns[task][l] = &p.column[l];
  }
  return net;
}

namespace {

TaskNetwork base_network(MultiTaskModel& model, std::size_t task) {
  TaskParts& p = model.parts(task);
  TaskNetwork net;
  net.task = task;
  net.scheme = model.scheme();
  net.type = p.type;
  net.width = model.config().width;
  net.embedding = &model.embedding(task);
  net.projection = p.projection ? &*p.projection : nullptr;
  net.private_module = p.private_module ? &*p.private_module : nullptr;
  net.classifier = p.classifier ? &*p.classifier : nullptr;
  net.tagger = p.tagger ? &*p.tagger : nullptr;
  return net;
}

}  // namespace

TaskNetwork assemble_searched(MultiTaskModel& model, std::size_t task, const std::vector<int>& actions) {
  if (model.scheme() != SharingScheme::Searched) throw ContractError("assemble_searched: model is not searchable");
  TaskNetwork net = base_network(model, task);
  for (int a : actions) {
    if (a < 0) throw BoundsError("module index " + std::to_string(a) + " is negative");
    net.shared.push_back(&model.pool().at(static_cast<std::size_t>(a)));
  }
  net.actions = actions;
  net.wiring = actions.empty() ? Wiring::PrivateOnly : Wiring::Parallel;
  return net;
}

TaskNetwork assemble_baseline(MultiTaskModel& model, std::size_t task) {
  TaskNetwork net = base_network(model, task);
  switch (model.scheme()) {
    case SharingScheme::Searched:
      throw ContractError("assemble_baseline: the searched scheme is assembled from actions");
    case SharingScheme::FullyShared:
      net.shared = {&model.pool().at(0)};
      net.wiring = Wiring::SharedOnly;
      break;
    case SharingScheme::StackSharePrivate:
      net.shared = {&model.pool().at(0)};
      net.wiring = Wiring::Stacked;
      break;
    case SharingScheme::ParallelSharePrivate:
      net.shared = {&model.pool().at(0)};
      net.wiring = Wiring::Parallel;
      break;
    case SharingScheme::SingleTask:
      net.wiring = Wiring::PrivateOnly;
      break;
    case SharingScheme::CrossStitch:
      net.wiring = Wiring::CrossStitch;
      net.projection = nullptr;
      for (std::size_t j = 0; j < model.task_count(); ++j) {
        TaskParts& pj = model.parts(j);
        net.column_projections.push_back(pj.projection ? &*pj.projection : nullptr);
        std::vector<BiLstmModule*> col;
        for (auto& m : pj.column) col.push_back(&m);
        net.columns.push_back(std::move(col));
      }
      for (auto& s : model.stitches()) net.stitches.push_back(&s);
      break;
  }
  return net;
}

std::vector<TaskNetwork> assemble_baseline(MultiTaskModel& model) {
  std::vector<TaskNetwork> out;
  for (std::size_t k = 0; k < model.task_count(); ++k) out.push_back(assemble_baseline(model, k));
  return out;
}

std::unique_ptr<PrivateCopy> copy_private(MultiTaskModel& model, std::size_t task) {
  auto copy = std::make_unique<PrivateCopy>();
  copy->embedding = model.embedding(task);
  copy->parts = model.parts(task);
  return copy;
}

}  // namespace mtnas::arch
