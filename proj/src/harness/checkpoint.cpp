#include "mtnas/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "mtnas/errors.hpp"

namespace mtnas::harness {
namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

class Payload {
 public:
  std::uint64_t add(const std::vector<double>& values) {
    const std::uint64_t offset = data_.size();
    data_.insert(data_.end(), values.begin(), values.end());
    return offset;
  }
  const std::vector<double>& data() const { return data_; }

 private:
  std::vector<double> data_;
};

std::vector<double> take(const std::vector<double>& payload, std::uint64_t offset, std::uint64_t count,
                         const std::string& what) {
  if (offset > payload.size() || count > payload.size() - offset) {
    throw ParseError("checkpoint: tensor " + what + " lies outside the payload", 0);
  }
  return {payload.begin() + static_cast<std::ptrdiff_t>(offset),
          payload.begin() + static_cast<std::ptrdiff_t>(offset + count)};
}

json adam_to_json(const ad::Adam& opt, Payload& payload) {
  json out = json::array();
  auto state = opt.export_state();
  std::vector<std::string> names;
  for (const auto& [name, st] : state) names.push_back(name);
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    const auto& st = state.at(name);
    out.push_back({{"name", name}, {"steps", st.steps}, {"size", st.m.size()}, {"m", payload.add(st.m)},
                   {"v", payload.add(st.v)}});
  }
  return out;
}

void adam_from_json(ad::Adam& opt, const json& entries, const std::vector<double>& payload,
                    const ad::ParamList& params) {
  std::unordered_map<std::string, ad::Adam::State> state;
  for (const auto& e : entries) {
    const std::string name = e.at("name").get<std::string>();
    const std::uint64_t size = e.at("size").get<std::uint64_t>();
    ad::Adam::State st;
    st.steps = e.at("steps").get<std::uint64_t>();
    st.m = take(payload, e.at("m").get<std::uint64_t>(), size, name);
    st.v = take(payload, e.at("v").get<std::uint64_t>(), size, name);
    state.emplace(name, std::move(st));
  }
  opt.import_state(state, params);
}

json history_to_json(const train::History& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"dev_metric", e.dev_metric},
                      {"reward_mean", e.reward_mean},
                      {"architectures", e.architectures},
                      {"dev_average", e.dev_average}});
  }
  return {{"epochs", epochs}, {"best_epoch", h.best_epoch}};
}

train::History history_from_json(const json& j) {
  train::History h;
  h.best_epoch = j.at("best_epoch").get<std::size_t>();
  for (const auto& e : j.at("epochs")) {
    train::EpochRecord r;
    r.epoch = e.at("epoch").get<std::size_t>();
    r.dev_metric = e.at("dev_metric").get<std::vector<double>>();
    r.reward_mean = e.at("reward_mean").get<std::vector<double>>();
    r.architectures = e.at("architectures").get<std::vector<std::vector<int>>>();
    r.dev_average = e.at("dev_average").get<double>();
    h.epochs.push_back(std::move(r));
  }
  return h;
}

template <class T>
void put_le(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  char bytes[sizeof(T)];
  if (!in.read(bytes, sizeof(T))) throw ParseError("checkpoint: truncated preamble", 0);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ContractError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush()) throw ContractError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, Experiment& ex) {
  train::Trainer& tr = ex.trainer();
  const ad::ParamList params = tr.params();
  Payload payload;
  json tensors = json::array();
  std::unordered_set<std::string> names;
  for (const ad::Parameter* p : params) {
    if (!names.insert(p->name).second) throw ContractError("checkpoint: duplicate parameter name " + p->name);
    tensors.push_back({{"name", p->name}, {"shape", p->shape}, {"offset", payload.add(p->value)}});
  }
  json best = json::array();
  for (std::size_t i = 0; i < tr.best_snapshot().size(); ++i) best.push_back(payload.add(tr.best_snapshot()[i]));

  const auto& st = tr.stopper();
  const json header = {
      {"config", to_json(ex.config())},
      {"epoch", tr.history().epochs.size()},
      {"rng", tr.rng().state()},
      {"stopper",
       {{"best", st.best()},
        {"best_index", st.best_index()},
        {"evaluations", st.evaluations()},
        {"since_best", st.since_best()}}},
      {"history", history_to_json(tr.history())},
      {"tensors", tensors},
      {"best_snapshot", best},
      {"adam_theta", adam_to_json(tr.theta_optimizer(), payload)},
      {"adam_phi", adam_to_json(tr.phi_optimizer(), payload)},
  };
  const std::string text = header.dump();

  std::string out;
  out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  const auto& data = payload.data();
  const std::size_t start = out.size();
  out.resize(start + data.size() * sizeof(double));
  if (!data.empty()) std::memcpy(out.data() + start, data.data(), data.size() * sizeof(double));
  write_atomic(path, out);
}

namespace {

struct RawCheckpoint {
  json header;
  std::vector<double> payload;
};

RawCheckpoint read_raw(const std::filesystem::path& path, bool with_payload) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ParseError("checkpoint: " + path.string() + " is not a checkpoint (bad magic)", 0);
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported format version " + std::to_string(version), 0);
  }
  const auto header_len = get_le<std::uint64_t>(in);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw ParseError("checkpoint: truncated header", 0);
  }
  RawCheckpoint raw;
  try {
    raw.header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint: malformed header: ") + e.what(), 0);
  }
  if (with_payload) {
    const std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (rest.size() % sizeof(double) != 0) {
      throw ParseError("checkpoint: payload is not a whole number of doubles", 0);
    }
    raw.payload.resize(rest.size() / sizeof(double));
    if (!raw.payload.empty()) std::memcpy(raw.payload.data(), rest.data(), rest.size());
  }
  return raw;
}

}  // namespace

ExperimentConfig checkpoint_config(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw(path, false);
  if (!raw.header.contains("config")) throw ParseError("checkpoint: header has no config", 0);
  return parse_config(raw.header.at("config"));
}

std::unique_ptr<Experiment> load_checkpoint(const std::filesystem::path& path) {
  RawCheckpoint raw = read_raw(path, true);
  const json& header = raw.header;
  const std::vector<double>& payload = raw.payload;

  try {
    auto ex = std::make_unique<Experiment>(parse_config(header.at("config")));
    train::Trainer& tr = ex->trainer();
    const ad::ParamList params = tr.params();
    std::unordered_map<std::string, ad::Parameter*> by_name;
    for (ad::Parameter* p : params) by_name[p->name] = p;

    const json& tensors = header.at("tensors");
    if (tensors.size() != params.size()) throw ParseError("checkpoint: parameter count does not match the model", 0);
    for (const auto& t : tensors) {
      const std::string name = t.at("name").get<std::string>();
      auto it = by_name.find(name);
      if (it == by_name.end()) throw ParseError("checkpoint: unknown parameter " + name, 0);
      ad::Parameter* p = it->second;
      if (t.at("shape").get<ad::Shape>() != p->shape) throw ParseError("checkpoint: shape mismatch for " + name, 0);
      p->value = take(payload, t.at("offset").get<std::uint64_t>(), p->size(), name);
    }
    auto& best = tr.best_snapshot();
    best.clear();
    const json& snap = header.at("best_snapshot");
    if (!snap.empty() && snap.size() != params.size()) throw ParseError("checkpoint: best snapshot is incomplete", 0);
    for (std::size_t i = 0; i < snap.size(); ++i) {
      best.push_back(take(payload, snap[i].get<std::uint64_t>(), params[i]->size(), params[i]->name));
    }
    adam_from_json(tr.theta_optimizer(), header.at("adam_theta"), payload, params);
    adam_from_json(tr.phi_optimizer(), header.at("adam_phi"), payload, params);
    tr.rng().restore(header.at("rng").get<std::string>());
    const json& s = header.at("stopper");
    tr.stopper().restore(s.at("best").get<double>(), s.at("best_index").get<std::size_t>(),
                         s.at("evaluations").get<std::size_t>(), s.at("since_best").get<std::size_t>());
    tr.history() = history_from_json(header.at("history"));
    if (tr.history().epochs.size() != header.at("epoch").get<std::size_t>()) {
      throw ParseError("checkpoint: epoch count disagrees with the history", 0);
    }
    return ex;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: malformed header: ") + e.what(), 0);
  }
}

}  // namespace mtnas::harness
