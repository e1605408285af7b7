#include "mtnas/tasks/loaders.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "mtnas/errors.hpp"
#include "mtnas/rng.hpp"

namespace mtnas::tasks {
namespace {

std::ifstream open(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open " + path.string());
  return in;
}

std::vector<std::string> split_whitespace(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

// Reads one CSV record, which may span several physical lines when a quoted
// field contains a newline. Returns false at end of input.
bool read_record(std::istream& in, std::size_t& line_no, std::vector<std::string>& fields, std::size_t& record_line) {
  std::string line;
  if (!std::getline(in, line)) return false;
  ++line_no;
  record_line = line_no;
  strip_cr(line);
  fields.clear();
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0;; ++i) {
    if (i == line.size()) {
      if (!quoted) break;
      std::string more;
      if (!std::getline(in, more)) throw ParseError("unterminated quoted field", record_line);
      ++line_no;
      strip_cr(more);
      field += '\n';
      line = std::move(more);
      i = static_cast<std::size_t>(-1);
      continue;
    }
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      if (!field.empty() || was_quoted) throw ParseError("stray quote", record_line);
      quoted = true;
      was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else {
      if (was_quoted) throw ParseError("text after closing quote", record_line);
      field += ch;
    }
  }
  fields.push_back(std::move(field));
  return true;
}

}  // namespace

RawTask read_csv_classification(const std::filesystem::path& path, const std::string& name) {
  std::ifstream in = open(path);
  RawTask raw;
  raw.name = name;
  raw.type = TaskType::Classification;
  std::size_t line_no = 0, record_line = 0;
  std::vector<std::string> fields;
  if (!read_record(in, line_no, fields, record_line)) throw ContractError(path.string() + ": empty file");
  if (fields.size() != 2 || fields[0] != "text" || fields[1] != "label") {
    throw ParseError("expected header `text,label`", record_line);
  }
  while (read_record(in, line_no, fields, record_line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 2) {
      throw ParseError("expected 2 fields, got " + std::to_string(fields.size()), record_line);
    }
    auto words = split_whitespace(fields[0]);
    if (words.empty()) throw ParseError("empty text", record_line);
    if (fields[1].empty()) throw ParseError("empty label", record_line);
    raw.words.push_back(std::move(words));
    raw.labels.push_back(fields[1]);
  }
  if (raw.words.empty()) throw ContractError(path.string() + ": no samples");
  return raw;
}

RawTask read_conll(const std::filesystem::path& path, const std::string& name) {
  std::ifstream in = open(path);
  RawTask raw;
  raw.name = name;
  raw.type = TaskType::Tagging;
  std::vector<std::string> words, tags;
  auto flush = [&]() {
    if (words.empty()) return;
    raw.words.push_back(std::move(words));
    raw.tags.push_back(std::move(tags));
    words.clear();
    tags.clear();
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw ParseError("expected `token<TAB>tag`", line_no);
    }
    if (line.find('\t', tab + 1) != std::string::npos) throw ParseError("expected exactly two columns", line_no);
    words.push_back(line.substr(0, tab));
    tags.push_back(line.substr(tab + 1));
  }
  flush();
  if (raw.words.empty()) throw ContractError(path.string() + ": empty file");
  return raw;
}

TaskSuite build_suite(const std::vector<RawTask>& raw, std::uint64_t seed) {
  TaskSuite suite;
  std::vector<SplitIndices> splits;
  std::set<std::string> words;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    splits.push_back(split_indices(raw[k].words.size(), mtnas::mix_seed(seed, 7000 + k)));
    for (std::size_t i : splits.back().train) words.insert(raw[k].words[i].begin(), raw[k].words[i].end());
  }
  suite.vocabulary.push_back("<unk>");
  suite.vocabulary.insert(suite.vocabulary.end(), words.begin(), words.end());
  std::unordered_map<std::string, int> ids;
  for (std::size_t i = 1; i < suite.vocabulary.size(); ++i) ids.emplace(suite.vocabulary[i], static_cast<int>(i));

  for (std::size_t k = 0; k < raw.size(); ++k) {
    const RawTask& r = raw[k];
    TaskSpec task;
    task.id = k;
    task.name = r.name;
    task.type = r.type;
    std::set<std::string> label_set;
    if (r.type == TaskType::Classification) {
      label_set.insert(r.labels.begin(), r.labels.end());
    } else {
      for (const auto& seq : r.tags) label_set.insert(seq.begin(), seq.end());
    }
    task.labels.assign(label_set.begin(), label_set.end());
    std::map<std::string, int> label_id;
    for (std::size_t i = 0; i < task.labels.size(); ++i) label_id[task.labels[i]] = static_cast<int>(i);

    auto convert = [&](std::size_t i) {
      Sample s;
      for (const auto& w : r.words[i]) {
        auto it = ids.find(w);
        s.tokens.push_back(it == ids.end() ? 0 : it->second);
      }
      if (r.type == TaskType::Classification) {
        s.label = label_id.at(r.labels[i]);
      } else {
        for (const auto& t : r.tags[i]) s.tags.push_back(label_id.at(t));
      }
      return s;
    };
    for (std::size_t i : splits[k].train) task.train.push_back(convert(i));
    for (std::size_t i : splits[k].dev) task.dev.push_back(convert(i));
    for (std::size_t i : splits[k].test) task.test.push_back(convert(i));
    suite.tasks.push_back(std::move(task));
  }
  return suite;
}

TaskSuite load_csv_classification(const std::filesystem::path& path, std::uint64_t seed) {
  return build_suite({read_csv_classification(path, path.stem().string())}, seed);
}

TaskSuite load_conll(const std::filesystem::path& path, std::uint64_t seed) {
  return build_suite({read_conll(path, path.stem().string())}, seed);
}

std::vector<std::vector<double>> read_word_vectors(const std::filesystem::path& path,
                                                   const std::vector<std::string>& vocabulary, std::size_t dim) {
  std::ifstream in = open(path);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vocabulary.size(); ++i) index.emplace(vocabulary[i], i);
  std::vector<std::vector<double>> out(vocabulary.size());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream is(line);
    std::string word;
    if (!(is >> word)) continue;
    std::vector<double> v;
    for (double x; is >> x;) v.push_back(x);
    if (!is.eof()) throw ParseError("non-numeric vector entry", line_no);
    if (line_no == 1 && v.size() == 1) continue;  // word2vec header: `count dim`
    if (v.size() != dim) {
      throw ParseError("vector of width " + std::to_string(v.size()) + ", expected " + std::to_string(dim), line_no);
    }
    if (auto it = index.find(word); it != index.end()) out[it->second] = std::move(v);
  }
  return out;
}

}  // namespace mtnas::tasks
