#pragma once

// Real-data ingestion.
//
// CSV classification: UTF-8, header `text,label`, RFC 4180 quoting; text is
// whitespace-tokenized. CoNLL tagging: one `token<TAB>tag` per line, blank
// lines separate sentences.
//
// The vocabulary is built from the training splits only; unknown words map to
// id 0. Splits follow split_indices().

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtnas/tasks/task.hpp"

namespace mtnas::tasks {

/// Words plus string labels before vocabulary assignment.
struct RawTask {
  std::string name;
  TaskType type = TaskType::Classification;
  std::vector<std::vector<std::string>> words;
  std::vector<std::string> labels;            // classification
  std::vector<std::vector<std::string>> tags;  // tagging
};

RawTask read_csv_classification(const std::filesystem::path& path, const std::string& name);
RawTask read_conll(const std::filesystem::path& path, const std::string& name);

/// Splits every task, builds one shared vocabulary from all training splits
/// and maps words and labels to ids.
TaskSuite build_suite(const std::vector<RawTask>& raw, std::uint64_t seed);

TaskSuite load_csv_classification(const std::filesystem::path& path, std::uint64_t seed);
TaskSuite load_conll(const std::filesystem::path& path, std::uint64_t seed);

/// Parses word2vec-style text (`word v1 v2 ...` per line) and returns, for
/// each vocabulary id, the vector when present. Rows of another width raise
/// ParseError.
std::vector<std::vector<double>> read_word_vectors(const std::filesystem::path& path,
                                                   const std::vector<std::string>& vocabulary, std::size_t dim);

}  // namespace mtnas::tasks
