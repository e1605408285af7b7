#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mtnas::tasks {

enum class TaskType { Classification, Tagging };

std::string to_string(TaskType type);

struct Sample {
  std::vector<int> tokens;
  int label = -1;          // classification
  std::vector<int> tags;   // tagging, one per token
};

enum class Split { Train, Dev, Test };

std::string to_string(Split split);

struct TaskSpec {
  std::size_t id = 0;
  std::string name;
  TaskType type = TaskType::Classification;
  std::vector<std::string> labels;
  std::vector<Sample> train;
  std::vector<Sample> dev;
  std::vector<Sample> test;
  int cluster_id = -1;  // synthetic ground truth, -1 when unknown
  int level = -1;       // synthetic hierarchy depth, -1 when unknown

  const std::vector<Sample>& split(Split s) const;
  std::size_t label_count() const { return labels.size(); }
};

/// Tasks sharing one vocabulary (a corpus group).
struct TaskSuite {
  std::vector<TaskSpec> tasks;
  std::vector<std::string> vocabulary;  // id -> word; id 0 is padding / unknown

  std::size_t vocab_size() const { return vocabulary.size(); }
};

/// Ids of samples assigned to train/dev/test: a permutation ordered by a
/// seeded hash of the sample index, cut at 70% and 80%.
struct SplitIndices {
  std::vector<std::size_t> train, dev, test;
};
SplitIndices split_indices(std::size_t count, std::uint64_t seed);

/// Throws ContractError/BoundsError when a sample violates the task's
/// vocabulary or label ranges.
void validate(const TaskSpec& task, std::size_t vocab_size);

}  // namespace mtnas::tasks
