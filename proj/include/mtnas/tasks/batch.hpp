#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mtnas/rng.hpp"
#include "mtnas/tasks/task.hpp"

namespace mtnas::tasks {

/// Padded mini-batch. Positions at or beyond lengths[b] hold id 0 and are
/// excluded from losses and metrics.
struct Batch {
  TaskType type = TaskType::Classification;
  std::size_t max_length = 0;
  std::vector<int> tokens;  // row-major [size × max_length]
  std::vector<std::size_t> lengths;
  std::vector<int> labels;             // classification
  std::vector<std::vector<int>> tags;  // tagging

  std::size_t size() const { return lengths.size(); }
};

Batch make_batch(TaskType type, const std::vector<Sample>& samples, std::span<const std::size_t> indices);

/// Shuffled passes over a task's training split; the final partial batch is
/// emitted.
class BatchIterator {
 public:
  BatchIterator(const TaskSpec& task, std::size_t batch_size);

  /// Reshuffles and rewinds.
  void start_epoch(Rng& rng);
  std::optional<Batch> next();
  std::size_t batches_per_epoch() const;

 private:
  const TaskSpec* task_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace mtnas::tasks
