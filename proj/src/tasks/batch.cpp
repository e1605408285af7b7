#include "mtnas/tasks/batch.hpp"

#include <algorithm>
#include <numeric>

#include "mtnas/errors.hpp"

namespace mtnas::tasks {

Batch make_batch(TaskType type, const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("make_batch: empty batch");
  Batch b;
  b.type = type;
  for (std::size_t i : indices) {
    if (i >= samples.size()) throw BoundsError("make_batch: sample index out of range");
    if (samples[i].tokens.empty()) throw ContractError("make_batch: empty sample");
    b.max_length = std::max(b.max_length, samples[i].tokens.size());
  }
  b.tokens.assign(indices.size() * b.max_length, 0);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Sample& s = samples[indices[r]];
    std::copy(s.tokens.begin(), s.tokens.end(), b.tokens.begin() + r * b.max_length);
    b.lengths.push_back(s.tokens.size());
    if (type == TaskType::Classification) {
      b.labels.push_back(s.label);
    } else {
      b.tags.push_back(s.tags);
    }
  }
  return b;
}

BatchIterator::BatchIterator(const TaskSpec& task, std::size_t batch_size) : task_(&task), batch_size_(batch_size) {
  if (batch_size == 0) throw ContractError("BatchIterator: batch size must be at least 1");
  order_.resize(task.train.size());
  std::iota(order_.begin(), order_.end(), 0);
  cursor_ = order_.size();
}

void BatchIterator::start_epoch(Rng& rng) {
  std::iota(order_.begin(), order_.end(), 0);
  rng.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  Batch b = make_batch(task_->type, task_->train, std::span<const std::size_t>(order_).subspan(cursor_, end - cursor_));
  cursor_ = end;
  return b;
}

std::size_t BatchIterator::batches_per_epoch() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

}  // namespace mtnas::tasks
