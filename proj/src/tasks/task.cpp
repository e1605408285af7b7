#include "mtnas/tasks/task.hpp"

#include <algorithm>
#include <numeric>

#include "mtnas/errors.hpp"
#include "mtnas/rng.hpp"

namespace mtnas::tasks {

std::string to_string(TaskType type) { return type == TaskType::Classification ? "classification" : "tagging"; }

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "?";
}

const std::vector<Sample>& TaskSpec::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Dev: return dev;
    case Split::Test: return test;
  }
  return train;
}

SplitIndices split_indices(std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint64_t> key(count);
  for (std::size_t i = 0; i < count; ++i) key[i] = mix_seed(seed, i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return key[a] != key[b] ? key[a] < key[b] : a < b;
  });
  const std::size_t n_train = count * 7 / 10;
  const std::size_t n_dev = count / 10;
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + n_train);
  out.dev.assign(order.begin() + n_train, order.begin() + n_train + n_dev);
  out.test.assign(order.begin() + n_train + n_dev, order.end());
  // Keep the original sample order inside each split.
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.dev.begin(), out.dev.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

void validate(const TaskSpec& task, std::size_t vocab_size) {
  const std::size_t k = task.label_count();
  if (k < 2) throw ContractError("task " + task.name + ": needs at least two labels");
  for (const auto* split : {&task.train, &task.dev, &task.test}) {
    for (const Sample& s : *split) {
      if (s.tokens.empty()) throw ContractError("task " + task.name + ": empty sample");
      for (int t : s.tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
          throw BoundsError("task " + task.name + ": token id " + std::to_string(t) + " outside vocabulary");
        }
      }
      if (task.type == TaskType::Classification) {
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= k) {
          throw BoundsError("task " + task.name + ": label " + std::to_string(s.label) + " out of range");
        }
      } else {
        if (s.tags.size() != s.tokens.size()) throw ContractError("task " + task.name + ": tag/token length mismatch");
        for (int y : s.tags) {
          if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw BoundsError("task " + task.name + ": tag " + std::to_string(y) + " out of range");
          }
        }
      }
    }
  }
}

}  // namespace mtnas::tasks
