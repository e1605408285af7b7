#pragma once

// Synthetic task suites with known ground truth.
//
// Cluster suite: every cluster owns a sentiment lexicon (disjoint positive and
// negative word sets). A sample mixes an odd number of lexicon words from its
// cluster with shared filler words; the label is the sign of the summed
// polarities, flipped with the noise probability. Tasks in one cluster are
// mutually informative; tasks in different clusters are not. Clusters either
// own disjoint word blocks or score one shared block with orthogonal
// polarity patterns, in which case a word's polarity in one cluster says
// nothing about its polarity in another.
//
// Hierarchy suite: tokens are uniform. LOW tags token parity, MID tags the
// XOR of the LOW tags at t-1 and t (position 0 XORs with 0), HIGH tags the
// first position of every maximal run of MID ones.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mtnas/tasks/task.hpp"

namespace mtnas::tasks {

enum class GeneratorKind { Cluster, Hierarchy };

struct SyntheticSpec {
  GeneratorKind kind = GeneratorKind::Cluster;
  std::size_t clusters = 2;
  std::size_t tasks_per_cluster = 3;
  std::size_t vocab_size = 200;
  /// Words per polarity per cluster.
  std::size_t lexicon_size = 20;
  /// All clusters score one common word block (orthogonal polarities)
  /// instead of owning disjoint blocks.
  bool shared_lexicon = true;
  /// Upper bound on sentiment words per sample (rounded down to odd).
  std::size_t max_sentiment_words = 5;
  std::size_t min_length = 6;
  std::size_t max_length = 14;
  double noise = 0.0;
  std::size_t samples_per_task = 2000;
  /// Truncates each training split (0 keeps all).
  std::size_t max_train_samples = 0;
  /// Hierarchy depth: 2 yields LOW and MID, 3 adds HIGH.
  std::size_t levels = 3;
  std::uint64_t seed = 0;
};

/// Vocabulary layout of the cluster suite. Each cluster owns a positive and
/// a negative word set. With a shared lexicon every cluster labels the same
/// words, with mutually orthogonal polarity patterns.
struct ClusterLexicon {
  std::size_t filler_begin = 1;
  std::size_t filler_count = 0;
  /// words[cluster][polarity] lists token ids; polarity 0 = positive.
  std::vector<std::array<std::vector<int>, 2>> words;
  /// polarities[cluster][token] in {-1, 0, +1}.
  std::vector<std::vector<int>> polarities;

  /// +1 / -1 for sentiment words of the given cluster, 0 otherwise.
  int polarity(int token, std::size_t cluster) const;
};

ClusterLexicon cluster_lexicon(const SyntheticSpec& spec);

/// 1 when the summed polarities are positive, else 0.
int polarity_label(std::span<const int> tokens, const ClusterLexicon& lexicon, std::size_t cluster);

std::vector<int> parity_tags(std::span<const int> tokens);
std::vector<int> xor_tags(std::span<const int> low);
std::vector<int> run_start_tags(std::span<const int> mid);

TaskSuite gen_cluster_classification_suite(const SyntheticSpec& spec);
TaskSuite gen_hierarchy_labeling_suite(const SyntheticSpec& spec);
TaskSuite generate(const SyntheticSpec& spec);

/// Token accuracy on the test split of the best memoryless per-token
/// classifier fitted on the training split (the maximum-likelihood logistic
/// model over one-hot token features, i.e. the majority tag of each token).
double memoryless_probe_accuracy(const TaskSpec& task);

}  // namespace mtnas::tasks
