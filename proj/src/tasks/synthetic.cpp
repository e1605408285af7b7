#include "mtnas/tasks/synthetic.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <numeric>

#include "mtnas/errors.hpp"
#include "mtnas/rng.hpp"

namespace mtnas::tasks {
namespace {

std::vector<std::string> numbered_vocabulary(std::size_t size) {
  std::vector<std::string> words(size);
  words[0] = "<pad>";
  for (std::size_t i = 1; i < size; ++i) words[i] = "w" + std::to_string(i);
  return words;
}

void check_lengths(const SyntheticSpec& spec) {
  if (spec.min_length == 0 || spec.min_length > spec.max_length) {
    throw ConfigError("synthetic: need 0 < min_length <= max_length");
  }
  if (spec.samples_per_task < 10) throw ConfigError("synthetic: samples_per_task must be at least 10");
  if (spec.noise < 0.0 || spec.noise > 0.5) throw ConfigError("synthetic: noise must lie in [0, 0.5]");
}

void assign_splits(TaskSpec& task, std::vector<Sample> samples, std::uint64_t seed, std::size_t max_train) {
  const SplitIndices idx = split_indices(samples.size(), seed);
  for (std::size_t i : idx.train) {
    if (max_train == 0 || task.train.size() < max_train) task.train.push_back(samples[i]);
  }
  for (std::size_t i : idx.dev) task.dev.push_back(samples[i]);
  for (std::size_t i : idx.test) task.test.push_back(samples[i]);
}

}  // namespace

int ClusterLexicon::polarity(int token, std::size_t cluster) const {
  if (cluster >= polarities.size() || token < 0) return 0;
  const auto& row = polarities[cluster];
  return static_cast<std::size_t>(token) < row.size() ? row[static_cast<std::size_t>(token)] : 0;
}

ClusterLexicon cluster_lexicon(const SyntheticSpec& spec) {
  if (spec.lexicon_size == 0) throw ConfigError("cluster suite: lexicon_size must be positive");
  const std::size_t block = 2 * spec.lexicon_size;
  const std::size_t sentiment = spec.shared_lexicon ? block : spec.clusters * block;
  if (sentiment + 2 > spec.vocab_size) {
    throw ConfigError("cluster suite: " + std::to_string(sentiment) + " lexicon words do not fit a vocabulary of " +
                      std::to_string(spec.vocab_size) + " (need room for padding and filler words)");
  }
  ClusterLexicon lex;
  lex.filler_begin = 1;
  lex.filler_count = spec.vocab_size - 1 - sentiment;
  const std::size_t begin = 1 + lex.filler_count;
  lex.words.resize(spec.clusters);
  lex.polarities.assign(spec.clusters, std::vector<int>(spec.vocab_size, 0));

  // Shared block: word i belongs to group g = i mod G and cluster c reads its
  // polarity from Walsh row c+1, (-1)^popcount(g & (c+1)). Distinct nonzero
  // rows are balanced and orthogonal.
  std::size_t groups = 1;
  while (groups < spec.clusters + 1) groups *= 2;
  if (spec.shared_lexicon && block % groups != 0) {
    throw ConfigError("cluster suite: 2*lexicon_size must be a multiple of " + std::to_string(groups) +
                      " for a shared lexicon over " + std::to_string(spec.clusters) + " clusters");
  }
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    for (std::size_t i = 0; i < block; ++i) {
      std::size_t token;
      int pol;
      if (spec.shared_lexicon) {
        token = begin + i;
        pol = std::popcount((i % groups) & (c + 1)) % 2 == 0 ? 1 : -1;
      } else {
        token = begin + c * block + i;
        pol = i < spec.lexicon_size ? 1 : -1;
      }
      lex.polarities[c][token] = pol;
      lex.words[c][pol > 0 ? 0 : 1].push_back(static_cast<int>(token));
    }
  }
  return lex;
}

int polarity_label(std::span<const int> tokens, const ClusterLexicon& lexicon, std::size_t cluster) {
  int total = 0;
  for (int t : tokens) total += lexicon.polarity(t, cluster);
  return total > 0 ? 1 : 0;
}

std::vector<int> parity_tags(std::span<const int> tokens) {
  std::vector<int> out(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) out[i] = tokens[i] % 2;
  return out;
}

std::vector<int> xor_tags(std::span<const int> low) {
  std::vector<int> out(low.size());
  for (std::size_t i = 0; i < low.size(); ++i) out[i] = (i == 0 ? 0 : low[i - 1]) ^ low[i];
  return out;
}

std::vector<int> run_start_tags(std::span<const int> mid) {
  std::vector<int> out(mid.size());
  for (std::size_t i = 0; i < mid.size(); ++i) out[i] = (mid[i] == 1 && (i == 0 || mid[i - 1] == 0)) ? 1 : 0;
  return out;
}

TaskSuite gen_cluster_classification_suite(const SyntheticSpec& spec) {
  if (spec.clusters < 2 || spec.tasks_per_cluster < 2) {
    throw ConfigError("cluster suite: need at least 2 clusters and 2 tasks per cluster");
  }
  check_lengths(spec);
  if (spec.max_sentiment_words == 0) throw ConfigError("cluster suite: max_sentiment_words must be positive");
  const ClusterLexicon lex = cluster_lexicon(spec);

  TaskSuite suite;
  suite.vocabulary = numbered_vocabulary(spec.vocab_size);
  std::size_t id = 0;
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    for (std::size_t j = 0; j < spec.tasks_per_cluster; ++j, ++id) {
      Rng rng(mix_seed(spec.seed, 1000 + id));
      TaskSpec task;
      task.id = id;
      task.name = "c" + std::to_string(c) + "t" + std::to_string(j);
      task.type = TaskType::Classification;
      task.labels = {"neg", "pos"};
      task.cluster_id = static_cast<int>(c);
      std::vector<Sample> samples(spec.samples_per_task);
      std::vector<std::size_t> positions;
      for (Sample& s : samples) {
        const std::size_t len = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
        const std::size_t cap = std::min(len, spec.max_sentiment_words);
        const std::size_t odd_choices = (cap + 1) / 2;
        const std::size_t words = 1 + 2 * rng.below(odd_choices);
        s.tokens.resize(len);
        for (int& t : s.tokens) t = static_cast<int>(lex.filler_begin + rng.below(lex.filler_count));
        positions.resize(len);
        std::iota(positions.begin(), positions.end(), 0);
        for (std::size_t w = 0; w < words; ++w) {
          std::swap(positions[w], positions[w + rng.below(len - w)]);
          const std::size_t polarity = rng.below(2);
          const auto& set = lex.words[c][polarity];
          s.tokens[positions[w]] = set[rng.below(set.size())];
        }
        s.label = polarity_label(s.tokens, lex, c);
        if (rng.bernoulli(spec.noise)) s.label = 1 - s.label;
      }
      assign_splits(task, std::move(samples), mix_seed(spec.seed, 5000 + id), spec.max_train_samples);
      suite.tasks.push_back(std::move(task));
    }
  }
  return suite;
}

TaskSuite gen_hierarchy_labeling_suite(const SyntheticSpec& spec) {
  check_lengths(spec);
  if (spec.levels < 1 || spec.levels > 3) throw ConfigError("hierarchy suite: levels must be 1, 2 or 3");
  if (spec.vocab_size < 3) throw ConfigError("hierarchy suite: vocabulary too small");
  static const char* kNames[] = {"low", "mid", "high"};
  TaskSuite suite;
  suite.vocabulary = numbered_vocabulary(spec.vocab_size);
  for (std::size_t level = 0; level < spec.levels; ++level) {
    Rng rng(mix_seed(spec.seed, 2000 + level));
    TaskSpec task;
    task.id = level;
    task.name = kNames[level];
    task.type = TaskType::Tagging;
    task.labels = {"0", "1"};
    task.cluster_id = 0;
    task.level = static_cast<int>(level + 1);
    std::vector<Sample> samples(spec.samples_per_task);
    for (Sample& s : samples) {
      const std::size_t len = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
      s.tokens.resize(len);
      for (int& t : s.tokens) t = static_cast<int>(1 + rng.below(spec.vocab_size - 1));
      std::vector<int> tags = parity_tags(s.tokens);
      if (level >= 1) tags = xor_tags(tags);
      if (level >= 2) tags = run_start_tags(tags);
      s.tags = std::move(tags);
    }
    assign_splits(task, std::move(samples), mix_seed(spec.seed, 6000 + level), spec.max_train_samples);
    suite.tasks.push_back(std::move(task));
  }
  return suite;
}

TaskSuite generate(const SyntheticSpec& spec) {
  return spec.kind == GeneratorKind::Cluster ? gen_cluster_classification_suite(spec)
                                             : gen_hierarchy_labeling_suite(spec);
}

double memoryless_probe_accuracy(const TaskSpec& task) {
  if (task.type != TaskType::Tagging) throw ContractError("memoryless probe: tagging tasks only");
  const std::size_t k = task.label_count();
  std::map<int, std::vector<std::size_t>> counts;
  std::vector<std::size_t> overall(k, 0);
  for (const Sample& s : task.train) {
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      auto& c = counts[s.tokens[t]];
      c.resize(k, 0);
      ++c[s.tags[t]];
      ++overall[s.tags[t]];
    }
  }
  auto argmax = [](const std::vector<std::size_t>& c) {
    return static_cast<int>(std::max_element(c.begin(), c.end()) - c.begin());
  };
  const int fallback = argmax(overall);
  std::size_t correct = 0, total = 0;
  for (const Sample& s : task.test) {
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      auto it = counts.find(s.tokens[t]);
      const int guess = it == counts.end() ? fallback : argmax(it->second);
      correct += guess == s.tags[t];
      ++total;
    }
  }
  if (total == 0) throw ContractError("memoryless probe: empty test split");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace mtnas::tasks
