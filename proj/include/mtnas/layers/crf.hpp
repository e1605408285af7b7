#pragma once

// Linear-chain CRF. Transition score transitions[i,j] is paid for moving from
// label i to label j; start[j] / stop[j] for opening / closing on label j.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mtnas/autodiff/tensor.hpp"
#include "mtnas/layers/layers.hpp"

namespace mtnas::layers {

/// Batched log p(y|x) over sequences whose emissions are given per step as
/// [B×K] tensors. Result is [B]. Gradients come from forward-backward
/// marginals. Labels outside [0,K) raise BoundsError.
Var crf_log_likelihood(std::span<const Var> emissions, std::span<const std::size_t> lengths,
                       std::span<const std::vector<int>> labels, Var transitions, Var start, Var stop);

struct ViterbiResult {
  std::vector<int> path;
  double score = 0.0;
};

class CrfLayer {
 public:
  CrfLayer() = default;
  CrfLayer(const std::string& name, std::size_t labels);

  /// Single sequence, emissions [T×K]; returns shape [1].
  Var log_likelihood(Tape& tape, Var emissions, std::span<const int> labels);
  /// Batched form; emissions[t] is [B×K].
  Var log_likelihood(Tape& tape, std::span<const Var> emissions, std::span<const std::size_t> lengths,
                     std::span<const std::vector<int>> labels);

  /// Best path for row-major emissions [T×K]; ties go to the lower label.
  ViterbiResult viterbi(std::span<const double> emissions, std::size_t length) const;
  /// Unnormalized score of a label path.
  double score(std::span<const double> emissions, std::span<const int> path) const;

  ParamList params() { return {&transitions, &start, &stop}; }
  std::size_t labels() const { return start.shape[0]; }

  Parameter transitions;  // [K×K]
  Parameter start;        // [K]
  Parameter stop;         // [K]
};

/// Per-step linear emissions over sequence features followed by a CRF.
/// Narrow inputs follow Linear::forward_tail.
class CrfHead {
 public:
  CrfHead() = default;
  CrfHead(const std::string& name, std::size_t in, std::size_t labels);

  std::vector<Var> emissions(Tape& tape, const SeqFeatures& seq);
  /// [B] sequence log-likelihoods.
  Var log_likelihood(Tape& tape, const SeqFeatures& seq, std::span<const std::vector<int>> labels);
  /// Viterbi paths, one per batch row, truncated to that row's length.
  std::vector<std::vector<int>> decode(Tape& tape, const SeqFeatures& seq);

  ParamList params();
  std::size_t in_width() const { return emission.in_width(); }
  std::size_t labels() const { return crf.labels(); }

  Linear emission;
  CrfLayer crf;
};

}  // namespace mtnas::layers
