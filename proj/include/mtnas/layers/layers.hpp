#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtnas/autodiff/ops.hpp"
#include "mtnas/autodiff/tensor.hpp"
#include "mtnas/rng.hpp"

namespace mtnas::layers {

using ad::Parameter;
using ad::ParamList;
using ad::Tape;
using ad::Var;

/// Default half-width of the uniform parameter initializer.
inline constexpr double kInitScale = 0.08;

void init_uniform(std::span<Parameter* const> params, Rng& rng, double scale = kInitScale);

/// A padded batch of feature sequences: steps[t] is [B×width]; row b is
/// meaningful only for t < lengths[b].
struct SeqFeatures {
  std::vector<Var> steps;
  std::vector<std::size_t> lengths;

  std::size_t batch() const { return lengths.size(); }
  std::size_t max_length() const { return steps.size(); }
  std::size_t width() const { return steps.empty() ? 0 : steps.front().cols(); }
  /// Row mask for step t; returns false when every row is valid.
  bool mask(std::size_t t, std::vector<std::uint8_t>& out) const;
};

/// Splits a [T×d] matrix into a single-sequence SeqFeatures.
SeqFeatures single_sequence(Var matrix);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out);

  Var forward(Tape& tape, Var x);
  /// Accepts inputs narrower than in_width() by using the trailing weight
  /// rows, as if the missing leading features were zero.
  Var forward_tail(Tape& tape, Var x);
  ParamList params() { return {&weight, &bias}; }
  std::size_t in_width() const { return weight.shape[0]; }
  std::size_t out_width() const { return weight.shape[1]; }

  Parameter weight;  // [in×out]
  Parameter bias;    // [out]
};

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(const std::string& name, std::size_t rows, std::size_t dim);

  /// tokens is a row-major [B×T] padded id matrix.
  SeqFeatures lookup(Tape& tape, std::span<const int> tokens, std::span<const std::size_t> lengths,
                     std::size_t max_length);
  ParamList params() { return {&weights}; }
  std::size_t rows() const { return weights.shape[0]; }
  std::size_t dim() const { return weights.shape[1]; }

  Parameter weights;  // [rows×dim]
};

class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(const std::string& name, std::size_t in, std::size_t hidden);

  /// One step. Null h/c stand for zero state.
  std::pair<Var, Var> step(Tape& tape, Var x, Var h, Var c);
  ParamList params() { return {&input_weight, &hidden_weight, &bias}; }
  std::size_t hidden() const { return hidden_weight.shape[0]; }
  std::size_t in_width() const { return input_weight.shape[0]; }

  Parameter input_weight;   // [in×4h]
  Parameter hidden_weight;  // [h×4h]
  Parameter bias;           // [4h]
};

/// The shareable unit: a bidirectional LSTM whose output width equals its
/// input width d (each direction has d/2 hidden units), so modules compose
/// in any order and multiplicity.
class BiLstmModule {
 public:
  BiLstmModule() = default;
  BiLstmModule(std::string id, std::size_t width);

  SeqFeatures forward(Tape& tape, const SeqFeatures& input);
  ParamList params();
  const std::string& id() const { return id_; }
  std::size_t width() const { return width_; }

  LstmCell forward_cell;
  LstmCell backward_cell;

 private:
  std::string id_;
  std::size_t width_ = 0;
};

/// Mean over valid time steps, affine map, log-softmax. Inputs narrower than
/// in_width() are treated as zero-padded on the left (see Linear::forward_tail).
class AvgPoolLinearHead {
 public:
  AvgPoolLinearHead() = default;
  AvgPoolLinearHead(const std::string& name, std::size_t in, std::size_t classes);

  /// [B×classes] log-probabilities.
  Var log_probs(Tape& tape, const SeqFeatures& seq);
  ParamList params() { return linear.params(); }
  std::size_t in_width() const { return linear.in_width(); }
  std::size_t classes() const { return linear.out_width(); }

  Linear linear;
};

/// Learned T×T mixing of per-task features: out_i = Σ_j α[i,j] · in_j.
class CrossStitchUnit {
 public:
  CrossStitchUnit() = default;
  CrossStitchUnit(const std::string& name, std::size_t tasks);

  std::vector<Var> mix(Tape& tape, std::span<const Var> inputs);
  /// Identity plus uniform(-noise, noise).
  void init_near_identity(Rng& rng, double noise = 0.01);
  ParamList params() { return {&alpha}; }
  std::size_t tasks() const { return alpha.shape[0]; }

  Parameter alpha;  // [T×T]
};

}  // namespace mtnas::layers
