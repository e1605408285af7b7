#include "mtnas/layers/layers.hpp"

#include "mtnas/errors.hpp"

namespace mtnas::layers {

void init_uniform(std::span<Parameter* const> params, Rng& rng, double scale) {
  for (Parameter* p : params) {
    for (double& v : p->value) v = rng.uniform(-scale, scale);
  }
}

bool SeqFeatures::mask(std::size_t t, std::vector<std::uint8_t>& out) const {
  out.resize(lengths.size());
  bool partial = false;
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    out[b] = t < lengths[b] ? 1 : 0;
    partial = partial || out[b] == 0;
  }
  return partial;
}

SeqFeatures single_sequence(Var matrix) {
  if (matrix.rank() != 2) throw DimensionError("single_sequence: expected [T×d], got " + ad::to_string(matrix.shape()));
  SeqFeatures seq;
  for (std::size_t t = 0; t < matrix.rows(); ++t) seq.steps.push_back(ad::slice_rows(matrix, t, t + 1));
  seq.lengths = {matrix.rows()};
  return seq;
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".weight", {in, out}), bias(name + ".bias", {out}) {}

Var Linear::forward(Tape& tape, Var x) {
  if (x.rank() != 2 || x.cols() != in_width()) {
    throw DimensionError("linear " + weight.name + ": input " + ad::to_string(x.shape()) + ", expected width " +
                         std::to_string(in_width()));
  }
  return ad::add_bias(ad::matmul(x, tape.param(weight)), tape.param(bias));
}

Var Linear::forward_tail(Tape& tape, Var x) {
  if (x.rank() != 2 || x.cols() == 0 || x.cols() > in_width()) {
    throw DimensionError("linear " + weight.name + ": input " + ad::to_string(x.shape()) + ", expected width at most " +
                         std::to_string(in_width()));
  }
  if (x.cols() == in_width()) return forward(tape, x);
  Var w = ad::slice_rows(tape.param(weight), in_width() - x.cols(), in_width());
  return ad::add_bias(ad::matmul(x, w), tape.param(bias));
}

EmbeddingTable::EmbeddingTable(const std::string& name, std::size_t rows, std::size_t dim)
    : weights(name + ".weights", {rows, dim}) {}

SeqFeatures EmbeddingTable::lookup(Tape& tape, std::span<const int> tokens, std::span<const std::size_t> lengths,
                                   std::size_t max_length) {
  const std::size_t b = lengths.size();
  if (tokens.size() != b * max_length) {
    throw DimensionError("embedding lookup: " + std::to_string(tokens.size()) + " ids for " + std::to_string(b) +
                         "x" + std::to_string(max_length) + " batch");
  }
  Var table = tape.param(weights);
  SeqFeatures seq;
  seq.lengths.assign(lengths.begin(), lengths.end());
  std::vector<int> column(b);
  for (std::size_t t = 0; t < max_length; ++t) {
    for (std::size_t i = 0; i < b; ++i) column[i] = tokens[i * max_length + t];
    seq.steps.push_back(ad::embedding_gather(table, column));
  }
  return seq;
}

LstmCell::LstmCell(const std::string& name, std::size_t in, std::size_t hidden)
    : input_weight(name + ".input_weight", {in, 4 * hidden}),
      hidden_weight(name + ".hidden_weight", {hidden, 4 * hidden}),
      bias(name + ".bias", {4 * hidden}) {}

std::pair<Var, Var> LstmCell::step(Tape& tape, Var x, Var h, Var c) {
  const std::size_t hd = hidden();
  Var z = ad::matmul(x, tape.param(input_weight));
  if (h) z = ad::add(z, ad::matmul(h, tape.param(hidden_weight)));
  z = ad::add_bias(z, tape.param(bias));
  if (!c) c = tape.constant({x.rows(), hd}, 0.0);
  Var hc = ad::lstm_cell(z, c);
  return {ad::slice_cols(hc, 0, hd), ad::slice_cols(hc, hd, 2 * hd)};
}

BiLstmModule::BiLstmModule(std::string id, std::size_t width) : id_(std::move(id)), width_(width) {
  if (width == 0 || width % 2 != 0) {
    throw ContractError("bilstm " + id_ + ": width must be even and positive, got " + std::to_string(width));
  }
  forward_cell = LstmCell(id_ + ".fwd", width, width / 2);
  backward_cell = LstmCell(id_ + ".bwd", width, width / 2);
}

ParamList BiLstmModule::params() {
  ParamList out = forward_cell.params();
  for (Parameter* p : backward_cell.params()) out.push_back(p);
  return out;
}

SeqFeatures BiLstmModule::forward(Tape& tape, const SeqFeatures& input) {
  if (input.width() != width_) {
    throw DimensionError("bilstm " + id_ + ": input width " + std::to_string(input.width()) + ", module width " +
                         std::to_string(width_));
  }
  const std::size_t steps = input.max_length();
  const std::size_t b = input.batch();
  const std::size_t half = width_ / 2;
  std::vector<Var> fwd(steps), bwd(steps);
  std::vector<std::uint8_t> mask;
  Var zeros;
  auto zero_state = [&]() {
    if (!zeros) zeros = tape.constant({b, half}, 0.0);
    return zeros;
  };

  Var h, c;
  for (std::size_t t = 0; t < steps; ++t) {
    auto [hn, cn] = forward_cell.step(tape, input.steps[t], h, c);
    if (input.mask(t, mask)) {
      hn = ad::select_rows(mask, hn, h ? h : zero_state());
      cn = ad::select_rows(mask, cn, c ? c : zero_state());
    }
    h = hn;
    c = cn;
    fwd[t] = h;
  }
  h = Var();
  c = Var();
  for (std::size_t t = steps; t-- > 0;) {
    auto [hn, cn] = backward_cell.step(tape, input.steps[t], h, c);
    if (input.mask(t, mask)) {
      hn = ad::select_rows(mask, hn, h ? h : zero_state());
      cn = ad::select_rows(mask, cn, c ? c : zero_state());
    }
    h = hn;
    c = cn;
    bwd[t] = h;
  }

  SeqFeatures out;
  out.lengths = input.lengths;
  out.steps.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const Var halves[] = {fwd[t], bwd[t]};
    out.steps.push_back(ad::concat(halves));
  }
  return out;
}

AvgPoolLinearHead::AvgPoolLinearHead(const std::string& name, std::size_t in, std::size_t classes)
    : linear(name, in, classes) {}

Var AvgPoolLinearHead::log_probs(Tape& tape, const SeqFeatures& seq) {
  if (seq.max_length() == 0) throw ContractError("avgpool head: empty sequence");
  return ad::log_softmax(linear.forward_tail(tape, ad::masked_time_mean(seq.steps, seq.lengths)));
}

CrossStitchUnit::CrossStitchUnit(const std::string& name, std::size_t tasks) : alpha(name + ".alpha", {tasks, tasks}) {
  for (std::size_t i = 0; i < tasks; ++i) alpha.value[i * tasks + i] = 1.0;
}

void CrossStitchUnit::init_near_identity(Rng& rng, double noise) {
  const std::size_t t = tasks();
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) alpha.value[i * t + j] = (i == j ? 1.0 : 0.0) + rng.uniform(-noise, noise);
  }
}

std::vector<Var> CrossStitchUnit::mix(Tape& tape, std::span<const Var> inputs) {
  if (inputs.size() != tasks()) {
    throw DimensionError("cross_stitch " + alpha.name + ": " + std::to_string(inputs.size()) + " inputs for " +
                         std::to_string(tasks()) + " tasks");
  }
  Var a = tape.param(alpha);
  std::vector<Var> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back(ad::linear_combination(inputs, ad::row(a, i)));
  return out;
}

}  // namespace mtnas::layers
