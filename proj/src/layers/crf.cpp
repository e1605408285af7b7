#include "mtnas/layers/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtnas/errors.hpp"

namespace mtnas::layers {
namespace {

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

Var crf_log_likelihood(std::span<const Var> emissions, std::span<const std::size_t> lengths,
                       std::span<const std::vector<int>> labels, Var transitions, Var start, Var stop) {
  if (emissions.empty()) throw ContractError("crf_log_likelihood: empty sequence");
  const std::size_t b = lengths.size();
  const std::size_t k = start.size();
  if (transitions.rank() != 2 || transitions.rows() != k || transitions.cols() != k || stop.size() != k) {
    throw DimensionError("crf_log_likelihood: transitions " + ad::to_string(transitions.shape()) + ", start " +
                         ad::to_string(start.shape()) + ", stop " + ad::to_string(stop.shape()));
  }
  if (labels.size() != b) throw DimensionError("crf_log_likelihood: label rows do not match batch");
  std::vector<ad::Node*> parents{transitions.node(), start.node(), stop.node()};
  for (Var e : emissions) {
    if (e.rank() != 2 || e.rows() != b || e.cols() != k) {
      throw DimensionError("crf_log_likelihood: emission step " + ad::to_string(e.shape()) + ", expected [" +
                           std::to_string(b) + "x" + std::to_string(k) + "]");
    }
    parents.push_back(e.node());
  }
  for (std::size_t r = 0; r < b; ++r) {
    if (lengths[r] == 0 || lengths[r] > emissions.size()) throw ContractError("crf_log_likelihood: bad sequence length");
    if (labels[r].size() != lengths[r]) throw DimensionError("crf_log_likelihood: label count differs from length");
    for (int y : labels[r]) {
      if (y < 0 || static_cast<std::size_t>(y) >= k) {
        throw BoundsError("crf_log_likelihood: label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
      }
    }
  }

  const auto trans = transitions.value();
  const auto st = start.value();
  const auto sp = stop.value();
  auto emit = [&](std::size_t t, std::size_t r, std::size_t j) { return emissions[t].value()[r * k + j]; };

  // Forward/backward tables per row, kept for the gradient.
  std::vector<std::vector<double>> alpha(b), beta(b);
  std::vector<double> log_z(b), out(b);
  std::vector<double> tmp(k);
  for (std::size_t r = 0; r < b; ++r) {
    const std::size_t n = lengths[r];
    auto& a = alpha[r];
    a.assign(n * k, 0.0);
    for (std::size_t j = 0; j < k; ++j) a[j] = st[j] + emit(0, r, j);
    for (std::size_t t = 1; t < n; ++t) {
      for (std::size_t j = 0; j < k; ++j) {
        double acc = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < k; ++i) acc = log_add(acc, a[(t - 1) * k + i] + trans[i * k + j]);
        a[t * k + j] = acc + emit(t, r, j);
      }
    }
    double z = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) z = log_add(z, a[(n - 1) * k + j] + sp[j]);
    log_z[r] = z;

    auto& be = beta[r];
    be.assign(n * k, 0.0);
    for (std::size_t j = 0; j < k; ++j) be[(n - 1) * k + j] = sp[j];
    for (std::size_t t = n - 1; t-- > 0;) {
      for (std::size_t i = 0; i < k; ++i) {
        double acc = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) acc = log_add(acc, trans[i * k + j] + emit(t + 1, r, j) + be[(t + 1) * k + j]);
        be[t * k + i] = acc;
      }
    }

    const auto& y = labels[r];
    double gold = st[y[0]] + sp[y[n - 1]];
    for (std::size_t t = 0; t < n; ++t) gold += emit(t, r, y[t]);
    for (std::size_t t = 1; t < n; ++t) gold += trans[y[t - 1] * k + y[t]];
    out[r] = gold - z;
  }

  std::vector<std::size_t> len(lengths.begin(), lengths.end());
  std::vector<std::vector<int>> gold(labels.begin(), labels.end());
  return transitions.tape().record(
      "crf_log_likelihood", {b}, std::move(out), std::move(parents),
      [alpha = std::move(alpha), beta = std::move(beta), log_z = std::move(log_z), len = std::move(len),
       gold = std::move(gold), k](ad::Node& node) {
        ad::Node* tr = node.parents[0];
        ad::Node* stn = node.parents[1];
        ad::Node* spn = node.parents[2];
        auto emission = [&](std::size_t t) { return node.parents[3 + t]; };
        for (std::size_t r = 0; r < len.size(); ++r) {
          const double g = node.grad[r];
          if (g == 0.0) continue;
          const std::size_t n = len[r];
          const auto& a = alpha[r];
          const auto& be = beta[r];
          const auto& y = gold[r];
          const double z = log_z[r];
          for (std::size_t t = 0; t < n; ++t) {
            ad::Node* e = emission(t);
            for (std::size_t j = 0; j < k; ++j) {
              const double marginal = std::exp(a[t * k + j] + be[t * k + j] - z);
              const double indicator = (y[t] == static_cast<int>(j)) ? 1.0 : 0.0;
              if (e->requires_grad) e->grad[r * k + j] += g * (indicator - marginal);
              if (t == 0 && stn->requires_grad) stn->grad[j] += g * (indicator - marginal);
              if (t == n - 1 && spn->requires_grad) spn->grad[j] += g * (indicator - marginal);
            }
          }
          if (tr->requires_grad) {
            for (std::size_t t = 1; t < n; ++t) {
              const double* em = emission(t)->value.data() + r * k;
              for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                  const double pair = std::exp(a[(t - 1) * k + i] + tr->value[i * k + j] + em[j] + be[t * k + j] - z);
                  tr->grad[i * k + j] -= g * pair;
                }
              }
              tr->grad[y[t - 1] * k + y[t]] += g;
            }
          }
        }
      });
}

CrfLayer::CrfLayer(const std::string& name, std::size_t labels)
    : transitions(name + ".transitions", {labels, labels}), start(name + ".start", {labels}), stop(name + ".stop", {labels}) {}

Var CrfLayer::log_likelihood(Tape& tape, Var emissions, std::span<const int> labels) {
  if (emissions.rank() != 2) throw DimensionError("crf: emissions must be [T×K], got " + ad::to_string(emissions.shape()));
  std::vector<Var> steps;
  for (std::size_t t = 0; t < emissions.rows(); ++t) steps.push_back(ad::slice_rows(emissions, t, t + 1));
  const std::size_t len[] = {emissions.rows()};
  const std::vector<int> rows[] = {std::vector<int>(labels.begin(), labels.end())};
  return log_likelihood(tape, steps, len, rows);
}

Var CrfLayer::log_likelihood(Tape& tape, std::span<const Var> emissions, std::span<const std::size_t> lengths,
                             std::span<const std::vector<int>> labels) {
  return crf_log_likelihood(emissions, lengths, labels, tape.param(transitions), tape.param(start), tape.param(stop));
}

ViterbiResult CrfLayer::viterbi(std::span<const double> emissions, std::size_t length) const {
  const std::size_t k = labels();
  if (length == 0) throw ContractError("crf_viterbi: empty sequence");
  if (emissions.size() != length * k) throw DimensionError("crf_viterbi: emissions do not match [T×K]");
  std::vector<double> best(k), next(k);
  std::vector<int> back(length * k, 0);
  for (std::size_t j = 0; j < k; ++j) best[j] = start.value[j] + emissions[j];
  for (std::size_t t = 1; t < length; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      int arg = 0;
      double hi = best[0] + transitions.value[j];
      for (std::size_t i = 1; i < k; ++i) {
        const double s = best[i] + transitions.value[i * k + j];
        if (s > hi) {
          hi = s;
          arg = static_cast<int>(i);
        }
      }
      next[j] = hi + emissions[t * k + j];
      back[t * k + j] = arg;
    }
    best.swap(next);
  }
  int last = 0;
  double hi = best[0] + stop.value[0];
  for (std::size_t j = 1; j < k; ++j) {
    if (best[j] + stop.value[j] > hi) {
      hi = best[j] + stop.value[j];
      last = static_cast<int>(j);
    }
  }
  ViterbiResult result;
  result.score = hi;
  result.path.assign(length, 0);
  result.path[length - 1] = last;
  for (std::size_t t = length - 1; t > 0; --t) result.path[t - 1] = back[t * k + result.path[t]];
  return result;
}

double CrfLayer::score(std::span<const double> emissions, std::span<const int> path) const {
  const std::size_t k = labels();
  const std::size_t n = path.size();
  if (n == 0) throw ContractError("crf score: empty path");
  double s = start.value[path[0]] + stop.value[path[n - 1]];
  for (std::size_t t = 0; t < n; ++t) s += emissions[t * k + path[t]];
  for (std::size_t t = 1; t < n; ++t) s += transitions.value[path[t - 1] * k + path[t]];
  return s;
}

CrfHead::CrfHead(const std::string& name, std::size_t in, std::size_t labels)
    : emission(name + ".emission", in, labels), crf(name + ".crf", labels) {}

std::vector<Var> CrfHead::emissions(Tape& tape, const SeqFeatures& seq) {
  std::vector<Var> out;
  out.reserve(seq.max_length());
  for (Var step : seq.steps) out.push_back(emission.forward_tail(tape, step));
  return out;
}

Var CrfHead::log_likelihood(Tape& tape, const SeqFeatures& seq, std::span<const std::vector<int>> labels) {
  const auto em = emissions(tape, seq);
  return crf.log_likelihood(tape, em, seq.lengths, labels);
}

std::vector<std::vector<int>> CrfHead::decode(Tape& tape, const SeqFeatures& seq) {
  const auto em = emissions(tape, seq);
  const std::size_t k = labels();
  std::vector<std::vector<int>> paths;
  std::vector<double> buffer;
  for (std::size_t r = 0; r < seq.batch(); ++r) {
    const std::size_t n = seq.lengths[r];
    buffer.assign(n * k, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      std::copy_n(em[t].value().begin() + r * k, k, buffer.begin() + t * k);
    }
    paths.push_back(crf.viterbi(buffer, n).path);
  }
  return paths;
}

ParamList CrfHead::params() {
  ParamList out = emission.params();
  for (Parameter* p : crf.params()) out.push_back(p);
  return out;
}

}  // namespace mtnas::layers
