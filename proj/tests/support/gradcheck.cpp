#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtnas/autodiff/ops.hpp"

namespace mtnas::testing {

namespace {

double evaluate(const LossFn& loss) {
  ad::Tape tape;
  return loss(tape).item();
}

}  // namespace

double gradcheck(std::span<ad::Parameter* const> params, const LossFn& loss, double step) {
  ad::zero_grad(params);
  {
    ad::Tape tape;
    tape.backward(loss(tape));
  }
  double worst = 0.0;
  for (ad::Parameter* p : params) {
    double diff = 0.0, analytic = 0.0, numeric = 0.0;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = evaluate(loss);
      p->value[i] = saved - step;
      const double down = evaluate(loss);
      p->value[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      diff += (fd - p->grad[i]) * (fd - p->grad[i]);
      analytic += p->grad[i] * p->grad[i];
      numeric += fd * fd;
    }
    const double scale = std::sqrt(std::max(analytic, numeric));
    if (scale == 0.0) continue;
    worst = std::max(worst, std::sqrt(diff) / scale);
  }
  ad::zero_grad(params);
  return worst;
}

ad::Var weighted_sum(ad::Var out, const std::vector<double>& weights) {
  ad::Var w = out.tape().constant(out.shape(), weights);
  return ad::sum(ad::mul(out, w));
}

std::vector<double> random_values(std::size_t n, Rng& rng, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

CrfEnumeration enumerate_crf(std::span<const double> emissions, std::size_t length, std::size_t labels,
                             std::span<const double> transitions, std::span<const double> start,
                             std::span<const double> stop) {
  CrfEnumeration out;
  std::size_t total = 1;
  for (std::size_t t = 0; t < length; ++t) total *= labels;
  std::vector<int> path(length, 0);
  std::vector<double> scores;
  scores.reserve(total);
  out.best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    for (std::size_t t = length; t-- > 0;) {
      path[t] = static_cast<int>(rest % labels);
      rest /= labels;
    }
    double s = start[path[0]] + stop[path[length - 1]];
    for (std::size_t t = 0; t < length; ++t) {
      s += emissions[t * labels + path[t]];
      if (t > 0) s += transitions[path[t - 1] * labels + path[t]];
    }
    scores.push_back(s);
    if (s > out.best_score) {
      out.best_score = s;
      out.best_path = path;
    }
  }
  // Plain log of a sum of exponentials, shifted by the maximum.
  double acc = 0.0;
  for (double s : scores) acc += std::exp(s - out.best_score);
  out.log_partition = out.best_score + std::log(acc);
  return out;
}

}  // namespace mtnas::testing
