#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mtnas/controller/controller.hpp"
#include "mtnas/errors.hpp"

using namespace mtnas;
using namespace mtnas::ctrl;
using mtnas::testing::gradcheck;

namespace {

ControllerConfig small(std::size_t tasks = 2, std::size_t L = 3, std::size_t depth = 3) {
  ControllerConfig c;
  c.tasks = tasks;
  c.pool_size = L;
  c.max_depth = depth;
  c.task_embed_dim = 4;
  c.hidden = 6;
  return c;
}

double log_prob(ControllerPolicy& policy, std::size_t task, const std::vector<int>& actions) {
  Tape tape;
  return policy.log_prob_of(tape, task, actions).item();
}

// Every sequence of length ≤ max_depth over [0, L).
void for_each_sequence(std::size_t L, std::size_t depth, const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> seq;
  std::function<void()> rec = [&] {
    visit(seq);
    if (seq.size() == depth) return;
    for (std::size_t a = 0; a < L; ++a) {
      seq.push_back(static_cast<int>(a));
      rec();
      seq.pop_back();
    }
  };
  rec();
}

}  // namespace

TEST_SUITE("controller") {

TEST_CASE("zero policy: uniform steps, greedy 0 until the depth cap, uniform traces") {
  ControllerPolicy policy(small(1, 3, 4));
  policy.zero_parameters();
  const auto g = policy.greedy(0);
  CHECK(g.actions == std::vector<int>{0, 0, 0, 0});
  const auto trace = policy.trace(0);
  CHECK(trace.size() == 4);
  for (const auto& v : trace) {
    REQUIRE(v.size() == 4);
    for (double p : v) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
  }
  CHECK(log_prob(policy, 0, {1, 2}) == doctest::Approx(3.0 * std::log(0.25)).epsilon(1e-12));
  CHECK(log_prob(policy, 0, {}) == doctest::Approx(std::log(0.25)).epsilon(1e-12));
  // Forced Stop at the cap adds no term.
  CHECK(log_prob(policy, 0, {0, 1, 2, 0}) == doctest::Approx(4.0 * std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("zero policy with epsilon 0 samples uniformly; epsilon 1 is uniform for any policy") {
  for (double eps : {0.0, 1.0}) {
    ControllerPolicy policy(small(1, 3, 1));
    if (eps == 0.0) {
      policy.zero_parameters();
    } else {
      Rng init(4);
      policy.init_uniform(init);
      policy.output.bias.value = {5.0, -3.0, 0.0, 1.0};  // far from uniform
    }
    Rng rng(17);
    const int draws = 10000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < draws; ++i) {
      const auto s = policy.sample(0, eps, rng);
      ++counts[s.actions.empty() ? 3 : s.actions[0]];
    }
    const double p = 0.25, sigma = std::sqrt(draws * p * (1 - p));
    for (int c : counts) CHECK(std::abs(c - draws * p) <= 3.0 * sigma);
  }
}

TEST_CASE("sampling is deterministic for a fixed seed and records the policy's own log-probs") {
  ControllerPolicy policy(small(2, 3, 4));
  Rng init(5);
  policy.init_uniform(init);
  policy.output.bias.value = {1.0, -1.0, 0.5, -0.5};
  for (double eps : {0.0, 0.2, 1.0}) {
    Rng a(9), b(9);
    for (int i = 0; i < 50; ++i) {
      const auto s = policy.sample(1, eps, a);
      const auto t = policy.sample(1, eps, b);
      CHECK(s.actions == t.actions);
      double total = 0.0;
      for (double lp : s.log_probs) total += lp;
      CHECK(total == doctest::Approx(log_prob(policy, 1, s.actions)).epsilon(1e-12));
      CHECK(s.log_probs.size() == (s.actions.size() < 4 ? s.actions.size() + 1 : 4));
    }
  }
}

TEST_CASE("dominant Stop logit gives an empty greedy sequence") {
  ControllerPolicy policy(small(1, 3, 5));
  policy.zero_parameters();
  policy.output.bias.value = {0.0, 0.0, 0.0, 4.0};
  CHECK(policy.greedy(0).actions.empty());
  CHECK(policy.trace(0).size() == 1);
}

TEST_CASE("sequence probabilities sum to one over the depth-capped space") {
  ControllerPolicy policy(small(2, 2, 3));
  Rng init(6);
  policy.init_uniform(init);
  for (auto* p : policy.params())
    for (double& v : p->value) v *= 20.0;  // make the distribution far from uniform
  for (std::size_t task = 0; task < 2; ++task) {
    double total = 0.0;
    for_each_sequence(2, 3, [&](const std::vector<int>& s) { total += std::exp(log_prob(policy, task, s)); });
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("greedy equals the most probable path of a near-deterministic policy") {
  Rng init(7);
  int checked = 0;
  for (int attempt = 0; attempt < 200 && checked < 20; ++attempt) {
    ControllerPolicy policy(small(1, 3, 3));
    policy.init_uniform(init, 3.0);
    const auto trace = policy.trace(0);
    bool peaked = true;
    for (const auto& v : trace) peaked = peaked && *std::max_element(v.begin(), v.end()) >= 0.9;
    if (!peaked) continue;
    ++checked;
    std::vector<int> best;
    double best_lp = -1e300;
    for_each_sequence(3, 3, [&](const std::vector<int>& s) {
      const double lp = log_prob(policy, 0, s);
      if (lp > best_lp) {
        best_lp = lp;
        best = s;
      }
    });
    CHECK(policy.greedy(0).actions == best);
  }
  CHECK(checked >= 5);
}

TEST_CASE("traces sum to one") {
  ControllerPolicy policy(small(3, 4, 5));
  Rng init(8);
  policy.init_uniform(init, 1.0);
  for (std::size_t task = 0; task < 3; ++task) {
    for (const auto& v : policy.trace(task)) {
      double s = 0.0;
      for (double p : v) s += p;
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("invalid actions and over-long sequences are bounds errors") {
  ControllerPolicy policy(small(1, 3, 2));
  Tape tape;
  const std::vector<int> bad{3}, negative{-1}, too_long{0, 1, 2};
  CHECK_THROWS_AS(policy.log_prob_of(tape, 0, bad), BoundsError);
  CHECK_THROWS_AS(policy.log_prob_of(tape, 0, negative), BoundsError);
  CHECK_THROWS_AS(policy.log_prob_of(tape, 0, too_long), BoundsError);
  CHECK_THROWS_AS(policy.log_prob_of(tape, 1, {}), BoundsError);
}

TEST_CASE("log_prob_of gradients match finite differences") {
  Rng rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    ControllerPolicy policy(small(2, 3, 4));
    policy.init_uniform(rng, 1.0);
    auto params = policy.params();
    const auto seq = policy.sample(rep % 2, 0.5, rng).actions;
    auto loss = [&](Tape& tape) { return policy.log_prob_of(tape, rep % 2, seq); };
    CHECK(gradcheck(params, loss) <= 1e-4);
  }
}

}  // TEST_SUITE
