#include <cmath>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "op_cases.hpp"
#include "mtnas/autodiff/adam.hpp"
#include "mtnas/autodiff/ops.hpp"
#include "mtnas/errors.hpp"

using namespace mtnas;
using namespace mtnas::ad;
using mtnas::testing::gradcheck;
using mtnas::testing::random_values;
using mtnas::testing::weighted_sum;

namespace {

Parameter make_param(const char* name, Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Parameter p(name, shape);
  p.value = random_values(p.size(), rng, lo, hi);
  return p;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("mean over rows of [[1,3],[5,7]] is [3,5]") {
  Tape tape;
  Var a = tape.constant({2, 2}, {1, 3, 5, 7});
  Var m = mean(a, 0);
  CHECK(m.at(0) == doctest::Approx(3.0));
  CHECK(m.at(1) == doctest::Approx(5.0));
  Var r = mean(a, 1);
  CHECK(r.at(0) == doctest::Approx(2.0));
  CHECK(r.at(1) == doctest::Approx(6.0));
}

TEST_CASE("log_softmax of equal logits is ln 1/2") {
  Tape tape;
  Var out = log_softmax(tape.constant({2}, {0.0, 0.0}));
  CHECK(out.at(0) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(out.at(1) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("logsumexp does not overflow") {
  Tape tape;
  Var out = logsumexp(tape.constant({2}, {1000.0, 1000.0}));
  CHECK(out.item() == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
  Var ls = log_softmax(tape.constant({3}, {-1000.0, 0.0, 1000.0}));
  for (double v : ls.value()) CHECK(std::isfinite(v));
}

TEST_CASE("d(x*x)/dx at 3 is 6 and sigmoid'(0) is 1/4") {
  Parameter x("x", {1});
  x.value = {3.0};
  {
    Tape tape;
    Var v = tape.param(x);
    tape.backward(mul(v, v));
  }
  CHECK(x.grad[0] == doctest::Approx(6.0));
  x.zero_grad();
  x.value = {0.0};
  {
    Tape tape;
    tape.backward(sigmoid(tape.param(x)));
  }
  CHECK(x.grad[0] == doctest::Approx(0.25));
}

TEST_CASE("parameter gradients accumulate across backward passes") {
  Parameter x("x", {1});
  x.value = {2.0};
  for (int pass = 0; pass < 3; ++pass) {
    Tape tape;
    Var v = tape.param(x);
    tape.backward(mul(v, v));
  }
  CHECK(x.grad[0] == doctest::Approx(12.0));
  x.zero_grad();
  CHECK(x.grad[0] == 0.0);
}

TEST_CASE("backward is linear in the root") {
  Rng rng(3);
  Parameter a = make_param("a", {3, 4}, rng), b = make_param("b", {4, 2}, rng);
  ParamList list{&a, &b};
  auto grads = [&](double wf, double wg) {
    zero_grad(list);
    Tape tape;
    Var va = tape.param(a), vb = tape.param(b);
    Var f = sum(tanh(matmul(va, vb)));
    Var g = sum(mul(va, va));
    tape.backward(add(scale(f, wf), scale(g, wg)));
    std::vector<double> out = a.grad;
    out.insert(out.end(), b.grad.begin(), b.grad.end());
    return out;
  };
  const auto gf = grads(1.0, 0.0), gg = grads(0.0, 1.0), mix = grads(2.5, -0.75);
  for (std::size_t i = 0; i < mix.size(); ++i) CHECK(mix[i] == doctest::Approx(2.5 * gf[i] - 0.75 * gg[i]).epsilon(1e-10));
}

TEST_CASE("non-scalar root is a contract error") {
  Tape tape;
  Var x = tape.variable({2}, {1.0, 2.0});
  CHECK_THROWS_AS(tape.backward(x), ContractError);
}

TEST_CASE("shape and index errors") {
  Tape tape;
  Var a = tape.constant({2, 3}, 1.0);
  Var b = tape.constant({2, 3}, 1.0);
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  CHECK_THROWS_AS(add(a, tape.constant({3, 2}, 1.0)), DimensionError);
  const std::vector<int> bad{0, 5};
  CHECK_THROWS_AS(embedding_gather(tape.constant({4, 2}, 0.0), bad), BoundsError);
  const std::vector<int> neg{-1, 0};
  CHECK_THROWS_AS(pick(a, neg), BoundsError);
}

TEST_CASE("gradients of every op match finite differences") {
  std::uint64_t seed = 1;
  for (const auto& op : mtnas::testing::op_cases()) {
    CAPTURE(op.name);
    CHECK(mtnas::testing::worst_error(op, 10, seed++) <= 1e-4);
  }
}

TEST_CASE("tape records parents before children") {
  Tape tape;
  Var a = tape.variable({2}, {1.0, 2.0});
  Var b = tanh(mul(a, a));
  Var c = add(b, a);
  for (std::size_t i = 0; i < tape.size(); ++i) {
    for (const Node* p : tape.node(i).parents) CHECK(p->index < i);
  }
  CHECK(c.node()->index == tape.size() - 1);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Parameter p("p", {3});
  p.value = {1.0, -2.0, 0.5};
  const auto before = p.value;
  Adam adam;
  ParamList list{&p};
  adam.step(list);
  CHECK(p.value == before);
}

TEST_CASE("adam: first step moves each coordinate by the learning rate") {
  Parameter p("p", {2});
  p.value = {1.0, 1.0};
  p.grad = {0.3, -5.0};
  Adam adam(AdamConfig{.learning_rate = 0.01});
  ParamList list{&p};
  adam.step(list);
  // m̂ = g and v̂ = g², so the step is lr · g / (|g| + ε).
  CHECK(p.value[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
  CHECK(p.value[1] == doctest::Approx(1.0 + 0.01 * 5.0 / (5.0 + 1e-8)).epsilon(1e-12));
  CHECK(p.grad[0] == 0.3);  // grads untouched
}

TEST_CASE("adam: minimizing x^2 shrinks |x| monotonically after burn-in") {
  Parameter x("x", {1});
  x.value = {1.0};
  Adam adam(AdamConfig{.learning_rate = 0.01});
  ParamList list{&x};
  double previous = 1.0;
  for (int step = 0; step < 100; ++step) {
    x.grad = {2.0 * x.value[0]};
    adam.step(list);
    if (step >= 5) CHECK(std::abs(x.value[0]) < previous);
    previous = std::abs(x.value[0]);
  }
}

TEST_CASE("adam: non-finite gradient fails fast") {
  Parameter x("x", {1});
  x.value = {1.0};
  x.grad = {std::nan("")};
  Adam adam;
  ParamList list{&x};
  CHECK_THROWS_AS(adam.step(list), NumericError);
}

TEST_CASE("adam state round-trips by name") {
  Parameter x("x", {2});
  x.value = {1.0, 2.0};
  x.grad = {0.5, -0.5};
  Adam a, b;
  ParamList list{&x};
  a.step(list);
  b.import_state(a.export_state(), list);
  Parameter y = x;
  ParamList ylist{&y};
  Adam c;
  c.import_state(a.export_state(), ylist);
  a.step(list);
  c.step(ylist);
  CHECK(x.value == y.value);
}

}  // TEST_SUITE
