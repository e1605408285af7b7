#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mtnas/autodiff/ops.hpp"
#include "mtnas/errors.hpp"
#include "mtnas/kernels/kernels.hpp"
#include "mtnas/layers/crf.hpp"
#include "mtnas/layers/layers.hpp"

using namespace mtnas;
using namespace mtnas::layers;
using mtnas::testing::enumerate_crf;
using mtnas::testing::gradcheck;
using mtnas::testing::random_values;

namespace {

ad::Var matrix(Tape& tape, std::size_t rows, std::size_t cols, const std::vector<double>& values) {
  return tape.constant({rows, cols}, values);
}

std::vector<double> flatten(const SeqFeatures& seq, std::size_t row = 0) {
  std::vector<double> out;
  for (const Var& step : seq.steps) {
    const std::size_t w = step.cols();
    out.insert(out.end(), step.value().begin() + row * w, step.value().begin() + (row + 1) * w);
  }
  return out;
}

void randomize(BiLstmModule& m, Rng& rng, double scale = 0.5) {
  auto ps = m.params();
  init_uniform(ps, rng, scale);
}

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("bilstm output has width d at every step") {
  Rng rng(1);
  BiLstmModule m("m", 6);
  randomize(m, rng);
  Tape tape;
  SeqFeatures out = m.forward(tape, single_sequence(matrix(tape, 1, 6, random_values(6, rng))));
  REQUIRE(out.max_length() == 1);
  CHECK(out.width() == 6);
}

TEST_CASE("bilstm with zero parameters outputs zeros") {
  Rng rng(2);
  BiLstmModule m("m", 4);
  Tape tape;
  SeqFeatures out = m.forward(tape, single_sequence(matrix(tape, 5, 4, random_values(20, rng))));
  for (double v : flatten(out)) CHECK(v == 0.0);
}

TEST_CASE("bilstm rejects a width mismatch, naming the module") {
  BiLstmModule m("pool.m3", 4);
  Tape tape;
  try {
    m.forward(tape, single_sequence(tape.constant({2, 6}, 0.0)));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("pool.m3") != std::string::npos);
  }
  CHECK_THROWS_AS(BiLstmModule("odd", 5), ContractError);
}

TEST_CASE("bilstm: reversing the input swaps the direction halves") {
  Rng rng(3);
  const std::size_t d = 6, h = 3, T = 5;
  BiLstmModule m("m", d);
  randomize(m, rng);
  m.backward_cell.input_weight.value = m.forward_cell.input_weight.value;
  m.backward_cell.hidden_weight.value = m.forward_cell.hidden_weight.value;
  m.backward_cell.bias.value = m.forward_cell.bias.value;
  const auto x = random_values(T * d, rng);
  std::vector<double> xr(T * d);
  for (std::size_t t = 0; t < T; ++t) std::copy_n(x.begin() + t * d, d, xr.begin() + (T - 1 - t) * d);
  Tape tape;
  const auto y = flatten(m.forward(tape, single_sequence(matrix(tape, T, d, x))));
  const auto yr = flatten(m.forward(tape, single_sequence(matrix(tape, T, d, xr))));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < h; ++j) {
      CHECK(yr[t * d + j] == doctest::Approx(y[(T - 1 - t) * d + h + j]).epsilon(1e-12));
      CHECK(yr[t * d + h + j] == doctest::Approx(y[(T - 1 - t) * d + j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("bilstm output does not depend on batch composition") {
  Rng rng(4);
  const std::size_t d = 4;
  BiLstmModule m("m", d);
  randomize(m, rng);
  EmbeddingTable emb("e", 10, d);
  auto ep = emb.params();
  init_uniform(ep, rng, 1.0);
  const std::vector<int> alone{3, 1, 4};
  const std::vector<std::size_t> alone_len{3};
  // Same sequence padded next to a longer neighbour.
  const std::vector<int> batch{7, 7, 7, 7, 7, 3, 1, 4, 0, 0};
  const std::vector<std::size_t> batch_len{5, 3};
  Tape tape;
  const auto a = flatten(m.forward(tape, emb.lookup(tape, alone, alone_len, 3)));
  const auto b = flatten(m.forward(tape, emb.lookup(tape, batch, batch_len, 5)), 1);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("bilstm forward/backward agree across kernel tables") {
  const kernels::KernelTable* avx = kernels::avx2();
  if (avx == nullptr) return;
  Rng rng(5);
  BiLstmModule m("m", 16);
  randomize(m, rng, 0.3);
  const auto x = random_values(7 * 16, rng);
  auto run = [&](const kernels::KernelTable& table) {
    kernels::use(table);
    auto ps = m.params();
    ad::zero_grad(ps);
    Tape tape;
    SeqFeatures out = m.forward(tape, single_sequence(matrix(tape, 7, 16, x)));
    std::vector<Var> steps = out.steps;
    Var loss = ad::sum(ad::tanh(ad::concat(steps)));
    tape.backward(loss);
    std::vector<double> r{loss.item()};
    for (auto* p : ps) r.insert(r.end(), p->grad.begin(), p->grad.end());
    return r;
  };
  const kernels::KernelTable& previous = kernels::active();
  const auto s = run(kernels::scalar());
  const auto v = run(*avx);
  kernels::use(previous);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s[i] - v[i]) <= 1e-12 * (1.0 + std::abs(s[i])));
}

TEST_CASE("avgpool head: zero parameters give ln 1/2") {
  AvgPoolLinearHead head("h", 4, 2);
  Tape tape;
  Rng rng(6);
  Var lp = head.log_probs(tape, single_sequence(matrix(tape, 3, 4, random_values(12, rng))));
  CHECK(lp.at(0, 0) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(lp.at(0, 1) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("avgpool head: time permutation invariance and re-evaluation") {
  Rng rng(7);
  const std::size_t T = 4, d = 3, K = 3;
  AvgPoolLinearHead head("h", d, K);
  auto ps = head.params();
  init_uniform(ps, rng, 1.0);
  const auto x = random_values(T * d, rng);
  std::vector<double> xp(T * d);
  const std::size_t perm[] = {2, 0, 3, 1};
  for (std::size_t t = 0; t < T; ++t) std::copy_n(x.begin() + perm[t] * d, d, xp.begin() + t * d);
  Tape tape;
  Var a = head.log_probs(tape, single_sequence(matrix(tape, T, d, x)));
  Var b = head.log_probs(tape, single_sequence(matrix(tape, T, d, xp)));
  // Independent evaluation of the definition.
  std::vector<double> avg(d, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < d; ++j) avg[j] += x[t * d + j] / T;
  std::vector<double> z(K);
  for (std::size_t c = 0; c < K; ++c) {
    z[c] = head.linear.bias.value[c];
    for (std::size_t j = 0; j < d; ++j) z[c] += avg[j] * head.linear.weight.value[j * K + c];
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double norm = 0.0;
  for (double v : z) norm += std::exp(v - mx);
  for (std::size_t c = 0; c < K; ++c) {
    CHECK(a.at(0, c) == doctest::Approx(b.at(0, c)).epsilon(1e-12));
    CHECK(a.at(0, c) == doctest::Approx(z[c] - mx - std::log(norm)).epsilon(1e-12));
  }
}

TEST_CASE("linear forward_tail equals zero-padding the input on the left") {
  Rng rng(8);
  Linear lin("l", 5, 3);
  auto ps = lin.params();
  init_uniform(ps, rng, 1.0);
  const auto x = random_values(2 * 2, rng);
  std::vector<double> padded(2 * 5, 0.0);
  for (std::size_t r = 0; r < 2; ++r) std::copy_n(x.begin() + r * 2, 2, padded.begin() + r * 5 + 3);
  Tape tape;
  Var a = lin.forward_tail(tape, matrix(tape, 2, 2, x));
  Var b = lin.forward(tape, matrix(tape, 2, 5, padded));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-14));
  CHECK_THROWS_AS(lin.forward_tail(tape, tape.constant({2, 6}, 0.0)), DimensionError);
}

TEST_CASE("crf: single step reduces to log_softmax of emission plus start and stop") {
  Rng rng(9);
  CrfLayer crf("c", 3);
  auto ps = crf.params();
  init_uniform(ps, rng, 1.0);
  const auto e = random_values(3, rng);
  std::vector<double> z(3);
  for (int k = 0; k < 3; ++k) z[k] = e[k] + crf.start.value[k] + crf.stop.value[k];
  const double lse = std::log(std::exp(z[0]) + std::exp(z[1]) + std::exp(z[2]));
  for (int y = 0; y < 3; ++y) {
    Tape tape;
    const std::vector<int> label{y};
    CHECK(crf.log_likelihood(tape, matrix(tape, 1, 3, e), label).item() == doctest::Approx(z[y] - lse).epsilon(1e-12));
  }
}

TEST_CASE("crf: zero transitions factorize into per-step log_softmax") {
  Rng rng(10);
  CrfLayer crf("c", 3);
  const std::size_t T = 4;
  const auto e = random_values(T * 3, rng);
  const std::vector<int> y{2, 0, 1, 1};
  double want = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const double lse = std::log(std::exp(e[t * 3]) + std::exp(e[t * 3 + 1]) + std::exp(e[t * 3 + 2]));
    want += e[t * 3 + y[t]] - lse;
  }
  Tape tape;
  CHECK(crf.log_likelihood(tape, matrix(tape, T, 3, e), y).item() == doctest::Approx(want).epsilon(1e-12));
  const auto path = crf.viterbi(e, T).path;
  for (std::size_t t = 0; t < T; ++t) {
    const auto first = e.begin() + t * 3;
    CHECK(path[t] == std::max_element(first, first + 3) - first);
  }
}

TEST_CASE("crf matches exhaustive enumeration and normalizes") {
  Rng rng(11);
  for (std::size_t K = 1; K <= 3; ++K) {
    for (std::size_t T = 1; T <= 4; ++T) {
      for (int rep = 0; rep < 10; ++rep) {
        CrfLayer crf("c", K);
        auto ps = crf.params();
        init_uniform(ps, rng, 2.0);
        const auto e = random_values(T * K, rng, -2.0, 2.0);
        const auto oracle =
            enumerate_crf(e, T, K, crf.transitions.value, crf.start.value, crf.stop.value);
        const auto vit = crf.viterbi(e, T);
        CHECK(vit.path == oracle.best_path);
        CHECK(std::abs(vit.score - oracle.best_score) <= 1e-8);
        CHECK(std::abs(crf.score(e, vit.path) - vit.score) <= 1e-12);
        // Every path's probability; their sum is one.
        double total = 0.0;
        std::size_t count = 1;
        for (std::size_t t = 0; t < T; ++t) count *= K;
        for (std::size_t code = 0; code < count; ++code) {
          std::vector<int> y(T);
          std::size_t rest = code;
          for (std::size_t t = T; t-- > 0;) {
            y[t] = static_cast<int>(rest % K);
            rest /= K;
          }
          Tape tape;
          const double ll = crf.log_likelihood(tape, matrix(tape, T, K, e), y).item();
          CHECK(std::abs((crf.score(e, y) - ll) - oracle.log_partition) <= 1e-8);
          total += std::exp(ll);
        }
        CHECK(std::abs(total - 1.0) <= 1e-8);
      }
    }
  }
}

TEST_CASE("crf viterbi breaks ties toward the lower label") {
  CrfLayer crf("c", 3);
  const std::vector<double> e(2 * 3, 0.0);
  CHECK(crf.viterbi(e, 2).path == std::vector<int>{0, 0});
}

TEST_CASE("crf rejects out-of-range labels") {
  CrfLayer crf("c", 2);
  Tape tape;
  const std::vector<int> y{0, 2};
  CHECK_THROWS_AS(crf.log_likelihood(tape, tape.constant({2, 2}, 0.0), y), BoundsError);
}

TEST_CASE("crf gradients match finite differences") {
  Rng rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    CrfLayer crf("c", 3);
    auto ps = crf.params();
    init_uniform(ps, rng, 2.0);
    ad::Parameter e0("e0", {2, 3}), e1("e1", {2, 3}), e2("e2", {2, 3});
    for (auto* p : {&e0, &e1, &e2}) p->value = random_values(6, rng, -2.0, 2.0);
    const std::vector<std::size_t> lengths{3, 2};
    const std::vector<std::vector<int>> labels{{0, 2, 1}, {1, 1}};
    ad::ParamList all{&e0, &e1, &e2, &crf.transitions, &crf.start, &crf.stop};
    auto loss = [&](Tape& tape) {
      const std::vector<Var> steps{tape.param(e0), tape.param(e1), tape.param(e2)};
      return ad::sum(crf.log_likelihood(tape, steps, lengths, labels));
    };
    CHECK(gradcheck(all, loss) <= 1e-4);
  }
}

TEST_CASE("crf head decodes each row to its own length") {
  Rng rng(13);
  CrfHead head("h", 4, 3);
  auto ps = head.params();
  init_uniform(ps, rng, 1.0);
  EmbeddingTable emb("e", 6, 4);
  auto ep = emb.params();
  init_uniform(ep, rng, 1.0);
  const std::vector<int> tokens{1, 2, 3, 4, 5, 0};
  const std::vector<std::size_t> lengths{3, 2};
  Tape tape;
  auto paths = head.decode(tape, emb.lookup(tape, tokens, lengths, 3));
  REQUIRE(paths.size() == 2);
  CHECK(paths[0].size() == 3);
  CHECK(paths[1].size() == 2);
}

TEST_CASE("cross-stitch mixing") {
  Rng rng(14);
  Tape tape;
  std::vector<Var> in;
  for (int i = 0; i < 3; ++i) in.push_back(matrix(tape, 2, 4, random_values(8, rng)));

  CrossStitchUnit identity("s", 3);
  identity.alpha.value = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  auto same = identity.mix(tape, in);
  for (int i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 8; ++j) CHECK(same[i].at(j) == in[i].at(j));

  CrossStitchUnit half("s", 2);
  half.alpha.value = {0.5, 0.5, 0.5, 0.5};
  const std::vector<Var> two{in[0], in[1]};
  auto avg = half.mix(tape, two);
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(avg[0].at(j) == doctest::Approx(0.5 * (in[0].at(j) + in[1].at(j))));
    CHECK(avg[1].at(j) == doctest::Approx(0.5 * (in[0].at(j) + in[1].at(j))));
  }

  CrossStitchUnit random("s", 3);
  random.alpha.value = random_values(9, rng);
  auto mixed = random.mix(tape, in);
  for (int i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      double want = 0.0;
      for (int k = 0; k < 3; ++k) want += random.alpha.value[i * 3 + k] * in[k].at(j);
      CHECK(mixed[i].at(j) == doctest::Approx(want).epsilon(1e-14));
    }

  CHECK_THROWS_AS(random.mix(tape, two), DimensionError);
  const std::vector<Var> uneven{in[0], in[1], matrix(tape, 1, 4, random_values(4, rng))};
  CHECK_THROWS_AS(random.mix(tape, uneven), DimensionError);
}

TEST_CASE("cross-stitch initializes near identity") {
  Rng rng(15);
  CrossStitchUnit s("s", 4);
  s.init_near_identity(rng);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(s.alpha.value[i * 4 + j] - (i == j ? 1.0 : 0.0)) <= 0.01);
}

}  // TEST_SUITE
