#include <doctest/doctest.h>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ossem/rng.hpp"
#include "ossem/tensor.hpp"
#include "oracles.hpp"

using namespace ossem;

namespace {

Tensor<double> rand_t(std::vector<int> shape, Rng& rng, double scale = 1.0, double off = 0.0) {
  int n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) {
    x = rng.normal() * scale;
    if (off != 0.0) x += (x >= 0.0 ? off : -off);  // keep magnitudes away from 0
  }
  return Tensor<double>::from(std::move(shape), std::move(v));
}

std::vector<double> vec(const Tensor<double>& t) {
  return {t.data().begin(), t.data().end()};
}

// Grad-checks a single-input function built from tape ops.
void check_op(const std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>& op,
              Tensor<double> x, double tol = 1e-7) {
  static int call = 0;
  ++call;
  x.set_requires_grad(true);
  std::vector<std::pair<std::string, Tensor<double>>> ps{{"x", x}};
  auto f = [&](Tape<double>& tape) { return tape.sum(op(tape, x)); };
  auto rep = grad_check<double>(f, ps, 1e-5, tol);
  INFO("op #" << call << ": " << rep.summary());
  CHECK(rep.pass);
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("sigmoid at zero gives one half with quarter slope") {
  Tape<double> tape;
  Tensor<double> x = Tensor<double>::from({1}, {0.0}, true);
  Tensor<double> y = tape.sigmoid(x);
  CHECK(y.item() == doctest::Approx(0.5).epsilon(1e-12));
  tape.backward(tape.sum(y));
  CHECK(x.grad_view()[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("matmul by identity is exact") {
  Tape<double> tape;
  Rng rng(7);
  Tensor<double> a = rand_t({3, 3}, rng);
  Tensor<double> eye = Tensor<double>::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor<double> out = tape.matmul(a, eye);
  CHECK(vec(out) == vec(a));
}

TEST_CASE("matmul matches an independently ordered reference") {
  Rng rng(11);
  const int m = 5, k = 7, n = 4;
  Tensor<double> a = rand_t({m, k}, rng);
  Tensor<double> b = rand_t({k, n}, rng);
  Tape<double> tape(false);
  auto got = vec(tape.matmul(a, b));
  auto want = oracle::matmul(vec(a), vec(b), m, k, n);
  for (size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("single-tap convolution with identity kernel copies the input") {
  Rng rng(3);
  const int t = 6, c = 4;
  Tensor<double> x = rand_t({t, c}, rng);
  std::vector<double> wv(static_cast<size_t>(c) * c, 0.0);
  for (int i = 0; i < c; ++i) wv[static_cast<size_t>(i) * c + i] = 1.0;
  Tensor<double> w = Tensor<double>::from({1, c, c}, std::move(wv));
  Tensor<double> b(std::vector<int>{c});
  Tape<double> tape(false);
  CHECK(vec(tape.causal_conv1d(x, w, b)) == vec(x));
}

TEST_CASE("convolution matches the direct reference") {
  Rng rng(5);
  const int t = 9, cin = 3, cout = 5, k = 4;
  Tensor<double> x = rand_t({t, cin}, rng);
  Tensor<double> w = rand_t({k, cin, cout}, rng);
  Tensor<double> b = rand_t({cout}, rng);
  Tape<double> tape(false);
  auto got = vec(tape.causal_conv1d(x, w, b));
  auto want = oracle::conv1d_causal(vec(x), t, cin, vec(w), k, cout, vec(b));
  for (size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
}

TEST_CASE("length-one attention passes the value row through") {
  Rng rng(13);
  Tensor<double> q = rand_t({1, 4}, rng), k = rand_t({1, 4}, rng), v = rand_t({1, 4}, rng);
  Tape<double> tape(false);
  Tensor<double> out = causal_softmax_attention(tape, q, k, v, 2, true);
  CHECK(vec(out) == vec(v));  // the only attention weight is exactly 1
}

TEST_CASE("attention matches the per-head reference and rows are probabilities") {
  Rng rng(17);
  const int t = 6, d = 8, heads = 2;
  Tensor<double> q = rand_t({t, d}, rng), k = rand_t({t, d}, rng), v = rand_t({t, d}, rng);
  for (bool causal : {true, false}) {
    Tape<double> tape(false);
    auto got = vec(causal_softmax_attention(tape, q, k, v, heads, causal));
    auto want = oracle::attention(vec(q), vec(k), vec(v), t, d, heads, causal);
    for (size_t i = 0; i < want.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));

    Tensor<double> scores = rand_t({t, t}, rng);
    Tensor<double> p = tape.softmax_causal(scores, causal);
    auto pv = vec(p);
    for (int i = 0; i < t; ++i) {
      double row = 0.0;
      for (int j = 0; j < t; ++j) {
        CHECK(pv[static_cast<size_t>(i) * t + j] >= 0.0);
        if (causal && j > i) CHECK(pv[static_cast<size_t>(i) * t + j] == 0.0);
        row += pv[static_cast<size_t>(i) * t + j];
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("causal ops ignore future-frame perturbations bitwise") {
  Rng rng(23);
  const int t = 10, c = 6;
  Tensor<double> x = rand_t({t, c}, rng);
  Tensor<double> w = rand_t({3, c, c}, rng);
  Tensor<double> b = rand_t({c}, rng);
  Tensor<double> x2 = x.deep_copy();
  const int cut = 6;  // perturb frames beyond this index
  for (int i = cut + 1; i < t; ++i)
    for (int j = 0; j < c; ++j) x2.data()[static_cast<size_t>(i) * c + j] += rng.normal();

  Tape<double> tape(false);
  auto a1 = vec(tape.causal_conv1d(x, w, b));
  auto a2 = vec(tape.causal_conv1d(x2, w, b));
  auto b1 = vec(causal_softmax_attention(tape, x, x, x, 2, true));
  auto b2 = vec(causal_softmax_attention(tape, x2, x2, x2, 2, true));
  for (int i = 0; i <= cut; ++i)
    for (int j = 0; j < c; ++j) {
      const size_t idx = static_cast<size_t>(i) * c + j;
      CHECK(a1[idx] == a2[idx]);
      CHECK(b1[idx] == b2[idx]);
    }
}

TEST_CASE("layer_norm handles zero and constant rows and normalizes moments") {
  Tape<double> tape(false);
  Tensor<double> gain = Tensor<double>::from({4}, {1, 1, 1, 1});
  Tensor<double> bias(std::vector<int>{4});
  Tensor<double> zeros(std::vector<int>{2, 4});
  CHECK(vec(tape.layer_norm(zeros, gain, bias)) == std::vector<double>(8, 0.0));

  Tensor<double> ones = Tensor<double>::from({1, 4}, {1, 1, 1, 1});
  for (double v : vec(tape.layer_norm(ones, gain, bias)))
    CHECK(v == doctest::Approx(0.0).epsilon(1e-9));

  Rng rng(29);
  const int d = 64;
  Tensor<double> g1(std::vector<int>{d});
  for (auto& v : g1.data()) v = 1.0;
  Tensor<double> b1(std::vector<int>{d});
  Tensor<double> x = rand_t({1, d}, rng, 2.0);
  auto out = vec(tape.layer_norm(x, g1, b1));
  double mean = 0.0, var = 0.0;
  for (double v : out) mean += v;
  mean /= d;
  for (double v : out) var += (v - mean) * (v - mean);
  var /= d;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(var == doctest::Approx(1.0).epsilon(1e-4));

  auto want = oracle::layer_norm(vec(x), 1, d, vec(g1), vec(b1));
  for (size_t i = 0; i < want.size(); ++i) CHECK(out[i] == doctest::Approx(want[i]).epsilon(1e-9));
}

TEST_CASE("gradient checker validates a quadratic to high precision") {
  Tensor<double> x = Tensor<double>::from({1}, {3.0}, true);
  std::vector<std::pair<std::string, Tensor<double>>> ps{{"x", x}};
  auto f = [&](Tape<double>& tape) { return tape.mul(x, x); };
  auto rep = grad_check<double>(f, ps, 1e-5, 1e-8);
  CHECK(rep.pass);
  REQUIRE(rep.params.size() == 1);
  CHECK(rep.params[0].max_rel_err < 1e-8);
  // analytic derivative of x^2 at 3
  x.clear_grad();
  Tape<double> t;
  Tensor<double> loss = t.mul(x, x);
  t.backward(loss);
  CHECK(x.grad_view()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("gradient checker flags an absolute loss pinned at zero difference") {
  Tensor<double> x = Tensor<double>::from({2}, {0.7, -0.2}, true);
  Tensor<double> y = Tensor<double>::from({2}, {0.7, -0.2});
  std::vector<std::pair<std::string, Tensor<double>>> ps{{"x", x}};
  auto f = [&](Tape<double>& tape) { return tape.l1_mean(x, y); };
  auto rep = grad_check<double>(f, ps, 1e-5, 1e-5);
  CHECK(rep.skipped_nondiff);
  CHECK(rep.summary() == "skipped: non-differentiable point");
}

TEST_CASE("every primitive passes a finite-difference check") {
  Rng rng(31);
  Tensor<double> c1 = rand_t({4, 5}, rng);
  Tensor<double> c2 = rand_t({5}, rng);
  Tensor<double> c3 = rand_t({5, 3}, rng);
  Tensor<double> target = rand_t({4, 5}, rng, 1.0, 0.5);

  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.add(x, c1); },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.sub(c1, x); },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.mul(x, c1); },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.mul(x, x); },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.scalar_mul(x, 1.7); },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.add_rowvec(x, c2); },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.mul_rowvec(x, c2); },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.mul_rowvec(c1, x); },
           rand_t({5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.relu(x); },
           rand_t({4, 5}, rng, 1.0, 0.1));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.leaky_relu(x); },
           rand_t({4, 5}, rng, 1.0, 0.1));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.sigmoid(x); },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.matmul(x, c3); },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.matmul(c1, x); },
           rand_t({5, 3}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.transpose(x); },
           rand_t({4, 5}, rng));
  Tensor<double> cw = rand_t({3, 5, 4}, rng);
  Tensor<double> cb = rand_t({4}, rng);
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.causal_conv1d(x, cw, cb); },
           rand_t({6, 5}, rng));
  Tensor<double> beta = rand_t({5}, rng);
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.layer_norm(x, c2, beta); },
           rand_t({4, 5}, rng));
  // summing raw softmax rows is a constant, so weight the entries first
  Tensor<double> sw = rand_t({4, 4}, rng);
  check_op([&](Tape<double>& t, const Tensor<double>& x) {
             return t.mul(t.softmax_causal(x, true), sw);
           },
           rand_t({4, 4}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.reshape(x, {2, 10}); },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) { return t.slice_cols(x, 1, 4); },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) {
             std::vector<Tensor<double>> parts{x, c1};
             return t.concat_cols(parts);
           },
           rand_t({4, 2}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) {
             return t.reshape(t.sum(x), {1, 1});
           },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) {
             return t.reshape(t.l1_mean(x, target), {1, 1});
           },
           rand_t({4, 5}, rng, 1.0, 2.0));  // offsets keep |pred - target| generous
  check_op([&](Tape<double>& t, const Tensor<double>& x) {
             std::vector<Tensor<double>> ls{t.sum(x), t.sum(t.mul(x, x))};
             return t.reshape(t.mean_of(ls), {1, 1});
           },
           rand_t({4, 5}, rng));
  check_op([&](Tape<double>& t, const Tensor<double>& x) {
             Tensor<double> q = t.matmul(x, c3);
             return causal_softmax_attention(t, q, q, q, 1, true);
           },
           rand_t({4, 5}, rng));
}

TEST_CASE("a layer_norm chain passes the gradient check at standard tolerance") {
  Rng rng(37);
  Tensor<double> x = rand_t({3, 6}, rng);
  Tensor<double> w = rand_t({6, 6}, rng);
  Tensor<double> g = rand_t({6}, rng, 0.3, 0.5);
  Tensor<double> b = rand_t({6}, rng, 0.3);
  for (auto* p : {&x, &w, &g, &b}) p->set_requires_grad(true);
  std::vector<std::pair<std::string, Tensor<double>>> ps{
      {"x", x}, {"w", w}, {"g", g}, {"b", b}};
  auto f = [&](Tape<double>& tape) {
    Tensor<double> h = tape.layer_norm(tape.matmul(x, w), g, b);
    return tape.sum(tape.sigmoid(h));
  };
  auto rep = grad_check<double>(f, ps, 1e-5, 1e-5);
  INFO(rep.summary());
  CHECK(rep.pass);
}

TEST_CASE("gradients accumulate across two consumers of one tensor") {
  Tensor<double> x = Tensor<double>::from({2}, {1.5, -2.0}, true);
  Tape<double> tape;
  Tensor<double> y = tape.add(tape.mul(x, x), tape.scalar_mul(x, 3.0));  // x^2 + 3x
  tape.backward(tape.sum(y));
  CHECK(x.grad_view()[0] == doctest::Approx(2 * 1.5 + 3).epsilon(1e-12));
  CHECK(x.grad_view()[1] == doctest::Approx(2 * -2.0 + 3).epsilon(1e-12));
}

TEST_CASE("shape mismatches and non-tape losses raise invalid_argument") {
  Tape<double> tape;
  Tensor<double> a(std::vector<int>{2, 3});
  Tensor<double> b(std::vector<int>{3, 2});
  CHECK_THROWS_AS((void)tape.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS((void)tape.matmul(a, a), std::invalid_argument);
  CHECK_THROWS_AS(tape.backward(a), std::invalid_argument);
  Tensor<double> s = Tensor<double>::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(s), std::invalid_argument);  // not produced on this tape
}

}  // TEST_SUITE
