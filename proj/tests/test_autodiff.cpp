#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "doctest.h"
#include "invbasin/autodiff.hpp"
#include "invbasin/rng.hpp"

using namespace invbasin;
using ad::Tape;
using ad::Value;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0,
                     double hi = 1.0) {
  return rng.uniform_tensor(std::move(shape), lo, hi);
}

}  // namespace

TEST_CASE("forward values of analytic cases") {
  Tape tape;
  Value x = tape.constant(Tensor::scalar(0.0));
  CHECK(tape.value(tape.sigmoid(x)).item() == doctest::Approx(0.5));
  CHECK(tape.value(tape.softplus(x)).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Rng rng(7);
  Tensor a = random_tensor(rng, {3, 3});
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Value prod = tape.matmul(tape.constant(eye), tape.constant(a));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(tape.value(prod)[i] == doctest::Approx(a[i]).epsilon(1e-15));
  }
}

TEST_CASE("backward on scalar chains") {
  {
    Tape tape;
    Value x = tape.leaf(Tensor::scalar(3.0));
    Value loss = tape.square(x);
    tape.backward(loss);
    CHECK(tape.grad(x).item() == doctest::Approx(6.0).epsilon(1e-12));
  }
  {
    Tape tape;
    Value x = tape.leaf(Tensor::scalar(0.0));
    Value loss = tape.sigmoid(x);
    tape.backward(loss);
    CHECK(tape.grad(x).item() == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("two-layer tanh network matches finite differences") {
  // 17 parameters: (4x2 + 4) hidden layer, (1x4 + 1) output layer.
  Rng rng(11);
  std::vector<Tensor> params = {
      random_tensor(rng, {4, 2}), random_tensor(rng, {4}),
      random_tensor(rng, {1, 4}), random_tensor(rng, {1})};
  Tensor input = random_tensor(rng, {3, 2});
  auto build = [&](Tape& t, const std::vector<Value>& p) {
    Value h = t.tanh(t.add(t.matmul_nt(t.constant(input), p[0]), p[1]));
    Value y = t.tanh(t.add(t.matmul_nt(h, p[2]), p[3]));
    return t.mean(t.square(y));
  };
  CHECK(ad::finite_diff_check(build, params, 1e-5) <= 1e-4);
}

TEST_CASE("finite_diff_check edge contracts") {
  // Linear graph: central differences are exact.
  std::vector<Tensor> p = {Tensor::scalar(1.5)};
  auto linear = [](Tape& t, const std::vector<Value>& ps) {
    return t.scalar_mul(ps[0], 2.0);
  };
  CHECK(ad::finite_diff_check(linear, p, 1e-5) <= 1e-9);

  // Constant graph: both gradients are zero, defined error 0.
  auto constant = [](Tape& t, const std::vector<Value>& ps) {
    (void)ps;
    return t.constant(Tensor::scalar(4.0));
  };
  CHECK(ad::finite_diff_check(constant, p, 1e-5) == 0.0);

  CHECK_THROWS_AS(ad::finite_diff_check(linear, p, 0.0), ContractError);
}

TEST_CASE("every op matches finite differences over random seeds") {
  struct OpCase {
    const char* name;
    std::function<Value(Tape&, const std::vector<Value>&)> build;
    std::vector<std::vector<std::size_t>> shapes;
    double lo = -1.0, hi = 1.0;
  };
  std::vector<OpCase> cases;
  auto scalarize = [](Tape& t, Value v) { return t.mean(t.square(v)); };
  cases.push_back({"add",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.add(p[0], p[1]));
                   },
                   {{2, 3}, {2, 3}}});
  cases.push_back({"add_broadcast",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.add(p[0], p[1]));
                   },
                   {{2, 3}, {3}}});
  cases.push_back({"sub",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.sub(p[0], p[1]));
                   },
                   {{2, 3}, {2, 3}}});
  cases.push_back({"mul",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.mul(p[0], p[1]));
                   },
                   {{2, 3}, {2, 3}}});
  cases.push_back({"mul_broadcast_rev",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.mul(p[1], p[0]));
                   },
                   {{2, 3}, {3}}});
  cases.push_back({"div",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.div(p[0], p[1]));
                   },
                   {{2, 3}, {2, 3}},
                   0.5,
                   1.5});
  cases.push_back({"matmul",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.matmul(p[0], p[1]));
                   },
                   {{2, 3}, {3, 4}}});
  cases.push_back({"matmul_nt",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.matmul_nt(p[0], p[1]));
                   },
                   {{2, 3}, {4, 3}}});
  cases.push_back({"transpose",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.transpose(p[0]));
                   },
                   {{2, 3}}});
  cases.push_back({"concat_cols",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.concat_cols(p[0], p[1]));
                   },
                   {{2, 3}, {2, 2}}});
  cases.push_back({"slice",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.slice(p[0], 1, 3, 0, 2));
                   },
                   {{3, 3}}});
  cases.push_back({"sigmoid",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.sigmoid(p[0]));
                   },
                   {{2, 3}}});
  cases.push_back({"tanh",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.tanh(p[0]));
                   },
                   {{2, 3}}});
  cases.push_back({"relu",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.relu(p[0]));
                   },
                   // keep entries away from the kink at 0
                   {{2, 3}},
                   0.2,
                   1.0});
  cases.push_back({"softplus",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.softplus(p[0]));
                   },
                   {{2, 3}}});
  cases.push_back({"exp",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.exp(p[0]));
                   },
                   {{2, 3}}});
  cases.push_back({"log",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.log(p[0]));
                   },
                   {{2, 3}},
                   0.5,
                   2.0});
  cases.push_back({"sqrt",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.sqrt(p[0]));
                   },
                   {{2, 3}},
                   0.5,
                   2.0});
  cases.push_back({"square",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.square(p[0]));
                   },
                   {{2, 3}}});
  cases.push_back({"sum",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return t.square(t.sum(p[0]));
                   },
                   {{2, 3}}});
  cases.push_back({"mean",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return t.square(t.mean(p[0]));
                   },
                   {{2, 3}}});
  cases.push_back({"sum_rows",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.sum_rows(p[0]));
                   },
                   {{2, 3}}});
  cases.push_back({"diag_part",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.diag_part(p[0]));
                   },
                   {{3, 3}}});
  cases.push_back({"scale_rows",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.scale_rows(p[0], p[1]));
                   },
                   {{2, 3}, {2}}});
  cases.push_back({"scalar_mul",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.scalar_mul(p[0], 1.7));
                   },
                   {{2, 3}}});
  cases.push_back({"scalar_add",
                   [&](Tape& t, const std::vector<Value>& p) {
                     return scalarize(t, t.scalar_add(p[0], 0.3));
                   },
                   {{2, 3}}});

  for (const auto& c : cases) {
    INFO("op: " << c.name);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed * 977 + 13);
      std::vector<Tensor> params;
      params.reserve(c.shapes.size());
      for (const auto& s : c.shapes) {
        params.push_back(random_tensor(rng, s, c.lo, c.hi));
      }
      double err = ad::finite_diff_check(c.build, params, 1e-5);
      CHECK(err <= 1e-4);
      if (err > 1e-4) break;
    }
  }
}

TEST_CASE("gradient of a batch sum equals the sum of per-sample gradients") {
  Rng rng(3);
  Tensor w = random_tensor(rng, {2, 4});
  Tensor batch = random_tensor(rng, {5, 4});

  Tape tape;
  Value wl = tape.leaf(w);
  Value out = tape.sum(tape.square(tape.matmul_nt(tape.constant(batch), wl)));
  tape.backward(out);
  Tensor full = tape.grad(wl);

  Tensor acc({2, 4});
  for (std::size_t i = 0; i < 5; ++i) {
    Tensor row({1, 4});
    for (std::size_t j = 0; j < 4; ++j) row.at(0, j) = batch.at(i, j);
    Tape t2;
    Value wl2 = t2.leaf(w);
    Value o = t2.sum(t2.square(t2.matmul_nt(t2.constant(row), wl2)));
    t2.backward(o);
    Tensor g = t2.grad(wl2);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
  }
  for (std::size_t k = 0; k < acc.size(); ++k) {
    CHECK(full[k] == doctest::Approx(acc[k]).epsilon(1e-10));
  }
}

TEST_CASE("re-evaluating the same graph is bit-identical") {
  Rng rng(21);
  Tensor a = random_tensor(rng, {4, 4});
  Tensor b = random_tensor(rng, {4, 4});
  auto run = [&]() {
    Tape t;
    Value out = t.sum(
        t.tanh(t.matmul(t.sigmoid(t.constant(a)), t.softplus(t.constant(b)))));
    return t.value(out).item();
  };
  double v1 = run();
  double v2 = run();
  CHECK(std::memcmp(&v1, &v2, sizeof(double)) == 0);
}

TEST_CASE("error paths") {
  Tape tape;
  Value a = tape.constant(Tensor({2, 3}));
  Value b = tape.constant(Tensor({4, 2}));
  CHECK_THROWS_WITH_AS(tape.add(a, b),
                       doctest::Contains("op 'add'"), ShapeError);
  CHECK_THROWS_AS(tape.matmul(a, b), ShapeError);

  // log(0) is -inf: flagged as a numeric error, not silently propagated.
  Value zero = tape.constant(Tensor({2, 2}));
  CHECK_THROWS_AS(tape.log(zero), NumericError);

  // Non-scalar loss.
  Tape t2;
  Value m = t2.leaf(Tensor::full({2, 2}, 1.0));
  Value out = t2.square(m);
  CHECK_THROWS_AS(t2.backward(out), ContractError);
}
