#include <cmath>

#include "doctest.h"
#include "docsim/autodiff.hpp"
#include "docsim/verification.hpp"

using namespace docsim;
using ad::Tensor;
using ad::Var;

TEST_CASE("matmul against the identity reproduces the input") {
  ad::Tape tape;
  Tensor eye = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye.v[static_cast<std::size_t>(i * 3 + i)] = 1.0;
  Tensor x({3, 2}, {1, 2, 3, 4, 5, 6});
  Var out = ad::matmul(tape.constant(eye), tape.constant(x));
  CHECK(out.val() == x.v);
}

TEST_CASE("softmax of a constant vector is uniform") {
  ad::Tape tape;
  Var out = ad::softmax_rows(tape.constant(Tensor::full({1, 5}, 3.7)));
  for (double v : out.val()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("gather backward scatter-adds repeated rows") {
  ad::Tape tape;
  Var x = tape.leaf(Tensor({1, 2}, {0.5, -0.25}), true);
  Var g = ad::gather_rows(x, {0, 0});
  Var loss = ad::reduce_sum(g);
  tape.backward(loss);
  CHECK(tape.grad(x) == std::vector<double>{2.0, 2.0});
}

TEST_CASE("gather and scatter-add are adjoint") {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    int rows = 2 + static_cast<int>(rng.next_below(6));
    int cols = 1 + static_cast<int>(rng.next_below(5));
    int k = 1 + static_cast<int>(rng.next_below(8));
    std::vector<int> idx;
    for (int i = 0; i < k; ++i)
      idx.push_back(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(rows))));
    Tensor x = Tensor::zeros({rows, cols});
    Tensor y = Tensor::zeros({k, cols});
    for (double& v : x.v) v = rng.uniform(-1, 1);
    for (double& v : y.v) v = rng.uniform(-1, 1);

    ad::Tape tape;
    Var gx = ad::gather_rows(tape.constant(x), idx);
    double lhs = 0.0;
    for (std::size_t i = 0; i < gx.val().size(); ++i) lhs += gx.val()[i] * y.v[i];

    // scatter_add(y, idx) computed with a plain loop.
    std::vector<double> scattered(x.v.size(), 0.0);
    for (int i = 0; i < k; ++i)
      for (int c = 0; c < cols; ++c)
        scattered[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)] * cols + c)] +=
            y.v[static_cast<std::size_t>(i * cols + c)];
    double rhs = 0.0;
    for (std::size_t i = 0; i < x.v.size(); ++i) rhs += x.v[i] * scattered[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("linear functions grad-check to near machine precision") {
  Tensor x = Tensor::zeros({3, 4});
  Rng rng(5);
  for (double& v : x.v) v = rng.uniform(-1, 1);
  double err = ad::grad_check(
      [](ad::Tape&, const std::vector<Var>& v) { return ad::reduce_sum(v[0]); }, {x}, 1e-4);
  CHECK(err <= 1e-10);
}

TEST_CASE("sigmoid derivative at zero is a quarter") {
  ad::Tape tape;
  Var x = tape.leaf(Tensor::scalar(0.0), true);
  Var y = ad::reduce_sum(ad::sigmoid(x));
  tape.backward(y);
  CHECK(tape.grad(x)[0] == doctest::Approx(0.25).epsilon(1e-12));

  double err = ad::grad_check(
      [](ad::Tape&, const std::vector<Var>& v) { return ad::reduce_sum(ad::sigmoid(v[0])); },
      {Tensor::scalar(0.0)}, 1e-4);
  CHECK(err < 1e-6);
}

TEST_CASE("every primitive passes randomized grad checks") {
  for (const GradCheckEntry& e : run_primitive_grad_checks(5)) {
    INFO(e.name, " max_rel_err=", e.max_rel_err);
    CHECK(e.pass);
  }
}

TEST_CASE("full architecture losses pass grad checks on tiny pages") {
  for (const GradCheckEntry& e : run_architecture_grad_checks()) {
    INFO(e.name, " max_rel_err=", e.max_rel_err);
    CHECK(e.pass);
  }
}

TEST_CASE("forward evaluation is bitwise deterministic") {
  Rng rng(6);
  Tensor a = Tensor::zeros({4, 6});
  Tensor b = Tensor::zeros({6, 3});
  for (double& v : a.v) v = rng.uniform(-2, 2);
  for (double& v : b.v) v = rng.uniform(-2, 2);
  auto run = [&] {
    ad::Tape tape;
    Var out = ad::softmax_rows(ad::matmul(tape.constant(a), tape.constant(b)));
    return out.val();
  };
  CHECK(run() == run());
}

TEST_CASE("shape mismatches raise descriptive errors") {
  ad::Tape tape;
  Var a = tape.constant(Tensor::zeros({2, 3}));
  Var b = tape.constant(Tensor::zeros({2, 3}));
  CHECK_THROWS_WITH_AS(ad::matmul(a, b), doctest::Contains("matmul"), ShapeError);
  CHECK_THROWS_AS(ad::gather_rows(a, {5}), ShapeError);
  Var c = tape.constant(Tensor::zeros({4, 1}));
  CHECK_THROWS_AS(ad::pairwise_sqdist(a, c), ShapeError);
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
  ad::ParamStore params;
  Rng rng(7);
  params.add("w", ad::glorot(3, 3, rng));
  std::vector<double> before = params.tensor(0).v;
  ad::AdamState state;
  state.init_for(params);
  std::vector<std::vector<double>> zero = {std::vector<double>(9, 0.0)};
  ad::adam_step(params, zero, state, {});
  CHECK(params.tensor(0).v == before);
}

TEST_CASE("adam steps approach the learning rate under a constant gradient") {
  ad::ParamStore params;
  params.add("w", Tensor::scalar(1.0));
  ad::AdamState state;
  state.init_for(params);
  ad::AdamConfig cfg;
  cfg.lr = 1e-3;
  double prev = params.tensor(0).v[0];
  double step_size = 0.0;
  for (int i = 0; i < 5000; ++i) {
    ad::adam_step(params, {{0.37}}, state, cfg);
    step_size = prev - params.tensor(0).v[0];
    prev = params.tensor(0).v[0];
  }
  CHECK(step_size == doctest::Approx(cfg.lr).epsilon(0.01));
}

TEST_CASE("equal gradients produce equal adam updates") {
  ad::ParamStore params;
  params.add("a", Tensor::scalar(0.5));
  params.add("b", Tensor::scalar(0.5));
  ad::AdamState state;
  state.init_for(params);
  ad::adam_step(params, {{0.2}, {0.2}}, state, {});
  CHECK(params.tensor(0).v[0] == params.tensor(1).v[0]);
}

TEST_CASE("backward requires a scalar root") {
  ad::Tape tape;
  Var x = tape.leaf(Tensor::zeros({2, 2}), true);
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("grad_check rejects non-scalar functions") {
  CHECK_THROWS_AS(
      ad::grad_check([](ad::Tape&, const std::vector<Var>& v) { return v[0]; },
                     {Tensor::zeros({2, 2})}, 1e-4),
      ShapeError);
}
