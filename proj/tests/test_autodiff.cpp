#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dfl/autodiff.hpp"
#include "support.hpp"

using namespace dfl;
using dfl::testing::max_grad_error;
using dfl::testing::random_tensor;

TEST_CASE("matmul forward fixtures") {
  auto eye = make_node(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  auto v = make_node(Tensor::matrix(2, 1, {3, 4}));
  auto out = matmul(eye, v);
  CHECK(out->value[0] == 3.0);
  CHECK(out->value[1] == 4.0);

  auto a = make_node(Tensor::matrix(1, 2, {1, 2}));
  auto b = make_node(Tensor::matrix(2, 1, {3, 4}));
  CHECK(matmul(a, b)->value.item() == 11.0);

  CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(11);
  double err = max_grad_error(
      [](const std::vector<NodePtr>& in) { return sum(matmul(in[0], in[1])); },
      {random_tensor(rng, {3, 3}), random_tensor(rng, {3, 3})});
  CHECK(err < 1e-6);
}

TEST_CASE("elementwise forward fixtures") {
  auto x = make_node(Tensor::row_vector({-1, 0, 2}));
  auto r = relu(x);
  CHECK(r->value[0] == 0.0);
  CHECK(r->value[1] == 0.0);
  CHECK(r->value[2] == 2.0);

  CHECK(dfl::exp(make_node(Tensor::row_vector({0})))->value[0] == 1.0);

  CHECK_THROWS_AS(dfl::log(make_node(Tensor::row_vector({-1}))), DomainError);
  CHECK_THROWS_AS(dfl::sqrt(make_node(Tensor::row_vector({-1}))), DomainError);
}

TEST_CASE("relu subgradient convention at zero") {
  auto x = make_node(Tensor::row_vector({-1, 2}));
  backward(sum(relu(x)));
  CHECK(x->grad[0] == 0.0);
  CHECK(x->grad[1] == 1.0);

  auto zero = make_node(Tensor::row_vector({0.0}));
  backward(sum(relu(zero)));
  CHECK(zero->grad[0] == 0.0);
}

TEST_CASE("elementwise broadcasting rules") {
  auto m = make_node(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  auto s = make_node(Tensor::scalar(10.0));
  auto out = add(m, s);
  CHECK(out->value[3] == 14.0);
  auto out2 = mul(s, m);
  CHECK(out2->value[2] == 30.0);

  auto bad = make_node(Tensor::row_vector({1, 2, 3}));
  CHECK_THROWS_AS(add(m, bad), DimensionError);

  backward(sum(mul(m, s)));
  CHECK(s->grad[0] == 10.0);  // sum of the matrix entries
  CHECK(m->grad[0] == 10.0);
}

TEST_CASE("elementwise gradients vs finite differences") {
  Rng rng(17);
  auto away_from_zero = [&](std::vector<std::size_t> shape) {
    return random_tensor(rng, shape, 0.5, 2.0);
  };
  CHECK(max_grad_error(
            [](const std::vector<NodePtr>& in) {
              return sum(mul(in[0], in[1]));
            },
            {random_tensor(rng, {4, 3}), random_tensor(rng, {4, 3})}) < 1e-6);
  CHECK(max_grad_error(
            [](const std::vector<NodePtr>& in) {
              return sum(dfl::exp(in[0]));
            },
            {random_tensor(rng, {6})}) < 1e-6);
  CHECK(max_grad_error(
            [](const std::vector<NodePtr>& in) {
              return sum(dfl::log(in[0]));
            },
            {away_from_zero({6})}) < 1e-6);
  CHECK(max_grad_error(
            [](const std::vector<NodePtr>& in) {
              return sum(dfl::sqrt(in[0]));
            },
            {away_from_zero({6})}) < 1e-6);
  CHECK(max_grad_error(
            [](const std::vector<NodePtr>& in) {
              return sum(sub(in[0], scale(in[1], 3.0)));
            },
            {random_tensor(rng, {5}), random_tensor(rng, {5})}) < 1e-6);
}

TEST_CASE("concat preserves column order and splits gradients") {
  auto a = make_node(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  auto b = make_node(Tensor::matrix(2, 3, {5, 6, 7, 8, 9, 10}));
  auto c = concat({a, b});
  REQUIRE(c->value.shape() == std::vector<std::size_t>{2, 5});
  CHECK(c->value.at(0, 0) == 1.0);
  CHECK(c->value.at(0, 2) == 5.0);
  CHECK(c->value.at(1, 4) == 10.0);

  backward(sum(c));
  for (std::size_t i = 0; i < a->grad.size(); ++i) CHECK(a->grad[i] == 1.0);
  for (std::size_t i = 0; i < b->grad.size(); ++i) CHECK(b->grad[i] == 1.0);

  CHECK(concat({a}) == a);  // single operand passes through

  auto mismatched = make_node(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_AS(concat({a, mismatched}), DimensionError);
}

TEST_CASE("batch_norm identical rows collapse to beta") {
  auto x = make_node(Tensor::matrix(3, 2, {5, -2, 5, -2, 5, -2}));
  auto gamma = make_node(Tensor::row_vector({2, 3}));
  auto beta = make_node(Tensor::row_vector({7, -1}));
  BatchNormState state = BatchNormState::fresh(2);
  auto out = batch_norm(x, gamma, beta, state, RunMode::train);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out->value.at(i, 0) == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(out->value.at(i, 1) == doctest::Approx(-1.0).epsilon(1e-12));
  }
}

TEST_CASE("batch_norm hand value") {
  auto x = make_node(Tensor::matrix(2, 1, {-1, 1}));
  auto gamma = make_node(Tensor::row_vector({1}));
  auto beta = make_node(Tensor::row_vector({0}));
  BatchNormState state = BatchNormState::fresh(1);
  auto out = batch_norm(x, gamma, beta, state, RunMode::train);
  double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(out->value[0] == doctest::Approx(-expect).epsilon(1e-14));
  CHECK(out->value[1] == doctest::Approx(expect).epsilon(1e-14));
  // momentum 0.1 update from fresh (0, 1) stats
  CHECK(state.running_mean[0] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(state.running_var[0] == doctest::Approx(0.9 + 0.1 * 1.0));
}

TEST_CASE("batch_norm train gradient vs finite differences") {
  Rng rng(23);
  double err = max_grad_error(
      [](const std::vector<NodePtr>& in) {
        BatchNormState state = BatchNormState::fresh(4);
        return sum(mul(batch_norm(in[0], in[1], in[2], state, RunMode::train),
                       in[3]));
      },
      {random_tensor(rng, {8, 4}), random_tensor(rng, {4}, 0.5, 1.5),
       random_tensor(rng, {4}), random_tensor(rng, {8, 4})});
  CHECK(err < 1e-5);
}

TEST_CASE("batch_norm eval gradient and statistics") {
  Rng rng(29);
  BatchNormState state;
  state.running_mean = Tensor::row_vector({0.3, -0.2});
  state.running_var = Tensor::row_vector({1.5, 0.7});
  double err = max_grad_error(
      [&state](const std::vector<NodePtr>& in) {
        return sum(mul(batch_norm_eval(in[0], in[1], in[2], state), in[3]));
      },
      {random_tensor(rng, {5, 2}), random_tensor(rng, {2}, 0.5, 1.5),
       random_tensor(rng, {2}), random_tensor(rng, {5, 2})});
  CHECK(err < 1e-5);

  // eval mode must not touch the running statistics
  CHECK(state.running_mean[0] == 0.3);
  CHECK(state.running_var[1] == 0.7);
}

TEST_CASE("batch_norm rejects tiny train batches") {
  auto x = make_node(Tensor::matrix(1, 2, {1, 2}));
  auto gamma = make_node(Tensor::row_vector({1, 1}));
  auto beta = make_node(Tensor::row_vector({0, 0}));
  BatchNormState state = BatchNormState::fresh(2);
  CHECK_THROWS_AS(batch_norm(x, gamma, beta, state, RunMode::train),
                  DimensionError);
  CHECK_NOTHROW(batch_norm(x, gamma, beta, state, RunMode::eval));
}

TEST_CASE("log_softmax fixtures and stability") {
  auto x = make_node(Tensor::matrix(1, 2, {0, 0}));
  auto out = log_softmax(x);
  CHECK(out->value[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  CHECK(out->value[1] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));

  auto big = log_softmax(make_node(Tensor::matrix(1, 2, {1000, 0})));
  CHECK(std::isfinite(big->value[0]));
  CHECK(big->value[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(big->value[1] == doctest::Approx(-1000.0).epsilon(1e-12));

  Rng rng(31);
  auto r = log_softmax(make_node(random_tensor(rng, {6, 5}, -3, 3)));
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) s += std::exp(r->value.at(i, j));
    CHECK(std::fabs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("log_softmax gradient vs finite differences") {
  Rng rng(37);
  double err = max_grad_error(
      [](const std::vector<NodePtr>& in) {
        return sum(mul(log_softmax(in[0]), in[1]));
      },
      {random_tensor(rng, {4, 3}), random_tensor(rng, {4, 3})});
  CHECK(err < 1e-6);
}

TEST_CASE("pairwise_distances forward fixtures") {
  auto x = make_node(Tensor::matrix(2, 2, {0, 0, 3, 4}));
  auto d = pairwise_distances(x);
  CHECK(d->value.at(0, 1) == 5.0);
  CHECK(d->value.at(1, 0) == 5.0);
  CHECK(d->value.at(0, 0) == 0.0);

  auto same = make_node(Tensor::matrix(3, 2, {1, 2, 1, 2, 1, 2}));
  auto dz = pairwise_distances(same);
  for (std::size_t i = 0; i < dz->value.size(); ++i) {
    CHECK(dz->value[i] == 0.0);
  }
}

TEST_CASE("pairwise_distances gradient vs finite differences") {
  Rng rng(41);
  double err = max_grad_error(
      [](const std::vector<NodePtr>& in) {
        return sum(mul(pairwise_distances(in[0]), in[1]));
      },
      {random_tensor(rng, {5, 3}), random_tensor(rng, {5, 5})});
  CHECK(err < 1e-5);
}

TEST_CASE("pairwise_distances zero-distance subgradient is zero") {
  auto x = make_node(Tensor::matrix(3, 2, {1, 2, 1, 2, 1, 2}));
  backward(sum(pairwise_distances(x)));
  for (std::size_t i = 0; i < x->grad.size(); ++i) CHECK(x->grad[i] == 0.0);
}

TEST_CASE("ucenter properties and gradient") {
  Rng rng(43);
  // row sums of a U-centered symmetric zero-diagonal matrix vanish
  Tensor m = random_tensor(rng, {6, 6});
  for (std::size_t i = 0; i < 6; ++i) {
    m.at(i, i) = 0.0;
    for (std::size_t j = 0; j < i; ++j) m.at(i, j) = m.at(j, i);
  }
  auto centered = ucenter(make_node(m));
  for (std::size_t i = 0; i < 6; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 6; ++j) row += centered->value.at(i, j);
    CHECK(std::fabs(row) < 1e-12);
  }

  double err = max_grad_error(
      [](const std::vector<NodePtr>& in) {
        return sum(mul(ucenter(in[0]), in[1]));
      },
      {random_tensor(rng, {5, 5}), random_tensor(rng, {5, 5})});
  CHECK(err < 1e-6);
}

TEST_CASE("gather_rows selects and scatter-accumulates") {
  auto x = make_node(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  auto g = gather_rows(x, {2, 0, 2});
  REQUIRE(g->value.shape() == std::vector<std::size_t>{3, 2});
  CHECK(g->value.at(0, 0) == 5.0);
  CHECK(g->value.at(1, 1) == 2.0);
  backward(sum(g));
  CHECK(x->grad.at(0, 0) == 1.0);
  CHECK(x->grad.at(1, 0) == 0.0);
  CHECK(x->grad.at(2, 0) == 2.0);  // duplicated index accumulates

  CHECK_THROWS_AS(gather_rows(x, {7}), DimensionError);
}

TEST_CASE("backward basics") {
  auto x = make_node(Tensor::row_vector({1, 2, 3}));
  backward(sum(x));
  for (std::size_t i = 0; i < 3; ++i) CHECK(x->grad[i] == 1.0);

  auto y = make_node(Tensor::row_vector({1, 2}));
  backward(sum(mul(y, y)));
  CHECK(y->grad[0] == 2.0);
  CHECK(y->grad[1] == 4.0);

  // diamond: z = x + x accumulates fan-out
  auto w = make_node(Tensor::scalar(3.0));
  backward(add(w, w));
  CHECK(w->grad[0] == 2.0);
}

TEST_CASE("backward contract errors") {
  auto x = make_node(Tensor::row_vector({1, 2}));
  CHECK_THROWS_AS(backward(relu(x)), DimensionError);

  auto loss = sum(x);
  backward(loss);
  CHECK_THROWS_AS(backward(loss), Error);  // fixed choice: second run throws
}

TEST_CASE("mean reduces and distributes gradient") {
  auto x = make_node(Tensor::row_vector({2, 4, 6, 8}));
  auto m = mean(x);
  CHECK(m->value.item() == 5.0);
  backward(m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(x->grad[i] == 0.25);
}

TEST_CASE("add_rowvec broadcasts bias over rows") {
  auto x = make_node(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  auto b = make_node(Tensor::row_vector({10, 20, 30}));
  auto out = add_rowvec(x, b);
  CHECK(out->value.at(1, 2) == 36.0);
  backward(sum(out));
  CHECK(b->grad[0] == 2.0);
  CHECK(x->grad[0] == 1.0);

  Rng rng(47);
  double err = max_grad_error(
      [](const std::vector<NodePtr>& in) {
        return sum(mul(add_rowvec(in[0], in[1]), in[2]));
      },
      {random_tensor(rng, {4, 3}), random_tensor(rng, {3}),
       random_tensor(rng, {4, 3})});
  CHECK(err < 1e-6);
}

TEST_CASE("forward evaluation is deterministic") {
  Rng rng(53);
  Tensor a = random_tensor(rng, {6, 4});
  Tensor b = random_tensor(rng, {4, 5});
  auto run = [&]() {
    return log_softmax(matmul(make_node(a), make_node(b)))->value;
  };
  Tensor first = run();
  Tensor second = run();
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i] == second[i]);
  }
}

TEST_CASE("tensor validation") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), DomainError);
  CHECK_NOTHROW(Tensor({2}, {1.0, std::nan("")}, false));
}
