#ifndef DFL_TESTS_SUPPORT_HPP
#define DFL_TESTS_SUPPORT_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "dfl/autodiff.hpp"
#include "dfl/rng.hpp"
#include "dfl/tensor.hpp"

namespace dfl::testing {

inline Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape,
                            double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_normal_tensor(Rng& rng, std::vector<std::size_t> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

/// Hybrid absolute/relative error used by every gradient check.
inline double grad_err(double analytic, double numeric) {
  return std::fabs(analytic - numeric) /
         std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
}

/// Central finite differences against the analytic gradient of a scalar
/// graph built from leaf nodes. Returns the worst error over every entry of
/// every input. The builder must be a pure function of the leaf values.
inline double max_grad_error(
    const std::function<NodePtr(const std::vector<NodePtr>&)>& build,
    std::vector<Tensor> inputs, double eps = 1e-6) {
  std::vector<NodePtr> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(make_node(t));
  NodePtr loss = build(leaves);
  backward(loss);

  auto eval = [&](const std::vector<Tensor>& xs) {
    std::vector<NodePtr> fresh;
    fresh.reserve(xs.size());
    for (const auto& t : xs) fresh.push_back(make_node(t));
    return build(fresh)->value.item();
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      std::vector<Tensor> plus = inputs;
      std::vector<Tensor> minus = inputs;
      plus[k][i] += eps;
      minus[k][i] -= eps;
      double fd = (eval(plus) - eval(minus)) / (2.0 * eps);
      worst = std::max(worst, grad_err(leaves[k]->grad[i], fd));
    }
  }
  return worst;
}

}  // namespace dfl::testing

#endif  // DFL_TESTS_SUPPORT_HPP
