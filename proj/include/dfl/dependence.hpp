#ifndef DFL_DEPENDENCE_HPP
#define DFL_DEPENDENCE_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "dfl/autodiff.hpp"
#include "dfl/tensor.hpp"

namespace dfl {

/// Sample matrices are rank-2 tensors: one row per sample.
using SampleMatrix = Tensor;

enum class DCMethod { naive, fast };

/// Unbiased empirical distance covariance. May be negative: unbiased
/// estimators of a nonnegative quantity can undershoot, and no clamping is
/// applied anywhere so gradients stay exact.
struct DCEstimate {
  double value = 0.0;
  std::size_t n_used = 0;
  DCMethod method = DCMethod::fast;
};

struct ClassDC {
  int label = 0;
  std::size_t count = 0;
  double weight = 0.0;
  double value = 0.0;
};

struct ConditionalDCEstimate {
  double value = 0.0;
  std::vector<ClassDC> per_class;       // classes with n_k >= 4
  std::vector<int> skipped_classes;     // n_k < 4, zero weight
};

/// Row i gets a 1 in column labels[i]. Labels must lie in [0, num_classes).
SampleMatrix one_hot(const std::vector<int>& labels, int num_classes);

/// O(n^4) reference: averages the order-4 U-statistic kernel over every
/// 4-subset. Restricted to n <= 64; exists to arbitrate the fast form.
DCEstimate dc_naive(const SampleMatrix& z, const SampleMatrix& x);

/// O(n^2) equivalent via U-centered distance matrices:
/// sum_{i != j} Az~_ij Bx~_ij / (n (n-3)). Matches dc_naive to ~1e-15 rel.
DCEstimate dc_fast(const SampleMatrix& z, const SampleMatrix& x);

/// Differentiable variant; z is constant data (no gradient through z). The
/// forward value is computed through the same kernels as dc_fast and is
/// bit-identical to it.
NodePtr dc_fast_node(const SampleMatrix& z, const NodePtr& x);

/// Weighted conditional estimate: per-class dc_fast combined with weights
/// w_k = C(n_k,4) / sum_j C(n_j,4); classes with n_k < 4 carry zero weight
/// and are reported in skipped_classes.
ConditionalDCEstimate dc_conditional(const SampleMatrix& z,
                                     const SampleMatrix& x,
                                     const std::vector<int>& y,
                                     int num_classes);

/// Differentiable conditional variant; optional detail output mirrors the
/// plain overload's bookkeeping.
NodePtr dc_conditional_node(const SampleMatrix& z, const NodePtr& x,
                            const std::vector<int>& y, int num_classes,
                            ConditionalDCEstimate* detail = nullptr);

namespace detail {
/// C(n,4) in exact double arithmetic (exact for any n this library meets).
double choose4(std::size_t n);
}  // namespace detail

}  // namespace dfl

#endif  // DFL_DEPENDENCE_HPP
