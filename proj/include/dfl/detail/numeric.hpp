#ifndef DFL_DETAIL_NUMERIC_HPP
#define DFL_DETAIL_NUMERIC_HPP

#include <cmath>
#include <cstddef>

namespace dfl::detail {

// Shared micro-kernels. The plain estimator path and the graph-op path both
// call these so their results agree bit for bit.

inline double row_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double t = a[k] - b[k];
    s += t * t;
  }
  return std::sqrt(s);
}

inline double ucentered_entry(double a_ij, double row_i, double col_j,
                              double total, std::size_t n) {
  double nm2 = static_cast<double>(n - 2);
  return a_ij - row_i / nm2 - col_j / nm2 +
         total / (static_cast<double>(n - 1) * nm2);
}

}  // namespace dfl::detail

#endif  // DFL_DETAIL_NUMERIC_HPP
