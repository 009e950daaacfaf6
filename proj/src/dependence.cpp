#include "dfl/dependence.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dfl/detail/numeric.hpp"

namespace dfl {

namespace {

void check_pair(const SampleMatrix& z, const SampleMatrix& x,
                const char* where) {
  if (z.rank() != 2 || x.rank() != 2) {
    throw DimensionError(std::string(where) + ": rank-2 sample matrices required");
  }
  if (z.rows() != x.rows()) {
    throw DimensionError(std::string(where) + ": sample counts differ (" +
                         std::to_string(z.rows()) + " vs " +
                         std::to_string(x.rows()) + ")");
  }
}

std::vector<double> full_distance_matrix(const SampleMatrix& m) {
  std::size_t n = m.rows(), d = m.cols();
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double dist =
          detail::row_distance(m.data() + i * d, m.data() + j * d, d);
      out[i * n + j] = dist;
      out[j * n + i] = dist;
    }
  return out;
}

/// Row sums of on-the-fly distances; identical arithmetic to summing a
/// materialized symmetric distance matrix row by row.
std::vector<double> distance_row_sums(const SampleMatrix& m, double* total) {
  std::size_t n = m.rows(), d = m.cols();
  std::vector<double> rows(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s += detail::row_distance(m.data() + i * d, m.data() + j * d, d);
    }
    rows[i] = s;
  }
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) t += rows[i];
  *total = t;
  return rows;
}

/// U-centered distance matrix of a sample matrix, materialized. Shares the
/// per-entry kernels with the streaming path so values agree bit for bit.
Tensor ucentered_distance_matrix(const SampleMatrix& m) {
  std::size_t n = m.rows();
  double total = 0.0;
  std::vector<double> rows = distance_row_sums(m, &total);
  std::vector<double> D = full_distance_matrix(m);
  Tensor out = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      out[i * n + j] =
          detail::ucentered_entry(D[i * n + j], rows[i], rows[j], total, n);
    }
  return out;
}

std::vector<std::vector<std::size_t>> partition_by_label(
    const std::vector<int>& y, int num_classes, const char* where) {
  if (num_classes < 1) {
    throw EncodingError(std::string(where) + ": class count must be >= 1");
  }
  std::vector<std::vector<std::size_t>> groups(
      static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= num_classes) {
      throw EncodingError(std::string(where) + ": label " +
                          std::to_string(y[i]) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    groups[static_cast<std::size_t>(y[i])].push_back(i);
  }
  return groups;
}

SampleMatrix take_rows(const SampleMatrix& m,
                       const std::vector<std::size_t>& idx) {
  std::size_t d = m.cols();
  Tensor out = Tensor::zeros({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = m.at(idx[r], c);
  return out;
}

struct WeightPlan {
  std::vector<std::size_t> included;  // class labels with n_k >= 4
  std::vector<double> weights;        // aligned with included
  std::vector<int> skipped;
};

WeightPlan conditional_weights(
    const std::vector<std::vector<std::size_t>>& groups) {
  WeightPlan plan;
  long double denom = 0.0L;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (groups[k].size() >= 4) {
      plan.included.push_back(k);
      denom += static_cast<long double>(detail::choose4(groups[k].size()));
    } else {
      plan.skipped.push_back(static_cast<int>(k));
    }
  }
  if (plan.included.empty()) {
    throw InsufficientSamplesError(
        "conditional distance covariance: every class has fewer than 4 "
        "samples");
  }
  for (std::size_t k : plan.included) {
    plan.weights.push_back(static_cast<double>(
        static_cast<long double>(detail::choose4(groups[k].size())) / denom));
  }
  return plan;
}

}  // namespace

namespace detail {
double choose4(std::size_t n) {
  if (n < 4) return 0.0;
  long double v = static_cast<long double>(n) * (n - 1) * (n - 2) * (n - 3) /
                  24.0L;
  return static_cast<double>(v);
}
}  // namespace detail

SampleMatrix one_hot(const std::vector<int>& labels, int num_classes) {
  if (num_classes < 1) throw EncodingError("one_hot: class count must be >= 1");
  Tensor out =
      Tensor::zeros({labels.size(), static_cast<std::size_t>(num_classes)});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw EncodingError("one_hot: label " + std::to_string(labels[i]) +
                          " outside [0, " + std::to_string(num_classes) + ")");
    }
    out[i * static_cast<std::size_t>(num_classes) +
        static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return out;
}

DCEstimate dc_naive(const SampleMatrix& z, const SampleMatrix& x) {
  check_pair(z, x, "dc_naive");
  std::size_t n = z.rows();
  if (n < 4) {
    throw InsufficientSamplesError("dc_naive: need at least 4 samples, got " +
                                   std::to_string(n));
  }
  if (n > 64) {
    throw DimensionError("dc_naive: O(n^4) oracle restricted to n <= 64, got " +
                         std::to_string(n));
  }
  std::vector<double> A = full_distance_matrix(z);
  std::vector<double> B = full_distance_matrix(x);

  double total = 0.0;
  std::size_t idx[4];
  for (idx[0] = 0; idx[0] < n; ++idx[0])
    for (idx[1] = idx[0] + 1; idx[1] < n; ++idx[1])
      for (idx[2] = idx[1] + 1; idx[2] < n; ++idx[2])
        for (idx[3] = idx[2] + 1; idx[3] < n; ++idx[3]) {
          double a[4][4], b[4][4];
          for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
              a[i][j] = A[idx[i] * n + idx[j]];
              b[i][j] = B[idx[i] * n + idx[j]];
            }
          // Order-4 kernel of the unbiased estimator: pairwise product term,
          // product-of-sums term, row-sum product term.
          double t1 = 0.0, sa = 0.0, sb = 0.0, t3 = 0.0;
          for (int i = 0; i < 4; ++i) {
            double ra = 0.0, rb = 0.0;
            for (int j = 0; j < 4; ++j) {
              if (i == j) continue;
              t1 += a[i][j] * b[i][j];
              sa += a[i][j];
              sb += b[i][j];
              ra += a[i][j];
              rb += b[i][j];
            }
            t3 += ra * rb;
          }
          total += t1 / 4.0 + sa * sb / 24.0 - t3 / 4.0;
        }
  return DCEstimate{total / detail::choose4(n), n, DCMethod::naive};
}

DCEstimate dc_fast(const SampleMatrix& z, const SampleMatrix& x) {
  check_pair(z, x, "dc_fast");
  std::size_t n = z.rows();
  if (n < 4) {
    throw InsufficientSamplesError("dc_fast: need at least 4 samples, got " +
                                   std::to_string(n));
  }
  std::size_t dz = z.cols(), dx = x.cols();
  double sz = 0.0, sx = 0.0;
  std::vector<double> rz = distance_row_sums(z, &sz);
  std::vector<double> rx = distance_row_sums(x, &sx);
  // Streaming second pass: distances are recomputed, which keeps memory O(n)
  // and yields the same bits as the materialized graph-op route.
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* zi = z.data() + i * dz;
    const double* xi = x.data() + i * dx;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double az = detail::ucentered_entry(
          detail::row_distance(zi, z.data() + j * dz, dz), rz[i], rz[j], sz, n);
      double bx = detail::ucentered_entry(
          detail::row_distance(xi, x.data() + j * dx, dx), rx[i], rx[j], sx, n);
      acc += az * bx;
    }
  }
  double inv = 1.0 / (static_cast<double>(n) * static_cast<double>(n - 3));
  return DCEstimate{acc * inv, n, DCMethod::fast};
}

NodePtr dc_fast_node(const SampleMatrix& z, const NodePtr& x) {
  check_pair(z, x->value, "dc_fast_node");
  std::size_t n = z.rows();
  if (n < 4) {
    throw InsufficientSamplesError(
        "dc_fast_node: need at least 4 samples, got " + std::to_string(n));
  }
  NodePtr z_centered = make_node(ucentered_distance_matrix(z));
  NodePtr x_centered = ucenter(pairwise_distances(x));
  double inv = 1.0 / (static_cast<double>(n) * static_cast<double>(n - 3));
  return scale(sum(mul(z_centered, x_centered)), inv);
}

ConditionalDCEstimate dc_conditional(const SampleMatrix& z,
                                     const SampleMatrix& x,
                                     const std::vector<int>& y,
                                     int num_classes) {
  check_pair(z, x, "dc_conditional");
  if (y.size() != z.rows()) {
    throw DimensionError("dc_conditional: label count mismatch");
  }
  auto groups = partition_by_label(y, num_classes, "dc_conditional");
  WeightPlan plan = conditional_weights(groups);
  ConditionalDCEstimate est;
  est.skipped_classes = plan.skipped;
  double acc = 0.0;
  for (std::size_t s = 0; s < plan.included.size(); ++s) {
    std::size_t k = plan.included[s];
    SampleMatrix zk = take_rows(z, groups[k]);
    SampleMatrix xk = take_rows(x, groups[k]);
    double v = dc_fast(zk, xk).value;
    acc += plan.weights[s] * v;
    est.per_class.push_back(
        ClassDC{static_cast<int>(k), groups[k].size(), plan.weights[s], v});
  }
  est.value = acc;
  return est;
}

NodePtr dc_conditional_node(const SampleMatrix& z, const NodePtr& x,
                            const std::vector<int>& y, int num_classes,
                            ConditionalDCEstimate* detail_out) {
  check_pair(z, x->value, "dc_conditional_node");
  if (y.size() != z.rows()) {
    throw DimensionError("dc_conditional_node: label count mismatch");
  }
  auto groups = partition_by_label(y, num_classes, "dc_conditional_node");
  WeightPlan plan = conditional_weights(groups);
  ConditionalDCEstimate est;
  est.skipped_classes = plan.skipped;
  NodePtr acc;
  for (std::size_t s = 0; s < plan.included.size(); ++s) {
    std::size_t k = plan.included[s];
    SampleMatrix zk = take_rows(z, groups[k]);
    NodePtr xk = gather_rows(x, groups[k]);
    NodePtr dc_k = dc_fast_node(zk, xk);
    est.per_class.push_back(ClassDC{static_cast<int>(k), groups[k].size(),
                                    plan.weights[s], dc_k->value.item()});
    NodePtr term = scale(dc_k, plan.weights[s]);
    acc = acc ? add(acc, term) : term;
  }
  est.value = acc->value.item();
  if (detail_out) *detail_out = est;
  return acc;
}

}  // namespace dfl
