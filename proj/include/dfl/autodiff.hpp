#ifndef DFL_AUTODIFF_HPP
#define DFL_AUTODIFF_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "dfl/tensor.hpp"

namespace dfl {

enum class RunMode { train, eval };

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of a dynamically built reverse-mode graph. `backprop` reads the
/// node's accumulated gradient and adds contributions into the parents'
/// gradients; it is empty for leaves.
struct Node {
  Tensor value;
  Tensor grad;
  bool grad_ready = false;      // grad tensor materialized
  bool backward_seeded = false; // backward() was rooted here
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;

  explicit Node(Tensor v) : value(std::move(v)) {}

  Tensor& ensure_grad();
  void accumulate(const Tensor& g);
};

NodePtr make_node(Tensor value);

/// Running statistics for one batch-norm site. Normalization uses the biased
/// (denominator n) batch variance; running stats blend with momentum 0.1.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;

  static BatchNormState fresh(std::size_t width);
};

// ---- graph operations ----

// a [n,k] x b [k,m] -> [n,m]
NodePtr matmul(const NodePtr& a, const NodePtr& b);

// Elementwise; operands must have equal shapes or one side must be a
// single-element scalar (broadcast).
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);

// relu adjoint uses subgradient 0 at input 0; sqrt adjoint is likewise 0 at 0.
NodePtr relu(const NodePtr& x);
NodePtr exp(const NodePtr& x);
NodePtr log(const NodePtr& x);
NodePtr sqrt(const NodePtr& x);

NodePtr scale(const NodePtr& x, double c);

// x [n,m] + v [m] broadcast over rows (fully connected bias).
NodePtr add_rowvec(const NodePtr& x, const NodePtr& v);

// Concatenate along the feature axis; all parts share the batch dimension.
// A single part is returned unchanged.
NodePtr concat(const std::vector<NodePtr>& parts);

NodePtr batch_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                   BatchNormState& state, RunMode mode);
// Const-friendly eval entry used when the model must not be touched.
NodePtr batch_norm_eval(const NodePtr& x, const NodePtr& gamma,
                        const NodePtr& beta, const BatchNormState& state);

// Row-wise log-softmax with max-subtraction.
NodePtr log_softmax(const NodePtr& x);

// x [n,m] -> symmetric [n,n] matrix of Euclidean row distances, zero
// diagonal. The adjoint of a zero distance is 0.
NodePtr pairwise_distances(const NodePtr& x);

// U-centering of a square matrix: off-diagonal entries become
// a_ij - r_i/(n-2) - r_j'/(n-2) + s/((n-1)(n-2)) with r row sums, r' column
// sums, s the total; diagonal forced to 0. Linear, so the adjoint is exact.
NodePtr ucenter(const NodePtr& d);

NodePtr sum(const NodePtr& x);   // -> scalar
NodePtr mean(const NodePtr& x);  // -> scalar

// Select rows of a [n,m] tensor; backward scatter-adds.
NodePtr gather_rows(const NodePtr& x, const std::vector<std::size_t>& idx);

/// Reverse topological sweep from a scalar loss. Gradients of every reachable
/// node are materialized (zero-filled, then accumulated). Calling backward a
/// second time on the same root throws.
void backward(const NodePtr& loss);

}  // namespace dfl

#endif  // DFL_AUTODIFF_HPP
