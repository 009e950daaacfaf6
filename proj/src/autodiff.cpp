#include "dfl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "dfl/detail/numeric.hpp"

namespace dfl {

Tensor& Node::ensure_grad() {
  if (!grad_ready) {
    grad = Tensor::zeros(value.shape());
    grad_ready = true;
  }
  return grad;
}

void Node::accumulate(const Tensor& g) {
  Tensor& acc = ensure_grad();
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

NodePtr make_node(Tensor value) {
  return std::make_shared<Node>(std::move(value));
}

BatchNormState BatchNormState::fresh(std::size_t width) {
  return BatchNormState{Tensor::zeros({width}), Tensor::full({width}, 1.0)};
}

namespace {

constexpr double kBnEpsilon = 1e-5;
constexpr double kBnMomentum = 0.1;

NodePtr wire(Tensor value, std::vector<NodePtr> parents,
             std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>(std::move(value));
  n->parents = std::move(parents);
  n->backprop = std::move(backprop);
  return n;
}

void check_same_rows(const NodePtr& a, const NodePtr& b, const char* op) {
  if (a->value.rows() != b->value.rows()) {
    throw DimensionError(std::string(op) + ": batch dimensions differ (" +
                         std::to_string(a->value.rows()) + " vs " +
                         std::to_string(b->value.rows()) + ")");
  }
}

enum class Broadcast { same, left_scalar, right_scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return Broadcast::same;
  if (a.is_scalar()) return Broadcast::left_scalar;
  if (b.is_scalar()) return Broadcast::right_scalar;
  throw DimensionError(std::string(op) +
                       ": shapes are neither equal nor scalar-broadcastable");
}

template <typename Fwd, typename DA, typename DB>
NodePtr binary_elementwise(const NodePtr& a, const NodePtr& b, const char* op,
                           Fwd fwd, DA da, DB db) {
  Broadcast kind = broadcast_kind(a->value, b->value, op);
  const Tensor& big =
      kind == Broadcast::left_scalar ? b->value : a->value;
  std::vector<double> out(big.size());
  for (std::size_t i = 0; i < big.size(); ++i) {
    double x = kind == Broadcast::left_scalar ? a->value[0] : a->value[i];
    double y = kind == Broadcast::right_scalar ? b->value[0] : b->value[i];
    out[i] = fwd(x, y);
  }
  return wire(Tensor(big.shape(), std::move(out), false), {a, b},
              [kind, da, db](Node& self) {
                Node& pa = *self.parents[0];
                Node& pb = *self.parents[1];
                Tensor& ga = pa.ensure_grad();
                Tensor& gb = pb.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                  double x = kind == Broadcast::left_scalar ? pa.value[0]
                                                            : pa.value[i];
                  double y = kind == Broadcast::right_scalar ? pb.value[0]
                                                             : pb.value[i];
                  double g = self.grad[i];
                  double* gx = kind == Broadcast::left_scalar ? &ga[0] : &ga[i];
                  double* gy =
                      kind == Broadcast::right_scalar ? &gb[0] : &gb[i];
                  *gx += da(x, y, g);
                  *gy += db(x, y, g);
                }
              });
}

template <typename Fwd, typename Der>
NodePtr unary_elementwise(const NodePtr& x, Fwd fwd, Der der) {
  std::vector<double> out(x->value.size());
  for (std::size_t i = 0; i < x->value.size(); ++i) out[i] = fwd(x->value[i]);
  return wire(Tensor(x->value.shape(), std::move(out), false), {x},
              [der](Node& self) {
                Node& p = *self.parents[0];
                Tensor& g = p.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                  g[i] += der(p.value[i], self.value[i]) * self.grad[i];
                }
              });
}

}  // namespace

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw DimensionError("matmul: incompatible shapes");
  }
  std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      double aval = av[i * k + l];
      const double* brow = bv.data() + l * m;
      double* orow = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aval * brow[j];
    }
  }
  return wire(std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    Tensor& ga = pa.ensure_grad();
    Tensor& gb = pb.ensure_grad();
    const Tensor& g = self.grad;
    // dA = g * B^T
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t l = 0; l < k; ++l) {
        double acc = 0.0;
        const double* grow = g.data() + i * m;
        const double* brow = pb.value.data() + l * m;
        for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
        ga[i * k + l] += acc;
      }
    }
    // dB = A^T * g
    for (std::size_t l = 0; l < k; ++l) {
      for (std::size_t i = 0; i < n; ++i) {
        double aval = pa.value[i * k + l];
        const double* grow = g.data() + i * m;
        double* gbrow = gb.data() + l * m;
        for (std::size_t j = 0; j < m; ++j) gbrow[j] += aval * grow[j];
      }
    }
  });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; },
      [](double, double, double g) { return g; });
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; },
      [](double, double, double g) { return -g; });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double g) { return y * g; },
      [](double x, double, double g) { return x * g; });
}

NodePtr relu(const NodePtr& x) {
  return unary_elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

NodePtr exp(const NodePtr& x) {
  return unary_elementwise(
      x, [](double v) { return std::exp(v); },
      [](double, double out) { return out; });
}

NodePtr log(const NodePtr& x) {
  for (std::size_t i = 0; i < x->value.size(); ++i) {
    if (x->value[i] < 0.0) throw DomainError("log of negative value");
  }
  return unary_elementwise(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

NodePtr sqrt(const NodePtr& x) {
  for (std::size_t i = 0; i < x->value.size(); ++i) {
    if (x->value[i] < 0.0) throw DomainError("sqrt of negative value");
  }
  return unary_elementwise(
      x, [](double v) { return std::sqrt(v); },
      [](double v, double out) { return v == 0.0 ? 0.0 : 0.5 / out; });
}

NodePtr scale(const NodePtr& x, double c) {
  std::vector<double> out(x->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x->value[i];
  return wire(Tensor(x->value.shape(), std::move(out), false), {x},
              [c](Node& self) {
                Tensor& g = self.parents[0]->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i)
                  g[i] += c * self.grad[i];
              });
}

NodePtr add_rowvec(const NodePtr& x, const NodePtr& v) {
  const Tensor& xv = x->value;
  const Tensor& vv = v->value;
  if (xv.rank() != 2 || vv.size() != xv.cols()) {
    throw DimensionError("add_rowvec: vector width must equal matrix columns");
  }
  std::size_t n = xv.rows(), m = xv.cols();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out[i * m + j] = xv[i * m + j] + vv[j];
  return wire(Tensor(xv.shape(), std::move(out), false), {x, v},
              [n, m](Node& self) {
                Tensor& gx = self.parents[0]->ensure_grad();
                Tensor& gv = self.parents[1]->ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                  for (std::size_t j = 0; j < m; ++j) {
                    double g = self.grad[i * m + j];
                    gx[i * m + j] += g;
                    gv[j] += g;
                  }
              });
}

NodePtr concat(const std::vector<NodePtr>& parts) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  if (parts.size() == 1) return parts[0];
  std::size_t n = parts[0]->value.rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p->value.rank() != 2) throw DimensionError("concat: rank-2 required");
    check_same_rows(parts[0], p, "concat");
    total += p->value.cols();
  }
  Tensor out = Tensor::zeros({n, total});
  std::vector<std::size_t> widths;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::size_t w = p->value.cols();
    widths.push_back(w);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j)
        out[i * total + off + j] = p->value[i * w + j];
    off += w;
  }
  return wire(std::move(out), parts, [n, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Tensor& g = self.parents[k]->ensure_grad();
      std::size_t w = widths[k];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j)
          g[i * w + j] += self.grad[i * total + off + j];
      off += w;
    }
  });
}

namespace {

NodePtr batch_norm_affine(const NodePtr& x, const NodePtr& gamma,
                          const NodePtr& beta, const std::vector<double>& mu,
                          const std::vector<double>& inv_std) {
  // Shared by train (batch stats) and eval (running stats). Saves the
  // normalized values for the adjoint.
  std::size_t n = x->value.rows(), m = x->value.cols();
  std::vector<double> xhat(n * m);
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double h = (x->value[i * m + j] - mu[j]) * inv_std[j];
      xhat[i * m + j] = h;
      out[i * m + j] = gamma->value[j] * h + beta->value[j];
    }
  return wire(Tensor({n, m}, std::move(out), false), {x, gamma, beta},
              [n, m, xhat, inv_std](Node& self) {
                Node& px = *self.parents[0];
                Node& pg = *self.parents[1];
                Node& pb = *self.parents[2];
                Tensor& gx = px.ensure_grad();
                Tensor& gg = pg.ensure_grad();
                Tensor& gb = pb.ensure_grad();
                const Tensor& g = self.grad;
                double inv_n = 1.0 / static_cast<double>(n);
                for (std::size_t j = 0; j < m; ++j) {
                  double sum_g = 0.0, sum_gx = 0.0;
                  for (std::size_t i = 0; i < n; ++i) {
                    sum_g += g[i * m + j];
                    sum_gx += g[i * m + j] * xhat[i * m + j];
                  }
                  gb[j] += sum_g;
                  gg[j] += sum_gx;
                  double gam = pg.value[j];
                  for (std::size_t i = 0; i < n; ++i) {
                    gx[i * m + j] += gam * inv_std[j] *
                                     (g[i * m + j] - inv_n * sum_g -
                                      xhat[i * m + j] * inv_n * sum_gx);
                  }
                }
              });
}

NodePtr batch_norm_eval_affine(const NodePtr& x, const NodePtr& gamma,
                               const NodePtr& beta,
                               const std::vector<double>& mu,
                               const std::vector<double>& inv_std) {
  // Running statistics are constants here, so the x adjoint is a plain
  // per-column scaling.
  std::size_t n = x->value.rows(), m = x->value.cols();
  std::vector<double> xhat(n * m);
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double h = (x->value[i * m + j] - mu[j]) * inv_std[j];
      xhat[i * m + j] = h;
      out[i * m + j] = gamma->value[j] * h + beta->value[j];
    }
  return wire(Tensor({n, m}, std::move(out), false), {x, gamma, beta},
              [n, m, xhat, inv_std](Node& self) {
                Node& px = *self.parents[0];
                Node& pg = *self.parents[1];
                Node& pb = *self.parents[2];
                Tensor& gx = px.ensure_grad();
                Tensor& gg = pg.ensure_grad();
                Tensor& gb = pb.ensure_grad();
                for (std::size_t j = 0; j < m; ++j) {
                  double gam = pg.value[j];
                  for (std::size_t i = 0; i < n; ++i) {
                    double g = self.grad[i * m + j];
                    gx[i * m + j] += gam * inv_std[j] * g;
                    gg[j] += g * xhat[i * m + j];
                    gb[j] += g;
                  }
                }
              });
}

}  // namespace

NodePtr batch_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                   BatchNormState& state, RunMode mode) {
  const Tensor& xv = x->value;
  if (xv.rank() != 2) throw DimensionError("batch_norm: rank-2 input required");
  std::size_t n = xv.rows(), m = xv.cols();
  if (gamma->value.size() != m || beta->value.size() != m ||
      state.running_mean.size() != m || state.running_var.size() != m) {
    throw DimensionError("batch_norm: parameter width mismatch");
  }
  if (mode == RunMode::eval) return batch_norm_eval(x, gamma, beta, state);
  if (n < 2) {
    throw DimensionError("batch_norm: batch too small (need n >= 2 in train "
                         "mode, got " + std::to_string(n) + ")");
  }
  std::vector<double> mu(m, 0.0), var(m, 0.0), inv_std(m);
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += xv[i * m + j];
    mu[j] = s / static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double t = xv[i * m + j] - mu[j];
      v += t * t;
    }
    var[j] = v / static_cast<double>(n);
    inv_std[j] = 1.0 / std::sqrt(var[j] + kBnEpsilon);
  }
  for (std::size_t j = 0; j < m; ++j) {
    state.running_mean[j] =
        (1.0 - kBnMomentum) * state.running_mean[j] + kBnMomentum * mu[j];
    state.running_var[j] =
        (1.0 - kBnMomentum) * state.running_var[j] + kBnMomentum * var[j];
  }
  return batch_norm_affine(x, gamma, beta, mu, inv_std);
}

NodePtr batch_norm_eval(const NodePtr& x, const NodePtr& gamma,
                        const NodePtr& beta, const BatchNormState& state) {
  std::size_t m = x->value.cols();
  std::vector<double> mu(m), inv_std(m);
  for (std::size_t j = 0; j < m; ++j) {
    mu[j] = state.running_mean[j];
    inv_std[j] = 1.0 / std::sqrt(state.running_var[j] + kBnEpsilon);
  }
  return batch_norm_eval_affine(x, gamma, beta, mu, inv_std);
}

NodePtr log_softmax(const NodePtr& x) {
  const Tensor& xv = x->value;
  if (xv.rank() != 2 || xv.cols() < 2) {
    throw DimensionError("log_softmax: need a [n,K] input with K >= 2");
  }
  std::size_t n = xv.rows(), k = xv.cols();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = row[j] - lse;
  }
  return wire(Tensor({n, k}, std::move(out), false), {x}, [n, k](Node& self) {
    Tensor& gx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < k; ++j) gsum += self.grad[i * k + j];
      for (std::size_t j = 0; j < k; ++j) {
        double p = std::exp(self.value[i * k + j]);
        gx[i * k + j] += self.grad[i * k + j] - p * gsum;
      }
    }
  });
}

NodePtr pairwise_distances(const NodePtr& x) {
  const Tensor& xv = x->value;
  if (xv.rank() != 2) {
    throw DimensionError("pairwise_distances: rank-2 input required");
  }
  std::size_t n = xv.rows(), m = xv.cols();
  if (n < 2) throw DimensionError("pairwise_distances: need n >= 2 rows");
  Tensor out = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d = detail::row_distance(xv.data() + i * m, xv.data() + j * m, m);
      out[i * n + j] = d;
      out[j * n + i] = d;
    }
  }
  return wire(std::move(out), {x}, [n, m](Node& self) {
    Node& px = *self.parents[0];
    Tensor& gx = px.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double d = self.value[i * n + j];
        if (d == 0.0) continue;  // subgradient 0 at coincident rows
        double coeff = (self.grad[i * n + j] + self.grad[j * n + i]) / d;
        if (coeff == 0.0) continue;
        for (std::size_t c = 0; c < m; ++c) {
          double diff = px.value[i * m + c] - px.value[j * m + c];
          gx[i * m + c] += coeff * diff;
          gx[j * m + c] -= coeff * diff;
        }
      }
    }
  });
}

NodePtr ucenter(const NodePtr& d) {
  const Tensor& dv = d->value;
  if (dv.rank() != 2 || dv.rows() != dv.cols()) {
    throw DimensionError("ucenter: square matrix required");
  }
  std::size_t n = dv.rows();
  if (n < 4) throw DimensionError("ucenter: need n >= 4");
  std::vector<double> rows(n, 0.0), cols(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      rows[i] += dv[i * n + j];
      cols[j] += dv[i * n + j];
    }
  for (std::size_t i = 0; i < n; ++i) total += rows[i];
  Tensor out = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      out[i * n + j] =
          detail::ucentered_entry(dv[i * n + j], rows[i], cols[j], total, n);
    }
  return wire(std::move(out), {d}, [n](Node& self) {
    Tensor& gd = self.parents[0]->ensure_grad();
    const Tensor& g = self.grad;
    std::vector<double> grow(n, 0.0), gcol(n, 0.0);
    double gtot = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        grow[i] += g[i * n + j];
        gcol[j] += g[i * n + j];
        gtot += g[i * n + j];
      }
    double nm2 = static_cast<double>(n - 2);
    double nm12 = static_cast<double>(n - 1) * nm2;
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = 0; l < n; ++l) {
        double direct = (k == l) ? 0.0 : g[k * n + l];
        gd[k * n + l] +=
            direct - grow[k] / nm2 - gcol[l] / nm2 + gtot / nm12;
      }
  });
}

NodePtr sum(const NodePtr& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) s += x->value[i];
  return wire(Tensor({1}, {s}, false), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    double gv = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gv;
  });
}

NodePtr mean(const NodePtr& x) {
  double s = 0.0;
  std::size_t n = x->value.size();
  for (std::size_t i = 0; i < n; ++i) s += x->value[i];
  return wire(Tensor({1}, {s / static_cast<double>(n)}, false), {x},
              [n](Node& self) {
                Tensor& g = self.parents[0]->ensure_grad();
                double gv = self.grad[0] / static_cast<double>(n);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gv;
              });
}

NodePtr gather_rows(const NodePtr& x, const std::vector<std::size_t>& idx) {
  const Tensor& xv = x->value;
  if (xv.rank() != 2) throw DimensionError("gather_rows: rank-2 required");
  std::size_t m = xv.cols();
  for (std::size_t i : idx) {
    if (i >= xv.rows()) throw DimensionError("gather_rows: index out of range");
  }
  Tensor out = Tensor::zeros({idx.size(), m});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t j = 0; j < m; ++j)
      out[r * m + j] = xv[idx[r] * m + j];
  return wire(std::move(out), {x}, [idx, m](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < m; ++j)
        g[idx[r] * m + j] += self.grad[r * m + j];
  });
}

void backward(const NodePtr& loss) {
  if (!loss->value.is_scalar()) {
    throw DimensionError("backward: loss must be scalar");
  }
  if (loss->backward_seeded) {
    throw Error("backward: already run on this graph root");
  }
  loss->backward_seeded = true;

  // Iterative post-order DFS; reversing it gives a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next].get();
      ++next;
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->ensure_grad();
  loss->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

}  // namespace dfl
