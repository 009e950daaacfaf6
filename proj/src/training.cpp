#include "dfl/training.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>
#include <string>

#include "dfl/dependence.hpp"
#include "dfl/metrics.hpp"
#include "dfl/rng.hpp"

namespace dfl {

void TrainConfig::validate() const {
  if (alpha_form) {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw ConfigError("train config: alpha must lie in (0, 1]");
    }
  } else if (lambda < 0.0 || mu < 0.0) {
    throw ConfigError("train config: lambda and mu must be >= 0");
  }
  if (lr <= 0.0) throw ConfigError("train config: lr must be > 0");
  if (epochs == 0) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("train config: batch size must be >= 2");
}

NodePtr cross_entropy(const NodePtr& logprobs,
                      const std::vector<int>& labels) {
  const Tensor& lp = logprobs->value;
  if (lp.rank() != 2 || labels.size() != lp.rows()) {
    throw DimensionError("cross_entropy: logprobs/labels mismatch");
  }
  std::size_t n = lp.rows();
  int k = static_cast<int>(lp.cols());
  NodePtr mask = make_node(one_hot(labels, k));  // throws on bad labels
  return scale(sum(mul(logprobs, mask)), -1.0 / static_cast<double>(n));
}

namespace {

std::vector<std::size_t> class_counts(const std::vector<int>& y, int k) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (int v : y) ++counts[static_cast<std::size_t>(v)];
  return counts;
}

std::string counts_text(const std::vector<std::size_t>& counts) {
  std::ostringstream ss;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (c) ss << ", ";
    ss << c << ":" << counts[c];
  }
  return ss.str();
}

struct TermWeights {
  double w_ce = 1.0;
  double w_z = 0.0;   // weight on the dependence penalty
  double w_y = 0.0;   // weight on the retention term (subtracted)
};

TermWeights term_weights(const TrainConfig& cfg) {
  TermWeights w;
  if (cfg.alpha_form) {
    w.w_ce = cfg.alpha;
    w.w_y = cfg.retain_y_term ? cfg.alpha : 0.0;
    w.w_z = 1.0 - cfg.alpha;
  } else {
    w.w_ce = 1.0;
    w.w_z = cfg.lambda;
    w.w_y = cfg.retain_y_term ? cfg.mu : 0.0;
  }
  return w;
}

/// Assembles w_ce * CE - w_y * DC(Y, latent) + w_z * penalty, skipping any
/// term whose weight is exactly 0 so penalty-off losses stay bit-identical
/// to plain cross-entropy. In the alpha form the CE and retention weights
/// are equal, so this equals alpha * [CE - DC(Y, .)] + (1 - alpha) * penalty.
NodePtr assemble_loss(const NodePtr& ce, const NodePtr& dc_y,
                      const NodePtr& penalty, const TermWeights& w) {
  NodePtr loss;
  if (dc_y && w.w_y == w.w_ce) {
    loss = sub(ce, dc_y);
    if (w.w_ce != 1.0) loss = scale(loss, w.w_ce);
  } else {
    loss = w.w_ce == 1.0 ? ce : scale(ce, w.w_ce);
    if (dc_y) loss = sub(loss, scale(dc_y, w.w_y));
  }
  if (penalty) loss = add(loss, scale(penalty, w.w_z));
  return loss;
}

NodePtr build_loss(ModelParams& model, const BoundModel& bound,
                   const Batch& batch, int num_classes, const TrainConfig& cfg,
                   Criterion criterion, LossComponents* components) {
  TermWeights w = term_weights(cfg);
  ForwardOut out =
      forward(model, bound, make_node(batch.X), RunMode::train);
  NodePtr ce = cross_entropy(out.logprobs, batch.Y);

  NodePtr dc_y;
  if (w.w_y != 0.0) {
    if (criterion == Criterion::independence) {
      std::size_t distinct = 0;
      for (std::size_t c : class_counts(batch.Y, num_classes)) {
        if (c > 0) ++distinct;
      }
      if (distinct < 2) {
        throw InsufficientSamplesError(
            "independence loss: the DC(Y, latent) retention term needs >= 2 "
            "distinct labels in the batch");
      }
    }
    dc_y = dc_fast_node(one_hot(batch.Y, num_classes), out.latent);
  }

  NodePtr penalty;
  ConditionalDCEstimate cond_detail;
  if (w.w_z != 0.0) {
    if (criterion == Criterion::independence) {
      penalty = dc_fast_node(batch.Z, out.latent);
    } else {
      auto counts = class_counts(batch.Y, num_classes);
      if (std::none_of(counts.begin(), counts.end(),
                       [](std::size_t c) { return c >= 4; })) {
        throw InsufficientSamplesError(
            "separation loss: no class reaches 4 samples in this batch "
            "(class counts: " + counts_text(counts) + ")");
      }
      penalty = dc_conditional_node(batch.Z, out.latent, batch.Y, num_classes,
                                    &cond_detail);
    }
  }

  if (components) {
    components->ce = ce->value.item();
    components->dc_y = dc_y ? dc_y->value.item() : 0.0;
    components->dc_z = penalty ? penalty->value.item() : 0.0;
  }
  return assemble_loss(ce, dc_y, penalty, w);
}

}  // namespace

NodePtr loss_independence(ModelParams& model, const BoundModel& bound,
                          const Batch& batch, int num_classes,
                          const TrainConfig& cfg,
                          LossComponents* components) {
  return build_loss(model, bound, batch, num_classes, cfg,
                    Criterion::independence, components);
}

NodePtr loss_separation(ModelParams& model, const BoundModel& bound,
                        const Batch& batch, int num_classes,
                        const TrainConfig& cfg, LossComponents* components) {
  return build_loss(model, bound, batch, num_classes, cfg,
                    Criterion::separation, components);
}

OptimizerState make_optimizer(OptimizerKind kind, const ModelParams& model) {
  OptimizerState state;
  state.kind = kind;
  if (kind == OptimizerKind::adam) {
    for (const auto& p : model.theta) {
      state.m.push_back(Tensor::zeros(p.value.shape()));
      state.v.push_back(Tensor::zeros(p.value.shape()));
    }
    for (const auto& p : model.phi) {
      state.m.push_back(Tensor::zeros(p.value.shape()));
      state.v.push_back(Tensor::zeros(p.value.shape()));
    }
  }
  return state;
}

void optimizer_step(OptimizerState& state, ModelParams& model,
                    const std::vector<Tensor>& grads, double lr) {
  std::size_t count = model.param_count();
  if (grads.size() != count) {
    throw DimensionError("optimizer_step: gradient count mismatch");
  }
  auto param_at = [&](std::size_t i) -> Tensor& {
    return i < model.theta.size() ? model.theta[i].value
                                  : model.phi[i - model.theta.size()].value;
  };
  if (state.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < count; ++i) {
      Tensor& p = param_at(i);
      if (!p.same_shape(grads[i])) {
        throw DimensionError("optimizer_step: gradient shape mismatch");
      }
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * grads[i][j];
    }
    return;
  }
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < count; ++i) {
    Tensor& p = param_at(i);
    if (!p.same_shape(grads[i])) {
      throw DimensionError("optimizer_step: gradient shape mismatch");
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      double g = grads[i][j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

namespace {

std::vector<Tensor> collect_grads(const BoundModel& bound) {
  std::vector<Tensor> grads;
  grads.reserve(bound.theta.size() + bound.phi.size());
  for (const auto& n : bound.theta) grads.push_back(n->grad);
  for (const auto& n : bound.phi) grads.push_back(n->grad);
  return grads;
}

}  // namespace

TrainResult train(const Splits& splits, ModelParams initial,
                  const TrainConfig& cfg) {
  cfg.validate();
  splits.train.validate();
  splits.val.validate();
  splits.test.validate();
  if (splits.train.p() != initial.spec.input_dim) {
    throw DimensionError("train: dataset width does not match model input");
  }
  if (static_cast<std::size_t>(splits.train.num_classes) !=
      initial.spec.output_classes) {
    throw DimensionError("train: class count does not match model output");
  }

  TrainResult result;
  result.model = std::move(initial);
  OptimizerState opt = make_optimizer(cfg.optimizer, result.model);
  Rng master(cfg.seed);
  int num_classes = splits.train.num_classes;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    ModelParams last_good = result.model;
    OptimizerState opt_checkpoint = opt;
    std::uint64_t epoch_seed = master.fork(epoch).next_u64();
    auto batch_indices = batches(splits.train, cfg.batch_size, epoch_seed,
                                 cfg.stratified_batches);
    double sum_loss = 0.0, sum_ce = 0.0, sum_dcz = 0.0, sum_dcy = 0.0;
    bool diverged = false;
    for (const auto& idx : batch_indices) {
      Batch batch = take_batch(splits.train, idx);
      BoundModel bound = bind(result.model);
      LossComponents comps;
      NodePtr loss =
          cfg.criterion == Criterion::independence
              ? loss_independence(result.model, bound, batch, num_classes,
                                  cfg, &comps)
              : loss_separation(result.model, bound, batch, num_classes, cfg,
                                &comps);
      double loss_value = loss->value.item();
      if (!std::isfinite(loss_value)) {
        diverged = true;
        break;
      }
      backward(loss);
      optimizer_step(opt, result.model, collect_grads(bound), cfg.lr);
      sum_loss += loss_value;
      sum_ce += comps.ce;
      sum_dcz += comps.dc_z;
      sum_dcy += comps.dc_y;
    }
    if (diverged) {
      result.model = std::move(last_good);
      opt = std::move(opt_checkpoint);
      result.diverged = true;
      return result;
    }
    double nb = static_cast<double>(batch_indices.size());
    FairnessReport report = evaluate(result.model, splits.test, EvalOptions{});
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = sum_loss / nb;
    rec.ce = sum_ce / nb;
    rec.dc_z = sum_dcz / nb;
    rec.dc_y = sum_dcy / nb;
    rec.test_accuracy = report.accuracy_pct;
    rec.tpr_gap = report.tpr_aggregate();
    rec.mcdp_gap = report.mcdp_aggregate();
    result.records.push_back(rec);
    result.completed_epochs = epoch;
  }
  return result;
}

TrainResult train(const Splits& splits, const NetworkSpec& spec,
                  const TrainConfig& cfg) {
  return train(splits, build(spec, cfg.seed), cfg);
}

AlphaSelection select_alpha(const std::vector<double>& alphas,
                            const Splits& splits, const NetworkSpec& spec,
                            const TrainConfig& cfg, std::size_t probe_hidden,
                            std::size_t threads) {
  if (alphas.empty()) {
    throw ConfigError("select_alpha: empty candidate list");
  }
  splits.val.validate();

  // Standard baseline: one-hidden-layer network, pure cross-entropy.
  TrainConfig std_cfg = cfg;
  std_cfg.alpha_form = false;
  std_cfg.lambda = 0.0;
  std_cfg.mu = 0.0;
  ModelParams probe = build_probe(splits.train.p(), probe_hidden,
                                  static_cast<std::size_t>(
                                      splits.train.num_classes),
                                  cfg.seed);
  TrainResult std_run = train(splits, std::move(probe), std_cfg);
  double std_acc =
      evaluate(std_run.model, splits.val, EvalOptions{}).accuracy_pct;

  auto run_candidate = [&](std::size_t i) {
    TrainConfig c = cfg;
    c.alpha_form = true;
    c.alpha = alphas[i];
    c.seed = Rng(cfg.seed).fork(1000 + i).next_u64();
    TrainResult run = train(splits, build(spec, c.seed), c);
    FairnessReport rep = evaluate(run.model, splits.val, EvalOptions{});
    AlphaCandidate cand;
    cand.alpha = alphas[i];
    cand.val_accuracy = rep.accuracy_pct;
    cand.val_tpr = rep.tpr_aggregate();
    cand.val_mcdp = rep.mcdp_aggregate();
    return cand;
  };

  std::vector<AlphaCandidate> table(alphas.size());
  if (threads <= 1 || alphas.size() == 1) {
    for (std::size_t i = 0; i < alphas.size(); ++i) table[i] = run_candidate(i);
  } else {
    // Waves of at most `threads` fully isolated candidate runs; the table is
    // indexed, so scheduling cannot change the outcome.
    for (std::size_t start = 0; start < alphas.size(); start += threads) {
      std::size_t end = std::min(start + threads, alphas.size());
      std::vector<std::future<AlphaCandidate>> wave;
      for (std::size_t i = start; i < end; ++i) {
        wave.push_back(std::async(std::launch::async, [&run_candidate, i] {
          return run_candidate(i);
        }));
      }
      for (std::size_t i = start; i < end; ++i) {
        table[i] = wave[i - start].get();
      }
    }
  }

  AlphaSelection sel;
  sel.standard_accuracy = std_acc;
  double threshold = 0.95 * std_acc;
  std::size_t best = alphas.size();
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < table.size(); ++i) {
    table[i].passed_filter = table[i].val_accuracy >= threshold;
    if (table[i].passed_filter) {
      double score = 0.5 * (table[i].val_tpr + table[i].val_mcdp);
      if (score < best_score) {
        best_score = score;
        best = i;
      }
    }
  }
  if (best < alphas.size()) {
    sel.any_passed = true;
  } else {
    double best_acc = -1.0;
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (table[i].val_accuracy > best_acc) {
        best_acc = table[i].val_accuracy;
        best = i;
      }
    }
    sel.any_passed = false;
  }
  sel.chosen = alphas[best];
  sel.table = std::move(table);
  return sel;
}

}  // namespace dfl
