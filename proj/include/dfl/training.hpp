#ifndef DFL_TRAINING_HPP
#define DFL_TRAINING_HPP

#include <cstdint>
#include <vector>

#include "dfl/autodiff.hpp"
#include "dfl/data.hpp"
#include "dfl/network.hpp"

namespace dfl {

enum class Criterion { independence, separation };
enum class OptimizerKind { adam, sgd };

/// Objective weighting. The alpha form follows
///   alpha * [CE - DC(Y, latent)] + (1 - alpha) * penalty
/// with penalty DC(Z, latent) (independence) or DC(Z, latent | Y)
/// (separation); the raw form is CE + lambda * penalty - mu * DC(Y, latent).
/// Terms whose weight is exactly zero are never built, so lambda = mu = 0
/// reproduces a pure cross-entropy loss bit for bit.
struct TrainConfig {
  Criterion criterion = Criterion::separation;
  bool alpha_form = true;
  double alpha = 0.7;       // (0, 1]; 1 needs retain_y_term=false to be CE-only
  double lambda = 0.0;      // raw-form weights, both >= 0
  double mu = 0.0;
  bool retain_y_term = true;
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 1;
  bool stratified_batches = false;

  void validate() const;
};

/// Mean over the batch of the negative log-probability of the true class.
NodePtr cross_entropy(const NodePtr& logprobs, const std::vector<int>& labels);

struct LossComponents {
  double ce = 0.0;
  double dc_z = 0.0;  // DC(Z, latent) or DC(Z, latent | Y), whichever is used
  double dc_y = 0.0;  // DC(Y, latent)
};

/// Empirical objectives: both run a train-mode forward on the bound
/// parameters and return the scalar loss node.
NodePtr loss_independence(ModelParams& model, const BoundModel& bound,
                          const Batch& batch, int num_classes,
                          const TrainConfig& cfg,
                          LossComponents* components = nullptr);
NodePtr loss_separation(ModelParams& model, const BoundModel& bound,
                        const Batch& batch, int num_classes,
                        const TrainConfig& cfg,
                        LossComponents* components = nullptr);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t t = 0;
  std::vector<Tensor> m;  // first moments, theta then phi order
  std::vector<Tensor> v;  // second moments
};

OptimizerState make_optimizer(OptimizerKind kind, const ModelParams& model);

/// One update of every parameter; `grads` aligned theta-then-phi.
void optimizer_step(OptimizerState& state, ModelParams& model,
                    const std::vector<Tensor>& grads, double lr);

struct EpochRecord {
  std::size_t epoch = 0;   // 1-based
  double loss = 0.0;       // batch means over the epoch
  double ce = 0.0;
  double dc_z = 0.0;
  double dc_y = 0.0;
  double test_accuracy = 0.0;
  double tpr_gap = 0.0;    // NaN when no binary sensitive column exists
  double mcdp_gap = 0.0;
};

struct TrainResult {
  ModelParams model;               // final, or last-good on divergence
  std::vector<EpochRecord> records;
  bool diverged = false;
  std::size_t completed_epochs = 0;
};

/// Fine-tuning loop: seeded shuffles, minibatch losses, joint theta/phi
/// updates, per-epoch test metrics. A non-finite loss aborts the run and
/// returns the parameters from the end of the previous epoch.
TrainResult train(const Splits& splits, ModelParams initial,
                  const TrainConfig& cfg);

/// Convenience overload that builds the DenseNet from the spec first.
TrainResult train(const Splits& splits, const NetworkSpec& spec,
                  const TrainConfig& cfg);

struct AlphaCandidate {
  double alpha = 0.0;
  double val_accuracy = 0.0;
  double val_tpr = 0.0;
  double val_mcdp = 0.0;
  bool passed_filter = false;
};

struct AlphaSelection {
  double chosen = 0.0;
  bool any_passed = false;        // false: fell back to highest accuracy
  double standard_accuracy = 0.0; // Standard baseline on the validation split
  std::vector<AlphaCandidate> table;
};

/// Trains one model per candidate (seeds derived from cfg.seed), keeps
/// candidates whose validation accuracy reaches 95% of the Standard
/// baseline's, and picks the one minimizing (TPR + MCDP) / 2. `threads`
/// caps optional parallel candidate training; results do not depend on it.
AlphaSelection select_alpha(const std::vector<double>& alphas,
                            const Splits& splits, const NetworkSpec& spec,
                            const TrainConfig& cfg, std::size_t probe_hidden,
                            std::size_t threads = 1);

}  // namespace dfl

#endif  // DFL_TRAINING_HPP
