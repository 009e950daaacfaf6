#ifndef DFL_METRICS_HPP
#define DFL_METRICS_HPP

#include <optional>
#include <string>
#include <vector>

#include "dfl/data.hpp"
#include "dfl/network.hpp"
#include "dfl/tensor.hpp"

namespace dfl {

/// Predicted class probabilities (rows sum to 1), true labels, and the
/// sensitive matrix whose audited columns must be exactly {0,1}.
struct PredictionSet {
  Tensor probs;            // n x K
  std::vector<int> labels; // n
  Tensor sensitive;        // n x d

  std::size_t n() const { return probs.rows(); }
  std::size_t k() const { return probs.cols(); }
  std::size_t d() const { return sensitive.cols(); }
  void validate() const;
};

/// argmax prediction with ties broken toward the lowest class index.
std::size_t argmax_row(const Tensor& probs, std::size_t row);

double accuracy(const PredictionSet& preds);

struct TprResult {
  std::vector<int> classes;      // classes included in the aggregate
  std::vector<double> gaps;      // signed, aligned with `classes`
  std::vector<int> excluded;     // classes lacking positives in a group
  double aggregate_pct = 0.0;    // sqrt(mean of squared gaps) * 100
};

TprResult tpr_gap(const PredictionSet& preds, std::size_t z_column);

struct McdpResult {
  std::vector<double> per_class;  // K values, all classes
  double aggregate_pct = 0.0;     // over the first K-1 classes
};

McdpResult mcdp_gap(const PredictionSet& preds, std::size_t z_column);

/// Exact two-sample Kolmogorov-Smirnov distance by sorted merge; the max of
/// |F1 - F0| over the union of observed points.
double ks_distance(std::vector<double> a, std::vector<double> b);

struct AttributeReport {
  std::size_t column = 0;
  bool binary = true;  // gap metrics are only defined for binary columns
  TprResult tpr;
  McdpResult mcdp;
};

struct FairnessReport {
  double accuracy_pct = 0.0;
  std::vector<AttributeReport> attributes;
  std::optional<double> dc_z_latent;
  std::optional<double> dc_z_latent_given_y;

  /// First binary attribute's aggregates; NaN when none exists.
  double tpr_aggregate() const;
  double mcdp_aggregate() const;
};

/// Metrics for an existing prediction set (the audit path). Non-binary
/// sensitive columns get binary=false entries with no gap metrics.
FairnessReport report_from_predictions(const PredictionSet& preds);

struct EvalOptions {
  bool with_dc = false;  // attach DC(Z, latent) and DC(Z, latent | Y)
};

/// Eval-mode forward then report_from_predictions; optionally attaches the
/// dependence estimates between Z and the latent representation.
FairnessReport evaluate(const ModelParams& model, const LabeledDataset& ds,
                        const EvalOptions& options);

}  // namespace dfl

#endif  // DFL_METRICS_HPP
