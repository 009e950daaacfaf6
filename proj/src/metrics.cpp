#include "dfl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dfl/dependence.hpp"

namespace dfl {

void PredictionSet::validate() const {
  if (probs.rank() != 2 || probs.cols() < 2) {
    throw DimensionError("prediction set: probs must be [n,K] with K >= 2");
  }
  if (labels.size() != probs.rows()) {
    throw DimensionError("prediction set: label count mismatch");
  }
  if (sensitive.rank() != 2 || sensitive.rows() != probs.rows()) {
    throw DimensionError("prediction set: sensitive matrix mismatch");
  }
  std::size_t k = probs.cols();
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += probs.at(i, j);
    if (std::fabs(s - 1.0) > 1e-9) {
      throw DomainError("prediction set: probability row " + std::to_string(i) +
                        " sums to " + std::to_string(s));
    }
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw EncodingError("prediction set: label out of range");
    }
  }
}

std::size_t argmax_row(const Tensor& probs, std::size_t row) {
  std::size_t k = probs.cols();
  std::size_t best = 0;
  double best_v = probs.at(row, 0);
  for (std::size_t j = 1; j < k; ++j) {
    if (probs.at(row, j) > best_v) {  // strict: ties keep the lowest index
      best_v = probs.at(row, j);
      best = j;
    }
  }
  return best;
}

double accuracy(const PredictionSet& preds) {
  if (preds.n() == 0) throw DimensionError("accuracy: empty prediction set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.n(); ++i) {
    if (argmax_row(preds.probs, i) == static_cast<std::size_t>(preds.labels[i]))
      ++correct;
  }
  return 100.0 * static_cast<double>(correct) /
         static_cast<double>(preds.n());
}

namespace {

bool column_is_binary(const Tensor& z, std::size_t col) {
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double v = z.at(i, col);
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

void check_binary_column(const PredictionSet& preds, std::size_t col,
                         const char* where) {
  if (col >= preds.d()) {
    throw DimensionError(std::string(where) + ": sensitive column " +
                         std::to_string(col) + " out of range");
  }
  if (!column_is_binary(preds.sensitive, col)) {
    throw MetricUndefinedError(std::string(where) + ": sensitive column " +
                               std::to_string(col) +
                               " is not binary {0,1}");
  }
}

}  // namespace

TprResult tpr_gap(const PredictionSet& preds, std::size_t z_column) {
  check_binary_column(preds, z_column, "tpr_gap");
  std::size_t k = preds.k();
  TprResult res;
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t pos1 = 0, pos0 = 0, hit1 = 0, hit0 = 0;
    for (std::size_t i = 0; i < preds.n(); ++i) {
      if (static_cast<std::size_t>(preds.labels[i]) != j) continue;
      bool predicted = argmax_row(preds.probs, i) == j;
      if (preds.sensitive.at(i, z_column) == 1.0) {
        ++pos1;
        if (predicted) ++hit1;
      } else {
        ++pos0;
        if (predicted) ++hit0;
      }
    }
    if (pos1 == 0 || pos0 == 0) {
      res.excluded.push_back(static_cast<int>(j));
      continue;
    }
    double tpr1 = static_cast<double>(hit1) / static_cast<double>(pos1);
    double tpr0 = static_cast<double>(hit0) / static_cast<double>(pos0);
    res.classes.push_back(static_cast<int>(j));
    res.gaps.push_back(tpr1 - tpr0);
  }
  if (res.classes.empty()) {
    throw MetricUndefinedError(
        "tpr_gap: no class has positives in both sensitive groups");
  }
  double ss = 0.0;
  for (double g : res.gaps) ss += g * g;
  res.aggregate_pct =
      std::sqrt(ss / static_cast<double>(res.gaps.size())) * 100.0;
  return res;
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) {
    throw MetricUndefinedError("ks_distance: empty sample");
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double na = static_cast<double>(a.size());
  double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  while (i < a.size() || j < b.size()) {
    double v;
    if (i == a.size()) v = b[j];
    else if (j == b.size()) v = a[i];
    else v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    double diff = std::fabs(static_cast<double>(i) / na -
                            static_cast<double>(j) / nb);
    best = std::max(best, diff);
  }
  return best;
}

McdpResult mcdp_gap(const PredictionSet& preds, std::size_t z_column) {
  check_binary_column(preds, z_column, "mcdp_gap");
  std::size_t k = preds.k();
  std::vector<double> g1, g0;
  McdpResult res;
  for (std::size_t j = 0; j < k; ++j) {
    g1.clear();
    g0.clear();
    for (std::size_t i = 0; i < preds.n(); ++i) {
      if (preds.sensitive.at(i, z_column) == 1.0)
        g1.push_back(preds.probs.at(i, j));
      else
        g0.push_back(preds.probs.at(i, j));
    }
    if (g1.empty() || g0.empty()) {
      throw MetricUndefinedError("mcdp_gap: one sensitive group is empty");
    }
    res.per_class.push_back(ks_distance(g1, g0));
  }
  // One-hot coordinates sum to 1, so only K-1 carry information.
  double ss = 0.0;
  for (std::size_t j = 0; j + 1 < k; ++j)
    ss += res.per_class[j] * res.per_class[j];
  res.aggregate_pct = std::sqrt(ss / static_cast<double>(k - 1)) * 100.0;
  return res;
}

double FairnessReport::tpr_aggregate() const {
  for (const auto& a : attributes) {
    if (a.binary) return a.tpr.aggregate_pct;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double FairnessReport::mcdp_aggregate() const {
  for (const auto& a : attributes) {
    if (a.binary) return a.mcdp.aggregate_pct;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

FairnessReport report_from_predictions(const PredictionSet& preds) {
  preds.validate();
  FairnessReport report;
  report.accuracy_pct = accuracy(preds);
  for (std::size_t c = 0; c < preds.d(); ++c) {
    AttributeReport attr;
    attr.column = c;
    attr.binary = column_is_binary(preds.sensitive, c);
    if (attr.binary) {
      attr.tpr = tpr_gap(preds, c);
      attr.mcdp = mcdp_gap(preds, c);
    }
    report.attributes.push_back(std::move(attr));
  }
  return report;
}

FairnessReport evaluate(const ModelParams& model, const LabeledDataset& ds,
                        const EvalOptions& options) {
  ds.validate();
  EvalOut out = forward_eval(model, ds.X);
  PredictionSet preds{out.probs, ds.Y, ds.Z};
  FairnessReport report = report_from_predictions(preds);
  if (options.with_dc) {
    report.dc_z_latent = dc_fast(ds.Z, out.latent).value;
    report.dc_z_latent_given_y =
        dc_conditional(ds.Z, out.latent, ds.Y, ds.num_classes).value;
  }
  return report;
}

}  // namespace dfl
