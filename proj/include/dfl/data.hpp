#ifndef DFL_DATA_HPP
#define DFL_DATA_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfl/tensor.hpp"

namespace dfl {

enum class ColumnRole {
  numeric,
  categorical,
  target,
  sensitive,              // passed through; must be numeric (0/1 for audits)
  sensitive_categorical,  // one-hot expanded into sensitive columns
  ignore
};

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::numeric;
  std::vector<std::string> vocab;  // ordered; categorical/target roles
};

/// Column roles + vocabularies for CSV ingestion. Exactly one target column,
/// at least one sensitive column.
struct Schema {
  std::vector<ColumnSpec> columns;

  /// Lines of "name,role[,vocab entries...]"; '#' comments allowed.
  static Schema parse_file(const std::string& path);
  static Schema parse_text(const std::string& text);

  void validate() const;
  std::size_t feature_width() const;    // p after one-hot expansion
  std::size_t sensitive_width() const;  // d after expansion
  std::size_t target_classes() const;
  /// Expanded indices of plain numeric feature columns.
  std::vector<std::size_t> numeric_feature_indices() const;
};

/// Representations X (n x p), labels Y in [0, K), sensitive matrix Z (n x d).
struct LabeledDataset {
  Tensor X;
  std::vector<int> Y;
  Tensor Z;
  int num_classes = 2;
  std::string provenance;

  std::size_t n() const { return X.rows(); }
  std::size_t p() const { return X.cols(); }
  std::size_t d() const { return Z.cols(); }
  void validate() const;
};

struct IngestOptions {
  bool standardize = false;   // zero mean / unit variance numeric features
  bool strict_vocab = true;   // unknown category: error vs all-zeros + warning
};

/// Mean/stddev per feature column (already-expanded indexing); identity for
/// one-hot columns.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Warnings (lenient-mode unknown categories etc.) are appended to
/// `warnings` when provided. When options.standardize is set the statistics
/// of this file are used and returned through `stats_out`, so a train file's
/// stats can be applied to further files with ingest_csv_with_stats.
LabeledDataset ingest_csv(const std::string& path, const Schema& schema,
                          const IngestOptions& options,
                          FeatureStats* stats_out = nullptr,
                          std::vector<std::string>* warnings = nullptr);

LabeledDataset ingest_csv_with_stats(const std::string& path,
                                     const Schema& schema,
                                     const IngestOptions& options,
                                     const FeatureStats& stats,
                                     std::vector<std::string>* warnings =
                                         nullptr);

/// "DFLMAT v1 n=<n> p=<p> d=<d> K=<K>" header line, then little-endian
/// float64 X block, Z block, then int32 Y block. Bit-exact round trip.
LabeledDataset ingest_matrix(const std::string& path);
void write_matrix(const LabeledDataset& ds, const std::string& path);

struct Splits {
  LabeledDataset train, val, test;
};

/// Seeded shuffle then contiguous partition; optional stratification by Y.
Splits split(const LabeledDataset& ds, double f_train, double f_val,
             double f_test, std::uint64_t seed, bool stratified = false);

/// Standardize features across splits: statistics come from the train split
/// and are applied to all three. An empty column list means every column;
/// CSV pipelines pass Schema::numeric_feature_indices() so one-hot blocks
/// stay 0/1.
Splits standardize_splits(Splits splits,
                          const std::vector<std::size_t>& columns = {});

/// X ~ N(0, I_4); Z = sin((x1+x2)/sqrt2) + exp(-(x1-x2)/sqrt2) + eps;
/// Y = 1 when x3 + x4 > 0. Columns 3 and 4 span the fair subspace: they
/// carry the label signal and none of Z's.
LabeledDataset gen_toy_sdr(std::size_t n, double noise_sd, std::uint64_t seed);

/// Binary (Y, Z) with joint mix P(z=1,y=1)=0.4, P(0,1)=0.1, P(1,0)=0.1,
/// P(0,0)=0.4. X carries a Y signal in column 0, a Z signal scaled by
/// bias_strength in column 1, and unit noise everywhere.
LabeledDataset gen_biased_classification(std::size_t n, std::size_t p,
                                         double bias_strength,
                                         std::uint64_t seed);

/// Seeded permutation chopped into batches. A final short batch is dropped
/// when no class within it reaches 4 samples (it could not contribute a
/// conditional DC term). Stratified mode fills each batch with classes in
/// proportion to their remaining counts.
std::vector<std::vector<std::size_t>> batches(const LabeledDataset& ds,
                                              std::size_t batch_size,
                                              std::uint64_t seed,
                                              bool stratified = false);

/// Rows of X restricted to a batch, plus aligned Y / Z.
struct Batch {
  Tensor X;
  std::vector<int> Y;
  Tensor Z;
};
Batch take_batch(const LabeledDataset& ds,
                 const std::vector<std::size_t>& idx);

}  // namespace dfl

#endif  // DFL_DATA_HPP
