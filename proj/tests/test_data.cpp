#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dfl/data.hpp"
#include "dfl/rng.hpp"

using namespace dfl;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  std::string path = "/tmp/dfl_data_" + name;
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out);
  out << text;
  return path;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Least-squares R^2 of z on columns `cols` of X (plus intercept) via
// Gauss-Jordan on the normal equations. Test-side oracle only.
double linear_r2(const LabeledDataset& ds,
                 const std::vector<std::size_t>& cols) {
  std::size_t n = ds.n();
  std::size_t k = cols.size() + 1;
  std::vector<std::vector<double>> a(k, std::vector<double>(k + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(k, 1.0);
    for (std::size_t c = 0; c < cols.size(); ++c)
      row[c + 1] = ds.X.at(i, cols[c]);
    double z = ds.Z.at(i, 0);
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < k; ++c) a[r][c] += row[r] * row[c];
      a[r][k] += row[r] * z;
    }
  }
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < k; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    REQUIRE(a[col][col] != 0.0);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == col) continue;
      double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= k; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> beta(k);
  for (std::size_t r = 0; r < k; ++r) beta[r] = a[r][k] / a[r][r];

  double mean_z = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_z += ds.Z.at(i, 0);
  mean_z /= static_cast<double>(n);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = beta[0];
    for (std::size_t c = 0; c < cols.size(); ++c)
      pred += beta[c + 1] * ds.X.at(i, cols[c]);
    double z = ds.Z.at(i, 0);
    ss_res += (z - pred) * (z - pred);
    ss_tot += (z - mean_z) * (z - mean_z);
  }
  return 1.0 - ss_res / ss_tot;
}

const char* kTinySchema =
    "height,numeric\n"
    "color,categorical,red,blue\n"
    "group,sensitive\n"
    "label,target,no,yes\n";

}  // namespace

TEST_CASE("schema parsing and widths") {
  Schema schema = Schema::parse_text(kTinySchema);
  CHECK(schema.feature_width() == 3);  // 1 numeric + 2 one-hot
  CHECK(schema.sensitive_width() == 1);
  CHECK(schema.target_classes() == 2);
  CHECK(schema.numeric_feature_indices() == std::vector<std::size_t>{0});

  CHECK_THROWS_AS(Schema::parse_text("a,numeric\n"), FormatError);  // no target
  CHECK_THROWS_AS(Schema::parse_text("a,target,x,y\n"), FormatError);  // no sensitive
  CHECK_THROWS_AS(Schema::parse_text("a,banana\n"), FormatError);
}

TEST_CASE("shipped adult schema expands to 101 features") {
  Schema schema = Schema::parse_file(std::string(DFL_SOURCE_DIR) +
                                     "/configs/adult.schema");
  CHECK(schema.feature_width() == 101);
  CHECK(schema.sensitive_width() == 1);
  CHECK(schema.target_classes() == 2);
}

TEST_CASE("ingest_csv hand fixture") {
  Schema schema = Schema::parse_text(kTinySchema);
  std::string path = write_temp(
      "tiny.csv",
      "height,color,group,label\n"
      "1.5,red,0,no\n"
      "2.5,blue,1,yes\n"
      "3.5,red,1,no\n");
  LabeledDataset ds = ingest_csv(path, schema, IngestOptions{});
  REQUIRE(ds.n() == 3);
  REQUIRE(ds.p() == 3);
  CHECK(ds.X.at(0, 0) == 1.5);
  CHECK(ds.X.at(0, 1) == 1.0);  // red
  CHECK(ds.X.at(0, 2) == 0.0);
  CHECK(ds.X.at(1, 1) == 0.0);
  CHECK(ds.X.at(1, 2) == 1.0);  // blue
  CHECK(ds.Y == std::vector<int>{0, 1, 0});
  CHECK(ds.Z.at(1, 0) == 1.0);
  std::remove(path.c_str());
}

TEST_CASE("ingest_csv standardizes numeric columns to train statistics") {
  Schema schema = Schema::parse_text(kTinySchema);
  std::string path = write_temp(
      "std.csv",
      "height,color,group,label\n"
      "1,red,0,no\n"
      "2,blue,1,yes\n"
      "3,red,1,no\n"
      "6,blue,0,yes\n");
  IngestOptions opts;
  opts.standardize = true;
  FeatureStats stats;
  LabeledDataset ds = ingest_csv(path, schema, opts, &stats);
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < ds.n(); ++i) mean += ds.X.at(i, 0);
  mean /= 4.0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    var += (ds.X.at(i, 0) - mean) * (ds.X.at(i, 0) - mean);
  }
  var /= 4.0;
  CHECK(std::fabs(mean) < 1e-9);
  CHECK(std::fabs(var - 1.0) < 1e-9);
  // one-hot block untouched
  CHECK(ds.X.at(0, 1) == 1.0);

  // applying the returned stats to another file reproduces the transform
  std::string path2 = write_temp(
      "std2.csv",
      "height,color,group,label\n"
      "3,red,1,no\n");
  LabeledDataset ds2 = ingest_csv_with_stats(path2, schema, IngestOptions{},
                                             stats);
  CHECK(ds2.X.at(0, 0) == doctest::Approx((3.0 - stats.mean[0]) /
                                          stats.stddev[0]));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("ingest_csv vocabulary handling") {
  Schema schema = Schema::parse_text(kTinySchema);
  std::string path = write_temp(
      "vocab.csv",
      "height,color,group,label\n"
      "1,green,0,no\n");
  CHECK_THROWS_AS(ingest_csv(path, schema, IngestOptions{}), EncodingError);

  IngestOptions lenient;
  lenient.strict_vocab = false;
  std::vector<std::string> warnings;
  LabeledDataset ds = ingest_csv(path, schema, lenient, nullptr, &warnings);
  CHECK(ds.X.at(0, 1) == 0.0);
  CHECK(ds.X.at(0, 2) == 0.0);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("green") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("ingest_csv rejects missing values with the row index") {
  Schema schema = Schema::parse_text(kTinySchema);
  std::string path = write_temp(
      "missing.csv",
      "height,color,group,label\n"
      "1,red,0,no\n"
      ",blue,1,yes\n");
  try {
    ingest_csv(path, schema, IngestOptions{});
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("matrix file round trip is bit-exact") {
  LabeledDataset ds = gen_biased_classification(50, 5, 2.0, 11);
  std::string p1 = "/tmp/dfl_data_rt1.dflmat";
  std::string p2 = "/tmp/dfl_data_rt2.dflmat";
  write_matrix(ds, p1);
  LabeledDataset loaded = ingest_matrix(p1);
  write_matrix(loaded, p2);
  CHECK(file_bytes(p1) == file_bytes(p2));
  for (std::size_t i = 0; i < ds.X.size(); ++i) CHECK(ds.X[i] == loaded.X[i]);
  CHECK(ds.Y == loaded.Y);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("matrix file fixture loads exact values") {
  LabeledDataset ds;
  ds.X = Tensor::matrix(2, 3, {1.5, -2.25, 0.125, 3.0, 4.5, -6.75});
  ds.Z = Tensor::matrix(2, 1, {1.0, 0.0});
  ds.Y = {1, 0};
  ds.num_classes = 2;
  ds.provenance = "fixture";
  std::string path = "/tmp/dfl_data_fix.dflmat";
  write_matrix(ds, path);
  LabeledDataset loaded = ingest_matrix(path);
  CHECK(loaded.X.at(0, 1) == -2.25);
  CHECK(loaded.X.at(1, 2) == -6.75);
  CHECK(loaded.Z.at(0, 0) == 1.0);
  CHECK(loaded.Y == std::vector<int>{1, 0});
  std::remove(path.c_str());
}

TEST_CASE("matrix file header/payload disagreement is a format error") {
  LabeledDataset ds = gen_biased_classification(10, 4, 1.0, 3);
  std::string path = "/tmp/dfl_data_bad.dflmat";
  write_matrix(ds, path);
  std::string bytes = file_bytes(path);
  // claim one extra sample without providing the payload
  std::string corrupted = bytes;
  auto pos = corrupted.find("n=10");
  REQUIRE(pos != std::string::npos);
  corrupted.replace(pos, 4, "n=11");
  std::ofstream out(path, std::ios::binary);
  out << corrupted;
  out.close();
  CHECK_THROWS_AS(ingest_matrix(path), FormatError);
  // truncated payload
  std::ofstream out2(path, std::ios::binary);
  out2 << bytes.substr(0, bytes.size() - 3);
  out2.close();
  CHECK_THROWS_AS(ingest_matrix(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("split sizes, determinism and stratification") {
  LabeledDataset ds = gen_biased_classification(100, 4, 1.0, 5);
  Splits s = split(ds, 0.8, 0.1, 0.1, 3);
  CHECK(s.train.n() == 80);
  CHECK(s.val.n() == 10);
  CHECK(s.test.n() == 10);

  Splits s2 = split(ds, 0.8, 0.1, 0.1, 3);
  for (std::size_t i = 0; i < s.train.X.size(); ++i) {
    CHECK(s.train.X[i] == s2.train.X[i]);
  }

  CHECK_THROWS_AS(split(ds, 0.5, 0.2, 0.2, 3), ConfigError);
  LabeledDataset tiny = gen_biased_classification(5, 4, 1.0, 5);
  CHECK_THROWS_AS(split(tiny, 0.9, 0.05, 0.05, 3), ConfigError);

  // stratified: class proportions preserved within +-1 per class
  Splits strat = split(ds, 0.6, 0.2, 0.2, 9, true);
  auto count_class = [](const LabeledDataset& d, int k) {
    std::size_t c = 0;
    for (int y : d.Y) {
      if (y == k) ++c;
    }
    return c;
  };
  for (int k = 0; k < 2; ++k) {
    double frac = static_cast<double>(count_class(ds, k)) / 100.0;
    CHECK(std::fabs(static_cast<double>(count_class(strat.train, k)) -
                    frac * 60.0) <= 1.0);
    CHECK(std::fabs(static_cast<double>(count_class(strat.val, k)) -
                    frac * 20.0) <= 1.0);
  }
}

TEST_CASE("standardize_splits uses train statistics") {
  LabeledDataset ds = gen_biased_classification(200, 4, 1.0, 13);
  Splits s = standardize_splits(split(ds, 0.7, 0.15, 0.15, 1));
  for (std::size_t j = 0; j < s.train.p(); ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < s.train.n(); ++i) m += s.train.X.at(i, j);
    m /= static_cast<double>(s.train.n());
    for (std::size_t i = 0; i < s.train.n(); ++i) {
      v += (s.train.X.at(i, j) - m) * (s.train.X.at(i, j) - m);
    }
    v /= static_cast<double>(s.train.n());
    CHECK(std::fabs(m) < 1e-9);
    CHECK(std::fabs(v - 1.0) < 1e-9);
  }
}

TEST_CASE("toy generator matches the closed-form model") {
  LabeledDataset ds = gen_toy_sdr(200, 0.0, 21);
  const double s2 = std::sqrt(0.5);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    double x1 = ds.X.at(i, 0), x2 = ds.X.at(i, 1);
    double expect = std::sin(s2 * (x1 + x2)) + std::exp(-s2 * (x1 - x2));
    CHECK(ds.Z.at(i, 0) == expect);
    CHECK(ds.Y[i] == (ds.X.at(i, 2) + ds.X.at(i, 3) > 0 ? 1 : 0));
  }
  // reproducibility
  LabeledDataset again = gen_toy_sdr(200, 0.0, 21);
  for (std::size_t i = 0; i < ds.X.size(); ++i) CHECK(ds.X[i] == again.X[i]);
  // provenance carries the generator fingerprint
  CHECK(ds.provenance.find("toy_sdr") != std::string::npos);
  CHECK(ds.provenance.find("beta1") != std::string::npos);
}

TEST_CASE("toy fair subspace carries no Z information, sufficient does") {
  LabeledDataset ds = gen_toy_sdr(5000, 0.1, 23);
  double r2_fair = linear_r2(ds, {2, 3});
  double r2_sufficient = linear_r2(ds, {0, 1});
  CHECK(std::fabs(r2_fair) < 0.005);
  CHECK(r2_sufficient > 0.3);
}

TEST_CASE("biased generator composition and signal structure") {
  LabeledDataset ds = gen_biased_classification(10000, 6, 2.5, 29);
  double z1y1 = 0, z0y1 = 0, z1y0 = 0, z0y0 = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    bool z = ds.Z.at(i, 0) == 1.0;
    bool y = ds.Y[i] == 1;
    if (z && y) z1y1 += 1;
    else if (!z && y) z0y1 += 1;
    else if (z && !y) z1y0 += 1;
    else z0y0 += 1;
  }
  double n = static_cast<double>(ds.n());
  CHECK(std::fabs(z1y1 / n - 0.4) < 0.02);
  CHECK(std::fabs(z0y1 / n - 0.1) < 0.02);
  CHECK(std::fabs(z1y0 / n - 0.1) < 0.02);
  CHECK(std::fabs(z0y0 / n - 0.4) < 0.02);

  // with bias 0, X carries ~no Z information beyond the Y correlation;
  // regressing out the Y column leaves the Z column uninformative
  LabeledDataset flat = gen_biased_classification(8000, 6, 0.0, 31);
  double r2_z_col = linear_r2(flat, {1});
  CHECK(std::fabs(r2_z_col) < 0.005);
  // with strong bias the Z column is very informative
  double r2_biased = linear_r2(ds, {1});
  CHECK(r2_biased > 0.5);
}

TEST_CASE("batches drop only unusable short tails") {
  LabeledDataset ds = gen_biased_classification(10, 4, 1.0, 37);
  auto idx = batches(ds, 4, 1);
  REQUIRE(idx.size() == 2);  // short batch of 2 dropped
  CHECK(idx[0].size() == 4);
  CHECK(idx[1].size() == 4);

  // the union of yielded + dropped indices covers 0..n-1 without repeats
  std::set<std::size_t> seen;
  for (const auto& b : idx) {
    for (std::size_t i : b) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == 8);

  CHECK_THROWS_AS(batches(ds, 1, 1), ConfigError);
  CHECK_THROWS_AS(batches(ds, 11, 1), ConfigError);

  // a short tail whose class counts allow a conditional term is kept
  LabeledDataset mono = gen_biased_classification(200, 4, 1.0, 39);
  for (auto& y : mono.Y) y = 0;  // one class: every tail >= 4 is usable
  auto idx2 = batches(mono, 64, 1);
  REQUIRE(idx2.size() == 4);
  CHECK(idx2[3].size() == 8);
}

TEST_CASE("stratified batches balance classes") {
  LabeledDataset ds = gen_biased_classification(64, 4, 1.0, 41);
  // force exact balance
  for (std::size_t i = 0; i < 64; ++i) ds.Y[i] = i < 32 ? 0 : 1;
  auto idx = batches(ds, 8, 5, true);
  REQUIRE(idx.size() == 8);
  for (const auto& b : idx) {
    std::size_t c0 = 0;
    for (std::size_t i : b) {
      if (ds.Y[i] == 0) ++c0;
    }
    CHECK(c0 == 4);
  }
}

TEST_CASE("generators are seed-reproducible") {
  LabeledDataset a = gen_biased_classification(300, 5, 2.0, 55);
  LabeledDataset b = gen_biased_classification(300, 5, 2.0, 55);
  for (std::size_t i = 0; i < a.X.size(); ++i) CHECK(a.X[i] == b.X[i]);
  CHECK(a.Y == b.Y);
  LabeledDataset c = gen_biased_classification(300, 5, 2.0, 56);
  bool differs = false;
  for (std::size_t i = 0; i < a.X.size() && !differs; ++i) {
    differs = a.X[i] != c.X[i];
  }
  CHECK(differs);
}
