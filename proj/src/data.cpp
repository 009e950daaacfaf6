#include "dfl/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dfl/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "matrix file format assumes a little-endian host");

namespace dfl {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(',', pos);
    if (next == std::string::npos) {
      out.push_back(trim(line.substr(pos)));
      break;
    }
    out.push_back(trim(line.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

ColumnRole role_from(const std::string& s) {
  if (s == "numeric") return ColumnRole::numeric;
  if (s == "categorical") return ColumnRole::categorical;
  if (s == "target") return ColumnRole::target;
  if (s == "sensitive") return ColumnRole::sensitive;
  if (s == "sensitive_categorical") return ColumnRole::sensitive_categorical;
  if (s == "ignore") return ColumnRole::ignore;
  throw FormatError("schema: unknown column role '" + s + "'");
}

double parse_number(const std::string& s, std::size_t row,
                    const std::string& col) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw FormatError("csv row " + std::to_string(row) + ", column '" + col +
                      "': cannot parse number from '" + s + "'");
  }
}

}  // namespace

Schema Schema::parse_text(const std::string& text) {
  Schema schema;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto parts = split_csv_line(line);
    if (parts.size() < 2) {
      throw FormatError("schema: need 'name,role[,vocab...]' in line '" +
                        line + "'");
    }
    ColumnSpec col;
    col.name = parts[0];
    col.role = role_from(parts[1]);
    col.vocab.assign(parts.begin() + 2, parts.end());
    schema.columns.push_back(std::move(col));
  }
  schema.validate();
  return schema;
}

Schema Schema::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open schema file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

void Schema::validate() const {
  std::size_t targets = 0, sensitives = 0;
  for (const auto& col : columns) {
    switch (col.role) {
      case ColumnRole::target:
        ++targets;
        if (col.vocab.size() < 2) {
          throw FormatError("schema: target column '" + col.name +
                            "' needs a vocabulary of >= 2 labels");
        }
        break;
      case ColumnRole::categorical:
        if (col.vocab.empty()) {
          throw FormatError("schema: categorical column '" + col.name +
                            "' needs a vocabulary");
        }
        break;
      case ColumnRole::sensitive:
        ++sensitives;
        if (!col.vocab.empty() && col.vocab.size() != 2) {
          throw FormatError("schema: binary sensitive column '" + col.name +
                            "' must have an empty or 2-entry vocabulary");
        }
        break;
      case ColumnRole::sensitive_categorical:
        ++sensitives;
        if (col.vocab.empty()) {
          throw FormatError("schema: sensitive_categorical column '" +
                            col.name + "' needs a vocabulary");
        }
        break;
      default:
        break;
    }
  }
  if (targets != 1) {
    throw FormatError("schema: exactly one target column required, found " +
                      std::to_string(targets));
  }
  if (sensitives == 0) {
    throw FormatError("schema: at least one sensitive column required");
  }
}

std::size_t Schema::feature_width() const {
  std::size_t w = 0;
  for (const auto& col : columns) {
    if (col.role == ColumnRole::numeric) w += 1;
    if (col.role == ColumnRole::categorical) w += col.vocab.size();
  }
  return w;
}

std::size_t Schema::sensitive_width() const {
  std::size_t w = 0;
  for (const auto& col : columns) {
    if (col.role == ColumnRole::sensitive) w += 1;
    if (col.role == ColumnRole::sensitive_categorical) w += col.vocab.size();
  }
  return w;
}

std::size_t Schema::target_classes() const {
  for (const auto& col : columns) {
    if (col.role == ColumnRole::target) return col.vocab.size();
  }
  return 0;
}

std::vector<std::size_t> Schema::numeric_feature_indices() const {
  std::vector<std::size_t> out;
  std::size_t off = 0;
  for (const auto& col : columns) {
    if (col.role == ColumnRole::numeric) {
      out.push_back(off);
      off += 1;
    } else if (col.role == ColumnRole::categorical) {
      off += col.vocab.size();
    }
  }
  return out;
}

void LabeledDataset::validate() const {
  if (X.rank() != 2 || Z.rank() != 2) {
    throw DimensionError("dataset: X and Z must be rank-2");
  }
  if (Y.size() != X.rows() || Z.rows() != X.rows()) {
    throw DimensionError("dataset: inconsistent sample counts");
  }
  if (p() == 0 || d() == 0) {
    throw DimensionError("dataset: empty feature or sensitive width");
  }
  for (int y : Y) {
    if (y < 0 || y >= num_classes) {
      throw EncodingError("dataset: label outside [0, K)");
    }
  }
}

namespace {

LabeledDataset ingest_csv_impl(const std::string& path, const Schema& schema,
                               const IngestOptions& options,
                               const FeatureStats* apply_stats,
                               FeatureStats* stats_out,
                               std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open csv file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("csv: empty file: " + path);
  auto header = split_csv_line(line);
  if (header.size() != schema.columns.size()) {
    throw FormatError("csv: header has " + std::to_string(header.size()) +
                      " columns, schema expects " +
                      std::to_string(schema.columns.size()));
  }
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] != schema.columns[c].name) {
      throw FormatError("csv: header column " + std::to_string(c) + " is '" +
                        header[c] + "', schema expects '" +
                        schema.columns[c].name + "'");
    }
  }

  std::size_t p = schema.feature_width();
  std::size_t d = schema.sensitive_width();
  std::vector<double> xs, zs;
  std::vector<int> ys;
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    ++row_index;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != schema.columns.size()) {
      throw FormatError("csv row " + std::to_string(row_index) + ": has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(schema.columns.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].empty() && schema.columns[c].role != ColumnRole::ignore) {
        throw FormatError("csv row " + std::to_string(row_index) +
                          ": missing value in column '" +
                          schema.columns[c].name + "'");
      }
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const ColumnSpec& col = schema.columns[c];
      const std::string& cell = cells[c];
      switch (col.role) {
        case ColumnRole::numeric:
          xs.push_back(parse_number(cell, row_index, col.name));
          break;
        case ColumnRole::categorical: {
          auto it = std::find(col.vocab.begin(), col.vocab.end(), cell);
          std::size_t start = xs.size();
          xs.resize(xs.size() + col.vocab.size(), 0.0);
          if (it != col.vocab.end()) {
            xs[start + static_cast<std::size_t>(it - col.vocab.begin())] = 1.0;
          } else if (options.strict_vocab) {
            throw EncodingError("csv row " + std::to_string(row_index) +
                                ": unknown category '" + cell +
                                "' in column '" + col.name + "'");
          } else if (warnings) {
            warnings->push_back("row " + std::to_string(row_index) +
                                ": unknown category '" + cell + "' in '" +
                                col.name + "' encoded as zeros");
          }
          break;
        }
        case ColumnRole::target: {
          auto it = std::find(col.vocab.begin(), col.vocab.end(), cell);
          if (it == col.vocab.end()) {
            throw EncodingError("csv row " + std::to_string(row_index) +
                                ": unknown target label '" + cell + "'");
          }
          ys.push_back(static_cast<int>(it - col.vocab.begin()));
          break;
        }
        case ColumnRole::sensitive: {
          if (col.vocab.empty()) {
            zs.push_back(parse_number(cell, row_index, col.name));
          } else {
            auto it = std::find(col.vocab.begin(), col.vocab.end(), cell);
            if (it == col.vocab.end()) {
              throw EncodingError("csv row " + std::to_string(row_index) +
                                  ": unknown sensitive value '" + cell + "'");
            }
            zs.push_back(static_cast<double>(it - col.vocab.begin()));
          }
          break;
        }
        case ColumnRole::sensitive_categorical: {
          auto it = std::find(col.vocab.begin(), col.vocab.end(), cell);
          if (it == col.vocab.end()) {
            throw EncodingError("csv row " + std::to_string(row_index) +
                                ": unknown sensitive value '" + cell + "'");
          }
          std::size_t start = zs.size();
          zs.resize(zs.size() + col.vocab.size(), 0.0);
          zs[start + static_cast<std::size_t>(it - col.vocab.begin())] = 1.0;
          break;
        }
        case ColumnRole::ignore:
          break;
      }
    }
  }
  std::size_t n = ys.size();
  if (n == 0) throw FormatError("csv: no data rows in " + path);

  LabeledDataset ds;
  ds.X = Tensor({n, p}, std::move(xs));
  ds.Y = std::move(ys);
  ds.Z = Tensor({n, d}, std::move(zs));
  ds.num_classes = static_cast<int>(schema.target_classes());
  ds.provenance = "csv:" + path;

  if (apply_stats || options.standardize) {
    FeatureStats stats;
    if (apply_stats) {
      stats = *apply_stats;
      if (stats.mean.size() != p || stats.stddev.size() != p) {
        throw DimensionError("feature stats width mismatch");
      }
    } else {
      stats.mean.assign(p, 0.0);
      stats.stddev.assign(p, 1.0);
      // Standardize only true numeric columns; one-hot blocks stay 0/1.
      std::size_t off = 0;
      for (const auto& col : schema.columns) {
        if (col.role == ColumnRole::numeric) {
          double m = 0.0;
          for (std::size_t i = 0; i < n; ++i) m += ds.X.at(i, off);
          m /= static_cast<double>(n);
          double v = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            double t = ds.X.at(i, off) - m;
            v += t * t;
          }
          v /= static_cast<double>(n);
          stats.mean[off] = m;
          stats.stddev[off] = v > 0.0 ? std::sqrt(v) : 1.0;
          off += 1;
        } else if (col.role == ColumnRole::categorical) {
          off += col.vocab.size();
        }
      }
    }
    for (std::size_t j = 0; j < p; ++j) {
      if (stats.mean[j] == 0.0 && stats.stddev[j] == 1.0) continue;
      for (std::size_t i = 0; i < n; ++i) {
        ds.X.at(i, j) = (ds.X.at(i, j) - stats.mean[j]) / stats.stddev[j];
      }
    }
    if (stats_out) *stats_out = stats;
  }
  return ds;
}

}  // namespace

LabeledDataset ingest_csv(const std::string& path, const Schema& schema,
                          const IngestOptions& options,
                          FeatureStats* stats_out,
                          std::vector<std::string>* warnings) {
  return ingest_csv_impl(path, schema, options, nullptr, stats_out, warnings);
}

LabeledDataset ingest_csv_with_stats(const std::string& path,
                                     const Schema& schema,
                                     const IngestOptions& options,
                                     const FeatureStats& stats,
                                     std::vector<std::string>* warnings) {
  return ingest_csv_impl(path, schema, options, &stats, nullptr, warnings);
}

void write_matrix(const LabeledDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open matrix file for writing: " + path);
  out << "DFLMAT v1 n=" << ds.n() << " p=" << ds.p() << " d=" << ds.d()
      << " K=" << ds.num_classes << "\n";
  out.write(reinterpret_cast<const char*>(ds.X.data()),
            static_cast<std::streamsize>(ds.X.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(ds.Z.data()),
            static_cast<std::streamsize>(ds.Z.size() * sizeof(double)));
  std::vector<std::int32_t> y32(ds.Y.begin(), ds.Y.end());
  out.write(reinterpret_cast<const char*>(y32.data()),
            static_cast<std::streamsize>(y32.size() * sizeof(std::int32_t)));
  if (!out) throw FormatError("matrix file write failed: " + path);
}

LabeledDataset ingest_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open matrix file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw FormatError("matrix file: no header");
  std::istringstream hs(header);
  std::string magic, version;
  hs >> magic >> version;
  if (magic != "DFLMAT" || version != "v1") {
    throw FormatError("matrix file: bad magic '" + header + "'");
  }
  std::size_t n = 0, p = 0, d = 0;
  int k = 0;
  std::string tok;
  while (hs >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) {
      throw FormatError("matrix file: bad header token '" + tok + "'");
    }
    std::string key = tok.substr(0, eq);
    std::string val = tok.substr(eq + 1);
    if (key == "n") n = std::stoull(val);
    else if (key == "p") p = std::stoull(val);
    else if (key == "d") d = std::stoull(val);
    else if (key == "K") k = std::stoi(val);
    else throw FormatError("matrix file: unknown header key '" + key + "'");
  }
  if (n == 0 || p == 0 || d == 0 || k < 2) {
    throw FormatError("matrix file: invalid dimensions in header");
  }
  auto read_doubles = [&](std::size_t count) {
    std::vector<double> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) {
      throw FormatError("matrix file: payload shorter than header promises");
    }
    return buf;
  };
  std::vector<double> x = read_doubles(n * p);
  std::vector<double> z = read_doubles(n * d);
  std::vector<std::int32_t> y32(n);
  in.read(reinterpret_cast<char*>(y32.data()),
          static_cast<std::streamsize>(n * sizeof(std::int32_t)));
  if (!in) {
    throw FormatError("matrix file: payload shorter than header promises");
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw FormatError("matrix file: trailing bytes after payload");
  }
  LabeledDataset ds;
  ds.X = Tensor({n, p}, std::move(x));
  ds.Z = Tensor({n, d}, std::move(z));
  ds.Y.assign(y32.begin(), y32.end());
  ds.num_classes = k;
  ds.provenance = "matrix:" + path;
  ds.validate();
  return ds;
}

namespace {

LabeledDataset take_rows_dataset(const LabeledDataset& ds,
                                 const std::vector<std::size_t>& idx,
                                 const std::string& note) {
  LabeledDataset out;
  out.X = Tensor::zeros({idx.size(), ds.p()});
  out.Z = Tensor::zeros({idx.size(), ds.d()});
  out.Y.resize(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < ds.p(); ++c) out.X.at(r, c) = ds.X.at(idx[r], c);
    for (std::size_t c = 0; c < ds.d(); ++c) out.Z.at(r, c) = ds.Z.at(idx[r], c);
    out.Y[r] = ds.Y[idx[r]];
  }
  out.num_classes = ds.num_classes;
  out.provenance = ds.provenance + "|" + note;
  return out;
}

}  // namespace

Splits split(const LabeledDataset& ds, double f_train, double f_val,
             double f_test, std::uint64_t seed, bool stratified) {
  ds.validate();
  if (f_train <= 0.0 || f_val <= 0.0 || f_test <= 0.0 ||
      std::fabs(f_train + f_val + f_test - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must be positive and sum to 1");
  }
  std::size_t n = ds.n();
  auto partition = [&](const std::vector<std::size_t>& pool,
                       std::vector<std::size_t>& tr,
                       std::vector<std::size_t>& va,
                       std::vector<std::size_t>& te) {
    std::size_t m = pool.size();
    auto n_tr = static_cast<std::size_t>(
        std::floor(f_train * static_cast<double>(m) + 1e-9));
    auto n_va = static_cast<std::size_t>(
        std::floor(f_val * static_cast<double>(m) + 1e-9));
    if (n_tr + n_va > m) n_va = m - n_tr;
    for (std::size_t i = 0; i < m; ++i) {
      if (i < n_tr) tr.push_back(pool[i]);
      else if (i < n_tr + n_va) va.push_back(pool[i]);
      else te.push_back(pool[i]);
    }
  };

  Rng rng(seed);
  std::vector<std::size_t> tr, va, te;
  if (!stratified) {
    partition(rng.permutation(n), tr, va, te);
  } else {
    std::vector<std::vector<std::size_t>> by_class(
        static_cast<std::size_t>(ds.num_classes));
    for (std::size_t i = 0; i < n; ++i) {
      by_class[static_cast<std::size_t>(ds.Y[i])].push_back(i);
    }
    for (auto& pool : by_class) {
      rng.shuffle(pool);
      partition(pool, tr, va, te);
    }
  }
  if (tr.empty() || va.empty() || te.empty()) {
    throw ConfigError("split: a split came out empty; adjust fractions");
  }
  std::string seed_note = "seed=" + std::to_string(seed);
  return Splits{take_rows_dataset(ds, tr, "split:train " + seed_note),
                take_rows_dataset(ds, va, "split:val " + seed_note),
                take_rows_dataset(ds, te, "split:test " + seed_note)};
}

Splits standardize_splits(Splits splits,
                          const std::vector<std::size_t>& columns) {
  std::size_t p = splits.train.p();
  std::size_t n = splits.train.n();
  std::vector<std::size_t> cols = columns;
  if (cols.empty()) {
    cols.resize(p);
    for (std::size_t j = 0; j < p; ++j) cols[j] = j;
  }
  for (std::size_t j : cols) {
    if (j >= p) throw DimensionError("standardize_splits: column out of range");
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += splits.train.X.at(i, j);
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double t = splits.train.X.at(i, j) - m;
      v += t * t;
    }
    v /= static_cast<double>(n);
    double sd = v > 0.0 ? std::sqrt(v) : 1.0;
    for (LabeledDataset* ds : {&splits.train, &splits.val, &splits.test}) {
      for (std::size_t i = 0; i < ds->n(); ++i)
        ds->X.at(i, j) = (ds->X.at(i, j) - m) / sd;
    }
  }
  for (LabeledDataset* ds : {&splits.train, &splits.val, &splits.test}) {
    ds->provenance += "|standardized(train-stats)";
  }
  return splits;
}

LabeledDataset gen_toy_sdr(std::size_t n, double noise_sd,
                           std::uint64_t seed) {
  if (n == 0) throw ConfigError("gen_toy_sdr: n must be >= 1");
  Rng rng(seed);
  const double s2 = std::sqrt(0.5);
  Tensor X = Tensor::zeros({n, 4});
  Tensor Z = Tensor::zeros({n, 1});
  std::vector<int> Y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x[4];
    for (int j = 0; j < 4; ++j) {
      x[j] = rng.normal();
      X.at(i, static_cast<std::size_t>(j)) = x[j];
    }
    double eps = rng.normal();
    Z.at(i, 0) = std::sin(s2 * (x[0] + x[1])) +
                 std::exp(-s2 * (x[0] - x[1])) + noise_sd * eps;
    Y[i] = (x[2] + x[3] > 0.0) ? 1 : 0;
  }
  LabeledDataset ds;
  ds.X = std::move(X);
  ds.Z = std::move(Z);
  ds.Y = std::move(Y);
  ds.num_classes = 2;
  std::ostringstream prov;
  prov << "{\"generator\":\"toy_sdr\",\"n\":" << n << ",\"noise_sd\":"
       << noise_sd << ",\"seed\":" << seed
       << ",\"beta1\":[0.7071067811865476,0.7071067811865476,0,0]"
       << ",\"beta2\":[0.7071067811865476,-0.7071067811865476,0,0]"
       << ",\"beta3\":[0,0,1,0],\"beta4\":[0,0,0,1]"
       << ",\"fair_subspace_columns\":[2,3]}";
  ds.provenance = prov.str();
  return ds;
}

LabeledDataset gen_biased_classification(std::size_t n, std::size_t p,
                                         double bias_strength,
                                         std::uint64_t seed) {
  if (p < 4) throw ConfigError("gen_biased_classification: p must be >= 4");
  if (n == 0) throw ConfigError("gen_biased_classification: n must be >= 1");
  Rng rng(seed);
  Tensor X = Tensor::zeros({n, p});
  Tensor Z = Tensor::zeros({n, 1});
  std::vector<int> Y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.uniform01();
    int z, y;
    if (u < 0.4) { z = 1; y = 1; }
    else if (u < 0.5) { z = 0; y = 1; }
    else if (u < 0.6) { z = 1; y = 0; }
    else { z = 0; y = 0; }
    for (std::size_t j = 0; j < p; ++j) X.at(i, j) = rng.normal();
    X.at(i, 0) += (y == 1 ? 1.0 : -1.0);
    X.at(i, 1) += (z == 1 ? bias_strength : -bias_strength);
    Z.at(i, 0) = static_cast<double>(z);
    Y[i] = y;
  }
  LabeledDataset ds;
  ds.X = std::move(X);
  ds.Z = std::move(Z);
  ds.Y = std::move(Y);
  ds.num_classes = 2;
  std::ostringstream prov;
  prov << "{\"generator\":\"biased_classification\",\"n\":" << n
       << ",\"p\":" << p << ",\"bias_strength\":" << bias_strength
       << ",\"seed\":" << seed
       << ",\"composition\":{\"z1y1\":0.4,\"z0y1\":0.1,\"z1y0\":0.1,"
          "\"z0y0\":0.4}"
       << ",\"y_signal_column\":0,\"y_signal_amplitude\":1.0"
       << ",\"z_signal_column\":1,\"z_signal_amplitude\":" << bias_strength
       << "}";
  ds.provenance = prov.str();
  return ds;
}

namespace {

bool short_batch_usable(const LabeledDataset& ds,
                        const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(ds.num_classes), 0);
  for (std::size_t i : idx) ++counts[static_cast<std::size_t>(ds.Y[i])];
  for (std::size_t c : counts) {
    if (c >= 4) return true;
  }
  return false;
}

}  // namespace

std::vector<std::vector<std::size_t>> batches(const LabeledDataset& ds,
                                              std::size_t batch_size,
                                              std::uint64_t seed,
                                              bool stratified) {
  ds.validate();
  if (batch_size < 2) throw ConfigError("batches: batch_size must be >= 2");
  if (batch_size > ds.n()) {
    throw ConfigError("batches: batch_size " + std::to_string(batch_size) +
                      " exceeds sample count " + std::to_string(ds.n()));
  }
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> out;
  if (!stratified) {
    std::vector<std::size_t> perm = rng.permutation(ds.n());
    for (std::size_t start = 0; start < perm.size(); start += batch_size) {
      std::size_t end = std::min(start + batch_size, perm.size());
      std::vector<std::size_t> idx(perm.begin() + start, perm.begin() + end);
      if (idx.size() < batch_size && !short_batch_usable(ds, idx)) break;
      out.push_back(std::move(idx));
    }
    return out;
  }

  // Per-class pools; each batch takes classes in proportion to what remains
  // (largest-remainder rounding), so class mix stays stable to the end.
  std::vector<std::vector<std::size_t>> pools(
      static_cast<std::size_t>(ds.num_classes));
  for (std::size_t i = 0; i < ds.n(); ++i) {
    pools[static_cast<std::size_t>(ds.Y[i])].push_back(i);
  }
  for (auto& pool : pools) rng.shuffle(pool);
  std::vector<std::size_t> cursor(pools.size(), 0);
  std::size_t remaining = ds.n();
  while (remaining >= batch_size) {
    std::vector<std::size_t> quota(pools.size(), 0);
    std::vector<std::pair<double, std::size_t>> rema;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < pools.size(); ++c) {
      std::size_t left = pools[c].size() - cursor[c];
      double share = static_cast<double>(left) *
                     static_cast<double>(batch_size) /
                     static_cast<double>(remaining);
      quota[c] = std::min(left, static_cast<std::size_t>(std::floor(share)));
      assigned += quota[c];
      rema.push_back({share - std::floor(share), c});
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    while (assigned < batch_size) {
      bool progressed = false;
      for (const auto& [frac, c] : rema) {
        if (assigned == batch_size) break;
        if (quota[c] < pools[c].size() - cursor[c]) {
          ++quota[c];
          ++assigned;
          progressed = true;
        }
      }
      if (!progressed) break;  // cannot happen: total capacity >= batch_size
    }
    std::vector<std::size_t> idx;
    idx.reserve(batch_size);
    for (std::size_t c = 0; c < pools.size(); ++c) {
      for (std::size_t k = 0; k < quota[c]; ++k) {
        idx.push_back(pools[c][cursor[c]++]);
      }
    }
    remaining -= idx.size();
    out.push_back(std::move(idx));
  }
  if (remaining > 0) {
    std::vector<std::size_t> idx;
    for (std::size_t c = 0; c < pools.size(); ++c) {
      for (std::size_t k = cursor[c]; k < pools[c].size(); ++k) {
        idx.push_back(pools[c][k]);
      }
    }
    if (short_batch_usable(ds, idx)) out.push_back(std::move(idx));
  }
  return out;
}

Batch take_batch(const LabeledDataset& ds,
                 const std::vector<std::size_t>& idx) {
  Batch b;
  b.X = Tensor::zeros({idx.size(), ds.p()});
  b.Z = Tensor::zeros({idx.size(), ds.d()});
  b.Y.resize(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < ds.p(); ++c) b.X.at(r, c) = ds.X.at(idx[r], c);
    for (std::size_t c = 0; c < ds.d(); ++c) b.Z.at(r, c) = ds.Z.at(idx[r], c);
    b.Y[r] = ds.Y[idx[r]];
  }
  return b;
}

}  // namespace dfl
