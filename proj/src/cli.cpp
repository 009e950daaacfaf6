#include "dfl/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dfl/config.hpp"
#include "dfl/dependence.hpp"
#include "dfl/metrics.hpp"
#include "dfl/report_json.hpp"
#include "dfl/rng.hpp"
#include "dfl/training.hpp"

namespace dfl::cli {

namespace {

namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kWarn = 1;
constexpr int kInputError = 2;
constexpr int kDiverged = 3;
constexpr int kMetricUndefined = 4;

std::size_t worker_threads() {
  const char* env = std::getenv("DFL_THREADS");
  if (!env) return 1;
  long v = std::strtol(env, nullptr, 10);
  return v > 1 ? static_cast<std::size_t>(v) : 1;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write file: " + path.string());
  out << text;
}

// ---- dataset plumbing shared by train / evaluate / probe / sweep ----

LabeledDataset load_dataset(const RunConfig& cfg) {
  const std::string& kind = cfg.get("data.kind");
  if (kind == "toy") {
    return gen_toy_sdr(static_cast<std::size_t>(cfg.get_int("synth.n")),
                       cfg.get_double("synth.noise_sd"),
                       cfg.get_seed("synth.seed"));
  }
  if (kind == "biased") {
    return gen_biased_classification(
        static_cast<std::size_t>(cfg.get_int("synth.n")),
        static_cast<std::size_t>(cfg.get_int("synth.p")),
        cfg.get_double("synth.bias_strength"), cfg.get_seed("synth.seed"));
  }
  if (kind == "matrix") {
    if (cfg.get("data.path").empty()) {
      throw ConfigError("data.kind = matrix requires data.path");
    }
    return ingest_matrix(cfg.get("data.path"));
  }
  if (kind == "csv") {
    if (cfg.get("data.path").empty() || cfg.get("data.schema").empty()) {
      throw ConfigError("data.kind = csv requires data.path and data.schema");
    }
    Schema schema = Schema::parse_file(cfg.get("data.schema"));
    IngestOptions opts;
    opts.strict_vocab = cfg.get_bool("data.strict_vocab");
    std::vector<std::string> warnings;
    LabeledDataset ds =
        ingest_csv(cfg.get("data.path"), schema, opts, nullptr, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    return ds;
  }
  throw ConfigError("data.kind must be toy, biased, matrix or csv");
}

Splits make_splits(const RunConfig& cfg, const LabeledDataset& ds) {
  Splits splits =
      split(ds, cfg.get_double("data.split_train"),
            cfg.get_double("data.split_val"),
            cfg.get_double("data.split_test"), cfg.get_seed("data.split_seed"),
            cfg.get_bool("data.split_stratified"));
  if (cfg.get_bool("data.standardize")) {
    std::vector<std::size_t> cols;
    if (cfg.get("data.kind") == "csv") {
      cols = Schema::parse_file(cfg.get("data.schema"))
                 .numeric_feature_indices();
      if (cols.empty()) return splits;  // nothing numeric to standardize
    }
    splits = standardize_splits(std::move(splits), cols);
  }
  return splits;
}

ModelParams build_model(const RunConfig& cfg, std::size_t p, std::size_t k) {
  const std::string& kind = cfg.get("net.kind");
  std::uint64_t seed = cfg.get_seed("net.seed");
  if (kind == "densenet") {
    NetworkSpec spec = cfg.network_spec();
    spec.input_dim = p;
    spec.output_classes = k;
    return build(spec, seed);
  }
  if (kind == "probe") {
    return build_probe(p, static_cast<std::size_t>(cfg.get_int("net.hidden")),
                       k, seed);
  }
  if (kind == "identity") return build_identity(p, k, seed);
  throw ConfigError("net.kind must be densenet, probe or identity");
}

std::string config_hash_of(const RunConfig& cfg) {
  return hash_hex(fnv1a64(cfg.resolved_text()));
}

FairnessReport final_report(const ModelParams& model, const LabeledDataset& ds,
                            const RunConfig& cfg) {
  EvalOptions opts;
  opts.with_dc = cfg.get_bool("eval.with_dc");
  return evaluate(model, ds, opts);
}

// ---- numeric CSV helpers for audit / dcov ----

std::vector<std::vector<double>> read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open csv file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path + " line " + std::to_string(line_no) +
                          ": cannot parse number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows[0].size()) {
      throw FormatError(path + " line " + std::to_string(line_no) +
                        ": inconsistent column count");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path + ": no rows");
  return rows;
}

Tensor to_tensor(const std::vector<std::vector<double>>& rows) {
  std::size_t n = rows.size(), m = rows[0].size();
  Tensor t = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) t.at(i, j) = rows[i][j];
  return t;
}

PredictionSet read_prediction_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open prediction file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw FormatError(path + ": empty file");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  std::vector<std::string> names;
  {
    std::istringstream ss(header);
    std::string cell;
    while (std::getline(ss, cell, ',')) names.push_back(cell);
  }
  // Expected layout: p0..p{K-1}, y, z0..z{d-1}
  std::size_t k = 0;
  while (k < names.size() && names[k] == "p" + std::to_string(k)) ++k;
  if (k < 2 || k >= names.size() || names[k] != "y") {
    throw FormatError(path +
                      ": header must be p0..p{K-1},y,z0..z{d-1} with K >= 2");
  }
  std::size_t d = names.size() - k - 1;
  if (d == 0) throw FormatError(path + ": no sensitive columns after 'y'");
  for (std::size_t c = 0; c < d; ++c) {
    if (names[k + 1 + c] != "z" + std::to_string(c)) {
      throw FormatError(path + ": sensitive columns must be named z0..z{d-1}");
    }
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path + " line " + std::to_string(line_no) +
                          ": cannot parse number '" + cell + "'");
      }
    }
    if (row.size() != names.size()) {
      throw FormatError(path + " line " + std::to_string(line_no) +
                        ": column count mismatch");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path + ": no data rows");
  std::size_t n = rows.size();
  PredictionSet preds;
  preds.probs = Tensor::zeros({n, k});
  preds.sensitive = Tensor::zeros({n, d});
  preds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) preds.probs.at(i, j) = rows[i][j];
    preds.labels[i] = static_cast<int>(rows[i][k]);
    for (std::size_t j = 0; j < d; ++j)
      preds.sensitive.at(i, j) = rows[i][k + 1 + j];
  }
  preds.validate();
  return preds;
}

// ---- commands ----

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string seed_override;
  bool deterministic = false;
};

RunConfig load_run_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty()
                      ? RunConfig::defaults()
                      : RunConfig::load_file(args.config_path);
  if (!args.out_dir.empty()) cfg.set("out", args.out_dir);
  if (!args.seed_override.empty()) cfg.set("train.seed", args.seed_override);
  if (args.deterministic) cfg.set("deterministic", "true");
  return cfg;
}

int cmd_train(const CommonArgs& args) {
  RunConfig cfg = load_run_config(args);
  TrainConfig tcfg = cfg.train_config();
  LabeledDataset ds = load_dataset(cfg);
  Splits splits = make_splits(cfg, ds);
  ModelParams model = build_model(cfg, splits.train.p(),
                                  static_cast<std::size_t>(
                                      splits.train.num_classes));
  fs::path out_dir(cfg.get("out"));
  fs::create_directories(out_dir);
  write_text(out_dir / "config.resolved", cfg.resolved_text());

  TrainResult result = train(splits, std::move(model), tcfg);
  write_text(out_dir / "trajectory.csv", trajectory_csv(result.records));
  if (result.diverged) {
    fs::path ckpt = out_dir / "checkpoint.dflmodel";
    save_model(result.model, ckpt.string());
    std::cerr << "training diverged after epoch " << result.completed_epochs
              << "; last-good checkpoint written to " << ckpt << "\n";
    return kDiverged;
  }
  save_model(result.model, (out_dir / "model.dflmodel").string());
  FairnessReport report = final_report(result.model, splits.test, cfg);
  std::string json = report_json(report, config_hash_of(cfg));
  write_text(out_dir / "metrics.json", json);
  std::cout << json;
  std::cerr << "trained " << result.completed_epochs << " epochs; artifacts in "
            << out_dir << "\n";
  return kOk;
}

int cmd_evaluate(const std::string& model_path, const CommonArgs& args) {
  RunConfig cfg = load_run_config(args);
  ModelParams model = load_model(model_path);
  LabeledDataset ds = load_dataset(cfg);
  Splits splits = make_splits(cfg, ds);
  FairnessReport report = final_report(model, splits.test, cfg);
  std::cout << report_json(report, config_hash_of(cfg));
  return kOk;
}

int cmd_audit(const std::string& preds_path) {
  PredictionSet preds = read_prediction_csv(preds_path);
  FairnessReport report = report_from_predictions(preds);
  std::ifstream in(preds_path, std::ios::binary);
  std::ostringstream bytes;
  bytes << in.rdbuf();
  std::cout << report_json(report, hash_hex(fnv1a64(bytes.str())));
  return kOk;
}

int cmd_dcov(const std::string& x_path, const std::string& z_path,
             const std::string& method, const std::string& y_path,
             int classes) {
  Tensor x = to_tensor(read_numeric_csv(x_path));
  Tensor z = to_tensor(read_numeric_csv(z_path));
  nlohmann::ordered_json j;
  j["n"] = x.rows();
  if (!y_path.empty()) {
    auto yrows = read_numeric_csv(y_path);
    std::vector<int> y;
    for (const auto& r : yrows) y.push_back(static_cast<int>(r[0]));
    int k = classes;
    if (k <= 0) {
      for (int v : y) k = std::max(k, v + 1);
    }
    ConditionalDCEstimate est = dc_conditional(z, x, y, k);
    j["method"] = "conditional";
    j["value"] = est.value;
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    for (const auto& c : est.per_class) {
      per.push_back({{"class", c.label},
                     {"n", c.count},
                     {"weight", c.weight},
                     {"value", c.value}});
    }
    j["per_class"] = per;
    j["skipped_classes"] = est.skipped_classes;
  } else if (method == "naive") {
    j["method"] = "naive";
    j["value"] = dc_naive(z, x).value;
  } else if (method == "fast") {
    j["method"] = "fast";
    j["value"] = dc_fast(z, x).value;
  } else if (method == "both") {
    double naive = dc_naive(z, x).value;
    double fast = dc_fast(z, x).value;
    j["method"] = "both";
    j["naive"] = naive;
    j["fast"] = fast;
    j["difference"] = fast - naive;
  } else {
    throw ConfigError("dcov: method must be naive, fast or both");
  }
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_synth(const std::string& generator, std::size_t n, std::size_t p,
              double bias_strength, double noise_sd, std::uint64_t seed,
              const std::string& out_file) {
  LabeledDataset ds;
  if (generator == "toy") {
    ds = gen_toy_sdr(n, noise_sd, seed);
  } else if (generator == "biased") {
    ds = gen_biased_classification(n, p, bias_strength, seed);
  } else {
    throw ConfigError("synth: unknown generator '" + generator +
                      "' (toy or biased)");
  }
  write_matrix(ds, out_file);
  write_text(out_file + ".provenance.json", ds.provenance + "\n");
  std::cerr << "wrote " << out_file << " (" << ds.n() << " samples) and "
            << out_file << ".provenance.json\n";
  return kOk;
}

int cmd_probe(const std::string& model_path, std::size_t hidden,
              const CommonArgs& args) {
  RunConfig cfg = load_run_config(args);
  ModelParams model = load_model(model_path);
  LabeledDataset ds = load_dataset(cfg);
  Splits splits = make_splits(cfg, ds);

  // Freeze g_theta: materialize latents, standardize them with train-split
  // statistics, then train a fresh one-hidden-layer classifier with pure
  // cross-entropy.
  auto transform = [&](const LabeledDataset& part) {
    LabeledDataset out = part;
    out.X = forward_eval(model, part.X).latent;
    out.provenance += "|probe-latent";
    return out;
  };
  Splits latent = standardize_splits(Splits{transform(splits.train),
                                            transform(splits.val),
                                            transform(splits.test)});

  TrainConfig tcfg = cfg.train_config();
  tcfg.alpha_form = false;
  tcfg.lambda = 0.0;
  tcfg.mu = 0.0;
  ModelParams probe =
      build_probe(latent.train.p(), hidden,
                  static_cast<std::size_t>(latent.train.num_classes),
                  cfg.get_seed("net.seed"));
  TrainResult run = train(latent, std::move(probe), tcfg);
  if (run.diverged) {
    std::cerr << "probe training diverged\n";
    return kDiverged;
  }
  FairnessReport report = final_report(run.model, latent.test, cfg);
  std::cout << report_json(report, config_hash_of(cfg));
  return kOk;
}

int cmd_sweep(const std::string& alphas_text, const CommonArgs& args) {
  RunConfig cfg = load_run_config(args);
  std::vector<double> alphas;
  std::istringstream ss(alphas_text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) alphas.push_back(std::stod(tok));
  }
  TrainConfig tcfg = cfg.train_config();
  LabeledDataset ds = load_dataset(cfg);
  Splits splits = make_splits(cfg, ds);
  NetworkSpec spec = cfg.network_spec();
  spec.input_dim = splits.train.p();
  spec.output_classes = static_cast<std::size_t>(splits.train.num_classes);
  AlphaSelection sel = select_alpha(
      alphas, splits, spec, tcfg,
      static_cast<std::size_t>(cfg.get_int("net.hidden")), worker_threads());
  std::string json = sweep_json(sel);
  fs::path out_dir(cfg.get("out"));
  fs::create_directories(out_dir);
  write_text(out_dir / "sweep.json", json);
  write_text(out_dir / "config.resolved", cfg.resolved_text());
  std::cout << json;
  if (!sel.any_passed) {
    std::cerr << "warning: no candidate reached 95% of the Standard "
                 "baseline's accuracy; reporting the most accurate one\n";
    return kWarn;
  }
  return kOk;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Fair representation fine-tuning with distance-covariance "
               "penalties"};
  app.require_subcommand(1);

  CommonArgs common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "run configuration file");
    sub->add_option("--out", common.out_dir, "output directory override");
    sub->add_option("--seed", common.seed_override, "train seed override");
    sub->add_flag("--deterministic", common.deterministic,
                  "record and enforce deterministic execution");
  };

  auto* train_cmd = app.add_subcommand("train", "fine-tune a model");
  add_common(train_cmd);

  auto* eval_cmd =
      app.add_subcommand("evaluate", "fairness report for a trained model");
  std::string model_path;
  eval_cmd->add_option("--model", model_path, "model file")->required();
  add_common(eval_cmd);

  auto* audit_cmd =
      app.add_subcommand("audit", "metrics for an existing prediction CSV");
  std::string preds_path;
  audit_cmd->add_option("preds", preds_path, "prediction CSV")->required();

  auto* dcov_cmd =
      app.add_subcommand("dcov", "distance covariance between two matrices");
  std::string x_path, z_path, method = "fast", y_path;
  int classes = 0;
  dcov_cmd->add_option("--x", x_path, "samples of X (numeric CSV)")
      ->required();
  dcov_cmd->add_option("--z", z_path, "samples of Z (numeric CSV)")
      ->required();
  dcov_cmd->add_option("--method", method, "naive | fast | both");
  dcov_cmd->add_option("--y", y_path,
                       "labels (single int column) for the conditional form");
  dcov_cmd->add_option("--classes", classes, "class count for --y");

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
  std::string generator, out_file;
  std::size_t n = 1000, p = 8;
  double bias_strength = 3.0, noise_sd = 0.1;
  std::uint64_t seed = 7;
  synth_cmd->add_option("--generator", generator, "toy | biased")->required();
  synth_cmd->add_option("--n", n, "sample count");
  synth_cmd->add_option("--p", p, "feature width (biased)");
  synth_cmd->add_option("--bias-strength", bias_strength, "Z signal strength");
  synth_cmd->add_option("--noise-sd", noise_sd, "toy noise level");
  synth_cmd->add_option("--seed", seed, "generator seed");
  synth_cmd->add_option("--out-file", out_file, "matrix file to write")
      ->required();

  auto* probe_cmd = app.add_subcommand(
      "probe", "train an unconstrained classifier on frozen representations");
  std::string probe_model;
  std::size_t hidden = 64;
  probe_cmd->add_option("--model", probe_model, "trained model file")
      ->required();
  probe_cmd->add_option("--hidden", hidden, "probe hidden width");
  add_common(probe_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "alpha selection sweep");
  std::string alphas_text;
  sweep_cmd->add_option("--alphas", alphas_text, "comma-separated candidates")
      ->required();
  add_common(sweep_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  if (train_cmd->parsed()) return cmd_train(common);
  if (eval_cmd->parsed()) return cmd_evaluate(model_path, common);
  if (audit_cmd->parsed()) return cmd_audit(preds_path);
  if (dcov_cmd->parsed())
    return cmd_dcov(x_path, z_path, method, y_path, classes);
  if (synth_cmd->parsed())
    return cmd_synth(generator, n, p, bias_strength, noise_sd, seed, out_file);
  if (probe_cmd->parsed()) return cmd_probe(probe_model, hidden, common);
  if (sweep_cmd->parsed()) return cmd_sweep(alphas_text, common);
  return kInputError;
}

}  // namespace

int run(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const MetricUndefinedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMetricUndefined;
  } catch (const InsufficientSamplesError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMetricUndefined;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
}

}  // namespace dfl::cli
