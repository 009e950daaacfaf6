#include "dfl/config.hpp"

#include <fstream>
#include <sstream>

namespace dfl {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& RunConfig::registry() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      // data source
      {"data.kind", "biased"},   // biased | toy | matrix | csv
      {"data.path", ""},
      {"data.schema", ""},
      {"data.standardize", "false"},
      {"data.strict_vocab", "true"},
      {"data.split_train", "0.7"},
      {"data.split_val", "0.15"},
      {"data.split_test", "0.15"},
      {"data.split_seed", "1"},
      {"data.split_stratified", "false"},
      // synthetic generators
      {"synth.n", "2000"},
      {"synth.p", "8"},
      {"synth.bias_strength", "3.0"},
      {"synth.noise_sd", "0.1"},
      {"synth.seed", "7"},
      // network
      {"net.kind", "densenet"},  // densenet | probe | identity
      {"net.growth", "8"},
      {"net.depth", "10"},
      {"net.reduction", "0.5"},
      {"net.hidden", "64"},
      {"net.seed", "42"},
      // training
      {"train.criterion", "separation"},  // separation | independence
      {"train.alpha_form", "true"},
      {"train.alpha", "0.7"},
      {"train.lambda", "0.0"},
      {"train.mu", "0.0"},
      {"train.retain_y", "true"},
      {"train.lr", "0.001"},
      {"train.epochs", "20"},
      {"train.batch", "128"},
      {"train.optimizer", "adam"},  // adam | sgd
      {"train.seed", "1"},
      {"train.stratified_batches", "false"},
      // evaluation + run control
      {"eval.with_dc", "true"},
      {"out", "runs/out"},
      {"deterministic", "false"},
  };
  return keys;
}

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  for (const auto& [key, value] : registry()) cfg.values_[key] = value;
  return cfg;
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg = defaults();
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + t + "'");
    }
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (values_.find(key) == values_.end()) {
    throw ConfigError("unknown config key '" + key + "'");
  }
  values_[key] = value;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected boolean, got '" + v +
                    "'");
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + v +
                      "'");
  }
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    std::int64_t i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + v +
                      "'");
  }
}

std::uint64_t RunConfig::get_seed(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    std::uint64_t i = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected seed, got '" + v +
                      "'");
  }
}

std::string RunConfig::resolved_text() const {
  std::ostringstream out;
  for (const auto& [key, fallback] : registry()) {
    (void)fallback;
    out << key << " = " << values_.at(key) << "\n";
  }
  return out.str();
}

NetworkSpec RunConfig::network_spec() const {
  NetworkSpec spec;
  spec.output_classes = 2;  // overwritten from the dataset by the pipeline
  spec.growth_rate = static_cast<std::size_t>(get_int("net.growth"));
  spec.depth = static_cast<std::size_t>(get_int("net.depth"));
  spec.reduction = get_double("net.reduction");
  return spec;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig cfg;
  const std::string& crit = get("train.criterion");
  if (crit == "separation") cfg.criterion = Criterion::separation;
  else if (crit == "independence") cfg.criterion = Criterion::independence;
  else throw ConfigError("train.criterion must be separation or independence");
  cfg.alpha_form = get_bool("train.alpha_form");
  cfg.alpha = get_double("train.alpha");
  cfg.lambda = get_double("train.lambda");
  cfg.mu = get_double("train.mu");
  cfg.retain_y_term = get_bool("train.retain_y");
  cfg.lr = get_double("train.lr");
  cfg.epochs = static_cast<std::size_t>(get_int("train.epochs"));
  cfg.batch_size = static_cast<std::size_t>(get_int("train.batch"));
  const std::string& opt = get("train.optimizer");
  if (opt == "adam") cfg.optimizer = OptimizerKind::adam;
  else if (opt == "sgd") cfg.optimizer = OptimizerKind::sgd;
  else throw ConfigError("train.optimizer must be adam or sgd");
  cfg.seed = get_seed("train.seed");
  cfg.stratified_batches = get_bool("train.stratified_batches");
  cfg.validate();
  return cfg;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return s;
}

}  // namespace dfl
