#include "dfl/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dfl/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "model/matrix file formats assume a little-endian host");

namespace dfl {

std::size_t NetworkSpec::layers_per_block() const {
  std::size_t l = (depth - 4) / 3;
  return l == 0 ? 1 : l;
}

void NetworkSpec::validate() const {
  if (input_dim == 0) throw ConfigError("network spec: input_dim must be > 0");
  if (output_classes < 2) {
    throw ConfigError("network spec: output_classes must be >= 2");
  }
  if (growth_rate == 0) {
    throw ConfigError("network spec: growth_rate must be > 0");
  }
  if (depth < 4) throw ConfigError("network spec: depth must be >= 4");
  if (!(reduction > 0.0 && reduction <= 1.0)) {
    throw ConfigError("network spec: reduction must lie in (0, 1]");
  }
}

namespace {

Tensor kaiming(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  Tensor w = Tensor::zeros({fan_in, fan_out});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = sd * rng.normal();
  return w;
}

void push_linear(ModelParams& m, bool is_theta, Rng& rng,
                 const std::string& name, std::size_t in, std::size_t out) {
  auto& dst = is_theta ? m.theta : m.phi;
  dst.push_back(NamedParam{name + ".W", kaiming(rng, in, out)});
  dst.push_back(NamedParam{name + ".b", Tensor::zeros({out})});
}

void push_bn(ModelParams& m, const std::string& name, std::size_t width) {
  m.theta.push_back(NamedParam{name + ".gamma", Tensor::full({width}, 1.0)});
  m.theta.push_back(NamedParam{name + ".beta", Tensor::zeros({width})});
  m.bn.push_back(BatchNormSite{name, BatchNormState::fresh(width)});
}

std::size_t transition_width(std::size_t width, double reduction) {
  auto w = static_cast<std::size_t>(
      std::ceil(static_cast<double>(width) * reduction));
  return w == 0 ? 1 : w;
}

/// Walks parameters in the order build() pushed them.
struct ParamCursor {
  const std::vector<NodePtr>& nodes;
  std::size_t next = 0;
  const NodePtr& take() { return nodes[next++]; }
};

NodePtr linear(ParamCursor& cur, const NodePtr& x) {
  const NodePtr& w = cur.take();
  const NodePtr& b = cur.take();
  return add_rowvec(matmul(x, w), b);
}

ForwardOut forward_densenet(const ModelParams& model, const BoundModel& bound,
                            const NodePtr& x, RunMode mode,
                            std::vector<BatchNormSite>* mutable_bn) {
  const NetworkSpec& spec = model.spec;
  ParamCursor theta{bound.theta};
  std::size_t bn_index = 0;
  auto apply_bn = [&](const NodePtr& in) {
    const NodePtr& gamma = theta.take();
    const NodePtr& beta = theta.take();
    if (mode == RunMode::train) {
      return batch_norm(in, gamma, beta, (*mutable_bn)[bn_index++].state,
                        RunMode::train);
    }
    return batch_norm_eval(in, gamma, beta, model.bn[bn_index++].state);
  };

  NodePtr feat = linear(theta, x);  // stem: p -> 2 * growth
  std::size_t layers = spec.layers_per_block();
  for (int block = 0; block < 3; ++block) {
    for (std::size_t l = 0; l < layers; ++l) {
      NodePtr inter = relu(linear(theta, feat));   // width -> 4 * growth
      NodePtr fresh = linear(theta, inter);        // 4 * growth -> growth
      feat = concat({feat, fresh});
    }
    if (block < 2) {
      feat = linear(theta, apply_bn(feat));  // shrink by reduction
    }
  }
  NodePtr latent = linear(theta, apply_bn(feat));  // project to p

  ParamCursor phi{bound.phi};
  NodePtr logprobs = log_softmax(linear(phi, latent));
  return ForwardOut{latent, logprobs};
}

ForwardOut forward_probe(const BoundModel& bound, const NodePtr& x) {
  ParamCursor phi{bound.phi};
  NodePtr hidden = relu(linear(phi, x));
  NodePtr logprobs = log_softmax(linear(phi, hidden));
  return ForwardOut{hidden, logprobs};
}

ForwardOut forward_identity(const BoundModel& bound, const NodePtr& x) {
  ParamCursor phi{bound.phi};
  return ForwardOut{x, log_softmax(linear(phi, x))};
}

}  // namespace

ModelParams build(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ModelParams m;
  m.kind = ArchKind::densenet;
  m.spec = spec;

  std::size_t g = spec.growth_rate;
  std::size_t width = 2 * g;
  push_linear(m, true, rng, "stem", spec.input_dim, width);
  std::size_t layers = spec.layers_per_block();
  for (int block = 1; block <= 3; ++block) {
    for (std::size_t l = 1; l <= layers; ++l) {
      std::string base =
          "block" + std::to_string(block) + ".layer" + std::to_string(l);
      push_linear(m, true, rng, base + ".fc1", width, 4 * g);
      push_linear(m, true, rng, base + ".fc2", 4 * g, g);
      width += g;
    }
    if (block < 3) {
      std::string base = "trans" + std::to_string(block);
      push_bn(m, base + ".bn", width);
      std::size_t out = transition_width(width, spec.reduction);
      push_linear(m, true, rng, base + ".fc", width, out);
      width = out;
    }
  }
  push_bn(m, "final.bn", width);
  push_linear(m, true, rng, "final.fc", width, spec.input_dim);
  push_linear(m, false, rng, "head", spec.input_dim, spec.output_classes);
  return m;
}

ModelParams build_probe(std::size_t input_dim, std::size_t hidden,
                        std::size_t output_classes, std::uint64_t seed) {
  if (input_dim == 0) throw ConfigError("probe: input_dim must be > 0");
  if (hidden == 0) throw ConfigError("probe: hidden width must be >= 1");
  if (output_classes < 2) throw ConfigError("probe: need >= 2 classes");
  Rng rng(seed);
  ModelParams m;
  m.kind = ArchKind::probe;
  m.spec.input_dim = input_dim;
  m.spec.output_classes = output_classes;
  m.probe_hidden = hidden;
  push_linear(m, false, rng, "fc1", input_dim, hidden);
  push_linear(m, false, rng, "fc2", hidden, output_classes);
  return m;
}

ModelParams build_identity(std::size_t input_dim, std::size_t output_classes,
                           std::uint64_t seed) {
  if (input_dim == 0) throw ConfigError("identity: input_dim must be > 0");
  if (output_classes < 2) throw ConfigError("identity: need >= 2 classes");
  Rng rng(seed);
  ModelParams m;
  m.kind = ArchKind::identity;
  m.spec.input_dim = input_dim;
  m.spec.output_classes = output_classes;
  push_linear(m, false, rng, "head", input_dim, output_classes);
  return m;
}

BoundModel bind(const ModelParams& model) {
  BoundModel b;
  b.theta.reserve(model.theta.size());
  b.phi.reserve(model.phi.size());
  for (const auto& p : model.theta) b.theta.push_back(make_node(p.value));
  for (const auto& p : model.phi) b.phi.push_back(make_node(p.value));
  return b;
}

ForwardOut forward(ModelParams& model, const BoundModel& bound,
                   const NodePtr& x, RunMode mode) {
  if (x->value.rank() != 2 || x->value.cols() != model.spec.input_dim) {
    throw DimensionError("forward: input width " +
                         std::to_string(x->value.cols()) +
                         " does not match spec input_dim " +
                         std::to_string(model.spec.input_dim));
  }
  switch (model.kind) {
    case ArchKind::densenet:
      return forward_densenet(model, bound, x, mode,
                              mode == RunMode::train ? &model.bn : nullptr);
    case ArchKind::probe:
      return forward_probe(bound, x);
    case ArchKind::identity:
      return forward_identity(bound, x);
  }
  throw Error("forward: unknown architecture kind");
}

EvalOut forward_eval(const ModelParams& model, const Tensor& x) {
  BoundModel bound = bind(model);
  NodePtr xn = make_node(x);
  // Eval mode never writes; the const_cast only satisfies the shared
  // signature.
  ForwardOut out = forward(const_cast<ModelParams&>(model), bound, xn,
                           RunMode::eval);
  Tensor probs = out.logprobs->value;
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(probs[i]);
  return EvalOut{out.latent->value, out.logprobs->value, std::move(probs)};
}

// ---- serialization ----

namespace {

const char* kind_name(ArchKind k) {
  switch (k) {
    case ArchKind::densenet: return "densenet";
    case ArchKind::probe: return "probe";
    case ArchKind::identity: return "identity";
  }
  return "?";
}

ArchKind kind_from(const std::string& s) {
  if (s == "densenet") return ArchKind::densenet;
  if (s == "probe") return ArchKind::probe;
  if (s == "identity") return ArchKind::identity;
  throw FormatError("model file: unknown architecture kind '" + s + "'");
}

std::string shape_str(const Tensor& t) {
  std::string s;
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(t.shape()[i]);
  }
  return s;
}

std::vector<std::size_t> parse_shape(const std::string& s) {
  std::vector<std::size_t> shape;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t next = s.find('x', pos);
    if (next == std::string::npos) next = s.size();
    shape.push_back(std::stoull(s.substr(pos, next - pos)));
    pos = next + 1;
  }
  if (shape.empty()) throw FormatError("model file: empty shape");
  return shape;
}

struct ManifestEntry {
  std::string role;
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
};

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_model(const ModelParams& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open model file for writing: " + path);
  out << "DFLMODEL v1\n";
  out << "kind=" << kind_name(model.kind) << "\n";
  out << "p=" << model.spec.input_dim << "\n";
  out << "K=" << model.spec.output_classes << "\n";
  out << "growth=" << model.spec.growth_rate << "\n";
  out << "depth=" << model.spec.depth << "\n";
  out << "reduction=" << format_double(model.spec.reduction) << "\n";
  out << "hidden=" << model.probe_hidden << "\n";

  std::vector<std::pair<const Tensor*, std::pair<std::string, std::string>>>
      entries;
  for (const auto& p : model.theta)
    entries.push_back({&p.value, {"theta", p.name}});
  for (const auto& p : model.phi) entries.push_back({&p.value, {"phi", p.name}});
  for (const auto& s : model.bn) {
    entries.push_back({&s.state.running_mean, {"bn", s.name + ".running_mean"}});
    entries.push_back({&s.state.running_var, {"bn", s.name + ".running_var"}});
  }
  out << "tensors=" << entries.size() << "\n";
  std::size_t offset = 0;
  for (const auto& [tensor, names] : entries) {
    out << "role=" << names.first << " name=" << names.second
        << " shape=" << shape_str(*tensor) << " offset=" << offset << "\n";
    offset += tensor->size() * sizeof(double);
  }
  out << "DATA\n";
  for (const auto& [tensor, names] : entries) {
    out.write(reinterpret_cast<const char*>(tensor->data()),
              static_cast<std::streamsize>(tensor->size() * sizeof(double)));
  }
  if (!out) throw FormatError("model file write failed: " + path);
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file: " + path);
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(in, line)) throw FormatError("model file truncated");
    return line;
  };
  if (next_line() != "DFLMODEL v1") {
    throw FormatError("model file: bad magic line");
  }
  auto field = [&](const std::string& key) {
    next_line();
    if (line.rfind(key + "=", 0) != 0) {
      throw FormatError("model file: expected '" + key + "=' line");
    }
    return line.substr(key.size() + 1);
  };
  ModelParams m;
  m.kind = kind_from(field("kind"));
  m.spec.input_dim = std::stoull(field("p"));
  m.spec.output_classes = std::stoull(field("K"));
  m.spec.growth_rate = std::stoull(field("growth"));
  m.spec.depth = std::stoull(field("depth"));
  m.spec.reduction = std::stod(field("reduction"));
  m.probe_hidden = std::stoull(field("hidden"));
  std::size_t count = std::stoull(field("tensors"));

  std::vector<ManifestEntry> manifest;
  std::size_t expect_offset = 0;
  for (std::size_t i = 0; i < count; ++i) {
    next_line();
    std::istringstream ss(line);
    ManifestEntry e;
    std::string tok;
    while (ss >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw FormatError("model file: bad manifest");
      std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "role") e.role = val;
      else if (key == "name") e.name = val;
      else if (key == "shape") e.shape = parse_shape(val);
      else if (key == "offset") e.offset = std::stoull(val);
      else throw FormatError("model file: unknown manifest key '" + key + "'");
    }
    if (e.offset != expect_offset) {
      throw FormatError("model file: non-contiguous offsets in manifest");
    }
    std::size_t sz = 1;
    for (std::size_t s : e.shape) sz *= s;
    expect_offset += sz * sizeof(double);
    manifest.push_back(std::move(e));
  }
  if (next_line() != "DATA") throw FormatError("model file: missing DATA mark");

  for (const auto& e : manifest) {
    std::size_t sz = 1;
    for (std::size_t s : e.shape) sz *= s;
    std::vector<double> data(sz);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(sz * sizeof(double)));
    if (!in) throw FormatError("model file: payload shorter than manifest");
    Tensor t(e.shape, std::move(data), false);
    if (e.role == "theta") {
      m.theta.push_back(NamedParam{e.name, std::move(t)});
    } else if (e.role == "phi") {
      m.phi.push_back(NamedParam{e.name, std::move(t)});
    } else if (e.role == "bn") {
      if (e.name.size() > 13 &&
          e.name.substr(e.name.size() - 13) == ".running_mean") {
        BatchNormSite site;
        site.name = e.name.substr(0, e.name.size() - 13);
        site.state.running_mean = std::move(t);
        m.bn.push_back(std::move(site));
      } else if (e.name.size() > 12 &&
                 e.name.substr(e.name.size() - 12) == ".running_var") {
        if (m.bn.empty() ||
            m.bn.back().name != e.name.substr(0, e.name.size() - 12)) {
          throw FormatError("model file: unpaired batch-norm tensors");
        }
        m.bn.back().state.running_var = std::move(t);
      } else {
        throw FormatError("model file: bad batch-norm tensor name '" + e.name +
                          "'");
      }
    } else {
      throw FormatError("model file: unknown role '" + e.role + "'");
    }
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw FormatError("model file: trailing bytes after payload");
  }
  return m;
}

}  // namespace dfl
