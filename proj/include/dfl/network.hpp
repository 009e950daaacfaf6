#ifndef DFL_NETWORK_HPP
#define DFL_NETWORK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dfl/autodiff.hpp"
#include "dfl/tensor.hpp"

namespace dfl {

enum class ArchKind { densenet, probe, identity };

/// DenseNet-style tabular spec. Per-block layer count is
/// max(1, (depth - 4) / 3): stem, two transitions and the final projection
/// account for the remaining four layers.
struct NetworkSpec {
  std::size_t input_dim = 0;
  std::size_t output_classes = 2;
  std::size_t growth_rate = 8;
  std::size_t depth = 10;
  double reduction = 0.5;

  std::size_t layers_per_block() const;
  void validate() const;
};

struct NamedParam {
  std::string name;
  Tensor value;
};

struct BatchNormSite {
  std::string name;
  BatchNormState state;
};

/// Parameter collections for the representation network (theta) and the
/// classifier head (phi), plus batch-norm running statistics. Ordering is
/// load-bearing: forward() consumes parameters in construction order.
struct ModelParams {
  ArchKind kind = ArchKind::densenet;
  NetworkSpec spec;
  std::size_t probe_hidden = 0;
  std::vector<NamedParam> theta;
  std::vector<NamedParam> phi;
  std::vector<BatchNormSite> bn;

  std::size_t param_count() const { return theta.size() + phi.size(); }
};

/// Leaf nodes wrapping the current parameter values for one graph build.
/// Gradients land on these leaves; the optimizer reads them back in the same
/// theta-then-phi order.
struct BoundModel {
  std::vector<NodePtr> theta;
  std::vector<NodePtr> phi;
};

struct ForwardOut {
  NodePtr latent;
  NodePtr logprobs;
};

/// Weights ~ Normal(0, 2/fan_in), biases 0, batch-norm gamma 1 / beta 0;
/// reproducible from the seed.
ModelParams build(const NetworkSpec& spec, std::uint64_t seed);

/// One-hidden-layer ReLU classifier: the Standard baseline and the
/// fair-representation probe.
ModelParams build_probe(std::size_t input_dim, std::size_t hidden,
                        std::size_t output_classes, std::uint64_t seed);

/// Pass-through representation (latent == input) with a linear head; used to
/// sanity-check the probe experiment against the Standard baseline.
ModelParams build_identity(std::size_t input_dim, std::size_t output_classes,
                           std::uint64_t seed);

BoundModel bind(const ModelParams& model);

/// Train mode normalizes by batch statistics and updates running stats;
/// eval mode reads running stats and mutates nothing.
ForwardOut forward(ModelParams& model, const BoundModel& bound,
                   const NodePtr& x, RunMode mode);

struct EvalOut {
  Tensor latent;
  Tensor logprobs;
  Tensor probs;
};

/// Pure eval-mode forward on plain data.
EvalOut forward_eval(const ModelParams& model, const Tensor& x);

/// Text header (format version, spec fields, named manifest with shapes and
/// byte offsets) followed by raw little-endian float64 blocks in manifest
/// order. Round-trips bit-exactly.
void save_model(const ModelParams& model, const std::string& path);
ModelParams load_model(const std::string& path);

}  // namespace dfl

#endif  // DFL_NETWORK_HPP
