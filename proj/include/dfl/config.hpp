#ifndef DFL_CONFIG_HPP
#define DFL_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dfl/network.hpp"
#include "dfl/training.hpp"

namespace dfl {

/// Flat `key = value` run configuration with '#' comments. Unknown keys are
/// rejected; every run writes the fully resolved form (defaults included)
/// next to its outputs.
class RunConfig {
 public:
  static RunConfig defaults();
  static RunConfig load_file(const std::string& path);
  static RunConfig parse_text(const std::string& text);

  const std::string& get(const std::string& key) const;
  void set(const std::string& key, const std::string& value);  // known keys only

  bool get_bool(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_seed(const std::string& key) const;

  /// Canonical resolved text: every key in registry order.
  std::string resolved_text() const;

  NetworkSpec network_spec() const;
  TrainConfig train_config() const;

  static const std::vector<std::pair<std::string, std::string>>& registry();

 private:
  std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string& text);
std::string hash_hex(std::uint64_t h);

}  // namespace dfl

#endif  // DFL_CONFIG_HPP
