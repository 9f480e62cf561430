#pragma once

#include "qmono/classical.hpp"
#include "qmono/dynamics.hpp"
#include "qmono/errors.hpp"
#include "qmono/quantum.hpp"
#include "qmono/resonances.hpp"
#include "qmono/section.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace qmono {

/// Invalid run configuration; `issues` holds one "field: problem" line per violation.
struct ConfigError : ParameterError {
  explicit ConfigError(std::vector<std::string> problems);
  std::vector<std::string> issues;
};

struct SystemConfig {
  enum class Kind { Billiard, Smooth, Free, Model };
  Kind kind = Kind::Billiard;
  std::vector<Disk> disks;
  std::vector<GaussianBump> bumps;
  double support_radius = 3.0;
  double cutoff_width = 0.8;
  std::string model = "doubling";  // Model: doubling, golden_mean, ternary_cut, single_fixed_point

  bool has_flow() const { return kind != Kind::Model; }
  ScatteringSystem scattering() const;
  SymbolicModel symbolic() const;
};

struct SamplingConfig {
  int budget = 300;
  TrappedSamplingOptions options;
  std::vector<double> dimension_scales{0.4, 0.2, 0.1, 0.05, 0.025};
};

struct ClassicalConfig {
  Discretization discretization = Discretization::collocation(32);
  double weight_constant = 0.0;   // f = weight_constant + weight_expansion * log|kappa'|
  double weight_expansion = 0.0;
  std::vector<double> roof;       // per-branch return time; empty means tau = 1
  int orbit_period = 12;
  int ulam_cells = 8;
  int ulam_samples = 40;
  std::optional<ZeroDomain> ruelle;  // rectangle searched for Ruelle resonances
};

struct QuantumConfig {
  std::vector<double> h{1.0 / 64.0};
  QuantumOptions options;  // options.h is replaced by each entry of `h`
};

struct ResonanceConfig {
  double C = 5.0;  // zeros are searched in D(center, C h)
  Complex center{0.0, 0.0};
  ZeroFinderOptions finder;
};

struct WeylConfig {
  std::vector<int> baker_sizes{81, 243, 729, 2187};
  double threshold = 0.5;
};

struct RunConfig {
  SystemConfig system;
  double energy = 0.5;
  std::uint64_t seed = 1;
  std::string output = "out";
  SamplingConfig sampling;
  PartitionOptions section;
  ClassicalConfig classical;
  QuantumConfig quantum;
  ResonanceConfig resonances;
  WeylConfig weyl;

  /// Every field with its effective value, defaults included.
  nlohmann::ordered_json resolved() const;
  /// sha256 of resolved().dump().
  std::string hash() const;
};

/// Reads a YAML run configuration. Unknown keys, wrong types and violated
/// constraints are all reported together in one ConfigError.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& yaml_text);

/// One "field: problem" line per violated constraint; empty when valid.
std::vector<std::string> problems(const RunConfig& config);
/// Throws ConfigError listing every violated constraint.
void validate(const RunConfig& config);

}  // namespace qmono
