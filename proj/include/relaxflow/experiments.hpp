#pragma once

// Config-driven scenarios composing fields, relaxation, attention, visibility,
// the sampler and the metrics into property checks with machine-readable
// reports.

#include "relaxflow/flowfield.hpp"
#include "relaxflow/metrics.hpp"
#include "relaxflow/sampler.hpp"
#include "relaxflow/visibility.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace relaxflow {

/// Invalid configuration. `violations` lists every offending field.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct LatticeSpec {
  std::size_t extent = 64;
  double lo = -4.0;
  double hi = 4.0;
};

struct ExperimentConfig {
  std::string scenario;
  std::size_t seeds = 20;
  std::uint64_t seed_offset = 0;
  std::vector<double> sigmas;
  double sigma = 1.0;  // relaxation strength for sampling scenarios
  double rho = 0.2;
  std::size_t steps = 100;
  std::size_t priors = 3;
  double eta = 0.0;             // noise cutoff, cycles per unit length
  double signal_cutoff = 0.0;   // band limit of reference signals
  double noise_amplitude = 1.0;
  std::size_t samples = 512;
  double epsilon = kDefaultEpsilon;
  std::size_t dimension = 2;
  LatticeSpec lattice;
  GaussianMixture observation;
  GaussianMixture semantic;
  GaussianMixture semantic_b;
  VisibilityParams visibility;
  std::vector<double> ablation_sigmas;
  std::vector<double> ablation_rhos;
  std::vector<std::size_t> ablation_priors;
  std::size_t consistency_seeds = 5;
  double identical_prior_threshold = 0.0;
  double rho_zero_factor = 1.5;
  double pass_fraction = 0.9;
  std::filesystem::path output;

  /// Normalized JSON form (defaults filled in); hashed into every row.
  nlohmann::json json;
};

/// Names accepted as the "scenario" field.
const std::vector<std::string>& scenario_names();

/// Full default document for a scenario.
nlohmann::json default_config_json(const std::string& scenario);

/// Applies "dotted.key=value"; the value is parsed as JSON, falling back to a
/// plain string.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Merges `user` over the scenario defaults and validates every field.
/// Throws ConfigError listing all violations.
ExperimentConfig config_from_json(const nlohmann::json& user);

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);
std::string fnv1a_hex(std::string_view bytes);

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Aggregate {
  std::string metric;
  std::string variant;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

struct Report {
  std::string scenario;
  std::string config_hash;
  nlohmann::json config;
  std::vector<MetricRow> rows;
  std::vector<Aggregate> aggregates;
  std::vector<Verdict> verdicts;
  std::map<std::string, std::string> artifacts;  // relative path -> FNV-1a hash
  bool subsampled = false;

  bool passed() const;
  nlohmann::json to_json() const;
};

/// Median, min and max per (metric, variant), ordered by first appearance.
std::vector<Aggregate> aggregate_rows(const std::vector<MetricRow>& rows);

/// Recomputes the scenario's verdicts from its rows alone.
std::vector<Verdict> verdicts_from_rows(const ExperimentConfig& config, const std::vector<MetricRow>& rows);

/// Runs the configured scenario. When config.output is non-empty writes
/// report.json, metrics.csv and trajectories/*.csv there.
Report run(const ExperimentConfig& config);

/// Observation branch plus one relaxed prior branch per semantic mode.
struct AmbiguousBranches {
  BranchPair under_a;
  BranchPair under_b;
};

/// Two-mode ambiguity scenario: the observation mixture leaves the second
/// coordinate ambiguous, the priors pick a mode each. Rejects identical modes.
AmbiguousBranches scenario_ambiguous(const ExperimentConfig& config);

/// Rows of the visibility scenario (per seed: occluded scene, occluder-free
/// scene, the two-sigma margin check and an independent recomputation of the
/// per-voxel blend).
std::vector<MetricRow> scenario_visibility(const ExperimentConfig& config);

}  // namespace relaxflow
