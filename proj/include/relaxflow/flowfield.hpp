#pragma once

// Analytic rectified-flow velocity fields between a standard Gaussian source
// and isotropic Gaussian-mixture targets, plus band-limited perturbations that
// model the error of a learned estimator.

#include "relaxflow/grid.hpp"
#include "relaxflow/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <variant>
#include <vector>

namespace relaxflow {

struct MixtureComponent {
  double weight = 1.0;
  Vector mean;
  double std = 1.0;
};

/// Weighted isotropic Gaussian components. Weights are strictly positive and
/// sum to one within 1e-12; construction validates and rejects otherwise.
class GaussianMixture {
 public:
  GaussianMixture() = default;
  explicit GaussianMixture(std::vector<MixtureComponent> components);

  /// Single isotropic component.
  static GaussianMixture single(Vector mean, double std);

  std::size_t dimension() const noexcept { return dimension_; }
  const std::vector<MixtureComponent>& components() const noexcept { return components_; }
  bool empty() const noexcept { return components_.empty(); }

  Vector sample(std::mt19937_64& rng) const;

  /// Per-axis standard deviation of the rectified-flow marginal at time t,
  /// averaged over axes.
  double marginal_std(double t) const;

 private:
  std::vector<MixtureComponent> components_;
  std::size_t dimension_ = 0;
};

/// Schema: {"dimension": D, "components": [{"weight": w, "mean": [...], "std": s}, ...]}
GaussianMixture mixture_from_json(const nlohmann::json& j);
nlohmann::json mixture_to_json(const GaussianMixture& m);
GaussianMixture load_mixture(const std::filesystem::path& path);

/// Marginal rectified-flow velocity E[x1 - x0 | x_t = x] for the linear
/// interpolant x_t = (1-t) x0 + t x1 with x0 ~ N(0, I), x1 ~ mixture.
/// Throws std::invalid_argument for t >= 1 or an empty mixture.
Vector oracle_velocity(const GaussianMixture& mixture, const Vector& x, double t);

enum class FieldRole { observation, semantic };

/// Oracle field toward a mixture target, tagged with the branch it plays.
class AnalyticFlowField {
 public:
  AnalyticFlowField(GaussianMixture target, FieldRole role = FieldRole::observation)
      : target_(std::move(target)), role_(role) {
    if (target_.empty()) throw std::invalid_argument("AnalyticFlowField: empty mixture");
  }

  const GaussianMixture& target() const noexcept { return target_; }
  FieldRole role() const noexcept { return role_; }
  std::size_t dimension() const noexcept { return target_.dimension(); }

  Vector velocity(const Vector& x, double t) const { return oracle_velocity(target_, x, t); }
  VelocityFn as_function() const;

 private:
  GaussianMixture target_;
  FieldRole role_;
};

struct MonteCarloEstimate {
  Vector velocity;
  Vector standard_error;
  double effective_samples = 0.0;
};

/// Effective-sample floor below which monte_carlo_velocity refuses to answer.
inline constexpr double kMinEffectiveSamples = 200.0;

/// Default kernel bandwidth: 0.1 times the marginal std at time t.
double default_bandwidth(const GaussianMixture& mixture, double t);

/// Kernel-weighted local-linear estimate of E[x1 - x0 | x_t ~ x] from n
/// independent (x0, x1) draws. The intercept of a Gaussian-kernel weighted
/// least-squares fit is the estimate; its sandwich standard error is
/// reported per component.
MonteCarloEstimate monte_carlo_velocity(const GaussianMixture& mixture, const Vector& x, double t,
                                        std::size_t n, double bandwidth, std::uint64_t seed);

/// One random-phase plane wave of the injected noise.
struct NoiseWave {
  std::size_t component = 0;
  Vector frequency;  // cycles per unit length
  double phase = 0.0;
  double coefficient = 0.0;
};

enum class Band { above, below };

/// Sum of random-phase sinusoids whose frequencies are DFT bins of a
/// verification lattice lying strictly above (or below) the cutoff, so that
/// band membership holds exactly on that lattice.
class BandNoise {
 public:
  BandNoise() = default;
  BandNoise(Lattice verification, std::size_t components, double cutoff, double amplitude,
            std::uint64_t seed, std::size_t waves_per_component = 8, Band band = Band::above);

  Vector evaluate(const Vector& x) const;

  const Lattice& verification_lattice() const noexcept { return lattice_; }
  double cutoff() const noexcept { return cutoff_; }
  double amplitude() const noexcept { return amplitude_; }
  std::uint64_t seed() const noexcept { return seed_; }
  Band band() const noexcept { return band_; }
  std::size_t components() const noexcept { return components_; }
  const std::vector<NoiseWave>& waves() const noexcept { return waves_; }

 private:
  Lattice lattice_;
  std::size_t components_ = 0;
  double cutoff_ = 0.0;
  double amplitude_ = 0.0;
  std::uint64_t seed_ = 0;
  Band band_ = Band::above;
  std::vector<NoiseWave> waves_;
};

/// Random-phase sinusoids strictly below a cutoff (DFT bins of a lattice).
/// Used to build band-limited reference signals.
BandNoise make_low_band_signal(const Lattice& lattice, std::size_t components, double cutoff,
                               double amplitude, std::uint64_t seed,
                               std::size_t waves_per_component = 4);

using FieldBase = std::variant<AnalyticFlowField, GridField>;

/// Base field plus band-limited noise. With amplitude 0 evaluates exactly as
/// the base.
class PerturbedField {
 public:
  PerturbedField(FieldBase base, BandNoise noise);

  const FieldBase& base() const noexcept { return base_; }
  const BandNoise& noise() const noexcept { return noise_; }
  std::size_t dimension() const;
  std::size_t components() const;

  Vector velocity(const Vector& x, double t) const;
  VelocityFn as_function() const;

 private:
  FieldBase base_;
  BandNoise noise_;
};

/// Attaches noise above `cutoff` to a field. Throws if the cutoff is not
/// below the verification lattice's Nyquist frequency.
PerturbedField inject_band_noise(FieldBase field, const Lattice& verification, double cutoff,
                                 double amplitude, std::uint64_t seed);

/// Pointwise evaluation at every lattice site. Lattice extents must be >= 4.
GridField sample_on_grid(const AnalyticFlowField& field, const Lattice& lattice, double t);
GridField sample_on_grid(const PerturbedField& field, const Lattice& lattice, double t);
GridField sample_on_grid(const VelocityFn& field, std::size_t components, const Lattice& lattice,
                         double t);

}  // namespace relaxflow
