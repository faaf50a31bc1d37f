#pragma once

// Path errors along sampler trajectories, exact Wasserstein-2 between
// equal-size point sets, the Frechet distance between Gaussian fits, and the
// Gronwall-type trajectory stability bound.

#include "relaxflow/sampler.hpp"
#include "relaxflow/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace relaxflow {

/// n points of dimension D stored as rows.
class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(Matrix points, std::optional<std::uint64_t> seed = std::nullopt);

  Eigen::Index size() const noexcept { return points_.rows(); }
  Eigen::Index dim() const noexcept { return points_.cols(); }
  const Matrix& points() const noexcept { return points_; }
  std::optional<std::uint64_t> seed() const noexcept { return seed_; }

 private:
  Matrix points_;
  std::optional<std::uint64_t> seed_;
};

enum class ErrorKind { obs, sem };

const char* to_string(ErrorKind kind);

struct ErrorReport {
  ErrorKind kind = ErrorKind::obs;
  double value = 0.0;              // sqrt(sum_k dt * integrand_k)
  std::vector<double> integrand;   // |oracle - estimator|^2 at (x_k, t_k)
  double dt = 0.0;
  std::string quadrature = "left_riemann";

  /// Error accumulated over the first `steps` steps.
  double partial(std::size_t steps) const;
};

/// Left-endpoint Riemann sum of |oracle(x_k, t_k) - estimator(x_k, t_k)|^2
/// over the trajectory's grid, then the square root. Throws for incomplete
/// telemetry.
ErrorReport path_error(const Trajectory& trajectory, const VelocityFn& oracle, const VelocityFn& estimator,
                       ErrorKind which);

/// Largest point set wasserstein2_exact accepts.
inline constexpr Eigen::Index kMaxExactPoints = 4096;

/// sqrt(min over permutations pi of (1/n) sum_i |a_i - b_pi(i)|^2), solved
/// exactly as an assignment problem. Throws for unequal sizes, mismatched
/// dimensions or more than kMaxExactPoints points.
double wasserstein2_exact(const PointSet& a, const PointSet& b);

struct SubsampledDistance {
  double value = 0.0;
  bool subsampled = false;
  Eigen::Index points_used = 0;
};

/// wasserstein2_exact, drawing `cap` points from each set without
/// replacement (fixed seed) when the sets are larger than the cap.
SubsampledDistance wasserstein2_subsampled(const PointSet& a, const PointSet& b,
                                           Eigen::Index cap = kMaxExactPoints, std::uint64_t seed = 0);

/// sqrt((mu1 - mu2)^2 + (sigma1 - sigma2)^2). Throws for negative sigma.
double wasserstein2_gaussian_1d(double mu1, double sigma1, double mu2, double sigma2);

/// |m_A - m_B|^2 + Tr(C_A + C_B - 2 (C_A^{1/2} C_B C_A^{1/2})^{1/2}).
/// Eigenvalues above -1e-8 (relative to the largest) are clamped to zero;
/// more negative ones raise NumericError.
double frechet_distance_from_stats(const Vector& mean_a, const Matrix& cov_a, const Vector& mean_b,
                                   const Matrix& cov_b);

/// Frechet distance between Gaussian fits (unbiased covariance). Requires
/// more points than dimensions and D <= 64.
double frechet_distance(const PointSet& a, const PointSet& b);

/// Inputs of the trajectory stability bound. `alphas` holds the gate at each
/// Euler step; the error reports carry per-step integrands on the same grid.
struct StabilityBoundInputs {
  double lipschitz_obs = 0.0;    // L: Lipschitz constant of the observation estimator
  double lipschitz_prior = 0.0;  // L~: Lipschitz constant of the relaxed prior estimator
  double condition_gap = 0.0;    // |c_sem - c_prior|
  std::vector<double> alphas;
  double dt = 0.0;
  ErrorReport e_obs;
  ErrorReport e_sem;

  void validate() const;
};

/// Bound on |X_{t_n} - X^_{t_n}| after n steps:
///
///   (a_obs E_obs(t_n) + a_sem E_sem(t_n) + gap * L~ t_n)
///     * exp(sum_{k<n} dt ((1 - alpha_k) L + alpha_k L~))
///
/// where a_obs = max_{k<n} (1 - alpha_k), a_sem = max_{k<n} alpha_k and
/// E(t_n) is the path error over the first n steps. For a constant gate this
/// is exactly (1 - a) E_obs + a E_sem + ...
double stability_bound(const StabilityBoundInputs& inputs, std::size_t steps);

enum class GronwallStatus { holds, hypothesis_violated, conclusion_violated };

const char* to_string(GronwallStatus status);

struct GronwallResult {
  GronwallStatus status = GronwallStatus::holds;
  std::size_t index = 0;  // first offending grid point
  double excess = 0.0;    // amount by which the inequality failed there

  bool holds() const noexcept { return status == GronwallStatus::holds; }
};

/// Checks u(t) <= Kc + int_0^t kappa u (hypothesis) and then
/// u(t) <= Kc exp(int_0^t kappa) (conclusion) at each grid point t_k = k dt,
/// integrals by the trapezoid rule, both up to `tolerance` (relative to
/// max(1, |rhs|)). Throws for negative or mismatched samples.
GronwallResult verify_gronwall(const std::vector<double>& u, const std::vector<double>& kappa, double kc,
                               double dt, double tolerance = 1e-8);

/// One emitted metric value.
struct MetricRow {
  std::string experiment;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string metric;
  std::string variant;
  double value = 0.0;
};

/// CSV header experiment,config_hash,seed,metric,variant,value; values at 17
/// significant digits.
void write_metrics_csv(const std::vector<MetricRow>& rows, std::ostream& out);

}  // namespace relaxflow
