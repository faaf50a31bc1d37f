#include "relaxflow/metrics.hpp"

#include "relaxflow/assignment.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace relaxflow {

PointSet::PointSet(Matrix points, std::optional<std::uint64_t> seed) : points_(std::move(points)), seed_(seed) {
  if (!points_.allFinite()) throw std::invalid_argument("PointSet: non-finite point");
}

const char* to_string(ErrorKind kind) { return kind == ErrorKind::obs ? "obs" : "sem"; }

double ErrorReport::partial(std::size_t steps) const {
  if (steps > integrand.size()) throw std::out_of_range("ErrorReport::partial: step count exceeds grid");
  double sum = 0.0;
  for (std::size_t k = 0; k < steps; ++k) sum += dt * integrand[k];
  return std::sqrt(sum);
}

ErrorReport path_error(const Trajectory& trajectory, const VelocityFn& oracle, const VelocityFn& estimator,
                       ErrorKind which) {
  const std::size_t K = trajectory.steps();
  if (trajectory.times.size() != K || trajectory.states.size() != K + 1)
    throw std::invalid_argument("path_error: trajectory telemetry does not match its time grid");
  if (!oracle || !estimator) throw std::invalid_argument("path_error: missing field");
  ErrorReport report;
  report.kind = which;
  report.dt = trajectory.dt;
  report.integrand.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const Vector a = oracle(trajectory.states[k], trajectory.times[k]);
    const Vector b = estimator(trajectory.states[k], trajectory.times[k]);
    if (a.size() != b.size()) throw std::invalid_argument("path_error: field dimension mismatch");
    report.integrand.push_back((a - b).squaredNorm());
  }
  report.value = report.partial(K);
  if (!std::isfinite(report.value)) throw NumericError("metrics", "path_error", "non-finite error");
  return report;
}

namespace {

void check_pair(const PointSet& a, const PointSet& b, const char* op) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(op) + ": point sets differ in size");
  if (a.dim() != b.dim()) throw std::invalid_argument(std::string(op) + ": point sets differ in dimension");
  if (a.size() == 0) throw std::invalid_argument(std::string(op) + ": empty point sets");
}

Matrix rows_subset(const Matrix& m, const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

}  // namespace

double wasserstein2_exact(const PointSet& a, const PointSet& b) {
  check_pair(a, b, "wasserstein2_exact");
  if (a.size() > kMaxExactPoints) throw std::invalid_argument("wasserstein2_exact: point count exceeds cap");
  const Eigen::Index n = a.size();
  const Matrix& pa = a.points();
  const Matrix& pb = b.points();
  // |a|^2 + |b|^2 - 2 a.b loses precision for nearby points; form differences directly.
  const Matrix at = pa.transpose();
  const Matrix bt = pb.transpose();
  Matrix cost(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) cost(i, j) = (at.col(i) - bt.col(j)).squaredNorm();
  const double total = solve_assignment(cost).cost;
  return std::sqrt(std::max(total, 0.0) / static_cast<double>(n));
}

SubsampledDistance wasserstein2_subsampled(const PointSet& a, const PointSet& b, Eigen::Index cap,
                                           std::uint64_t seed) {
  check_pair(a, b, "wasserstein2_subsampled");
  if (cap < 1 || cap > kMaxExactPoints) throw std::invalid_argument("wasserstein2_subsampled: cap out of range");
  SubsampledDistance out;
  if (a.size() <= cap) {
    out.value = wasserstein2_exact(a, b);
    out.points_used = a.size();
    return out;
  }
  std::mt19937_64 rng(seed);
  auto pick = [&](Eigen::Index n) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(cap));
    return idx;
  };
  const auto ia = pick(a.size());
  const auto ib = pick(b.size());
  out.value = wasserstein2_exact(PointSet(rows_subset(a.points(), ia)), PointSet(rows_subset(b.points(), ib)));
  out.subsampled = true;
  out.points_used = cap;
  return out;
}

double wasserstein2_gaussian_1d(double mu1, double sigma1, double mu2, double sigma2) {
  if (sigma1 < 0.0 || sigma2 < 0.0) throw std::invalid_argument("wasserstein2_gaussian_1d: negative sigma");
  return std::hypot(mu1 - mu2, sigma1 - sigma2);
}

namespace {

constexpr double kClampTolerance = 1e-8;

// Symmetric PSD square root; tiny negative eigenvalues are clamped.
Matrix psd_sqrt(const Matrix& m, const char* what) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericError("metrics", "frechet_distance", "eigendecomposition failed");
  Vector lambda = eig.eigenvalues();
  const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < -kClampTolerance * scale)
      throw NumericError("metrics", "frechet_distance", std::string(what) + " has a negative eigenvalue");
    lambda[i] = std::sqrt(std::max(lambda[i], 0.0));
  }
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double frechet_distance_from_stats(const Vector& mean_a, const Matrix& cov_a, const Vector& mean_b,
                                   const Matrix& cov_b) {
  const Eigen::Index d = mean_a.size();
  if (mean_b.size() != d || cov_a.rows() != d || cov_a.cols() != d || cov_b.rows() != d || cov_b.cols() != d)
    throw std::invalid_argument("frechet_distance: dimension mismatch");
  const Matrix root_a = psd_sqrt(cov_a, "covariance A");
  const Matrix inner = root_a * cov_b * root_a;
  const Matrix root_inner = psd_sqrt(inner, "covariance product");
  psd_sqrt(cov_b, "covariance B");
  const double value =
      (mean_a - mean_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * root_inner.trace();
  if (!std::isfinite(value)) throw NumericError("metrics", "frechet_distance", "non-finite result");
  return std::max(value, 0.0);
}

double frechet_distance(const PointSet& a, const PointSet& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("frechet_distance: point sets differ in dimension");
  if (a.dim() < 1 || a.dim() > 64) throw std::invalid_argument("frechet_distance: dimension must lie in [1, 64]");
  if (a.size() <= a.dim() || b.size() <= b.dim())
    throw std::invalid_argument("frechet_distance: need more points than dimensions");
  auto stats = [](const Matrix& p) {
    const Vector mean = p.colwise().mean().transpose();
    const Matrix centered = p.rowwise() - mean.transpose();
    Matrix cov = (centered.transpose() * centered) / static_cast<double>(p.rows() - 1);
    return std::pair{mean, cov};
  };
  const auto [ma, ca] = stats(a.points());
  const auto [mb, cb] = stats(b.points());
  return frechet_distance_from_stats(ma, ca, mb, cb);
}

void StabilityBoundInputs::validate() const {
  if (!(lipschitz_obs >= 0.0 && lipschitz_prior >= 0.0 && condition_gap >= 0.0))
    throw std::invalid_argument("stability_bound: Lipschitz constants and condition gap must be non-negative");
  if (!(dt >= 0.0)) throw std::invalid_argument("stability_bound: dt must be non-negative");
  for (double a : alphas)
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("stability_bound: alpha outside [0, 1]");
  for (const auto* r : {&e_obs, &e_sem}) {
    if (r->integrand.size() != alphas.size())
      throw std::invalid_argument("stability_bound: error report grid does not match the gate schedule");
    for (double v : r->integrand)
      if (!(v >= 0.0)) throw std::invalid_argument("stability_bound: negative error integrand");
  }
}

double stability_bound(const StabilityBoundInputs& inputs, std::size_t steps) {
  inputs.validate();
  if (steps > inputs.alphas.size()) throw std::out_of_range("stability_bound: step beyond the schedule");
  double a_obs = 0.0, a_sem = 0.0, exponent = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double a = inputs.alphas[k];
    a_obs = std::max(a_obs, 1.0 - a);
    a_sem = std::max(a_sem, a);
    exponent += inputs.dt * ((1.0 - a) * inputs.lipschitz_obs + a * inputs.lipschitz_prior);
  }
  const double t = inputs.dt * static_cast<double>(steps);
  const double bracket = a_obs * inputs.e_obs.partial(steps) + a_sem * inputs.e_sem.partial(steps) +
                         inputs.condition_gap * inputs.lipschitz_prior * t;
  if (bracket == 0.0) return 0.0;
  return bracket * std::exp(exponent);
}

const char* to_string(GronwallStatus status) {
  switch (status) {
    case GronwallStatus::holds: return "holds";
    case GronwallStatus::hypothesis_violated: return "hypothesis_violated";
    case GronwallStatus::conclusion_violated: return "conclusion_violated";
  }
  return "unknown";
}

GronwallResult verify_gronwall(const std::vector<double>& u, const std::vector<double>& kappa, double kc,
                               double dt, double tolerance) {
  if (u.size() != kappa.size() || u.empty()) throw std::invalid_argument("verify_gronwall: samples must share a non-empty grid");
  if (!(kc >= 0.0) || !(dt > 0.0) || !(tolerance >= 0.0))
    throw std::invalid_argument("verify_gronwall: Kc, dt and tolerance must be non-negative (dt positive)");
  for (std::size_t k = 0; k < u.size(); ++k)
    if (!(u[k] >= 0.0 && kappa[k] >= 0.0)) throw std::invalid_argument("verify_gronwall: samples must be non-negative");

  auto slack = [tolerance](double rhs) { return tolerance * std::max(1.0, std::abs(rhs)); };
  double int_ku = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (k > 0) int_ku += 0.5 * dt * (kappa[k - 1] * u[k - 1] + kappa[k] * u[k]);
    const double rhs = kc + int_ku;
    if (u[k] > rhs + slack(rhs)) return {GronwallStatus::hypothesis_violated, k, u[k] - rhs};
  }
  double int_k = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (k > 0) int_k += 0.5 * dt * (kappa[k - 1] + kappa[k]);
    const double rhs = kc * std::exp(int_k);
    if (u[k] > rhs + slack(rhs)) return {GronwallStatus::conclusion_violated, k, u[k] - rhs};
  }
  return {};
}

void write_metrics_csv(const std::vector<MetricRow>& rows, std::ostream& out) {
  out << "experiment,config_hash,seed,metric,variant,value\n" << std::setprecision(17);
  for (const auto& r : rows)
    out << r.experiment << ',' << r.config_hash << ',' << r.seed << ',' << r.metric << ',' << r.variant << ',' << r.value << '\n';
}

}  // namespace relaxflow
