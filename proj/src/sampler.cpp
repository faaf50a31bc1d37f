#include "relaxflow/sampler.hpp"

#include "relaxflow/flowfield.hpp"
#include "relaxflow/relaxation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <ostream>
#include <random>
#include <stdexcept>

namespace relaxflow {

double alpha_schedule(std::size_t k, std::size_t steps, double rho) {
  if (steps < 1) throw std::invalid_argument("alpha_schedule: K must be >= 1");
  if (k > steps) throw std::invalid_argument("alpha_schedule: k must lie in [0, K]");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("alpha_schedule: rho must lie in [0, 1]");
  const auto cutoff = static_cast<std::size_t>(std::floor(rho * static_cast<double>(steps)));
  if (k > cutoff) return 0.0;
  return std::clamp(1.0 - static_cast<double>(k) / static_cast<double>(steps), 0.0, 1.0);
}

Schedule::Schedule(std::size_t steps, double rho, double epsilon)
    : steps_(steps), rho_(rho), epsilon_(epsilon) {
  if (steps_ < 1) throw std::invalid_argument("Schedule: K must be >= 1");
  if (!(rho_ >= 0.0 && rho_ <= 1.0)) throw std::invalid_argument("Schedule: rho must lie in [0, 1]");
  if (!(epsilon_ >= 0.0 && epsilon_ < 1.0)) throw std::invalid_argument("Schedule: epsilon must lie in [0, 1)");
  dt_ = (1.0 - epsilon_) / static_cast<double>(steps_);
  cutoff_ = static_cast<std::size_t>(std::floor(rho_ * static_cast<double>(steps_)));
  alphas_.resize(steps_ + 1);
  for (std::size_t k = 0; k <= steps_; ++k) alphas_[k] = alpha_schedule(k, steps_, rho_);
}

Vector euler_step(const Vector& x, double dt, const Vector& v) {
  if (x.size() != v.size()) throw std::invalid_argument("euler_step: dimension mismatch");
  if (!std::isfinite(dt) || !x.allFinite() || !v.allFinite())
    throw std::invalid_argument("euler_step: non-finite input");
  return x + dt * v;
}

const char* to_string(SamplingMode mode) {
  switch (mode) {
    case SamplingMode::observation_only: return "observation_only";
    case SamplingMode::standard: return "standard";
    case SamplingMode::relaxflow: return "relaxflow";
  }
  return "unknown";
}

SamplingMode sampling_mode_from_string(const std::string& name) {
  if (name == "observation_only") return SamplingMode::observation_only;
  if (name == "standard") return SamplingMode::standard;
  if (name == "relaxflow") return SamplingMode::relaxflow;
  throw std::invalid_argument("unknown sampling mode: " + name);
}

Vector linear_blend(const Vector& v_obs, const Vector& v_prior, double alpha) {
  if (v_obs.size() != v_prior.size()) throw std::invalid_argument("blend: branch dimension mismatch");
  return (1.0 - alpha) * v_obs + alpha * v_prior;
}

namespace {

void check_gate(double m, double alpha) {
  if (!(m > 0.0 && m <= 1.0)) throw std::invalid_argument("visibility_blend: m must lie in (0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("visibility_blend: alpha must lie in [0, 1]");
}

}  // namespace

Vector visibility_blend(const Vector& v_obs, const Vector& v_prior, double m, double alpha) {
  check_gate(m, alpha);
  if (v_obs.size() != v_prior.size()) throw std::invalid_argument("visibility_blend: branch dimension mismatch");
  return v_obs + ((1.0 - m) * alpha) * (v_prior - v_obs);
}

Vector visibility_blend(const Vector& v_obs, const Vector& v_prior, std::span<const double> m, double alpha) {
  if (v_obs.size() != v_prior.size()) throw std::invalid_argument("visibility_blend: branch dimension mismatch");
  if (m.empty() || v_obs.size() % static_cast<Eigen::Index>(m.size()) != 0)
    throw std::invalid_argument("visibility_blend: state size is not a multiple of the voxel count");
  const Eigen::Index block = v_obs.size() / static_cast<Eigen::Index>(m.size());
  Vector out(v_obs.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    check_gate(m[i], alpha);
    const Eigen::Index off = static_cast<Eigen::Index>(i) * block;
    out.segment(off, block) =
        v_obs.segment(off, block) + ((1.0 - m[i]) * alpha) * (v_prior.segment(off, block) - v_obs.segment(off, block));
  }
  return out;
}

namespace {

Vector mix(const Vector& v_obs, const Vector& v_prior, double alpha, const BranchPair& branches,
           SamplingMode mode) {
  switch (mode) {
    case SamplingMode::observation_only: return v_obs;
    case SamplingMode::standard: return linear_blend(v_obs, v_obs, alpha);
    case SamplingMode::relaxflow:
      if (branches.visibility) return visibility_blend(v_obs, v_prior, *branches.visibility, alpha);
      return linear_blend(v_obs, v_prior, alpha);
  }
  throw std::logic_error("unreachable");
}

}  // namespace

Vector blend_step(const Vector& x, std::size_t k, const BranchPair& branches, const Schedule& schedule) {
  if (k >= schedule.steps()) throw std::invalid_argument("blend_step: step index out of range");
  const double t = schedule.time(k);
  const Vector v_obs = branches.observation(x, t);
  const Vector v_prior = branches.prior(x, t);
  if (v_obs.size() != x.size() || v_prior.size() != x.size())
    throw std::invalid_argument("blend_step: branch velocity dimension mismatch");
  return euler_step(x, schedule.dt(), mix(v_obs, v_prior, schedule.alpha(k), branches, SamplingMode::relaxflow));
}

Trajectory integrate(const BranchPair& branches, const Schedule& schedule, const Vector& x0, SamplingMode mode) {
  if (!x0.allFinite()) throw std::invalid_argument("integrate: non-finite initial state");
  if (!branches.observation || !branches.prior) throw std::invalid_argument("integrate: missing branch field");
  Trajectory tr;
  tr.dt = schedule.dt();
  tr.mode = mode;
  const std::size_t K = schedule.steps();
  tr.states.reserve(K + 1);
  tr.times.reserve(K);
  tr.alphas.reserve(K);
  tr.v_obs.reserve(K);
  tr.v_prior.reserve(K);
  tr.velocities.reserve(K);
  tr.states.push_back(x0);
  for (std::size_t k = 0; k < K; ++k) {
    const Vector& x = tr.states.back();
    const double t = schedule.time(k);
    const double a = schedule.alpha(k);
    Vector v_obs = branches.observation(x, t);
    Vector v_prior = branches.prior(x, t);
    if (v_obs.size() != x.size() || v_prior.size() != x.size())
      throw std::invalid_argument("integrate: branch velocity dimension mismatch");
    Vector v = mix(v_obs, v_prior, a, branches, mode);
    if (!v.allFinite())
      throw NumericError("sampler", "integrate", "non-finite velocity at step " + std::to_string(k));
    Vector next = euler_step(x, tr.dt, v);
    if (!next.allFinite())
      throw NumericError("sampler", "integrate", "non-finite state at step " + std::to_string(k + 1));
    tr.times.push_back(t);
    tr.alphas.push_back(a);
    tr.v_obs.push_back(std::move(v_obs));
    tr.v_prior.push_back(std::move(v_prior));
    tr.velocities.push_back(std::move(v));
    tr.states.push_back(std::move(next));
  }
  return tr;
}

Vector replay(const Trajectory& trajectory) {
  Vector x = trajectory.states.front();
  for (const auto& v : trajectory.velocities) x = euler_step(x, trajectory.dt, v);
  return x;
}

Matrix standard_normal_draws(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix draws(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < draws.rows(); ++i)
    for (Eigen::Index j = 0; j < draws.cols(); ++j) draws(i, j) = normal(rng);
  return draws;
}

Matrix batch_integrate(const BranchPair& branches, const Schedule& schedule, const Matrix& initial,
                       SamplingMode mode) {
  Matrix finals(initial.rows(), initial.cols());
  for (Eigen::Index i = 0; i < initial.rows(); ++i) {
    const Vector x0 = initial.row(i).transpose();
    finals.row(i) = integrate(branches, schedule, x0, mode).final_state().transpose();
  }
  return finals;
}

Matrix batch_sample(const BranchPair& branches, const Schedule& schedule, std::size_t n, std::size_t dim,
                    std::uint64_t seed, SamplingMode mode) {
  if (n < 1) throw std::invalid_argument("batch_sample: n must be >= 1");
  return batch_integrate(branches, schedule, standard_normal_draws(n, dim, seed), mode);
}

void write_trajectory_csv(const Trajectory& trajectory, std::ostream& out) {
  const Eigen::Index d = trajectory.states.front().size();
  out << "step,t,alpha";
  for (const char* prefix : {"x", "v_obs", "v_prior", "v"})
    for (Eigen::Index j = 0; j < d; ++j) out << ',' << prefix << j;
  out << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < trajectory.states.size(); ++k) {
    const bool last = k == trajectory.steps();
    out << k << ',' << (last ? static_cast<double>(k) * trajectory.dt : trajectory.times[k]) << ',';
    if (!last) out << trajectory.alphas[k];
    for (Eigen::Index j = 0; j < d; ++j) out << ',' << trajectory.states[k][j];
    for (const auto* series : {&trajectory.v_obs, &trajectory.v_prior, &trajectory.velocities})
      for (Eigen::Index j = 0; j < d; ++j) {
        out << ',';
        if (!last) out << (*series)[k][j];
      }
    out << '\n';
  }
}

RelaxedGridField::RelaxedGridField(VelocityFn source, std::size_t components, Lattice lattice, double sigma,
                                   std::span<const double> times)
    : source_(std::move(source)),
      components_(components),
      lattice_(std::move(lattice)),
      sigma_(sigma),
      times_(times.begin(), times.end()) {
  if (!source_) throw std::invalid_argument("RelaxedGridField: missing source field");
  if (sigma_ < 0.0) throw std::invalid_argument("RelaxedGridField: sigma must be >= 0");
  std::sort(times_.begin(), times_.end());
  times_.erase(std::unique(times_.begin(), times_.end()), times_.end());
  grids_.reserve(times_.size());
  for (double t : times_) grids_.push_back(relax_field(sample_on_grid(source_, components_, lattice_, t), sigma_));
}

GridField RelaxedGridField::grid_at(double t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it != times_.end() && *it == t) return grids_[static_cast<std::size_t>(it - times_.begin())];
  return relax_field(sample_on_grid(source_, components_, lattice_, t), sigma_);
}

Vector RelaxedGridField::operator()(const Vector& x, double t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it != times_.end() && *it == t) return grids_[static_cast<std::size_t>(it - times_.begin())].interpolate(x);
  return grid_at(t).interpolate(x);
}

VelocityFn RelaxedGridField::as_function() const {
  auto shared = std::make_shared<const RelaxedGridField>(*this);
  return [shared](const Vector& x, double t) { return (*shared)(x, t); };
}

}  // namespace relaxflow
