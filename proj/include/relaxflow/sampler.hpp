#pragma once

// Euler integration of the dual-branch flow ODE: a gated blend of an
// observation-branch velocity and a relaxed prior-branch velocity evaluated
// on the same state, optionally modulated per voxel by visibility weights.

#include "relaxflow/grid.hpp"
#include "relaxflow/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace relaxflow {

/// Integration stops at 1 - kDefaultEpsilon; the deterministic-target
/// velocity diverges at t = 1.
inline constexpr double kDefaultEpsilon = 1e-3;

/// alpha_k = 1 - k/K for k <= floor(rho K), else 0. Throws for k outside
/// [0, K], K < 1 or rho outside [0, 1].
double alpha_schedule(std::size_t k, std::size_t steps, double rho);

/// K uniform Euler steps over [0, 1 - epsilon] with the linear-cutoff gate.
class Schedule {
 public:
  Schedule(std::size_t steps, double rho, double epsilon = kDefaultEpsilon);

  std::size_t steps() const noexcept { return steps_; }
  double rho() const noexcept { return rho_; }
  double epsilon() const noexcept { return epsilon_; }
  double dt() const noexcept { return dt_; }
  double time(std::size_t k) const { return static_cast<double>(k) * dt_; }
  double alpha(std::size_t k) const { return alphas_.at(k); }
  std::span<const double> alphas() const noexcept { return alphas_; }
  /// floor(rho K): the last step with a (possibly) non-zero gate.
  std::size_t cutoff_index() const noexcept { return cutoff_; }

 private:
  std::size_t steps_;
  double rho_, epsilon_, dt_;
  std::size_t cutoff_;
  std::vector<double> alphas_;
};

/// x + dt v. Throws std::invalid_argument on non-finite input.
Vector euler_step(const Vector& x, double dt, const Vector& v);

/// Velocity providers for the two branches. `prior` is expected to be the
/// relaxed prior field (e.g. a RelaxedGridField or a head evaluated with
/// blurred logits); `sigma` records the strength used.
///
/// With `visibility` set, the state is split into visibility.size() equal
/// blocks (one per voxel) and block i is gated by (1 - m_i) alpha_k.
struct BranchPair {
  VelocityFn observation;
  VelocityFn prior;
  double sigma = 0.0;
  std::optional<std::vector<double>> visibility;
};

enum class SamplingMode { observation_only, standard, relaxflow };

const char* to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& name);

/// v_obs + (1 - m) alpha (v_prior - v_obs), elementwise. Throws for m outside
/// (0, 1] or alpha outside [0, 1].
Vector visibility_blend(const Vector& v_obs, const Vector& v_prior, double m, double alpha);

/// Same, with one weight per equal-size block of the state.
Vector visibility_blend(const Vector& v_obs, const Vector& v_prior, std::span<const double> m, double alpha);

/// Convex blend (1 - alpha) v_obs + alpha v_prior.
Vector linear_blend(const Vector& v_obs, const Vector& v_prior, double alpha);

/// One step x_{k+1} of the relaxflow blend at step k.
Vector blend_step(const Vector& x, std::size_t k, const BranchPair& branches, const Schedule& schedule);

struct Trajectory {
  std::vector<Vector> states;      // x_0 ... x_K
  std::vector<double> times;       // t_0 ... t_{K-1}
  std::vector<double> alphas;      // alpha_0 ... alpha_{K-1}
  std::vector<Vector> v_obs;       // observation branch at (x_k, t_k)
  std::vector<Vector> v_prior;     // prior branch at (x_k, t_k)
  std::vector<Vector> velocities;  // velocity actually used for step k
  double dt = 0.0;
  SamplingMode mode = SamplingMode::relaxflow;

  std::size_t steps() const noexcept { return velocities.size(); }
  const Vector& final_state() const { return states.back(); }
};

/// Deterministic trajectory from x0. Both branch velocities are recorded at
/// every step whatever the mode. Throws NumericError naming the step on a
/// non-finite state.
///
///   observation_only: v = v_obs
///   standard:         v = (1 - a) v_obs + a v_obs (prior term conditioned on
///                     the observation, as a standard single-condition flow)
///   relaxflow:        v = (1 - a) v_obs + a v_prior, or the visibility blend
Trajectory integrate(const BranchPair& branches, const Schedule& schedule, const Vector& x0,
                     SamplingMode mode = SamplingMode::relaxflow);

/// Re-applies the recorded velocities from x_0; reproduces x_K bitwise.
Vector replay(const Trajectory& trajectory);

/// n standard-Gaussian initial states drawn from `seed` (row i is sample i).
Matrix standard_normal_draws(std::size_t n, std::size_t dim, std::uint64_t seed);

/// Integrates each initial state; rows of the result are final states in
/// sample order.
Matrix batch_sample(const BranchPair& branches, const Schedule& schedule, std::size_t n, std::size_t dim,
                    std::uint64_t seed, SamplingMode mode = SamplingMode::relaxflow);

/// Final states from explicit initial states (rows).
Matrix batch_integrate(const BranchPair& branches, const Schedule& schedule, const Matrix& initial,
                       SamplingMode mode = SamplingMode::relaxflow);

/// CSV columns: step,t,alpha,x0..,v_obs0..,v_prior0..,v0..
/// The final row holds x_K with empty velocity cells.
void write_trajectory_csv(const Trajectory& trajectory, std::ostream& out);

/// Relaxed prior provider: samples a field on a lattice at each schedule time,
/// applies relax_field, and interpolates multilinearly. Grids for the
/// schedule's times are precomputed; other times are computed on demand.
class RelaxedGridField {
 public:
  RelaxedGridField(VelocityFn source, std::size_t components, Lattice lattice, double sigma,
                   std::span<const double> times);

  Vector operator()(const Vector& x, double t) const;

  double sigma() const noexcept { return sigma_; }
  const Lattice& lattice() const noexcept { return lattice_; }
  /// Relaxed grid at t (precomputed or freshly built).
  GridField grid_at(double t) const;

  VelocityFn as_function() const;

 private:
  VelocityFn source_;
  std::size_t components_;
  Lattice lattice_;
  double sigma_;
  std::vector<double> times_;
  std::vector<GridField> grids_;
};

}  // namespace relaxflow
