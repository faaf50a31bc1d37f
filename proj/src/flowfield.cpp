#include "relaxflow/flowfield.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace relaxflow {

namespace {

void check_time(double t, const char* who) {
  if (!std::isfinite(t) || t < 0.0) throw std::invalid_argument(std::string(who) + ": t must be in [0, 1)");
  if (t >= 1.0) throw std::invalid_argument(std::string(who) + ": t >= 1 (interpolant variance degenerates)");
}

Vector standard_normal(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v;
}

}  // namespace

GaussianMixture::GaussianMixture(std::vector<MixtureComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("GaussianMixture: no components");
  dimension_ = static_cast<std::size_t>(components_.front().mean.size());
  if (dimension_ == 0) throw std::invalid_argument("GaussianMixture: zero-dimensional mean");
  double total = 0.0;
  for (const auto& c : components_) {
    if (static_cast<std::size_t>(c.mean.size()) != dimension_)
      throw std::invalid_argument("GaussianMixture: component dimensions differ");
    if (!(c.weight > 0.0) || !std::isfinite(c.weight))
      throw std::invalid_argument("GaussianMixture: weights must be strictly positive");
    if (!(c.std > 0.0) || !std::isfinite(c.std))
      throw std::invalid_argument("GaussianMixture: stds must be strictly positive");
    if (!c.mean.allFinite()) throw std::invalid_argument("GaussianMixture: non-finite mean");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("GaussianMixture: weights must sum to 1");
}

GaussianMixture GaussianMixture::single(Vector mean, double std) {
  return GaussianMixture({MixtureComponent{1.0, std::move(mean), std}});
}

Vector GaussianMixture::sample(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  std::size_t j = 0;
  double acc = components_[0].weight;
  while (u > acc && j + 1 < components_.size()) acc += components_[++j].weight;
  const auto& c = components_[j];
  return c.mean + c.std * standard_normal(rng, dimension_);
}

double GaussianMixture::marginal_std(double t) const {
  // Per-axis variance of (1-t) x0 + t x1, averaged over axes.
  const double d = static_cast<double>(dimension_);
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(dimension_));
  double second = 0.0;
  for (const auto& c : components_) {
    mean += c.weight * c.mean;
    second += c.weight * (c.std * c.std + c.mean.squaredNorm() / d);
  }
  const double var_x1 = second - mean.squaredNorm() / d;
  return std::sqrt((1.0 - t) * (1.0 - t) + t * t * var_x1);
}

GaussianMixture mixture_from_json(const nlohmann::json& j) {
  const auto dim = j.at("dimension").get<std::size_t>();
  std::vector<MixtureComponent> comps;
  for (const auto& c : j.at("components")) {
    const auto mean = c.at("mean").get<std::vector<double>>();
    if (mean.size() != dim) throw std::invalid_argument("mixture json: mean length != dimension");
    comps.push_back({c.at("weight").get<double>(),
                     Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                     c.at("std").get<double>()});
  }
  return GaussianMixture(std::move(comps));
}

nlohmann::json mixture_to_json(const GaussianMixture& m) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : m.components()) {
    comps.push_back({{"weight", c.weight},
                     {"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                     {"std", c.std}});
  }
  return {{"dimension", m.dimension()}, {"components", comps}};
}

GaussianMixture load_mixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return mixture_from_json(nlohmann::json::parse(in));
}

Vector oracle_velocity(const GaussianMixture& mixture, const Vector& x, double t) {
  if (mixture.empty()) throw std::invalid_argument("oracle_velocity: empty mixture");
  check_time(t, "oracle_velocity");
  if (static_cast<std::size_t>(x.size()) != mixture.dimension())
    throw std::invalid_argument("oracle_velocity: dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument("oracle_velocity: non-finite state");

  const auto& comps = mixture.components();
  const double d = static_cast<double>(mixture.dimension());
  const double s = 1.0 - t;

  // Component j: x_t ~ N(t mu_j, var_j I) with var_j = (1-t)^2 + t^2 sigma_j^2,
  // and Cov(x1 - x0, x_t) = t sigma_j^2 - (1-t) per axis.
  std::vector<double> log_r(comps.size());
  std::vector<Vector> cond(comps.size());
  for (std::size_t j = 0; j < comps.size(); ++j) {
    const auto& c = comps[j];
    const double var = s * s + t * t * c.std * c.std;
    const Vector centered = x - t * c.mean;
    log_r[j] = std::log(c.weight) - 0.5 * d * std::log(var) - 0.5 * centered.squaredNorm() / var;
    cond[j] = c.mean + ((t * c.std * c.std - s) / var) * centered;
  }
  const double top = *std::max_element(log_r.begin(), log_r.end());
  double norm = 0.0;
  Vector v = Vector::Zero(x.size());
  for (std::size_t j = 0; j < comps.size(); ++j) {
    const double r = std::exp(log_r[j] - top);
    norm += r;
    v += r * cond[j];
  }
  return v / norm;
}

VelocityFn AnalyticFlowField::as_function() const {
  return [target = target_](const Vector& x, double t) { return oracle_velocity(target, x, t); };
}

double default_bandwidth(const GaussianMixture& mixture, double t) {
  return 0.1 * mixture.marginal_std(t);
}

MonteCarloEstimate monte_carlo_velocity(const GaussianMixture& mixture, const Vector& x, double t,
                                        std::size_t n, double bandwidth, std::uint64_t seed) {
  if (mixture.empty()) throw std::invalid_argument("monte_carlo_velocity: empty mixture");
  if (n < 10000) throw std::invalid_argument("monte_carlo_velocity: n must be >= 1e4");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("monte_carlo_velocity: bandwidth must be positive");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("monte_carlo_velocity: t outside [0, 1]");
  const auto d = static_cast<Eigen::Index>(mixture.dimension());
  if (x.size() != d) throw std::invalid_argument("monte_carlo_velocity: dimension mismatch");

  std::mt19937_64 rng(seed);
  const double inv_h2 = 1.0 / (bandwidth * bandwidth);
  const Eigen::Index p = d + 1;

  // Keep only draws that land within ~9 bandwidths; farther weights underflow
  // relative to the kernel peak.
  std::vector<double> weights;
  std::vector<Vector> offsets, targets;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector x0 = standard_normal(rng, mixture.dimension());
    const Vector x1 = mixture.sample(rng);
    const Vector off = (1.0 - t) * x0 + t * x1 - x;
    const double q = off.squaredNorm() * inv_h2;
    if (q > 81.0) continue;
    weights.push_back(std::exp(-0.5 * q));
    offsets.push_back(off);
    targets.push_back(x1 - x0);
  }

  double sum_w = 0.0, sum_w2 = 0.0;
  for (double w : weights) {
    sum_w += w;
    sum_w2 += w * w;
  }
  const double ess = sum_w > 0.0 ? sum_w * sum_w / sum_w2 : 0.0;
  if (ess < kMinEffectiveSamples)
    throw NumericError("flowfield", "monte_carlo_velocity",
                       "effective sample size " + std::to_string(ess) + " below floor");

  Matrix gram = Matrix::Zero(p, p);
  Matrix cross = Matrix::Zero(p, d);
  Vector z(p);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    z[0] = 1.0;
    z.tail(d) = offsets[i];
    gram.noalias() += weights[i] * z * z.transpose();
    cross.noalias() += weights[i] * z * targets[i].transpose();
  }
  const Eigen::LDLT<Matrix> solver(gram);
  const Matrix beta = solver.solve(cross);
  const Matrix gram_inv = solver.solve(Matrix::Identity(p, p));

  // Sandwich variance of the intercept, per output component.
  Vector variance = Vector::Zero(d);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    z[0] = 1.0;
    z.tail(d) = offsets[i];
    const Vector resid = targets[i] - beta.transpose() * z;
    const double lever = weights[i] * gram_inv.row(0).dot(z);
    variance += (lever * lever) * resid.cwiseProduct(resid);
  }

  MonteCarloEstimate est;
  est.velocity = beta.row(0).transpose();
  est.standard_error = variance.cwiseSqrt();
  est.effective_samples = ess;
  return est;
}

namespace {

// DFT bins of a lattice with every axis index strictly inside (-N/2, N/2).
// Returns frequencies (cycles per unit length) whose radial norm is strictly
// above (Band::above) or strictly below (Band::below, DC excluded) a cutoff.
std::vector<Vector> lattice_bins(const Lattice& lattice, double cutoff, Band band) {
  const std::size_t d = lattice.dims();
  std::vector<long> m(d), hi(d);
  for (std::size_t a = 0; a < d; ++a) {
    hi[a] = (static_cast<long>(lattice.extents()[a]) - 1) / 2;
    m[a] = -hi[a];
  }
  std::vector<Vector> bins;
  bool more = true;
  while (more) {
    Vector f(static_cast<Eigen::Index>(d));
    bool dc = true;
    for (std::size_t a = 0; a < d; ++a) {
      f[static_cast<Eigen::Index>(a)] =
          static_cast<double>(m[a]) / (static_cast<double>(lattice.extents()[a]) * lattice.spacing()[a]);
      dc = dc && m[a] == 0;
    }
    const double r = f.norm();
    if (band == Band::above ? r > cutoff * (1.0 + 1e-12) : (!dc && r < cutoff * (1.0 - 1e-12)))
      bins.push_back(f);
    more = false;
    for (std::size_t a = d; a-- > 0;) {
      if (++m[a] <= hi[a]) {
        more = true;
        break;
      }
      m[a] = -hi[a];
    }
  }
  return bins;
}

}  // namespace

BandNoise::BandNoise(Lattice verification, std::size_t components, double cutoff, double amplitude,
                     std::uint64_t seed, std::size_t waves_per_component, Band band)
    : lattice_(std::move(verification)),
      components_(components),
      cutoff_(cutoff),
      amplitude_(amplitude),
      seed_(seed),
      band_(band) {
  if (components_ == 0) throw std::invalid_argument("BandNoise: components must be positive");
  if (waves_per_component == 0) throw std::invalid_argument("BandNoise: need at least one wave");
  if (!(cutoff_ > 0.0)) throw std::invalid_argument("BandNoise: cutoff must be positive");
  if (band_ == Band::above && cutoff_ >= lattice_.nyquist())
    throw std::invalid_argument("BandNoise: cutoff must lie below the verification Nyquist frequency");
  if (!std::isfinite(amplitude_)) throw std::invalid_argument("BandNoise: non-finite amplitude");

  const std::vector<Vector> bins = lattice_bins(lattice_, cutoff_, band_);
  if (bins.empty()) throw std::invalid_argument("BandNoise: no lattice frequency in the requested band");

  std::mt19937_64 rng(seed_);
  std::uniform_int_distribution<std::size_t> pick(0, bins.size() - 1);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double coeff = amplitude_ * std::sqrt(2.0 / static_cast<double>(waves_per_component));
  for (std::size_t c = 0; c < components_; ++c) {
    for (std::size_t w = 0; w < waves_per_component; ++w) {
      const std::size_t b = pick(rng);
      waves_.push_back({c, bins[b], phase(rng), coeff});
    }
  }
}

Vector BandNoise::evaluate(const Vector& x) const {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(components_));
  if (amplitude_ == 0.0) return out;
  const auto d = static_cast<Eigen::Index>(lattice_.dims());
  if (x.size() != d) throw std::invalid_argument("BandNoise: point dimension mismatch");
  Vector rel(d);
  for (Eigen::Index a = 0; a < d; ++a) rel[a] = x[a] - lattice_.origin()[static_cast<std::size_t>(a)];
  for (const auto& w : waves_) {
    out[static_cast<Eigen::Index>(w.component)] +=
        w.coefficient * std::sin(2.0 * std::numbers::pi * w.frequency.dot(rel) + w.phase);
  }
  return out;
}

BandNoise make_low_band_signal(const Lattice& lattice, std::size_t components, double cutoff,
                               double amplitude, std::uint64_t seed, std::size_t waves_per_component) {
  return BandNoise(lattice, components, cutoff, amplitude, seed, waves_per_component, Band::below);
}

PerturbedField::PerturbedField(FieldBase base, BandNoise noise)
    : base_(std::move(base)), noise_(std::move(noise)) {
  if (noise_.components() != components())
    throw std::invalid_argument("PerturbedField: noise components do not match the field");
  if (noise_.verification_lattice().dims() != dimension())
    throw std::invalid_argument("PerturbedField: noise lattice dimension does not match the field");
}

std::size_t PerturbedField::dimension() const {
  return std::visit(
      [](const auto& b) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(b)>, GridField>)
          return b.lattice().dims();
        else
          return b.dimension();
      },
      base_);
}

std::size_t PerturbedField::components() const {
  return std::visit(
      [](const auto& b) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(b)>, GridField>)
          return b.components();
        else
          return b.dimension();
      },
      base_);
}

Vector PerturbedField::velocity(const Vector& x, double t) const {
  check_time(t, "PerturbedField::velocity");
  Vector v = std::visit(
      [&](const auto& b) -> Vector {
        if constexpr (std::is_same_v<std::decay_t<decltype(b)>, GridField>)
          return b.interpolate(x);
        else
          return b.velocity(x, t);
      },
      base_);
  if (noise_.amplitude() != 0.0) v += noise_.evaluate(x);
  return v;
}

VelocityFn PerturbedField::as_function() const {
  return [self = *this](const Vector& x, double t) { return self.velocity(x, t); };
}

PerturbedField inject_band_noise(FieldBase field, const Lattice& verification, double cutoff,
                                 double amplitude, std::uint64_t seed) {
  const std::size_t comps = std::visit(
      [](const auto& b) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(b)>, GridField>)
          return b.components();
        else
          return b.dimension();
      },
      field);
  BandNoise noise(verification, comps, cutoff, amplitude, seed);
  return PerturbedField(std::move(field), std::move(noise));
}

namespace {

void check_sampling_lattice(const Lattice& lattice, double t) {
  check_time(t, "sample_on_grid");
  for (auto e : lattice.extents())
    if (e < 4) throw std::invalid_argument("sample_on_grid: lattice extents must be >= 4");
}

}  // namespace

GridField sample_on_grid(const VelocityFn& field, std::size_t components, const Lattice& lattice,
                         double t) {
  check_sampling_lattice(lattice, t);
  GridField out(lattice, components, t);
  for (std::size_t s = 0; s < lattice.size(); ++s) {
    const Vector v = field(lattice.coordinate(s), t);
    if (static_cast<std::size_t>(v.size()) != components)
      throw std::invalid_argument("sample_on_grid: field returned wrong component count");
    if (!v.allFinite()) throw NumericError("flowfield", "sample_on_grid", "non-finite velocity");
    out.set_site_value(s, v);
  }
  return out;
}

GridField sample_on_grid(const AnalyticFlowField& field, const Lattice& lattice, double t) {
  if (lattice.dims() != field.dimension())
    throw std::invalid_argument("sample_on_grid: lattice dimension does not match field");
  return sample_on_grid([&](const Vector& x, double tt) { return field.velocity(x, tt); },
                        field.dimension(), lattice, t);
}

GridField sample_on_grid(const PerturbedField& field, const Lattice& lattice, double t) {
  if (lattice.dims() != field.dimension())
    throw std::invalid_argument("sample_on_grid: lattice dimension does not match field");
  return sample_on_grid([&](const Vector& x, double tt) { return field.velocity(x, tt); },
                        field.components(), lattice, t);
}

}  // namespace relaxflow
