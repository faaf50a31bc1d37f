#include "relaxflow/relaxation.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace relaxflow {

namespace {

// FFTW's planner is not reentrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class FftBuffer {
 public:
  explicit FftBuffer(std::size_t n)
      : in_(fftw_alloc_complex(n)), out_(fftw_alloc_complex(n)), n_(n) {
    if (!in_ || !out_) throw std::bad_alloc();
  }
  ~FftBuffer() {
    fftw_free(in_);
    fftw_free(out_);
  }
  FftBuffer(const FftBuffer&) = delete;
  FftBuffer& operator=(const FftBuffer&) = delete;

  fftw_complex* in() { return in_; }
  fftw_complex* out() { return out_; }
  std::size_t size() const { return n_; }

 private:
  fftw_complex* in_;
  fftw_complex* out_;
  std::size_t n_;
};

class FftPlan {
 public:
  FftPlan(const std::vector<int>& dims, FftBuffer& buf) {
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), buf.in(), buf.out(),
                          FFTW_FORWARD, FFTW_ESTIMATE);
    if (!plan_) throw std::runtime_error("fftw: plan creation failed");
  }
  ~FftPlan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

// Signed bin index -> frequency in cycles per unit length.
double bin_frequency(std::size_t m, std::size_t n, double h) {
  const double signed_m = m <= n / 2 ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(n);
  return signed_m / (static_cast<double>(n) * h);
}

}  // namespace

double GaussianKernel1D::gain(double omega) const {
  double g = 0.0;
  for (std::ptrdiff_t i = -radius(); i <= radius(); ++i) g += (*this)[i] * std::cos(omega * static_cast<double>(i));
  return g;
}

GaussianKernel1D make_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("make_kernel: sigma must be positive");
  const double r = std::ceil(3.0 * sigma);
  if (2.0 * r + 1.0 > static_cast<double>(kMaxKernelTaps))
    throw std::invalid_argument("make_kernel: sigma too large (tap cap exceeded)");
  const auto radius = static_cast<std::ptrdiff_t>(r);
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::ptrdiff_t i = 0; i <= radius; ++i) {
    const double w = std::exp(-static_cast<double>(i * i) * inv);
    taps[static_cast<std::size_t>(radius + i)] = w;
    taps[static_cast<std::size_t>(radius - i)] = w;
  }
  // Sum symmetric pairs so the normalization treats both halves identically.
  double sum = taps[static_cast<std::size_t>(radius)];
  for (std::ptrdiff_t i = radius; i >= 1; --i) sum += 2.0 * taps[static_cast<std::size_t>(radius + i)];
  for (auto& w : taps) w /= sum;
  return GaussianKernel1D(sigma, std::move(taps));
}

void convolve_renormalized(const double* in, double* out, std::size_t n, std::size_t stride,
                           const GaussianKernel1D& kernel) {
  const std::ptrdiff_t r = kernel.radius();
  const auto sn = static_cast<std::ptrdiff_t>(n);
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-r, -i);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(r, sn - 1 - i);
    double acc = 0.0, norm = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double w = kernel[j];
      acc += w * in[static_cast<std::size_t>(i + j) * stride];
      norm += w;
    }
    out[static_cast<std::size_t>(i) * stride] = (lo == -r && hi == r) ? acc : acc / norm;
  }
}

GridField relax_field(const GridField& field, double sigma) {
  if (sigma == 0.0) return field;
  if (!field.all_finite()) throw std::invalid_argument("relax_field: non-finite field");
  const GaussianKernel1D kernel = make_kernel(sigma);
  const Lattice& lat = field.lattice();
  const std::size_t comps = field.components();

  std::vector<double> cur(field.values().begin(), field.values().end());
  std::vector<double> next(cur.size());
  for (std::size_t axis = 0; axis < lat.dims(); ++axis) {
    const std::size_t n = lat.extents()[axis];
    const std::size_t stride = lat.stride(axis) * comps;
    // Every line along `axis` starts at a site whose axis index is zero.
    for (std::size_t s = 0; s < lat.size(); ++s) {
      if ((s / lat.stride(axis)) % n != 0) continue;
      for (std::size_t c = 0; c < comps; ++c) {
        const std::size_t start = s * comps + c;
        convolve_renormalized(cur.data() + start, next.data() + start, n, stride, kernel);
      }
    }
    cur.swap(next);
  }
  return GridField(lat, comps, field.time(), std::move(cur));
}

SpectralReport band_energy(const GridField& field, double eta, std::optional<double> sigma) {
  const Lattice& lat = field.lattice();
  if (!(eta > 0.0) || eta > lat.nyquist() * (1.0 + 1e-12))
    throw std::invalid_argument("band_energy: eta must lie in (0, Nyquist]");

  const std::size_t n = lat.size();
  const std::size_t d = lat.dims();
  std::vector<int> dims(lat.extents().begin(), lat.extents().end());

  // Radial frequency and (optionally) separable kernel gain per bin.
  std::vector<double> radial(n);
  std::vector<double> gain2;
  std::optional<GaussianKernel1D> kernel;
  if (sigma && *sigma > 0.0) kernel = make_kernel(*sigma);
  if (sigma) gain2.assign(n, 1.0);
  for (std::size_t s = 0; s < n; ++s) {
    const auto idx = lat.unflatten(s);
    double r2 = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      const double f = bin_frequency(idx[a], lat.extents()[a], lat.spacing()[a]);
      r2 += f * f;
      if (kernel) {
        const double g = kernel->gain(2.0 * std::numbers::pi * f * lat.spacing()[a]);
        gain2[s] *= g * g;
      }
    }
    radial[s] = std::sqrt(r2);
  }

  SpectralReport report;
  report.cutoff = eta;
  FftBuffer buf(n);
  FftPlan plan(dims, buf);
  for (std::size_t c = 0; c < field.components(); ++c) {
    for (std::size_t s = 0; s < n; ++s) {
      const double v = field.at(s, c);
      buf.in()[s][0] = v;
      buf.in()[s][1] = 0.0;
      report.total_energy += v * v;
    }
    plan.execute();
    for (std::size_t s = 0; s < n; ++s) {
      const double e = (buf.out()[s][0] * buf.out()[s][0] + buf.out()[s][1] * buf.out()[s][1]) /
                       static_cast<double>(n);
      if (radial[s] > eta)
        report.high_energy += e;
      else
        report.low_energy += e;
    }
  }

  if (sigma) {
    double low_min = 1.0, high_max = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      if (radial[s] > eta)
        high_max = std::max(high_max, gain2[s]);
      else
        low_min = std::min(low_min, gain2[s]);
    }
    report.low_band_min_gain = low_min;
    report.high_band_max_gain = high_max;
    if (*sigma > 0.0 && lat.extents()[0] >= kernel->size())
      report.gain_profile = attenuation_profile(*sigma, lat.extents()[0]);
  }
  return report;
}

std::vector<double> attenuation_profile(double sigma, std::size_t extent) {
  const GaussianKernel1D kernel = make_kernel(sigma);
  if (extent < kernel.size()) throw std::invalid_argument("attenuation_profile: extent shorter than kernel");
  FftBuffer buf(extent);
  for (std::size_t i = 0; i < extent; ++i) buf.in()[i][0] = buf.in()[i][1] = 0.0;
  // Centre tap at index 0, negative offsets wrapped to the end; the squared
  // magnitude does not depend on the shift.
  for (std::ptrdiff_t j = -kernel.radius(); j <= kernel.radius(); ++j) {
    const auto idx = static_cast<std::size_t>((j + static_cast<std::ptrdiff_t>(extent)) % static_cast<std::ptrdiff_t>(extent));
    buf.in()[idx][0] = kernel[j];
  }
  FftPlan plan({static_cast<int>(extent)}, buf);
  plan.execute();
  std::vector<double> gains(extent / 2 + 1);
  for (std::size_t m = 0; m < gains.size(); ++m)
    gains[m] = buf.out()[m][0] * buf.out()[m][0] + buf.out()[m][1] * buf.out()[m][1];
  return gains;
}

double estimate_lipschitz(const GridField& field) {
  const Lattice& lat = field.lattice();
  for (auto e : lat.extents())
    if (e < 2) throw std::invalid_argument("estimate_lipschitz: extents must be >= 2");
  const std::size_t comps = field.components();
  double best = 0.0;
  for (std::size_t s = 0; s < lat.size(); ++s) {
    for (std::size_t a = 0; a < lat.dims(); ++a) {
      if ((s / lat.stride(a)) % lat.extents()[a] + 1 >= lat.extents()[a]) continue;
      const std::size_t nb = s + lat.stride(a);
      double d2 = 0.0;
      for (std::size_t c = 0; c < comps; ++c) {
        const double diff = field.at(nb, c) - field.at(s, c);
        d2 += diff * diff;
      }
      best = std::max(best, std::sqrt(d2) / lat.spacing()[a]);
    }
  }
  return best;
}

}  // namespace relaxflow
