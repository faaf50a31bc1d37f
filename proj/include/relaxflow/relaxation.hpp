#pragma once

// Gaussian low-pass relaxation of grid-sampled velocity fields and the
// spectral / Lipschitz diagnostics used to check it.

#include "relaxflow/grid.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace relaxflow {

/// Largest number of taps make_kernel will produce.
inline constexpr std::size_t kMaxKernelTaps = 100000;

/// Discrete Gaussian exp(-i^2 / (2 sigma^2)) over i in [-ceil(3 sigma), ceil(3 sigma)],
/// normalized to sum to one.
class GaussianKernel1D {
 public:
  GaussianKernel1D(double sigma, std::vector<double> taps) : sigma_(sigma), taps_(std::move(taps)) {}

  double sigma() const noexcept { return sigma_; }
  std::span<const double> taps() const noexcept { return taps_; }
  std::size_t size() const noexcept { return taps_.size(); }
  std::ptrdiff_t radius() const noexcept { return static_cast<std::ptrdiff_t>(taps_.size() / 2); }

  /// Tap at signed offset i in [-radius, radius].
  double operator[](std::ptrdiff_t i) const { return taps_[static_cast<std::size_t>(i + radius())]; }

  /// Real DFT gain sum_j w_j cos(omega j) at angular frequency omega (radians per tap).
  double gain(double omega) const;

 private:
  double sigma_;
  std::vector<double> taps_;
};

/// Throws std::invalid_argument for sigma <= 0 or when the tap count would
/// exceed kMaxKernelTaps.
GaussianKernel1D make_kernel(double sigma);

/// 1D convolution of n samples spaced `stride` apart. Taps falling outside
/// [0, n) are dropped and the remaining weights renormalized, so constants
/// are preserved exactly up to rounding.
void convolve_renormalized(const double* in, double* out, std::size_t n, std::size_t stride,
                           const GaussianKernel1D& kernel);

/// Separable Gaussian convolution of every component along every lattice
/// axis (sigma in lattice sites), boundary-renormalized. sigma == 0 returns
/// the field unchanged.
GridField relax_field(const GridField& field, double sigma);

struct SpectralReport {
  double cutoff = 0.0;
  double low_energy = 0.0;
  double high_energy = 0.0;
  double total_energy = 0.0;  // sum of squared samples, for the Parseval check

  /// Filled when a kernel sigma is supplied: squared gain of the separable
  /// kernel, minimum over low-band bins and maximum over high-band bins.
  std::optional<double> low_band_min_gain;
  std::optional<double> high_band_max_gain;
  /// Squared 1D gain from DC to Nyquist along axis 0.
  std::vector<double> gain_profile;

  double high_fraction() const { return (low_energy + high_energy) > 0.0 ? high_energy / (low_energy + high_energy) : 0.0; }
};

/// DFT of every component; a bin is high-band iff its radial frequency
/// (cycles per unit length) exceeds eta. eta must lie in (0, Nyquist].
SpectralReport band_energy(const GridField& field, double eta, std::optional<double> sigma = std::nullopt);

/// Squared-magnitude DFT of the kernel zero-padded to `extent` samples, for
/// bins 0..extent/2. Requires extent >= kernel length. Non-increasing (to
/// 1e-9) for sigma <= 1; wider kernels keep the +-3 sigma truncation
/// sidelobes, which ripple at up to ~1e-6 near Nyquist.
std::vector<double> attenuation_profile(double sigma, std::size_t extent);

/// Max over adjacent lattice pairs of |v(a) - v(b)| / |a - b|. A lower bound
/// on the field's Lipschitz constant.
double estimate_lipschitz(const GridField& field);

}  // namespace relaxflow
