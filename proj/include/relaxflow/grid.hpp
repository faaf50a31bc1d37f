#pragma once

#include "relaxflow/types.hpp"

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace relaxflow {

/// Regular D-dimensional lattice (D in {1,2,3}). Sites are ordered row-major:
/// the last axis varies fastest.
class Lattice {
 public:
  Lattice() = default;
  Lattice(std::vector<std::size_t> extents, std::vector<double> spacing,
          std::vector<double> origin = {});

  /// Uniform lattice covering [lo, hi] on every axis with `extent` sites.
  static Lattice cube(std::size_t dims, std::size_t extent, double lo, double hi);

  std::size_t dims() const noexcept { return extents_.size(); }
  std::size_t size() const noexcept { return size_; }
  const std::vector<std::size_t>& extents() const noexcept { return extents_; }
  const std::vector<double>& spacing() const noexcept { return spacing_; }
  const std::vector<double>& origin() const noexcept { return origin_; }

  /// Row-major stride of an axis.
  std::size_t stride(std::size_t axis) const noexcept { return strides_[axis]; }

  std::vector<std::size_t> unflatten(std::size_t flat) const;
  std::size_t flatten(std::span<const std::size_t> index) const;

  /// Physical coordinate of a site.
  Vector coordinate(std::size_t flat) const;

  /// Smallest per-axis Nyquist frequency, in cycles per unit length.
  double nyquist() const;

  friend bool operator==(const Lattice&, const Lattice&) = default;

 private:
  std::vector<std::size_t> extents_;
  std::vector<double> spacing_;
  std::vector<double> origin_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

/// Velocity field sampled on a lattice at a fixed time. Values are stored
/// site-major, component-fastest.
class GridField {
 public:
  GridField() = default;
  GridField(Lattice lattice, std::size_t components, double time);
  GridField(Lattice lattice, std::size_t components, double time, std::vector<double> values);

  const Lattice& lattice() const noexcept { return lattice_; }
  std::size_t components() const noexcept { return components_; }
  double time() const noexcept { return time_; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double& at(std::size_t site, std::size_t component) {
    return values_[site * components_ + component];
  }
  double at(std::size_t site, std::size_t component) const {
    return values_[site * components_ + component];
  }

  Vector site_value(std::size_t site) const;
  void set_site_value(std::size_t site, const Vector& v);

  /// Multilinear interpolation at a physical point. Points outside the
  /// lattice are clamped to the boundary.
  Vector interpolate(const Vector& x) const;

  /// Squared L2 norm summed over all sites and components.
  double squared_norm() const;

  bool all_finite() const;

 private:
  Lattice lattice_;
  std::size_t components_ = 0;
  double time_ = 0.0;
  std::vector<double> values_;
};

/// a*f + b*g on identical lattices.
GridField axpby(double a, const GridField& f, double b, const GridField& g);

/// Root of the summed squared difference between two fields.
double l2_distance(const GridField& f, const GridField& g);

/// Binary layout (little-endian):
///   "RFGF" magic, u32 version=1, u32 dims, u32 components,
///   u64 extents[dims], f64 spacing[dims], f64 origin[dims], f64 t,
///   f64 values[sites*components] (row-major sites, component fastest).
void write_grid_binary(const GridField& field, std::ostream& out);
GridField read_grid_binary(std::istream& in);
void save_grid_binary(const GridField& field, const std::filesystem::path& path);
GridField load_grid_binary(const std::filesystem::path& path);

/// CSV: header "i0[,i1[,i2]],x0[,x1[,x2]],v0,...", one row per site.
void write_grid_csv(const GridField& field, std::ostream& out);

}  // namespace relaxflow
