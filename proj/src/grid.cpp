#include "relaxflow/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace relaxflow {

namespace {

constexpr char kMagic[4] = {'R', 'F', 'G', 'F'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "grid binary I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("grid binary: truncated input");
  return value;
}

}  // namespace

Lattice::Lattice(std::vector<std::size_t> extents, std::vector<double> spacing,
                 std::vector<double> origin)
    : extents_(std::move(extents)), spacing_(std::move(spacing)), origin_(std::move(origin)) {
  const std::size_t d = extents_.size();
  if (d < 1 || d > 3) throw std::invalid_argument("Lattice: dimension must be 1, 2 or 3");
  if (spacing_.size() != d) throw std::invalid_argument("Lattice: spacing size mismatch");
  if (origin_.empty()) origin_.assign(d, 0.0);
  if (origin_.size() != d) throw std::invalid_argument("Lattice: origin size mismatch");
  for (std::size_t a = 0; a < d; ++a) {
    if (extents_[a] == 0) throw std::invalid_argument("Lattice: extents must be positive");
    if (!(spacing_[a] > 0.0) || !std::isfinite(spacing_[a]))
      throw std::invalid_argument("Lattice: spacing must be positive and finite");
    if (!std::isfinite(origin_[a])) throw std::invalid_argument("Lattice: origin must be finite");
  }
  strides_.assign(d, 1);
  for (std::size_t a = d - 1; a > 0; --a) strides_[a - 1] = strides_[a] * extents_[a];
  size_ = strides_[0] * extents_[0];
}

Lattice Lattice::cube(std::size_t dims, std::size_t extent, double lo, double hi) {
  if (extent < 2 || !(hi > lo)) throw std::invalid_argument("Lattice::cube: need extent >= 2 and hi > lo");
  const double h = (hi - lo) / static_cast<double>(extent - 1);
  return Lattice(std::vector<std::size_t>(dims, extent), std::vector<double>(dims, h),
                 std::vector<double>(dims, lo));
}

std::vector<std::size_t> Lattice::unflatten(std::size_t flat) const {
  std::vector<std::size_t> index(dims());
  for (std::size_t a = 0; a < dims(); ++a) {
    index[a] = flat / strides_[a];
    flat %= strides_[a];
  }
  return index;
}

std::size_t Lattice::flatten(std::span<const std::size_t> index) const {
  std::size_t flat = 0;
  for (std::size_t a = 0; a < dims(); ++a) flat += index[a] * strides_[a];
  return flat;
}

Vector Lattice::coordinate(std::size_t flat) const {
  Vector x(static_cast<Eigen::Index>(dims()));
  for (std::size_t a = 0; a < dims(); ++a) {
    const std::size_t i = (flat / strides_[a]) % extents_[a];
    x[static_cast<Eigen::Index>(a)] = origin_[a] + static_cast<double>(i) * spacing_[a];
  }
  return x;
}

double Lattice::nyquist() const {
  double h = *std::max_element(spacing_.begin(), spacing_.end());
  return 0.5 / h;
}

GridField::GridField(Lattice lattice, std::size_t components, double time)
    : lattice_(std::move(lattice)), components_(components), time_(time) {
  if (components_ == 0) throw std::invalid_argument("GridField: components must be positive");
  values_.assign(lattice_.size() * components_, 0.0);
}

GridField::GridField(Lattice lattice, std::size_t components, double time, std::vector<double> values)
    : lattice_(std::move(lattice)), components_(components), time_(time), values_(std::move(values)) {
  if (components_ == 0) throw std::invalid_argument("GridField: components must be positive");
  if (values_.size() != lattice_.size() * components_)
    throw std::invalid_argument("GridField: value count does not match lattice");
  if (!all_finite()) throw std::invalid_argument("GridField: non-finite value");
}

Vector GridField::site_value(std::size_t site) const {
  Vector v(static_cast<Eigen::Index>(components_));
  for (std::size_t c = 0; c < components_; ++c) v[static_cast<Eigen::Index>(c)] = at(site, c);
  return v;
}

void GridField::set_site_value(std::size_t site, const Vector& v) {
  if (static_cast<std::size_t>(v.size()) != components_)
    throw std::invalid_argument("GridField: component count mismatch");
  for (std::size_t c = 0; c < components_; ++c) at(site, c) = v[static_cast<Eigen::Index>(c)];
}

Vector GridField::interpolate(const Vector& x) const {
  const std::size_t d = lattice_.dims();
  if (static_cast<std::size_t>(x.size()) != d)
    throw std::invalid_argument("GridField::interpolate: point dimension mismatch");

  std::size_t base[3] = {0, 0, 0};
  double frac[3] = {0.0, 0.0, 0.0};
  for (std::size_t a = 0; a < d; ++a) {
    const std::size_t n = lattice_.extents()[a];
    double u = (x[static_cast<Eigen::Index>(a)] - lattice_.origin()[a]) / lattice_.spacing()[a];
    u = std::clamp(u, 0.0, static_cast<double>(n - 1));
    const double nearest = std::round(u);
    if (std::abs(u - nearest) < 1e-9) u = nearest;
    auto i = static_cast<std::size_t>(std::floor(u));
    if (i >= n - 1) i = n > 1 ? n - 2 : 0;
    base[a] = i;
    frac[a] = n > 1 ? u - static_cast<double>(i) : 0.0;
  }

  Vector out = Vector::Zero(static_cast<Eigen::Index>(components_));
  const std::size_t corners = std::size_t{1} << d;
  for (std::size_t corner = 0; corner < corners; ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (std::size_t a = 0; a < d; ++a) {
      const bool upper = (corner >> a) & 1U;
      const std::size_t n = lattice_.extents()[a];
      std::size_t i = base[a] + (upper ? 1 : 0);
      if (i >= n) i = n - 1;
      w *= upper ? frac[a] : 1.0 - frac[a];
      flat += i * lattice_.stride(a);
    }
    if (w == 0.0) continue;
    for (std::size_t c = 0; c < components_; ++c)
      out[static_cast<Eigen::Index>(c)] += w * at(flat, c);
  }
  return out;
}

double GridField::squared_norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return s;
}

bool GridField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

GridField axpby(double a, const GridField& f, double b, const GridField& g) {
  if (!(f.lattice() == g.lattice()) || f.components() != g.components())
    throw std::invalid_argument("axpby: lattice mismatch");
  GridField out(f.lattice(), f.components(), f.time());
  auto fv = f.values();
  auto gv = g.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = a * fv[i] + b * gv[i];
  return out;
}

double l2_distance(const GridField& f, const GridField& g) {
  if (!(f.lattice() == g.lattice()) || f.components() != g.components())
    throw std::invalid_argument("l2_distance: lattice mismatch");
  double s = 0.0;
  auto fv = f.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < fv.size(); ++i) {
    const double d = fv[i] - gv[i];
    s += d * d;
  }
  return std::sqrt(s);
}

void write_grid_binary(const GridField& field, std::ostream& out) {
  const Lattice& lat = field.lattice();
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(lat.dims()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(field.components()));
  for (auto e : lat.extents()) put<std::uint64_t>(out, e);
  for (auto h : lat.spacing()) put<double>(out, h);
  for (auto o : lat.origin()) put<double>(out, o);
  put<double>(out, field.time());
  auto values = field.values();
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

GridField read_grid_binary(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("grid binary: bad magic");
  if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("grid binary: unsupported version");
  const auto dims = get<std::uint32_t>(in);
  const auto components = get<std::uint32_t>(in);
  if (dims < 1 || dims > 3) throw std::runtime_error("grid binary: bad dimension");
  std::vector<std::size_t> extents(dims);
  std::vector<double> spacing(dims), origin(dims);
  for (auto& e : extents) e = get<std::uint64_t>(in);
  for (auto& h : spacing) h = get<double>(in);
  for (auto& o : origin) o = get<double>(in);
  const double t = get<double>(in);
  Lattice lattice(extents, spacing, origin);
  std::vector<double> values(lattice.size() * components);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) throw std::runtime_error("grid binary: truncated values");
  return GridField(std::move(lattice), components, t, std::move(values));
}

void save_grid_binary(const GridField& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  write_grid_binary(field, out);
}

GridField load_grid_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_grid_binary(in);
}

void write_grid_csv(const GridField& field, std::ostream& out) {
  const Lattice& lat = field.lattice();
  const std::size_t d = lat.dims();
  for (std::size_t a = 0; a < d; ++a) out << 'i' << a << ',';
  for (std::size_t a = 0; a < d; ++a) out << 'x' << a << ',';
  for (std::size_t c = 0; c < field.components(); ++c)
    out << 'v' << c << (c + 1 < field.components() ? ',' : '\n');
  out << std::setprecision(17);
  for (std::size_t s = 0; s < lat.size(); ++s) {
    const auto idx = lat.unflatten(s);
    const Vector x = lat.coordinate(s);
    for (auto i : idx) out << i << ',';
    for (std::size_t a = 0; a < d; ++a) out << x[static_cast<Eigen::Index>(a)] << ',';
    for (std::size_t c = 0; c < field.components(); ++c)
      out << field.at(s, c) << (c + 1 < field.components() ? ',' : '\n');
  }
}

}  // namespace relaxflow
