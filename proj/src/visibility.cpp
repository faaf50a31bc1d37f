#include "relaxflow/visibility.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace relaxflow {

void Camera::validate() const {
  const Eigen::Matrix3d rtr = rotation.transpose() * rotation;
  if ((rtr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("Camera: rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw std::invalid_argument("Camera: rotation determinant must be +1");
  if ((scale.array() <= 0.0).any()) throw std::invalid_argument("Camera: scale must be positive");
  if (!(translation.z() > 0.0)) throw std::invalid_argument("Camera: t_z must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("Camera: resolution must be positive");
  if (!(intrinsics.fx > 0.0 && intrinsics.fy > 0.0))
    throw std::invalid_argument("Camera: focal lengths must be positive");
}

void VoxelGrid::validate() const {
  if (resolution <= 0) throw std::invalid_argument("VoxelGrid: resolution must be positive");
  for (const auto& c : occupied)
    for (int a : c)
      if (a < 0 || a >= resolution) throw std::invalid_argument("VoxelGrid: voxel index out of bounds");
}

double voxel_size(const VoxelGrid& grid, const Camera& camera) {
  return camera.scale.maxCoeff() / static_cast<double>(grid.resolution);
}

std::size_t DepthMap::filled() const {
  return static_cast<std::size_t>(std::count_if(depth_.begin(), depth_.end(), [](double d) { return d != kEmpty; }));
}

Eigen::Vector3d voxel_to_camera(const VoxelIndex& index, const Camera& camera, int resolution) {
  for (int a : index)
    if (a < 0 || a >= resolution) throw std::out_of_range("voxel_to_camera: index out of bounds");
  const Eigen::Vector3d c(index[0], index[1], index[2]);
  return camera.scale.cwiseProduct(camera.rotation * c) + camera.translation;
}

Eigen::Vector2d project(const Eigen::Vector3d& point, const Camera& camera) {
  if (!(point.z() > 0.0)) throw std::invalid_argument("project: point is not in front of the camera");
  const auto& k = camera.intrinsics;
  return {k.cx - k.fx * point.x() / point.z(), k.cy - k.fy * point.y() / point.z()};
}

std::array<int, 2> pixel_of(const Eigen::Vector2d& uv) {
  const double lim = static_cast<double>(std::numeric_limits<int>::max() / 2);
  return {static_cast<int>(std::clamp(std::round(uv.x()), -lim, lim)),
          static_cast<int>(std::clamp(std::round(uv.y()), -lim, lim))};
}

DepthMap build_depth_map(const VoxelGrid& grid, const Camera& camera) {
  camera.validate();
  grid.validate();
  if (grid.occupied.empty()) throw std::invalid_argument("build_depth_map: no occupied voxels");
  DepthMap depth(camera.width, camera.height);
  bool any_in_front = false;
  for (const auto& idx : grid.occupied) {
    const Eigen::Vector3d p = voxel_to_camera(idx, camera, grid.resolution);
    if (!(p.z() > 0.0)) continue;
    any_in_front = true;
    const auto [u, v] = pixel_of(project(p, camera));
    if (!depth.in_frame(u, v)) continue;
    depth.at(u, v) = std::min(depth.at(u, v), p.z());
  }
  if (!any_in_front) throw std::invalid_argument("build_depth_map: all voxels are behind the camera");
  return depth;
}

DepthMap dilate_min(const DepthMap& depth, int k) {
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("dilate_min: kernel size must be odd and >= 1");
  if (k == 1) return depth;
  const int r = k / 2;
  // Separable: min over rows, then over columns. Infinity marks empty pixels,
  // so a window stays empty iff every pixel in it is empty.
  DepthMap rows(depth.width(), depth.height());
  for (int v = 0; v < depth.height(); ++v)
    for (int u = 0; u < depth.width(); ++u) {
      double m = DepthMap::kEmpty;
      for (int du = std::max(0, u - r); du <= std::min(depth.width() - 1, u + r); ++du) m = std::min(m, depth.at(du, v));
      rows.at(u, v) = m;
    }
  DepthMap out(depth.width(), depth.height());
  for (int v = 0; v < depth.height(); ++v)
    for (int u = 0; u < depth.width(); ++u) {
      double m = DepthMap::kEmpty;
      for (int dv = std::max(0, v - r); dv <= std::min(depth.height() - 1, v + r); ++dv) m = std::min(m, rows.at(u, dv));
      out.at(u, v) = m;
    }
  return out;
}

int kernel_size(double s_vox, double f_avg, double z_obj, double gamma) {
  if (!(s_vox > 0.0 && f_avg > 0.0 && z_obj > 0.0 && gamma > 0.0))
    throw std::invalid_argument("kernel_size: inputs must be positive");
  const double r = std::round(gamma * s_vox * f_avg / z_obj);
  if (r > 1e6) throw std::invalid_argument("kernel_size: kernel too large");
  auto k = static_cast<int>(r);
  if (k % 2 == 0) ++k;  // equidistant from k-1 and k+1: take the larger
  return std::max(k, 1);
}

double soft_visibility(double z, double depth, double sigma_d, double lambda) {
  if (!(sigma_d > 0.0)) throw std::invalid_argument("soft_visibility: sigma_d must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("soft_visibility: lambda must be positive");
  if (depth == DepthMap::kEmpty) return 1.0;
  const double margin = std::max(z - depth, 0.0) / sigma_d;
  // Deep voxels would underflow to 0; weights stay strictly positive.
  return std::max(std::exp(-lambda * margin * margin), std::numeric_limits<double>::min());
}

std::vector<VoxelIndex> extract_occupancy(std::span<const double> volume, int resolution) {
  const auto r = static_cast<std::size_t>(resolution);
  if (resolution <= 0 || volume.size() != r * r * r)
    throw std::invalid_argument("extract_occupancy: volume shape must be resolution^3");
  std::vector<VoxelIndex> out;
  for (std::size_t i = 0; i < volume.size(); ++i) {
    if (volume[i] > 0.0)
      out.push_back({static_cast<int>(i / (r * r)), static_cast<int>((i / r) % r), static_cast<int>(i % r)});
  }
  return out;
}

VisibilityWeights compute_visibility(const VoxelGrid& grid, const Camera& camera,
                                     const VisibilityParams& params) {
  const double s_vox = voxel_size(grid, camera);
  const DepthMap raw = build_depth_map(grid, camera);
  VisibilityWeights out;
  out.kernel = kernel_size(s_vox, camera.f_avg(), camera.z_obj(), params.gamma);
  out.sigma_d = params.beta * s_vox;
  const DepthMap dilated = dilate_min(raw, out.kernel);

  const std::size_t n = grid.occupied.size();
  out.weights.resize(n);
  out.margins.resize(n);
  out.pixels.resize(n);
  out.depths.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d p = voxel_to_camera(grid.occupied[i], camera, grid.resolution);
    out.depths[i] = p.z();
    out.margins[i] = std::numeric_limits<double>::quiet_NaN();
    out.weights[i] = 1.0;
    out.pixels[i] = {-1, -1};
    if (!(p.z() > 0.0)) continue;
    const auto px = pixel_of(project(p, camera));
    out.pixels[i] = px;
    if (!dilated.in_frame(px[0], px[1]) || dilated.empty(px[0], px[1])) continue;
    const double d = dilated.at(px[0], px[1]);
    out.margins[i] = p.z() - d;
    out.weights[i] = soft_visibility(p.z(), d, out.sigma_d, params.lambda);
  }
  return out;
}

namespace {

Eigen::Vector3d vec3(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

}  // namespace

Camera camera_from_json(const nlohmann::json& j) {
  Camera cam;
  const auto& k = j.at("intrinsics");
  cam.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                    k.at("cy").get<double>()};
  if (j.contains("rotation")) {
    const auto rows = j.at("rotation").get<std::vector<std::vector<double>>>();
    if (rows.size() != 3) throw std::invalid_argument("camera json: rotation must be 3x3");
    for (int r = 0; r < 3; ++r) {
      if (rows[static_cast<std::size_t>(r)].size() != 3) throw std::invalid_argument("camera json: rotation must be 3x3");
      for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
  }
  if (j.contains("scale")) cam.scale = vec3(j.at("scale"));
  cam.translation = vec3(j.at("translation"));
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.validate();
  return cam;
}

nlohmann::json camera_to_json(const Camera& camera) {
  std::vector<std::vector<double>> rot(3, std::vector<double>(3));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = camera.rotation(r, c);
  const auto& k = camera.intrinsics;
  return {{"intrinsics", {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}},
          {"rotation", rot},
          {"scale", {camera.scale.x(), camera.scale.y(), camera.scale.z()}},
          {"translation", {camera.translation.x(), camera.translation.y(), camera.translation.z()}},
          {"width", camera.width},
          {"height", camera.height}};
}

VoxelGrid voxels_from_json(const nlohmann::json& j) {
  VoxelGrid grid;
  grid.resolution = j.value("resolution", 64);
  for (const auto& v : j.at("occupied")) {
    const auto idx = v.get<std::vector<int>>();
    if (idx.size() != 3) throw std::invalid_argument("voxel json: indices must have 3 entries");
    grid.occupied.push_back({idx[0], idx[1], idx[2]});
  }
  grid.validate();
  return grid;
}

void write_depth_pgm(const DepthMap& depth, std::ostream& out, int maxval) {
  double lo = DepthMap::kEmpty, hi = -DepthMap::kEmpty;
  for (int v = 0; v < depth.height(); ++v)
    for (int u = 0; u < depth.width(); ++u)
      if (!depth.empty(u, v)) {
        lo = std::min(lo, depth.at(u, v));
        hi = std::max(hi, depth.at(u, v));
      }
  out << "P2\n" << depth.width() << ' ' << depth.height() << '\n' << maxval << '\n';
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      int level = 0;
      if (!depth.empty(u, v)) {
        const double f = hi > lo ? (depth.at(u, v) - lo) / (hi - lo) : 0.0;
        level = 1 + static_cast<int>(std::lround(f * (maxval - 1)));
      }
      out << level << (u + 1 < depth.width() ? ' ' : '\n');
    }
  }
}

}  // namespace relaxflow
