#pragma once

// Per-voxel soft visibility from an observation camera: voxel-to-camera
// transform, pinhole projection, z-buffer, min-pool dilation and the Gaussian
// falloff on the occlusion margin.
//
// Projection follows u = c_x - f_x x / z, v = c_y - f_y y / z (note the minus
// sign). Pixels are assigned by rounding (u, v) to the nearest integer.

#include "relaxflow/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

namespace relaxflow {

struct Intrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
};

struct Camera {
  Intrinsics intrinsics;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();
  Eigen::Vector3d translation = Eigen::Vector3d(0.0, 0.0, 1.0);
  int width = 64;
  int height = 64;

  /// Throws unless R is orthonormal with det +1 (1e-9), scale > 0, t_z > 0
  /// and the resolution is positive.
  void validate() const;

  double f_avg() const { return 0.5 * (intrinsics.fx + intrinsics.fy); }
  double z_obj() const { return translation.z(); }
};

using VoxelIndex = std::array<int, 3>;

struct VoxelGrid {
  int resolution = 64;
  std::vector<VoxelIndex> occupied;

  void validate() const;
};

/// s_max / s_res.
double voxel_size(const VoxelGrid& grid, const Camera& camera);

class DepthMap {
 public:
  static constexpr double kEmpty = std::numeric_limits<double>::infinity();

  DepthMap(int width, int height) : width_(width), height_(height), depth_(static_cast<std::size_t>(width) * height, kEmpty) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool in_frame(int u, int v) const noexcept { return u >= 0 && v >= 0 && u < width_ && v < height_; }
  bool empty(int u, int v) const { return at(u, v) == kEmpty; }
  double at(int u, int v) const { return depth_[static_cast<std::size_t>(v) * width_ + u]; }
  double& at(int u, int v) { return depth_[static_cast<std::size_t>(v) * width_ + u]; }
  std::size_t filled() const;

  friend bool operator==(const DepthMap&, const DepthMap&) = default;

 private:
  int width_, height_;
  std::vector<double> depth_;
};

struct VisibilityParams {
  double beta = 1.5;    // sigma_d = beta * s_vox
  double gamma = 1.5;   // dilation kernel scale
  double lambda = 3.0;  // falloff sharpness
};

struct VisibilityWeights {
  std::vector<double> weights;                // m_i in (0, 1]
  std::vector<double> margins;                // Delta_i (NaN when no depth evidence)
  std::vector<std::array<int, 2>> pixels;     // rounded (u_i, v_i)
  std::vector<double> depths;                 // z_i
  int kernel = 1;
  double sigma_d = 0.0;
};

/// x = s .* (R c) + t with c the raw voxel index.
Eigen::Vector3d voxel_to_camera(const VoxelIndex& index, const Camera& camera, int resolution);

/// (u, v) = (c_x - f_x x / z, c_y - f_y y / z). Throws for z <= 0.
Eigen::Vector2d project(const Eigen::Vector3d& point, const Camera& camera);

/// Nearest-integer pixel of a projection.
std::array<int, 2> pixel_of(const Eigen::Vector2d& uv);

/// D(u, v) = min z over voxels landing on (u, v). Voxels behind the camera or
/// outside the frame are skipped; throws if every voxel is behind the camera.
DepthMap build_depth_map(const VoxelGrid& grid, const Camera& camera);

/// Min over the k x k window of non-empty depths; k odd and >= 1.
DepthMap dilate_min(const DepthMap& depth, int k);

/// Nearest odd integer to round(gamma * s_vox * f_avg / z_obj); exact ties go
/// to the larger odd value; clamped to >= 1.
int kernel_size(double s_vox, double f_avg, double z_obj, double gamma);

/// exp(-lambda (max(z - depth, 0) / sigma_d)^2), floored at the smallest
/// normal double so the weight never reaches 0. An empty depth yields 1.
double soft_visibility(double z, double depth, double sigma_d, double lambda);

/// {i | S_i > 0} over a resolution^3 volume stored x-major (index = (x*R + y)*R + z).
std::vector<VoxelIndex> extract_occupancy(std::span<const double> volume, int resolution);

/// Full pipeline. Voxels behind the camera, out of frame, or over an empty
/// dilated pixel get m = 1.
VisibilityWeights compute_visibility(const VoxelGrid& grid, const Camera& camera,
                                     const VisibilityParams& params = {});

Camera camera_from_json(const nlohmann::json& j);
nlohmann::json camera_to_json(const Camera& camera);
VoxelGrid voxels_from_json(const nlohmann::json& j);

/// Plain-text PGM (P2). Empty pixels are written as 0; depths are scaled
/// linearly into [1, maxval] between the finite min and max.
void write_depth_pgm(const DepthMap& depth, std::ostream& out, int maxval = 255);

}  // namespace relaxflow
