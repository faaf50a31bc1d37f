#pragma once

// Independent reference implementations shared by the unit and acceptance
// tests. Deliberately brute force.

#include "relaxflow/types.hpp"
#include "relaxflow/visibility.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

namespace oracles {

using namespace relaxflow;

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::Matrix3d a;
  for (int i = 0; i < 9; ++i) a.data()[i] = normal(rng);
  Eigen::Matrix3d q = Eigen::HouseholderQR<Eigen::Matrix3d>(a).householderQ();
  if (q.determinant() < 0.0) q.col(0) *= -1.0;
  return q;
}

inline Camera scene_camera() {
  Camera cam;
  cam.intrinsics = {40.0, 40.0, 32.0, 32.0};
  cam.translation = Eigen::Vector3d(-8.0, -8.0, 40.0);
  cam.width = 64;
  cam.height = 64;
  return cam;
}

inline VoxelGrid random_scene(std::mt19937_64& rng, std::size_t count, int resolution = 16) {
  std::uniform_int_distribution<int> pick(0, resolution - 1);
  std::set<VoxelIndex> seen;
  VoxelGrid g;
  g.resolution = resolution;
  while (g.occupied.size() < count) {
    const VoxelIndex v{pick(rng), pick(rng), pick(rng)};
    if (seen.insert(v).second) g.occupied.push_back(v);
  }
  return g;
}

// Independent z-buffer: for every pixel scan every voxel.
inline DepthMap brute_depth(const VoxelGrid& g, const Camera& cam) {
  DepthMap d(cam.width, cam.height);
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u)
      for (const auto& c : g.occupied) {
        const Eigen::Vector3d p = cam.scale.cwiseProduct(cam.rotation * Eigen::Vector3d(c[0], c[1], c[2])) + cam.translation;
        if (p.z() <= 0.0) continue;
        const double pu = cam.intrinsics.cx - cam.intrinsics.fx * p.x() / p.z();
        const double pv = cam.intrinsics.cy - cam.intrinsics.fy * p.y() / p.z();
        if (std::lround(pu) == u && std::lround(pv) == v) d.at(u, v) = std::min(d.at(u, v), p.z());
      }
  return d;
}

inline DepthMap brute_dilate(const DepthMap& d, int k) {
  DepthMap out(d.width(), d.height());
  const int r = k / 2;
  for (int v = 0; v < d.height(); ++v)
    for (int u = 0; u < d.width(); ++u)
      for (int dv = -r; dv <= r; ++dv)
        for (int du = -r; du <= r; ++du)
          if (d.in_frame(u + du, v + dv)) out.at(u, v) = std::min(out.at(u, v), d.at(u + du, v + dv));
  return out;
}


inline Matrix dense_blur(const Matrix& l, double sigma) {
  const long r = static_cast<long>(std::ceil(3.0 * sigma));
  Matrix out(l.rows(), l.cols());
  for (long i = 0; i < l.rows(); ++i)
    for (long j = 0; j < l.cols(); ++j) {
      double num = 0.0, den = 0.0;
      for (long a = -r; a <= r; ++a)
        for (long b = -r; b <= r; ++b) {
          if (i + a < 0 || i + a >= l.rows() || j + b < 0 || j + b >= l.cols()) continue;
          const double w = std::exp(-static_cast<double>(a * a + b * b) / (2.0 * sigma * sigma));
          num += w * l(i + a, j + b);
          den += w;
        }
      out(i, j) = num / den;
    }
  return out;
}

inline double brute_force_w2(const Matrix& a, const Matrix& b) {
  std::vector<int> perm(static_cast<std::size_t>(a.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double c = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) c += (a.row(i) - b.row(perm[static_cast<std::size_t>(i)])).squaredNorm();
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(a.rows()));
}

}  // namespace oracles
