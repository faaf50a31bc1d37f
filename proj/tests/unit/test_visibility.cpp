#include "relaxflow/visibility.hpp"

#include "../oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

using namespace relaxflow;

using namespace oracles;

TEST_CASE("voxel to camera") {
  Camera cam;
  cam.translation = Eigen::Vector3d(0.0, 0.0, 1e-9);
  auto id = cam;
  id.translation.setZero();
  CHECK(voxel_to_camera({3, 4, 5}, id, 64) == Eigen::Vector3d(3, 4, 5));
  auto scaled = cam;
  scaled.scale = Eigen::Vector3d::Constant(2.0);
  scaled.translation = Eigen::Vector3d(0, 0, 10);
  CHECK(voxel_to_camera({1, 0, 0}, scaled, 64) == Eigen::Vector3d(2, 0, 10));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    Camera c;
    c.rotation = random_rotation(rng);
    c.scale = Eigen::Vector3d(0.5, 1.5, 2.0);
    c.translation = Eigen::Vector3d(1.0, -2.0, 30.0);
    CHECK_NOTHROW(c.validate());
    const VoxelIndex idx{i % 7, (3 * i) % 11, (5 * i) % 13};
    const Eigen::Vector3d x = voxel_to_camera(idx, c, 16);
    const Eigen::Vector3d rc = c.rotation * Eigen::Vector3d(idx[0], idx[1], idx[2]);
    CHECK(std::abs((x - c.translation).norm() - c.scale.cwiseProduct(rc).norm()) <= 1e-9);
  }
  CHECK_THROWS_AS(voxel_to_camera({16, 0, 0}, cam, 16), std::out_of_range);
  CHECK_THROWS_AS(voxel_to_camera({0, -1, 0}, cam, 16), std::out_of_range);
}

TEST_CASE("camera validation") {
  Camera c;
  CHECK_NOTHROW(c.validate());
  auto reflect = c;
  reflect.rotation(0, 0) = -1.0;
  CHECK_THROWS_AS(reflect.validate(), std::invalid_argument);
  auto skew = c;
  skew.rotation(0, 1) = 0.1;
  CHECK_THROWS_AS(skew.validate(), std::invalid_argument);
  auto behind = c;
  behind.translation.z() = 0.0;
  CHECK_THROWS_AS(behind.validate(), std::invalid_argument);
  auto flat = c;
  flat.scale.x() = 0.0;
  CHECK_THROWS_AS(flat.validate(), std::invalid_argument);
}

TEST_CASE("projection") {
  Camera cam;
  cam.intrinsics = {100.0, 80.0, 32.0, 24.0};
  CHECK(project({0, 0, 5}, cam) == Eigen::Vector2d(32.0, 24.0));
  CHECK(project({1, 0, 10}, cam).x() == 22.0);
  const Eigen::Vector3d p(1.3, -0.7, 4.0);
  const Eigen::Vector2d c(32.0, 24.0);
  const Eigen::Vector2d near = project(p, cam) - c;
  const Eigen::Vector2d far = project(Eigen::Vector3d(p.x(), p.y(), 2.0 * p.z()), cam) - c;
  CHECK((far - 0.5 * near).norm() <= 1e-12);
  CHECK_THROWS_AS(project({0, 0, 0}, cam), std::invalid_argument);
  CHECK_THROWS_AS(project({0, 0, -1}, cam), std::invalid_argument);
  CHECK(pixel_of({2.4, 2.6}) == std::array<int, 2>{2, 3});
}

TEST_CASE("depth map") {
  Camera cam;
  cam.intrinsics = {10.0, 10.0, 4.0, 4.0};
  cam.width = cam.height = 8;
  cam.translation = Eigen::Vector3d(0.0, 0.0, 2.0);
  SUBCASE("two voxels on one ray keep the nearer depth") {
    VoxelGrid g;
    g.resolution = 4;
    g.occupied = {{0, 0, 1}, {0, 0, 0}};
    const auto d = build_depth_map(g, cam);
    CHECK(d.at(4, 4) == 2.0);
    CHECK(d.filled() == 1);
  }
  SUBCASE("single voxel fills one pixel") {
    VoxelGrid g;
    g.resolution = 4;
    g.occupied = {{0, 0, 3}};
    CHECK(build_depth_map(g, cam).filled() == 1);
  }
  SUBCASE("voxels behind the camera") {
    Camera back = cam;
    back.rotation = Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal();
    VoxelGrid g;
    g.resolution = 8;
    g.occupied = {{0, 0, 5}};
    CHECK_THROWS_AS(build_depth_map(g, back), std::invalid_argument);
    g.occupied.clear();
    CHECK_THROWS_AS(build_depth_map(g, cam), std::invalid_argument);
  }
  SUBCASE("random scenes match a brute-force scan") {
    std::mt19937_64 rng(11);
    for (int scene = 0; scene < 10; ++scene) {
      Camera c = scene_camera();
      c.rotation = random_rotation(rng);
      c.translation = Eigen::Vector3d(0.0, 0.0, 60.0);
      const auto g = random_scene(rng, 200);
      CHECK(build_depth_map(g, c) == brute_depth(g, c));
    }
  }
}

TEST_CASE("min dilation") {
  DepthMap d(7, 6);
  SUBCASE("k = 1 is the identity") {
    d.at(2, 3) = 4.0;
    CHECK(dilate_min(d, 1) == d);
  }
  SUBCASE("single pixel grows to a 3x3 block") {
    d.at(3, 3) = 4.0;
    const auto out = dilate_min(d, 3);
    CHECK(out.filled() == 9);
    for (int v = 2; v <= 4; ++v)
      for (int u = 2; u <= 4; ++u) CHECK(out.at(u, v) == 4.0);
  }
  SUBCASE("random maps match the brute-force window minimum") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> depth(1.0, 9.0);
    std::bernoulli_distribution filled(0.2);
    for (int rep = 0; rep < 10; ++rep) {
      DepthMap m(23, 17);
      for (int v = 0; v < m.height(); ++v)
        for (int u = 0; u < m.width(); ++u)
          if (filled(rng)) m.at(u, v) = depth(rng);
      for (int k : {1, 3, 5, 9}) CHECK(dilate_min(m, k) == brute_dilate(m, k));
    }
  }
  CHECK_THROWS_AS(dilate_min(d, 2), std::invalid_argument);
  CHECK_THROWS_AS(dilate_min(d, 0), std::invalid_argument);
}

TEST_CASE("kernel size") {
  // gamma * s_vox * f_avg / z_obj with everything else 1
  CHECK(kernel_size(3.0, 1.0, 1.0, 1.0) == 3);
  CHECK(kernel_size(0.2, 1.0, 1.0, 1.0) == 1);
  CHECK(kernel_size(4.0, 1.0, 1.0, 1.0) == 5);
  CHECK(kernel_size(5.4, 1.0, 1.0, 1.0) == 5);
  CHECK(kernel_size(5.6, 1.0, 1.0, 1.0) == 7);
  CHECK(kernel_size(1.5, 2.0, 2.0, 1.0) == 3);
  CHECK_THROWS_AS(kernel_size(0.0, 1.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(kernel_size(1.0, 1.0, -1.0, 1.0), std::invalid_argument);
}

TEST_CASE("soft visibility") {
  const double sd = 0.3;
  CHECK(soft_visibility(5.0, 5.0, sd, 3.0) == 1.0);
  CHECK(soft_visibility(4.0, 5.0, sd, 3.0) == 1.0);
  CHECK(std::abs(soft_visibility(5.0 + sd, 5.0, sd, 3.0) - std::exp(-3.0)) <= 1e-12);
  CHECK(std::abs(soft_visibility(5.0 + 2.0 * sd, 5.0, sd, 3.0) - std::exp(-12.0)) <= 1e-12);
  CHECK(soft_visibility(1e6, 1.0, sd, 3.0) > 0.0);
  CHECK(soft_visibility(7.0, DepthMap::kEmpty, sd, 3.0) == 1.0);
  double prev = 1.0;
  for (double delta = 0.0; delta < 5.0; delta += 0.01) {
    const double m = soft_visibility(2.0 + delta, 2.0, sd, 3.0);
    CHECK(m <= prev);
    CHECK(m > 0.0);
    prev = m;
  }
  CHECK_THROWS_AS(soft_visibility(1.0, 1.0, 0.0, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(soft_visibility(1.0, 1.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("occupancy extraction") {
  const int r = 6;
  std::vector<double> zero(r * r * r, 0.0);
  CHECK(extract_occupancy(zero, r).empty());
  std::vector<double> eps(r * r * r, 1e-300);
  CHECK(extract_occupancy(eps, r).size() == static_cast<std::size_t>(r * r * r));
  std::mt19937_64 rng(2);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> pm(r * r * r);
  for (auto& s : pm) s = coin(rng) ? 1.0 : -1.0;
  std::vector<VoxelIndex> expected;
  for (int x = 0; x < r; ++x)
    for (int y = 0; y < r; ++y)
      for (int z = 0; z < r; ++z)
        if (pm[static_cast<std::size_t>((x * r + y) * r + z)] > 0.0) expected.push_back({x, y, z});
  CHECK(extract_occupancy(pm, r) == expected);
  CHECK_THROWS_AS(extract_occupancy(pm, r + 1), std::invalid_argument);
}

TEST_CASE("full pipeline") {
  std::mt19937_64 rng(21);
  const VisibilityParams params;
  for (int scene = 0; scene < 20; ++scene) {
    Camera cam = scene_camera();
    cam.rotation = random_rotation(rng);
    cam.translation = Eigen::Vector3d(0.0, 0.0, 60.0);
    const auto g = random_scene(rng, 200);
    const auto w = compute_visibility(g, cam, params);
    REQUIRE(w.kernel == 1);
    const auto depth = brute_depth(g, cam);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < g.occupied.size(); ++i) {
      CHECK(w.weights[i] > 0.0);
      CHECK(w.weights[i] <= 1.0);
      if (!(w.margins[i] > 0.0)) CHECK(w.weights[i] == 1.0);
      // Pairwise occlusion oracle: nearest voxel on the same pixel, no dilation.
      const auto [u, v] = w.pixels[i];
      double oracle = 1.0;
      bool front = true;
      if (depth.in_frame(u, v)) {
        double nearest = w.depths[i];
        for (std::size_t j = 0; j < g.occupied.size(); ++j)
          if (w.pixels[j] == w.pixels[i]) nearest = std::min(nearest, w.depths[j]);
        front = nearest == w.depths[i];
        const double delta = (w.depths[i] - nearest) / w.sigma_d;
        oracle = std::exp(-params.lambda * delta * delta);
      }
      if ((oracle > 0.5) == (w.weights[i] > 0.5)) ++agree;
      if (front) CHECK(w.weights[i] == 1.0);
      CHECK((w.weights[i] == 1.0) == front);
    }
    CHECK(static_cast<double>(agree) >= 0.95 * static_cast<double>(g.occupied.size()));
  }
}

TEST_CASE("frontmost voxel in its dilation window is fully visible") {
  std::mt19937_64 rng(8);
  VisibilityParams params;
  params.gamma = 60.0;
  for (int scene = 0; scene < 10; ++scene) {
    Camera cam = scene_camera();
    cam.rotation = random_rotation(rng);
    cam.translation = Eigen::Vector3d(0.0, 0.0, 60.0);
    const auto g = random_scene(rng, 200);
    const auto w = compute_visibility(g, cam, params);
    REQUIRE(w.kernel > 1);
    const DepthMap raw = build_depth_map(g, cam);
    const DepthMap dilated = brute_dilate(raw, w.kernel);
    for (std::size_t i = 0; i < g.occupied.size(); ++i) {
      const auto [u, v] = w.pixels[i];
      if (!raw.in_frame(u, v)) continue;
      if (w.depths[i] <= dilated.at(u, v)) CHECK(w.weights[i] == 1.0);
    }
  }
}

TEST_CASE("out-of-frame voxels are fully visible") {
  Camera cam;
  cam.intrinsics = {10.0, 10.0, 1.0, 1.0};
  cam.width = cam.height = 3;
  cam.translation = Eigen::Vector3d(-20.0, 0.0, 5.0);
  VoxelGrid g;
  g.resolution = 4;
  g.occupied = {{0, 0, 0}, {0, 0, 3}};
  const auto w = compute_visibility(g, cam);
  CHECK(w.weights[0] == 1.0);
  CHECK(w.weights[1] == 1.0);
}

TEST_CASE("json and pgm") {
  Camera cam = scene_camera();
  std::mt19937_64 rng(4);
  cam.rotation = random_rotation(rng);
  const auto back = camera_from_json(camera_to_json(cam));
  CHECK((back.rotation - cam.rotation).norm() <= 1e-15);
  CHECK(back.width == cam.width);
  CHECK(back.intrinsics.fx == cam.intrinsics.fx);
  const auto g = voxels_from_json({{"resolution", 8}, {"occupied", {{1, 2, 3}, {4, 5, 6}}}});
  CHECK(g.occupied.size() == 2);
  CHECK(g.occupied[1] == VoxelIndex{4, 5, 6});
  CHECK_THROWS(voxels_from_json({{"resolution", 8}, {"occupied", {{1, 2}}}}));

  DepthMap d(3, 2);
  d.at(0, 0) = 1.0;
  d.at(2, 1) = 3.0;
  std::ostringstream out;
  write_depth_pgm(d, out);
  std::istringstream in(out.str());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  CHECK(magic == "P2");
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(maxval == 255);
  std::vector<int> px(6);
  for (auto& p : px) in >> p;
  CHECK(px == std::vector<int>{1, 0, 0, 0, 0, 255});
}
