#include "relaxflow/flowfield.hpp"
#include "relaxflow/relaxation.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace relaxflow;
using testing::vec;

namespace {

GaussianMixture two_modes() {
  return GaussianMixture({{0.5, vec({-3.0}), 0.5}, {0.5, vec({3.0}), 0.5}});
}

// |oracle - mc| <= 3 standard errors on every component.
void check_against_monte_carlo(const GaussianMixture& m, const Vector& x, double t, std::size_t n,
                               std::uint64_t seed) {
  const Vector exact = oracle_velocity(m, x, t);
  const auto mc = monte_carlo_velocity(m, x, t, n, default_bandwidth(m, t), seed);
  for (Eigen::Index i = 0; i < exact.size(); ++i) {
    INFO("component " << i << " exact " << exact[i] << " mc " << mc.velocity[i] << " se " << mc.standard_error[i]);
    CHECK(std::abs(exact[i] - mc.velocity[i]) <= 3.0 * mc.standard_error[i]);
  }
}

}  // namespace

TEST_CASE("mixture validation") {
  CHECK_THROWS_AS(GaussianMixture(std::vector<MixtureComponent>{}), std::invalid_argument);
  CHECK_THROWS_AS(GaussianMixture({{0.5, vec({0.0}), 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(GaussianMixture({{1.0, vec({0.0}), 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(GaussianMixture({{1.0, vec({NAN}), 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(GaussianMixture({{0.5, vec({0.0}), 1.0}, {0.5, vec({0.0, 1.0}), 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(GaussianMixture({{1.5, vec({0.0}), 1.0}, {-0.5, vec({1.0}), 1.0}}), std::invalid_argument);
  CHECK_NOTHROW(two_modes());
}

TEST_CASE("mixture json round trip") {
  const auto m = two_modes();
  const auto back = mixture_from_json(mixture_to_json(m));
  REQUIRE(back.components().size() == 2);
  CHECK(back.components()[1].mean[0] == 3.0);
  CHECK(back.components()[0].std == 0.5);
  CHECK(back.dimension() == 1);
}

TEST_CASE("oracle velocity: target equals source is stationary at the midpoint") {
  const auto m = GaussianMixture::single(vec({0.0, 0.0}), 1.0);
  for (double x : {-2.0, 0.3, 5.0}) CHECK(oracle_velocity(m, vec({x, -x}), 0.5).norm() == doctest::Approx(0.0));
}

TEST_CASE("oracle velocity: near-deterministic target") {
  const auto m = GaussianMixture::single(vec({1.0}), 1e-6);
  const Vector v = oracle_velocity(m, vec({0.0}), 0.0);
  CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-9));
  check_against_monte_carlo(m, vec({0.0}), 0.0, 1000000, 1);
  // (mu - x) / (1 - t) away from t = 0
  CHECK(oracle_velocity(m, vec({0.2}), 0.6)[0] == doctest::Approx((1.0 - 0.2) / 0.4).epsilon(1e-6));
}

TEST_CASE("oracle velocity: bimodal target against Monte Carlo") {
  check_against_monte_carlo(two_modes(), vec({2.9}), 0.8, 1000000, 2);
}

TEST_CASE("oracle velocity rejects t >= 1 and empty mixtures") {
  CHECK_THROWS_AS(oracle_velocity(two_modes(), vec({0.0}), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(oracle_velocity(two_modes(), vec({0.0}), 1.5), std::invalid_argument);
  CHECK_THROWS_AS(oracle_velocity(GaussianMixture(), vec({0.0}), 0.5), std::invalid_argument);
  CHECK_THROWS_AS(oracle_velocity(two_modes(), vec({0.0, 1.0}), 0.5), std::invalid_argument);
}

TEST_CASE("oracle velocity agrees with Monte Carlo on random probes") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int probe = 0; probe < 50; ++probe) {
    const std::size_t d = 1 + probe % 2;
    const std::size_t k = 1 + probe % 3;
    std::vector<MixtureComponent> comps;
    for (std::size_t j = 0; j < k; ++j) {
      Vector mean(static_cast<Eigen::Index>(d));
      for (auto& c : mean) c = -3.0 + 6.0 * unit(rng);
      comps.push_back({1.0 / static_cast<double>(k), mean, 0.3 + unit(rng)});
    }
    const GaussianMixture m(comps);
    const double t = 0.05 + 0.9 * unit(rng);
    // Probe near a draw of x_t so the kernel estimate has support.
    const Vector x = (1.0 - t) * testing::random_matrix(static_cast<Eigen::Index>(d), 1, rng()).col(0) + t * m.sample(rng);
    CAPTURE(probe);
    check_against_monte_carlo(m, x, t, 200000, 1000 + static_cast<std::uint64_t>(probe));
  }
}

TEST_CASE("monte carlo: standard error scales like 1/sqrt(n)") {
  const auto m = two_modes();
  const auto a = monte_carlo_velocity(m, vec({2.9}), 0.8, 200000, default_bandwidth(m, 0.8), 7);
  const auto b = monte_carlo_velocity(m, vec({2.9}), 0.8, 400000, default_bandwidth(m, 0.8), 8);
  const double ratio = b.standard_error[0] / a.standard_error[0];
  CHECK(ratio == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.2));
}

TEST_CASE("monte carlo: two seeds agree and the symmetric case is zero") {
  const auto m = two_modes();
  const auto a = monte_carlo_velocity(m, vec({2.9}), 0.8, 1000000, default_bandwidth(m, 0.8), 11);
  const auto b = monte_carlo_velocity(m, vec({2.9}), 0.8, 1000000, default_bandwidth(m, 0.8), 12);
  const double se = std::hypot(a.standard_error[0], b.standard_error[0]);
  CHECK(std::abs(a.velocity[0] - b.velocity[0]) <= 3.0 * se);

  const auto same = GaussianMixture::single(vec({0.0}), 1.0);
  const auto z = monte_carlo_velocity(same, vec({0.4}), 0.5, 200000, default_bandwidth(same, 0.5), 13);
  CHECK(std::abs(z.velocity[0]) <= 3.0 * z.standard_error[0]);
}

TEST_CASE("monte carlo preconditions") {
  const auto m = two_modes();
  CHECK_THROWS_AS(monte_carlo_velocity(m, vec({0.0}), 0.5, 100, 0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(monte_carlo_velocity(m, vec({0.0}), 0.5, 10000, 0.0, 1), std::invalid_argument);
  // nothing lands near x = 50
  CHECK_THROWS_AS(monte_carlo_velocity(m, vec({50.0}), 0.5, 10000, 0.01, 1), NumericError);
}

TEST_CASE("pushforward of a single component matches its moments") {
  const double mu = 1.5, sd = 0.7;
  const auto m = GaussianMixture::single(vec({mu}), sd);
  const std::size_t K = 1000, n = 10000;
  const double dt = (1.0 - 1e-3) / static_cast<double>(K);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Vector x = vec({normal(rng)});
    for (std::size_t k = 0; k < K; ++k) x += dt * oracle_velocity(m, x, static_cast<double>(k) * dt);
    sum += x[0];
    sum2 += x[0] * x[0];
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sum2 / static_cast<double>(n) - mean * mean;
  CHECK(std::abs(mean - mu) < 0.05);
  CHECK(std::abs(std::sqrt(var) - sd) < 0.05);
}

TEST_CASE("sample_on_grid") {
  const auto lat = Lattice::cube(2, 8, -1.0, 1.0);
  SUBCASE("matches pointwise evaluation") {
    const AnalyticFlowField f(GaussianMixture::single(vec({1.0, -2.0}), 0.5));
    const auto g = sample_on_grid(f, lat, 0.3);
    for (std::size_t s = 0; s < lat.size(); ++s)
      CHECK((g.site_value(s) - f.velocity(lat.coordinate(s), 0.3)).norm() == 0.0);
  }
  SUBCASE("rejects small lattices and t >= 1") {
    const AnalyticFlowField f(GaussianMixture::single(vec({0.0}), 1.0));
    CHECK_THROWS_AS(sample_on_grid(f, Lattice::cube(1, 3, 0.0, 1.0), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(sample_on_grid(f, Lattice::cube(1, 8, 0.0, 1.0), 1.0), std::invalid_argument);
  }
}

TEST_CASE("constant-velocity field samples to equal values") {
  const auto lat = Lattice::cube(1, 16, -2.0, 2.0);
  const VelocityFn constant = [](const Vector& x, double) { return Vector::Constant(x.size(), 3.25); };
  const auto g = sample_on_grid(constant, 1, lat, 0.0);
  for (std::size_t s = 0; s < lat.size(); ++s) CHECK(g.at(s, 0) == 3.25);
}

TEST_CASE("band noise") {
  const auto lat = Lattice::cube(1, 64, 0.0, 63.0);
  const double eta = 0.5 * lat.nyquist();
  const AnalyticFlowField base(two_modes());

  SUBCASE("zero amplitude is bitwise the base") {
    const auto p = inject_band_noise(base, lat, eta, 0.0, 3);
    const auto a = sample_on_grid(p, lat, 0.4);
    const auto b = sample_on_grid(base, lat, 0.4);
    for (std::size_t i = 0; i < a.values().size(); ++i) CHECK(a.values()[i] == b.values()[i]);
  }
  SUBCASE("same seed reproduces the noise") {
    const auto p = inject_band_noise(base, lat, eta, 1.0, 3);
    const auto q = inject_band_noise(base, lat, eta, 1.0, 3);
    const auto a = sample_on_grid(p, lat, 0.4);
    const auto b = sample_on_grid(q, lat, 0.4);
    for (std::size_t i = 0; i < a.values().size(); ++i) CHECK(a.values()[i] == b.values()[i]);
  }
  SUBCASE("energy of the injected noise lies above the cutoff") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto p = inject_band_noise(base, lat, eta, 1.0, seed);
      const auto diff = axpby(1.0, sample_on_grid(p, lat, 0.4), -1.0, sample_on_grid(base, lat, 0.4));
      const auto report = band_energy(diff, eta);
      CHECK(report.high_fraction() >= 0.95);
      for (const auto& w : p.noise().waves()) CHECK(std::abs(w.frequency[0]) > eta);
    }
  }
  SUBCASE("noise norm is linear in the amplitude") {
    const auto a = inject_band_noise(base, lat, eta, 0.7, 9);
    const auto b = inject_band_noise(base, lat, eta, 1.4, 9);
    const auto g = sample_on_grid(base, lat, 0.4);
    const double na = l2_distance(sample_on_grid(a, lat, 0.4), g);
    const double nb = l2_distance(sample_on_grid(b, lat, 0.4), g);
    CHECK(nb / na == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("cutoff at or above Nyquist is rejected") {
    CHECK_THROWS_AS(inject_band_noise(base, lat, lat.nyquist(), 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(inject_band_noise(base, lat, 2.0 * lat.nyquist(), 1.0, 1), std::invalid_argument);
  }
  SUBCASE("low-band signal stays below its cutoff") {
    const auto s = make_low_band_signal(lat, 1, eta, 1.0, 4);
    GridField g(lat, 1, 0.0);
    for (std::size_t i = 0; i < lat.size(); ++i) g.set_site_value(i, s.evaluate(lat.coordinate(i)));
    CHECK(band_energy(g, eta).high_fraction() <= 1e-9);
  }
}

TEST_CASE("band noise on a 2D lattice uses the radial frequency") {
  const auto lat = Lattice::cube(2, 32, -4.0, 4.0);
  const double eta = 0.4 * lat.nyquist();
  const BandNoise noise(lat, 2, eta, 1.0, 17);
  for (const auto& w : noise.waves()) CHECK(w.frequency.norm() > eta);
  GridField g(lat, 2, 0.0);
  for (std::size_t i = 0; i < lat.size(); ++i) g.set_site_value(i, noise.evaluate(lat.coordinate(i)));
  CHECK(band_energy(g, eta).high_fraction() >= 0.95);
}
