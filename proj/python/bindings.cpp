#include "relaxflow/attention.hpp"
#include "relaxflow/experiments.hpp"
#include "relaxflow/flowfield.hpp"
#include "relaxflow/metrics.hpp"
#include "relaxflow/relaxation.hpp"
#include "relaxflow/sampler.hpp"
#include "relaxflow/visibility.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>

namespace py = pybind11;
using namespace relaxflow;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Arrays of shape (*extents, components) map onto site-major,
// component-fastest grids.
GridField grid_from_array(const Array& a, double spacing) {
  if (a.ndim() < 2 || a.ndim() > 4) throw std::invalid_argument("expected an array of shape (*extents, components)");
  std::vector<std::size_t> extents;
  for (py::ssize_t i = 0; i + 1 < a.ndim(); ++i) extents.push_back(static_cast<std::size_t>(a.shape(i)));
  const auto components = static_cast<std::size_t>(a.shape(a.ndim() - 1));
  Lattice lat(extents, std::vector<double>(extents.size(), spacing));
  return GridField(lat, components, 0.0, std::vector<double>(a.data(), a.data() + a.size()));
}

Array array_like(const GridField& g, const Array& shape_of) {
  Array out(std::vector<py::ssize_t>(shape_of.shape(), shape_of.shape() + shape_of.ndim()));
  std::copy(g.values().begin(), g.values().end(), out.mutable_data());
  return out;
}

GaussianMixture make_mixture(const std::vector<double>& weights, const Matrix& means, const std::vector<double>& stds) {
  if (weights.size() != static_cast<std::size_t>(means.rows()) || weights.size() != stds.size())
    throw std::invalid_argument("weights, means and stds must have one entry per component");
  std::vector<MixtureComponent> comps;
  for (std::size_t i = 0; i < weights.size(); ++i)
    comps.push_back({weights[i], means.row(static_cast<Eigen::Index>(i)).transpose(), stds[i]});
  return GaussianMixture(std::move(comps));
}

Camera camera_from_string(const std::string& text) { return camera_from_json(nlohmann::json::parse(text)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Relaxed flow sampling: fields, relaxation, attention, visibility, sampling and metrics";

  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<NumericError> numeric_error(m, "NumericError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const NumericError& e) {
      py::set_error(numeric_error, e.what());
    }
  });

  py::class_<GaussianMixture>(m, "GaussianMixture")
      .def(py::init(&make_mixture), py::arg("weights"), py::arg("means"), py::arg("stds"))
      .def_property_readonly("dimension", &GaussianMixture::dimension)
      .def("velocity", [](const GaussianMixture& g, const Vector& x, double t) { return oracle_velocity(g, x, t); },
           py::arg("x"), py::arg("t"))
      .def(
          "sample",
          [](const GaussianMixture& g, std::size_t n, std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(g.dimension()));
            for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = g.sample(rng).transpose();
            return out;
          },
          py::arg("n"), py::arg("seed") = 0);

  m.def(
      "relax_field", [](const Array& a, double sigma, double spacing) { return array_like(relax_field(grid_from_array(a, spacing), sigma), a); },
      py::arg("values"), py::arg("sigma"), py::arg("spacing") = 1.0);
  m.def(
      "estimate_lipschitz", [](const Array& a, double spacing) { return estimate_lipschitz(grid_from_array(a, spacing)); },
      py::arg("values"), py::arg("spacing") = 1.0);
  m.def(
      "band_energy",
      [](const Array& a, double eta, double spacing) {
        const auto r = band_energy(grid_from_array(a, spacing), eta);
        return py::make_tuple(r.low_energy, r.high_energy);
      },
      py::arg("values"), py::arg("eta"), py::arg("spacing") = 1.0);

  m.def("blur_logits", [](const Matrix& l, double sigma) { return blur_logits(l, sigma); }, py::arg("logits"),
        py::arg("sigma"));
  m.def(
      "relaxed_attention",
      [](const Matrix& q, const Matrix& k, const Matrix& v, double sigma) {
        return relaxed_attention(TokenSequence(q, TokenOrigin::observation()), TokenSequence(k, TokenOrigin::prior(0)),
                                 TokenSequence(v, TokenOrigin::prior(0)), sigma)
            .tokens();
      },
      py::arg("queries"), py::arg("keys"), py::arg("values"), py::arg("sigma"));

  m.def("alpha_schedule", &alpha_schedule, py::arg("k"), py::arg("steps"), py::arg("rho"));
  m.def(
      "alphas",
      [](std::size_t steps, double rho) {
        const Schedule s(steps, rho);
        return std::vector<double>(s.alphas().begin(), s.alphas().end());
      },
      py::arg("steps"), py::arg("rho"));
  m.def("visibility_blend",
        py::overload_cast<const Vector&, const Vector&, double, double>(&visibility_blend), py::arg("v_obs"),
        py::arg("v_prior"), py::arg("m"), py::arg("alpha"));

  m.def(
      "wasserstein2_exact", [](const Matrix& a, const Matrix& b) { return wasserstein2_exact(PointSet(a), PointSet(b)); },
      py::arg("a"), py::arg("b"));
  m.def("wasserstein2_gaussian_1d", &wasserstein2_gaussian_1d, py::arg("mu1"), py::arg("sigma1"), py::arg("mu2"),
        py::arg("sigma2"));
  m.def(
      "frechet_distance", [](const Matrix& a, const Matrix& b) { return frechet_distance(PointSet(a), PointSet(b)); },
      py::arg("a"), py::arg("b"));

  m.def("soft_visibility", &soft_visibility, py::arg("z"), py::arg("depth"), py::arg("sigma_d"), py::arg("lam"));
  m.def("kernel_size", &kernel_size, py::arg("s_vox"), py::arg("f_avg"), py::arg("z_obj"), py::arg("gamma"));
  m.def(
      "_compute_visibility",
      [](const Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>& voxels, int resolution,
         const std::string& camera, double beta, double gamma, double lambda) {
        VoxelGrid g;
        g.resolution = resolution;
        for (Eigen::Index i = 0; i < voxels.rows(); ++i) g.occupied.push_back({voxels(i, 0), voxels(i, 1), voxels(i, 2)});
        const auto w = compute_visibility(g, camera_from_string(camera), {beta, gamma, lambda});
        py::dict out;
        out["weights"] = w.weights;
        out["margins"] = w.margins;
        out["depths"] = w.depths;
        out["kernel"] = w.kernel;
        out["sigma_d"] = w.sigma_d;
        return out;
      },
      py::arg("voxels"), py::arg("resolution"), py::arg("camera"), py::arg("beta"), py::arg("gamma"), py::arg("lam"));

  m.def("scenario_names", &scenario_names);
  m.def("_default_config", [](const std::string& s) { return default_config_json(s).dump(); });
  m.def(
      "_run_experiment",
      [](const std::string& config) {
        const auto c = config_from_json(nlohmann::json::parse(config));
        py::gil_scoped_release release;
        return run(c).to_json().dump();
      },
      py::arg("config"));
}
