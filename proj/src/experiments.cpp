#include "relaxflow/experiments.hpp"

#include "relaxflow/attention.hpp"
#include "relaxflow/relaxation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace relaxflow {

namespace {

using nlohmann::json;

std::string join_violations(const std::vector<std::string>& v) {
  std::string out = "invalid experiment config:";
  for (const auto& s : v) out += "\n  " + s;
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + stream + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string label(const std::string& key, double v) {
  std::ostringstream o;
  o << key << '=' << v;
  return o.str();
}

json mixture_json(std::vector<std::pair<std::vector<double>, double>> comps) {
  json c = json::array();
  const double w = 1.0 / static_cast<double>(comps.size());
  for (auto& [mean, std] : comps) c.push_back({{"weight", w}, {"mean", mean}, {"std", std}});
  return {{"dimension", comps.front().first.size()}, {"components", c}};
}

json common_defaults() {
  return {
      {"scenario", ""},
      {"seeds", 20},
      {"seed_offset", 0},
      {"sigmas", {0.5, 1.0, 2.0}},
      {"sigma", 1.0},
      {"rho", 0.2},
      {"steps", 100},
      {"priors", 3},
      {"eta", 2.0},
      {"signal_cutoff", 0.5},
      {"noise_amplitude", 1.0},
      {"samples", 512},
      {"epsilon", kDefaultEpsilon},
      {"dimension", 2},
      {"lattice", {{"extent", 64}, {"lo", -4.0}, {"hi", 4.0}}},
      {"observation", mixture_json({{{-1.5, -0.5}, 0.5}, {{1.5, 1.0}, 0.5}})},
      {"semantic", mixture_json({{{-1.5, -0.5}, 0.5}, {{1.5, 1.0}, 0.5}})},
      {"semantic_b", mixture_json({{{-1.5, -0.5}, 0.5}, {{1.5, 1.0}, 0.5}})},
      {"visibility", {{"beta", 1.5}, {"gamma", 1.5}, {"lambda", 3.0}}},
      {"ablation", {{"sigmas", {0.0, 0.5, 1.0, 2.5}}, {"rhos", {0.2, 0.4, 1.0}}, {"priors", {1, 3, 5}}}},
      {"consistency", {{"seeds", 30}, {"identical_prior_threshold", 0.4}, {"rho_zero_factor", 2.5}}},
      {"pass_fraction", 0.9},
      {"output", ""},
  };
}

json scenario_defaults(const std::string& scenario) {
  if (scenario == "error_reduction")
    return {{"lattice", {{"extent", 32}, {"lo", -4.0}, {"hi", 4.0}}}, {"eta", 0.97}, {"signal_cutoff", 0.3}};
  if (scenario == "lipschitz")
    return {{"seeds", 10}, {"lattice", {{"extent", 32}, {"lo", -4.0}, {"hi", 4.0}}}, {"eta", 0.97}, {"signal_cutoff", 0.3}};
  if (scenario == "stability") return {{"seeds", 100}};
  if (scenario == "wasserstein") return json::object();
  if (scenario == "ambiguous")
    return {{"samples", 1024},
            {"steps", 50},
            {"lattice", {{"extent", 64}, {"lo", -5.0}, {"hi", 5.0}}},
            {"observation", mixture_json({{{1.0, 2.0}, 0.3}, {{1.0, -2.0}, 0.3}})},
            {"semantic", mixture_json({{{1.0, 2.0}, 0.3}})},
            {"semantic_b", mixture_json({{{1.0, -2.0}, 0.3}})}};
  if (scenario == "visibility") return {{"seeds", 10}, {"steps", 20}};
  if (scenario == "ablation") return {{"seeds", 3}, {"samples", 256}, {"steps", 50}};
  if (scenario == "consensus") return {{"seeds", 10}};
  throw ConfigError({"scenario: unknown scenario '" + scenario + "'"});
}

// Collects every violation before throwing.
class Validator {
 public:
  explicit Validator(const json& doc) : doc_(doc) {}

  template <typename T>
  T get(const std::string& path) {
    const json* node = &doc_;
    std::size_t start = 0;
    while (start <= path.size()) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object() || !node->contains(key)) {
        fail(path, "missing");
        return T{};
      }
      node = &(*node)[key];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    try {
      return node->get<T>();
    } catch (const json::exception&) {
      fail(path, "wrong type");
      return T{};
    }
  }

  void require(bool ok, const std::string& path, const std::string& what) {
    if (!ok) fail(path, what);
  }

  void fail(const std::string& path, const std::string& what) { violations_.push_back(path + ": " + what); }

  void absorb(const std::string& path, const std::exception& e) { fail(path, e.what()); }

  const std::vector<std::string>& violations() const { return violations_; }

 private:
  const json& doc_;
  std::vector<std::string> violations_;
};

void check_unknown_keys(const json& defaults, const json& user, const std::string& prefix, Validator& v) {
  if (!user.is_object()) return;
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) {
      v.fail(path, "unknown field");
      continue;
    }
    const json& d = defaults[key];
    if (d.is_object() && key != "observation" && key != "semantic" && key != "semantic_b")
      check_unknown_keys(d, value, path, v);
  }
}

bool finite_in(double x, double lo, double hi) { return std::isfinite(x) && x >= lo && x <= hi; }

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::invalid_argument(join_violations(violations)), violations_(std::move(violations)) {}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"error_reduction", "lipschitz", "stability", "wasserstein",
                                              "ambiguous",       "visibility", "ablation",  "consensus"};
  return names;
}

json default_config_json(const std::string& scenario) {
  json doc = common_defaults();
  doc.merge_patch(scenario_defaults(scenario));
  doc["scenario"] = scenario;
  return doc;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError({"override '" + assignment + "': expected key=value"});
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError({"override '" + assignment + "': empty key segment"});
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream o;
  o << std::hex;
  o.width(16);
  o.fill('0');
  o << h;
  return o.str();
}

std::string config_hash(const json& config) {
  json copy = config;
  copy.erase("output");
  return fnv1a_hex(copy.dump());
}

namespace {

bool same_mixture(const GaussianMixture& a, const GaussianMixture& b) {
  if (a.components().size() != b.components().size() || a.dimension() != b.dimension()) return false;
  for (std::size_t i = 0; i < a.components().size(); ++i) {
    const auto& x = a.components()[i];
    const auto& y = b.components()[i];
    if (x.weight != y.weight || x.std != y.std || x.mean != y.mean) return false;
  }
  return true;
}

}  // namespace

ExperimentConfig config_from_json(const json& user) {
  if (!user.is_object()) throw ConfigError({"config: expected a JSON object"});
  if (!user.contains("scenario") || !user["scenario"].is_string()) throw ConfigError({"scenario: missing"});
  const std::string scenario = user["scenario"].get<std::string>();
  const auto& names = scenario_names();
  if (std::find(names.begin(), names.end(), scenario) == names.end())
    throw ConfigError({"scenario: unknown scenario '" + scenario + "'"});

  json doc = default_config_json(scenario);
  Validator v(doc);
  check_unknown_keys(doc, user, "", v);
  doc.merge_patch(user);

  ExperimentConfig c;
  c.scenario = scenario;
  const auto seeds = v.get<std::int64_t>("seeds");
  v.require(seeds >= 1 && seeds <= 100000, "seeds", "must lie in [1, 100000]");
  c.seeds = static_cast<std::size_t>(std::max<std::int64_t>(seeds, 0));
  const auto offset = v.get<std::int64_t>("seed_offset");
  v.require(offset >= 0, "seed_offset", "must be non-negative");
  c.seed_offset = static_cast<std::uint64_t>(std::max<std::int64_t>(offset, 0));

  c.sigmas = v.get<std::vector<double>>("sigmas");
  v.require(!c.sigmas.empty(), "sigmas", "must be non-empty");
  for (double s : c.sigmas) v.require(finite_in(s, 0.0, 50.0), "sigmas", "entries must lie in [0, 50]");
  c.sigma = v.get<double>("sigma");
  v.require(finite_in(c.sigma, 0.0, 50.0), "sigma", "must lie in [0, 50]");
  c.rho = v.get<double>("rho");
  v.require(finite_in(c.rho, 0.0, 1.0), "rho", "must lie in [0, 1]");
  const auto steps = v.get<std::int64_t>("steps");
  v.require(steps >= 1 && steps <= 100000, "steps", "must lie in [1, 100000]");
  c.steps = static_cast<std::size_t>(std::max<std::int64_t>(steps, 1));
  const auto priors = v.get<std::int64_t>("priors");
  v.require(priors >= 1 && priors <= 64, "priors", "must lie in [1, 64]");
  c.priors = static_cast<std::size_t>(std::max<std::int64_t>(priors, 1));
  c.noise_amplitude = v.get<double>("noise_amplitude");
  v.require(finite_in(c.noise_amplitude, 0.0, 1e6), "noise_amplitude", "must lie in [0, 1e6]");
  const auto samples = v.get<std::int64_t>("samples");
  v.require(samples >= 1 && samples <= kMaxExactPoints, "samples", "must lie in [1, 4096]");
  c.samples = static_cast<std::size_t>(std::max<std::int64_t>(samples, 1));
  c.epsilon = v.get<double>("epsilon");
  v.require(std::isfinite(c.epsilon) && c.epsilon >= 0.0 && c.epsilon < 1.0, "epsilon", "must lie in [0, 1)");
  const auto dim = v.get<std::int64_t>("dimension");
  v.require(dim >= 1 && dim <= 16, "dimension", "must lie in [1, 16]");
  c.dimension = static_cast<std::size_t>(std::max<std::int64_t>(dim, 1));

  const auto extent = v.get<std::int64_t>("lattice.extent");
  v.require(extent >= 4 && extent <= 512, "lattice.extent", "must lie in [4, 512]");
  c.lattice.extent = static_cast<std::size_t>(std::max<std::int64_t>(extent, 4));
  c.lattice.lo = v.get<double>("lattice.lo");
  c.lattice.hi = v.get<double>("lattice.hi");
  const bool lattice_ok = std::isfinite(c.lattice.lo) && std::isfinite(c.lattice.hi) && c.lattice.lo < c.lattice.hi;
  v.require(lattice_ok, "lattice", "lo must be below hi");
  const double nyquist = lattice_ok && extent >= 4
                             ? 0.5 * static_cast<double>(c.lattice.extent - 1) / (c.lattice.hi - c.lattice.lo)
                             : std::numeric_limits<double>::infinity();
  c.eta = v.get<double>("eta");
  v.require(std::isfinite(c.eta) && c.eta > 0.0 && c.eta < nyquist, "eta",
            "must lie in (0, Nyquist) of the lattice (" + std::to_string(nyquist) + ")");
  c.signal_cutoff = v.get<double>("signal_cutoff");
  v.require(std::isfinite(c.signal_cutoff) && c.signal_cutoff > 0.0 && c.signal_cutoff < c.eta, "signal_cutoff",
            "must lie in (0, eta)");

  for (const char* key : {"observation", "semantic", "semantic_b"}) {
    try {
      GaussianMixture m = mixture_from_json(doc.at(key));
      const bool planar = c.scenario == "wasserstein" || c.scenario == "ambiguous" || c.scenario == "ablation";
      if (planar && m.dimension() != 2) v.fail(key, "mixture must be two-dimensional");
      if (std::string(key) == "observation") c.observation = std::move(m);
      else if (std::string(key) == "semantic") c.semantic = std::move(m);
      else c.semantic_b = std::move(m);
    } catch (const std::exception& e) {
      v.absorb(key, e);
    }
  }

  c.visibility.beta = v.get<double>("visibility.beta");
  c.visibility.gamma = v.get<double>("visibility.gamma");
  c.visibility.lambda = v.get<double>("visibility.lambda");
  for (const char* key : {"visibility.beta", "visibility.gamma", "visibility.lambda"})
    v.require(finite_in(v.get<double>(key), 1e-12, 1e6), key, "must be positive");

  c.ablation_sigmas = v.get<std::vector<double>>("ablation.sigmas");
  c.ablation_rhos = v.get<std::vector<double>>("ablation.rhos");
  const auto ab_priors = v.get<std::vector<std::int64_t>>("ablation.priors");
  v.require(!c.ablation_sigmas.empty() && !c.ablation_rhos.empty() && !ab_priors.empty(), "ablation",
            "grids must be non-empty");
  for (double s : c.ablation_sigmas) v.require(finite_in(s, 0.0, 50.0), "ablation.sigmas", "entries must lie in [0, 50]");
  for (double r : c.ablation_rhos) v.require(finite_in(r, 0.0, 1.0), "ablation.rhos", "entries must lie in [0, 1]");
  for (auto n : ab_priors) {
    v.require(n >= 1 && n <= 64, "ablation.priors", "entries must lie in [1, 64]");
    c.ablation_priors.push_back(static_cast<std::size_t>(std::max<std::int64_t>(n, 1)));
  }

  const auto cseeds = v.get<std::int64_t>("consistency.seeds");
  v.require(cseeds >= 1 && cseeds <= 100000, "consistency.seeds", "must lie in [1, 100000]");
  c.consistency_seeds = static_cast<std::size_t>(std::max<std::int64_t>(cseeds, 1));
  c.identical_prior_threshold = v.get<double>("consistency.identical_prior_threshold");
  v.require(finite_in(c.identical_prior_threshold, 1e-12, 1e6), "consistency.identical_prior_threshold",
            "must be positive");
  c.rho_zero_factor = v.get<double>("consistency.rho_zero_factor");
  v.require(finite_in(c.rho_zero_factor, 1e-12, 1e6), "consistency.rho_zero_factor", "must be positive");
  c.pass_fraction = v.get<double>("pass_fraction");
  v.require(std::isfinite(c.pass_fraction) && c.pass_fraction > 0.0 && c.pass_fraction <= 1.0, "pass_fraction",
            "must lie in (0, 1]");
  c.output = v.get<std::string>("output");
  if (scenario == "ambiguous" && same_mixture(c.semantic, c.semantic_b))
    v.fail("semantic_b", "must differ from semantic");

  if (!v.violations().empty()) throw ConfigError(v.violations());
  c.json = doc;
  return c;
}

bool Report::passed() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

json Report::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"experiment", r.experiment},
                         {"config_hash", r.config_hash},
                         {"seed", r.seed},
                         {"metric", r.metric},
                         {"variant", r.variant},
                         {"value", r.value}});
  json agg = json::array();
  for (const auto& a : aggregates)
    agg.push_back({{"metric", a.metric},
                   {"variant", a.variant},
                   {"median", a.median},
                   {"min", a.min},
                   {"max", a.max},
                   {"count", a.count}});
  json verdict_json = json::array();
  for (const auto& v : verdicts) verdict_json.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
  return {{"preamble",
           "Benchmark figures of the original 3D evaluation (Point-FID, CLIP scores, ablation tables) need "
           "pretrained 3D backbones and curated datasets and are not reproducible here. This tool never emits "
           "them; every verdict below is a property check on synthetic fields."},
          {"scenario", scenario},
          {"config_hash", config_hash},
          {"config", config},
          {"rows", rows_json},
          {"aggregates", agg},
          {"verdicts", verdict_json},
          {"artifacts", artifacts},
          {"subsampled", subsampled},
          {"passed", passed()}};
}

std::vector<Aggregate> aggregate_rows(const std::vector<MetricRow>& rows) {
  std::vector<Aggregate> out;
  std::vector<std::vector<double>> values;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const Aggregate& a) { return a.metric == r.metric && a.variant == r.variant; });
    if (it == out.end()) {
      out.push_back({r.metric, r.variant, 0, 0, 0, 0});
      values.emplace_back();
      it = out.end() - 1;
    }
    values[static_cast<std::size_t>(it - out.begin())].push_back(r.value);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& v = values[i];
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    out[i].count = n;
    out[i].min = v.front();
    out[i].max = v.back();
    out[i].median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  return out;
}

namespace {

// ---------------------------------------------------------------- helpers

struct RowSink {
  const ExperimentConfig& config;
  std::string hash;
  std::vector<MetricRow> rows;

  void add(std::uint64_t seed, std::string metric, std::string variant, double value) {
    rows.push_back({config.scenario, hash, seed, std::move(metric), std::move(variant), value});
  }
};

using Trajectories = std::vector<std::pair<std::string, std::string>>;

std::string trajectory_csv(const Trajectory& tr) {
  std::ostringstream o;
  write_trajectory_csv(tr, o);
  return o.str();
}

Lattice make_lattice(const ExperimentConfig& c, std::size_t dims) {
  return Lattice::cube(dims, c.lattice.extent, c.lattice.lo, c.lattice.hi);
}

std::vector<double> schedule_times(const Schedule& s) {
  std::vector<double> t(s.steps());
  for (std::size_t k = 0; k < s.steps(); ++k) t[k] = s.time(k);
  return t;
}

VelocityFn static_field(std::shared_ptr<const BandNoise> field) {
  return [field](const Vector& x, double) { return field->evaluate(x); };
}

VelocityFn sum_fields(std::vector<VelocityFn> fields) {
  if (fields.size() == 1) return fields.front();
  return [fields](const Vector& x, double t) {
    Vector acc = fields.front()(x, t);
    for (std::size_t i = 1; i < fields.size(); ++i) acc += fields[i](x, t);
    return Vector(acc / static_cast<double>(fields.size()));
  };
}

VelocityFn grid_function(std::shared_ptr<const GridField> grid) {
  return [grid](const Vector& x, double) { return grid->interpolate(x); };
}

// (seed, value) pairs for one metric/variant in row order.
std::vector<std::pair<std::uint64_t, double>> select(const std::vector<MetricRow>& rows, const std::string& metric,
                                                      const std::string& variant) {
  std::vector<std::pair<std::uint64_t, double>> out;
  for (const auto& r : rows)
    if (r.metric == metric && r.variant == variant) out.emplace_back(r.seed, r.value);
  return out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> values_of(const std::vector<std::pair<std::uint64_t, double>>& pairs) {
  std::vector<double> out;
  for (const auto& p : pairs) out.push_back(p.second);
  return out;
}

// Counts seeds where lhs < rhs (paired by seed).
std::pair<std::size_t, std::size_t> count_less(const std::vector<MetricRow>& rows, const std::string& metric,
                                               const std::string& lhs, const std::string& rhs, double slack = 0.0) {
  const auto a = select(rows, metric, lhs);
  const auto b = select(rows, metric, rhs);
  std::size_t hits = 0, total = 0;
  for (const auto& [seed, va] : a) {
    const auto it = std::find_if(b.begin(), b.end(), [&](const auto& p) { return p.first == seed; });
    if (it == b.end()) continue;
    ++total;
    if (va < it->second + slack) ++hits;
  }
  return {hits, total};
}

std::string fraction_detail(std::size_t hits, std::size_t total) {
  return std::to_string(hits) + "/" + std::to_string(total);
}

std::size_t required(double fraction, std::size_t total) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total) - 1e-9));
}

// ---------------------------------------------------------- error reduction

struct NoisyLattice {
  std::shared_ptr<const BandNoise> signal, noise;
  GridField low, noise_grid, noisy;
};

NoisyLattice noisy_lattice(const ExperimentConfig& c, const Lattice& lat, std::uint64_t seed) {
  NoisyLattice n;
  n.signal = std::make_shared<BandNoise>(make_low_band_signal(lat, 2, c.signal_cutoff, 1.0, mix_seed(seed, 1)));
  n.noise = std::make_shared<BandNoise>(lat, 2, c.eta, c.noise_amplitude, mix_seed(seed, 2));
  n.low = sample_on_grid(static_field(n.signal), 2, lat, 0.0);
  n.noise_grid = sample_on_grid(static_field(n.noise), 2, lat, 0.0);
  n.noisy = axpby(1.0, n.low, 1.0, n.noise_grid);
  return n;
}

void run_error_reduction(const ExperimentConfig& c, RowSink& sink, Trajectories& trajs) {
  const Lattice lat = make_lattice(c, 2);
  const Schedule schedule(c.steps, 0.0, c.epsilon);
  for (std::size_t i = 0; i < c.seeds; ++i) {
    const std::uint64_t seed = c.seed_offset + i;
    const NoisyLattice n = noisy_lattice(c, lat, seed);
    sink.add(seed, "noise_high_fraction", "noise", band_energy(n.noise_grid, c.eta).high_fraction());
    sink.add(seed, "field_error", "raw", l2_distance(n.low, n.noisy));

    const VelocityFn oracle = static_field(n.signal);
    const Vector x0 = standard_normal_draws(1, 2, mix_seed(seed, 3)).row(0).transpose();
    const Trajectory ref = integrate({oracle, oracle, 0.0, std::nullopt}, schedule, x0, SamplingMode::observation_only);
    auto raw_grid = std::make_shared<const GridField>(n.noisy);
    sink.add(seed, "path_error_sem", "raw", path_error(ref, oracle, grid_function(raw_grid), ErrorKind::sem).value);
    for (double sigma : c.sigmas) {
      auto relaxed = std::make_shared<const GridField>(relax_field(n.noisy, sigma));
      sink.add(seed, "field_error", label("sigma", sigma), l2_distance(n.low, *relaxed));
      sink.add(seed, "path_error_sem", label("sigma", sigma),
               path_error(ref, oracle, grid_function(relaxed), ErrorKind::sem).value);
    }
    if (i == 0) trajs.emplace_back("reference_seed" + std::to_string(seed), trajectory_csv(ref));
  }
}

void run_lipschitz(const ExperimentConfig& c, RowSink& sink, Trajectories&) {
  const Lattice lat = make_lattice(c, 2);
  for (std::size_t i = 0; i < c.seeds; ++i) {
    const std::uint64_t seed = c.seed_offset + i;
    const NoisyLattice n = noisy_lattice(c, lat, seed);
    sink.add(seed, "lipschitz", "raw", estimate_lipschitz(n.noisy));
    for (double sigma : c.sigmas)
      sink.add(seed, "lipschitz", label("sigma", sigma), estimate_lipschitz(relax_field(n.noisy, sigma)));
  }
}

// --------------------------------------------------------------- stability

struct AffineField {
  Matrix a;
  Vector b;
  VelocityFn fn() const {
    return [a = a, b = b](const Vector& x, double) { return Vector(a * x + b); };
  }
  double lipschitz() const { return Eigen::JacobiSVD<Matrix>(a).singularValues()(0); }
};

AffineField random_affine(std::mt19937_64& rng, std::size_t d, double scale) {
  std::normal_distribution<double> normal(0.0, scale / std::sqrt(static_cast<double>(d)));
  AffineField f{Matrix(d, d), Vector(d)};
  for (Eigen::Index j = 0; j < f.a.cols(); ++j)
    for (Eigen::Index i = 0; i < f.a.rows(); ++i) f.a(i, j) = normal(rng);
  for (Eigen::Index i = 0; i < f.b.size(); ++i) f.b[i] = normal(rng);
  return f;
}

AffineField perturb(const AffineField& f, const AffineField& delta) { return {f.a + delta.a, f.b + delta.b}; }

void run_stability(const ExperimentConfig& c, RowSink& sink, Trajectories& trajs) {
  const Schedule schedule(c.steps, c.rho, c.epsilon);
  const std::size_t d = c.dimension;
  for (std::size_t i = 0; i < c.seeds; ++i) {
    const std::uint64_t seed = c.seed_offset + i;
    std::mt19937_64 rng(mix_seed(seed, 1));
    const AffineField obs = random_affine(rng, d, 1.0);
    const AffineField sem = random_affine(rng, d, 1.0);
    const AffineField obs_hat = perturb(obs, random_affine(rng, d, 0.2));
    const AffineField sem_hat = perturb(sem, random_affine(rng, d, 0.2));
    const Vector x0 = standard_normal_draws(1, d, mix_seed(seed, 2)).row(0).transpose();

    const Trajectory ref = integrate({obs.fn(), sem.fn(), 0.0, std::nullopt}, schedule, x0);
    const Trajectory est = integrate({obs_hat.fn(), sem_hat.fn(), 0.0, std::nullopt}, schedule, x0);
    StabilityBoundInputs in;
    in.lipschitz_obs = obs_hat.lipschitz();
    in.lipschitz_prior = sem_hat.lipschitz();
    in.condition_gap = 0.0;
    in.alphas.assign(schedule.alphas().begin(), schedule.alphas().begin() + static_cast<std::ptrdiff_t>(c.steps));
    in.dt = schedule.dt();
    in.e_obs = path_error(ref, obs.fn(), obs_hat.fn(), ErrorKind::obs);
    in.e_sem = path_error(ref, sem.fn(), sem_hat.fn(), ErrorKind::sem);

    std::size_t violations = 0;
    double max_div = 0.0, max_ratio = 0.0;
    for (std::size_t k = 0; k <= c.steps; ++k) {
      const double div = (ref.states[k] - est.states[k]).norm();
      const double bound = stability_bound(in, k);
      if (div > bound) ++violations;
      max_div = std::max(max_div, div);
      if (bound > 0.0) max_ratio = std::max(max_ratio, div / bound);
    }
    sink.add(seed, "violations", "bound", static_cast<double>(violations));
    sink.add(seed, "max_divergence", "relaxflow", max_div);
    sink.add(seed, "max_divergence_to_bound", "relaxflow", max_ratio);
    sink.add(seed, "final_bound", "relaxflow", stability_bound(in, c.steps));
    sink.add(seed, "path_error_obs", "relaxflow", in.e_obs.value);
    sink.add(seed, "path_error_sem", "relaxflow", in.e_sem.value);
    if (i == 0) {
      trajs.emplace_back("reference_seed" + std::to_string(seed), trajectory_csv(ref));
      trajs.emplace_back("estimate_seed" + std::to_string(seed), trajectory_csv(est));
    }
  }
}

// -------------------------------------------------------------- wasserstein

double w2(const Matrix& a, const Matrix& b) { return wasserstein2_exact(PointSet(a), PointSet(b)); }

void run_wasserstein(const ExperimentConfig& c, RowSink& sink, Trajectories& trajs) {
  const Lattice lat = make_lattice(c, 2);
  const Schedule schedule(c.steps, c.rho, c.epsilon);
  const auto times = schedule_times(schedule);
  const VelocityFn obs_oracle = AnalyticFlowField(c.observation).as_function();
  const VelocityFn sem_oracle = AnalyticFlowField(c.semantic, FieldRole::semantic).as_function();
  for (std::size_t i = 0; i < c.seeds; ++i) {
    const std::uint64_t seed = c.seed_offset + i;
    const PerturbedField noisy =
        inject_band_noise(AnalyticFlowField(c.observation), lat, c.eta, c.noise_amplitude, mix_seed(seed, 2));
    const VelocityFn noisy_fn = noisy.as_function();
    const VelocityFn relaxed = RelaxedGridField(noisy_fn, 2, lat, c.sigma, times).as_function();
    const Matrix x0 = standard_normal_draws(c.samples, 2, mix_seed(seed, 3));

    const BranchPair truth{obs_oracle, sem_oracle, 0.0, std::nullopt};
    const BranchPair standard{noisy_fn, noisy_fn, 0.0, std::nullopt};
    const BranchPair relaxflow{noisy_fn, relaxed, c.sigma, std::nullopt};
    const Matrix t = batch_integrate(truth, schedule, x0, SamplingMode::relaxflow);
    const Matrix s = batch_integrate(standard, schedule, x0, SamplingMode::standard);
    const Matrix r = batch_integrate(relaxflow, schedule, x0, SamplingMode::relaxflow);
    sink.add(seed, "w2", "standard", w2(t, s));
    sink.add(seed, "w2", "relaxflow", w2(t, r));
    if (i == 0) {
      const Vector first = x0.row(0).transpose();
      trajs.emplace_back("truth_seed" + std::to_string(seed), trajectory_csv(integrate(truth, schedule, first)));
      trajs.emplace_back("standard_seed" + std::to_string(seed),
                         trajectory_csv(integrate(standard, schedule, first, SamplingMode::standard)));
      trajs.emplace_back("relaxflow_seed" + std::to_string(seed), trajectory_csv(integrate(relaxflow, schedule, first)));
    }
  }
}

// ---------------------------------------------------------------- ambiguous

Matrix mixture_samples(const GaussianMixture& m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m.dimension()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = m.sample(rng).transpose();
  return out;
}

BranchPair relaxed_branch(const ExperimentConfig& c, const GaussianMixture& prior, const Lattice& lat,
                          std::span<const double> times) {
  const VelocityFn source = AnalyticFlowField(prior, FieldRole::semantic).as_function();
  VelocityFn relaxed = c.sigma > 0.0 ? RelaxedGridField(source, 2, lat, c.sigma, times).as_function() : source;
  return {AnalyticFlowField(c.observation).as_function(), std::move(relaxed), c.sigma, std::nullopt};
}

void run_ambiguous(const ExperimentConfig& c, RowSink& sink, Trajectories& trajs) {
  const AmbiguousBranches branches = scenario_ambiguous(c);
  const Schedule schedule(c.steps, c.rho, c.epsilon);
  for (std::size_t i = 0; i < c.seeds; ++i) {
    const std::uint64_t seed = c.seed_offset + i;
    const Matrix under_a = batch_integrate(branches.under_a, schedule, standard_normal_draws(c.samples, 2, mix_seed(seed, 3)));
    const Matrix under_b = batch_integrate(branches.under_b, schedule, standard_normal_draws(c.samples, 2, mix_seed(seed, 4)));
    const Matrix target_a = mixture_samples(c.semantic, c.samples, mix_seed(seed, 5));
    const Matrix target_b = mixture_samples(c.semantic_b, c.samples, mix_seed(seed, 6));
    sink.add(seed, "w2", "under_a_to_target_a", w2(under_a, target_a));
    sink.add(seed, "w2", "under_b_to_target_a", w2(under_b, target_a));
    sink.add(seed, "w2", "under_b_to_target_b", w2(under_b, target_b));
    sink.add(seed, "w2", "under_a_to_target_b", w2(under_a, target_b));
    if (i == 0) {
      const Vector x0 = standard_normal_draws(1, 2, mix_seed(seed, 3)).row(0).transpose();
      trajs.emplace_back("under_a_seed" + std::to_string(seed), trajectory_csv(integrate(branches.under_a, schedule, x0)));
      trajs.emplace_back("under_b_seed" + std::to_string(seed), trajectory_csv(integrate(branches.under_b, schedule, x0)));
    }
  }

  // Consistency checks: identical priors, and a gate that closes after step 0.
  const Schedule closed(c.steps, 0.0, c.epsilon);
  for (std::size_t i = 0; i < c.consistency_seeds; ++i) {
    const std::uint64_t seed = c.seed_offset + i;
    const Matrix x0a = standard_normal_draws(c.samples, 2, mix_seed(seed, 3));
    const Matrix x0b = standard_normal_draws(c.samples, 2, mix_seed(seed, 4));
    sink.add(seed, "w2_between", "identical_priors",
             w2(batch_integrate(branches.under_a, schedule, x0a), batch_integrate(branches.under_a, schedule, x0b)));
    sink.add(seed, "w2_between", "rho_zero",
             w2(batch_integrate(branches.under_a, closed, x0a), batch_integrate(branches.under_b, closed, x0b)));
  }
}

// --------------------------------------------------------------- visibility

Camera scene_camera() {
  Camera cam;
  cam.intrinsics = {100.0, 100.0, 64.0, 64.0};
  cam.translation = Eigen::Vector3d(-32.0, -32.0, 100.0);
  cam.width = 128;
  cam.height = 128;
  return cam;
}

struct Scene {
  VoxelGrid with_occluder;
  VoxelGrid without_occluder;
};

Scene random_scene(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(0.3);
  std::uniform_int_distribution<int> depth(15, 60);
  Scene s;
  // One depth per scene keeps the occluder-free projections in separate
  // dilation windows.
  const int z = depth(rng);
  for (int x = 2; x < 64; x += 4)
    for (int y = 2; y < 64; y += 4)
      if (keep(rng)) s.without_occluder.occupied.push_back({x, y, z});
  s.with_occluder = s.without_occluder;
  for (int x = 20; x < 44; ++x)
    for (int y = 20; y < 44; ++y) s.with_occluder.occupied.push_back({x, y, 5});
  return s;
}

// Per-voxel 3D latent blocks relaxing toward voxel-specific targets.
BranchPair voxel_branches(std::size_t voxels, std::uint64_t seed, std::vector<double> weights) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector a_obs(static_cast<Eigen::Index>(3 * voxels)), a_prior(static_cast<Eigen::Index>(3 * voxels));
  for (Eigen::Index i = 0; i < a_obs.size(); ++i) {
    a_obs[i] = normal(rng);
    a_prior[i] = normal(rng);
  }
  auto toward = [](Vector target) { return [target](const Vector& x, double) { return Vector(target - x); }; };
  return {toward(a_obs), toward(a_prior), 0.0, std::move(weights)};
}

// Occlusion margin and weight from a direct scan over all voxels.
double brute_force_weight(const VoxelGrid& grid, const Camera& cam, std::size_t index, int kernel, double sigma_d,
                          double lambda) {
  auto pixel = [&](const Eigen::Vector3d& p) {
    const double u = cam.intrinsics.cx - cam.intrinsics.fx * p.x() / p.z();
    const double v = cam.intrinsics.cy - cam.intrinsics.fy * p.y() / p.z();
    return std::array<long, 2>{std::lround(u), std::lround(v)};
  };
  auto camera_point = [&](const VoxelIndex& c) {
    Eigen::Vector3d p;
    for (int a = 0; a < 3; ++a) {
      double r = 0.0;
      for (int b = 0; b < 3; ++b) r += cam.rotation(a, b) * c[static_cast<std::size_t>(b)];
      p[a] = cam.scale[a] * r + cam.translation[a];
    }
    return p;
  };
  const Eigen::Vector3d me = camera_point(grid.occupied[index]);
  if (!(me.z() > 0.0)) return 1.0;
  const auto px = pixel(me);
  if (px[0] < 0 || px[1] < 0 || px[0] >= cam.width || px[1] >= cam.height) return 1.0;
  const long r = kernel / 2;
  double depth = std::numeric_limits<double>::infinity();
  for (const auto& other : grid.occupied) {
    const Eigen::Vector3d p = camera_point(other);
    if (!(p.z() > 0.0)) continue;
    const auto q = pixel(p);
    if (q[0] < 0 || q[1] < 0 || q[0] >= cam.width || q[1] >= cam.height) continue;
    if (std::labs(q[0] - px[0]) <= r && std::labs(q[1] - px[1]) <= r) depth = std::min(depth, p.z());
  }
  if (std::isinf(depth)) return 1.0;
  const double margin = std::max(me.z() - depth, 0.0) / sigma_d;
  return std::max(std::exp(-lambda * margin * margin), std::numeric_limits<double>::min());
}

}  // namespace

std::vector<MetricRow> scenario_visibility(const ExperimentConfig& c) {
  RowSink sink{c, config_hash(c.json), {}};
  const Camera cam = scene_camera();
  const Schedule schedule(c.steps, c.rho, c.epsilon);
  for (std::size_t i = 0; i < c.seeds; ++i) {
    const std::uint64_t seed = c.seed_offset + i;
    const Scene scene = random_scene(mix_seed(seed, 1));

    // Occluded scene: visible voxels follow the observation branch exactly,
    // deep voxels the alpha-gated blend, and every blended velocity matches
    // an independent recomputation bitwise.
    const VisibilityWeights vis = compute_visibility(scene.with_occluder, cam, c.visibility);
    const std::size_t n = scene.with_occluder.occupied.size();
    const BranchPair branches = voxel_branches(n, mix_seed(seed, 2), vis.weights);
    const Vector x0 = standard_normal_draws(1, 3 * n, mix_seed(seed, 3)).row(0).transpose();
    const Trajectory tr = integrate(branches, schedule, x0);

    double visible_dev = 0.0, deep_dev = 0.0;
    std::size_t occluded = 0, mismatches = 0;
    std::vector<double> brute(n);
    for (std::size_t v = 0; v < n; ++v)
      brute[v] = brute_force_weight(scene.with_occluder, cam, v, vis.kernel, vis.sigma_d, c.visibility.lambda);
    for (std::size_t v = 0; v < n; ++v) {
      const double m = vis.weights[v];
      if (m < 0.5) ++occluded;
      for (std::size_t k = 0; k < schedule.steps(); ++k) {
        const auto blk = [&](const Vector& x) { return x.segment(static_cast<Eigen::Index>(3 * v), 3); };
        const Vector vo = blk(tr.v_obs[k]), vp = blk(tr.v_prior[k]), used = blk(tr.velocities[k]);
        const double a = tr.alphas[k];
        if (m == 1.0) visible_dev = std::max(visible_dev, (used - vo).cwiseAbs().maxCoeff());
        if (1.0 - m == 1.0) deep_dev = std::max(deep_dev, (used - ((1.0 - a) * vo + a * vp)).cwiseAbs().maxCoeff());
        const Vector expected = vo + ((1.0 - brute[v]) * a) * (vp - vo);
        for (int j = 0; j < 3; ++j)
          if (expected[j] != used[j]) {
            ++mismatches;
            break;
          }
      }
    }
    sink.add(seed, "voxels", "occluded_scene", static_cast<double>(n));
    sink.add(seed, "occluded_voxels", "occluded_scene", static_cast<double>(occluded));
    sink.add(seed, "visible_max_deviation", "occluded_scene", visible_dev);
    sink.add(seed, "deep_blend_max_deviation", "occluded_scene", deep_dev);
    sink.add(seed, "blend_mismatches", "occluded_scene", static_cast<double>(mismatches));

    // Occluder removed: every weight is 1 and the run equals observation-only.
    const VisibilityWeights free = compute_visibility(scene.without_occluder, cam, c.visibility);
    const std::size_t nf = scene.without_occluder.occupied.size();
    const BranchPair free_branches = voxel_branches(nf, mix_seed(seed, 2), free.weights);
    const Vector xf = standard_normal_draws(1, 3 * nf, mix_seed(seed, 3)).row(0).transpose();
    const Trajectory relaxed = integrate(free_branches, schedule, xf);
    const Trajectory observed = integrate(free_branches, schedule, xf, SamplingMode::observation_only);
    double diff = 0.0;
    for (std::size_t k = 0; k < relaxed.states.size(); ++k)
      diff = std::max(diff, (relaxed.states[k] - observed.states[k]).cwiseAbs().maxCoeff());
    sink.add(seed, "min_weight", "no_occluder", *std::min_element(free.weights.begin(), free.weights.end()));
    sink.add(seed, "max_state_difference", "no_occluder", diff);
  }

  // One voxel directly behind another at a margin of exactly two sigma_d.
  Camera thin = cam;
  const double s_max = 1.0;
  const int res = 64;
  thin.scale = Eigen::Vector3d(s_max, s_max, 2.0 * c.visibility.beta * s_max / res);
  VoxelGrid pair;
  pair.resolution = res;
  pair.occupied = {{32, 32, 10}, {32, 32, 11}};
  const VisibilityWeights pw = compute_visibility(pair, thin, c.visibility);
  sink.add(c.seed_offset, "two_sigma_gate", "step0", (1.0 - pw.weights[1]) * schedule.alpha(0));
  sink.add(c.seed_offset, "two_sigma_margin_ratio", "step0", pw.margins[1] / pw.sigma_d);
  return sink.rows;
}

AmbiguousBranches scenario_ambiguous(const ExperimentConfig& c) {
  if (same_mixture(c.semantic, c.semantic_b))
    throw ConfigError({"semantic_b: must differ from semantic"});
  if (c.observation.dimension() != 2 || c.semantic.dimension() != 2 || c.semantic_b.dimension() != 2)
    throw std::invalid_argument("scenario_ambiguous: mixtures must be two-dimensional");
  const Lattice lat = make_lattice(c, 2);
  const Schedule schedule(c.steps, c.rho, c.epsilon);
  const auto times = schedule_times(schedule);
  return {relaxed_branch(c, c.semantic, lat, times), relaxed_branch(c, c.semantic_b, lat, times)};
}

namespace {

// ----------------------------------------------------------------- ablation

std::string cell_label(double sigma, double rho, std::size_t priors) {
  std::ostringstream o;
  o << "sigma=" << sigma << ",rho=" << rho << ",N=" << priors;
  return o.str();
}

void run_ablation(const ExperimentConfig& c, RowSink& sink, Trajectories&) {
  const Lattice lat = make_lattice(c, 2);
  const VelocityFn oracle = AnalyticFlowField(c.observation).as_function();
  for (std::size_t i = 0; i < c.seeds; ++i) {
    const std::uint64_t seed = c.seed_offset + i;
    const std::size_t max_priors = *std::max_element(c.ablation_priors.begin(), c.ablation_priors.end());
    std::vector<VelocityFn> noisy;
    for (std::size_t p = 0; p < max_priors; ++p)
      noisy.push_back(inject_band_noise(AnalyticFlowField(c.observation), lat, c.eta, c.noise_amplitude,
                                        mix_seed(seed, 100 + p))
                          .as_function());
    const Matrix x0 = standard_normal_draws(c.samples, 2, mix_seed(seed, 3));
    for (double rho : c.ablation_rhos) {
      const Schedule schedule(c.steps, rho, c.epsilon);
      const auto times = schedule_times(schedule);
      const Matrix truth = batch_integrate({oracle, oracle, 0.0, std::nullopt}, schedule, x0);
      const Matrix standard = batch_integrate({noisy[0], noisy[0], 0.0, std::nullopt}, schedule, x0, SamplingMode::standard);
      sink.add(seed, "w2", label("standard,rho", rho), w2(truth, standard));
      for (double sigma : c.ablation_sigmas)
        for (std::size_t priors : c.ablation_priors) {
          const VelocityFn consensus = sum_fields({noisy.begin(), noisy.begin() + static_cast<std::ptrdiff_t>(priors)});
          const VelocityFn prior =
              sigma > 0.0 ? RelaxedGridField(consensus, 2, lat, sigma, times).as_function() : consensus;
          const Matrix r = batch_integrate({noisy[0], prior, sigma, std::nullopt}, schedule, x0);
          sink.add(seed, "w2", cell_label(sigma, rho, priors), w2(truth, r));
          if (sigma == 0.0 && priors == 1)
            sink.add(seed, "max_abs_difference_to_standard", label("rho", rho), (r - standard).cwiseAbs().maxCoeff());
        }
    }
  }
}

// ---------------------------------------------------------------- consensus

void run_consensus(const ExperimentConfig& c, RowSink& sink, Trajectories&) {
  constexpr std::size_t state_dim = 2, cond_dim = 4, tokens = 6;
  for (std::size_t i = 0; i < c.seeds; ++i) {
    const std::uint64_t seed = c.seed_offset + i;
    const ToyVelocityHead head(state_dim, cond_dim, mix_seed(seed, 1));
    const Matrix prior_tokens = standard_normal_draws(tokens, cond_dim, mix_seed(seed, 2));
    const Vector x = standard_normal_draws(1, state_dim, mix_seed(seed, 3)).row(0).transpose();
    std::mt19937_64 rng(mix_seed(seed, 4));
    const double t = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const TokenSequence single(prior_tokens, TokenOrigin::prior(0));
    for (double sigma : {0.0, c.sigma}) {
      const Vector base = head.velocity(x, t, single, sigma);
      for (std::size_t n : c.ablation_priors) {
        std::vector<TokenSequence> copies;
        std::vector<TokenSequence> distinct;
        for (std::size_t p = 0; p < n; ++p) {
          copies.emplace_back(prior_tokens, TokenOrigin::prior(static_cast<int>(p)));
          distinct.emplace_back(p == 0 ? prior_tokens : Matrix(standard_normal_draws(tokens, cond_dim, mix_seed(seed, 10 + p))),
                                TokenOrigin::prior(static_cast<int>(p)));
        }
        const std::string tag = "N=" + std::to_string(n) + "," + label("sigma", sigma);
        sink.add(seed, "identical_max_abs_difference", tag,
                 (head.velocity(x, t, concat_priors(copies), sigma) - base).cwiseAbs().maxCoeff());
        sink.add(seed, "distinct_velocity_shift", tag, (head.velocity(x, t, concat_priors(distinct), sigma) - base).norm());
      }
    }
  }
}

// ----------------------------------------------------------------- verdicts

Verdict all_rows(const std::vector<MetricRow>& rows, const std::string& name, const std::string& metric,
                 const std::string& variant, const std::function<bool(double)>& ok) {
  const auto sel = select(rows, metric, variant);
  std::size_t hits = 0;
  for (const auto& p : sel) hits += ok(p.second) ? 1 : 0;
  return {name, !sel.empty() && hits == sel.size(), fraction_detail(hits, sel.size())};
}

Verdict fraction_less(const std::vector<MetricRow>& rows, const std::string& name, const std::string& metric,
                      const std::string& lhs, const std::string& rhs, double fraction) {
  const auto [hits, total] = count_less(rows, metric, lhs, rhs);
  return {name, total > 0 && hits >= required(fraction, total),
          fraction_detail(hits, total) + " (need " + std::to_string(required(fraction, total)) + ")"};
}

}  // namespace

std::vector<Verdict> verdicts_from_rows(const ExperimentConfig& c, const std::vector<MetricRow>& rows) {
  std::vector<Verdict> out;
  const std::string& s = c.scenario;
  if (s == "error_reduction") {
    out.push_back(all_rows(rows, "noise_high_fraction>=0.95", "noise_high_fraction", "noise",
                           [](double v) { return v >= 0.95; }));
    for (double sigma : c.sigmas) {
      const std::string var = label("sigma", sigma);
      if (sigma == 0.0) {
        for (const char* metric : {"field_error", "path_error_sem"}) {
          const auto a = select(rows, metric, var);
          const auto b = select(rows, metric, "raw");
          bool ok = a.size() == b.size() && !a.empty();
          for (std::size_t i = 0; ok && i < a.size(); ++i) ok = std::abs(a[i].second - b[i].second) <= 1e-12;
          out.push_back({std::string(metric) + " identity at sigma=0", ok, std::to_string(a.size()) + " seeds"});
        }
        continue;
      }
      out.push_back(fraction_less(rows, "field_error relaxed<raw " + var, "field_error", var, "raw", 1.0));
      out.push_back(fraction_less(rows, "path_error_sem relaxed<raw " + var, "path_error_sem", var, "raw", 1.0));
    }
  } else if (s == "lipschitz") {
    for (double sigma : c.sigmas) {
      const std::string var = label("sigma", sigma);
      const auto [hits, total] = count_less(rows, "lipschitz", var, "raw", 1e-9);
      out.push_back({"lipschitz relaxed<=raw+1e-9 " + var, total > 0 && hits == total, fraction_detail(hits, total)});
    }
  } else if (s == "stability") {
    out.push_back(all_rows(rows, "divergence<=bound at every step", "violations", "bound",
                           [](double v) { return v == 0.0; }));
  } else if (s == "wasserstein") {
    out.push_back(fraction_less(rows, "w2 relaxflow<standard", "w2", "relaxflow", "standard", c.pass_fraction));
  } else if (s == "ambiguous") {
    out.push_back(fraction_less(rows, "target A: under A closer than under B", "w2", "under_a_to_target_a",
                                "under_b_to_target_a", c.pass_fraction));
    out.push_back(fraction_less(rows, "target B: under B closer than under A", "w2", "under_b_to_target_b",
                                "under_a_to_target_b", c.pass_fraction));
    const double identical = median_of(values_of(select(rows, "w2_between", "identical_priors")));
    const double rho_zero = median_of(values_of(select(rows, "w2_between", "rho_zero")));
    out.push_back({"identical priors median w2 < threshold", identical < c.identical_prior_threshold,
                   std::to_string(identical) + " vs " + std::to_string(c.identical_prior_threshold)});
    out.push_back({"rho=0 median w2 < factor x identical-prior median", rho_zero < c.rho_zero_factor * identical,
                   std::to_string(rho_zero) + " vs " + std::to_string(c.rho_zero_factor * identical)});
  } else if (s == "visibility") {
    out.push_back(all_rows(rows, "visible voxels follow the observation branch exactly", "visible_max_deviation",
                           "occluded_scene", [](double v) { return v == 0.0; }));
    out.push_back(all_rows(rows, "deep voxels follow the gated blend", "deep_blend_max_deviation", "occluded_scene",
                           [](double v) { return v <= 1e-12; }));
    out.push_back(all_rows(rows, "blend matches independent recomputation bitwise", "blend_mismatches",
                           "occluded_scene", [](double v) { return v == 0.0; }));
    out.push_back(all_rows(rows, "scene contains occluded voxels", "occluded_voxels", "occluded_scene",
                           [](double v) { return v > 0.0; }));
    out.push_back(all_rows(rows, "no occluder: all weights 1", "min_weight", "no_occluder",
                           [](double v) { return v == 1.0; }));
    out.push_back(all_rows(rows, "no occluder: equals observation-only", "max_state_difference", "no_occluder",
                           [](double v) { return v == 0.0; }));
    const double expected = 1.0 - std::exp(-4.0 * c.visibility.lambda);
    out.push_back(all_rows(rows, "two-sigma margin gate", "two_sigma_gate", "step0",
                           [expected](double v) { return std::abs(v - expected) <= 1e-9; }));
  } else if (s == "ablation") {
    bool finite = !rows.empty();
    for (const auto& r : rows) finite = finite && std::isfinite(r.value);
    out.push_back({"all cells finite", finite, std::to_string(rows.size()) + " rows"});
    if (std::find(c.ablation_sigmas.begin(), c.ablation_sigmas.end(), 0.0) != c.ablation_sigmas.end() &&
        std::find(c.ablation_priors.begin(), c.ablation_priors.end(), 1) != c.ablation_priors.end())
      for (double rho : c.ablation_rhos)
        out.push_back(all_rows(rows, "sigma=0,N=1 equals standard flow " + label("rho", rho),
                               "max_abs_difference_to_standard", label("rho", rho), [](double v) { return v == 0.0; }));
  } else if (s == "consensus") {
    std::set<std::string> variants;
    for (const auto& r : rows)
      if (r.metric == "identical_max_abs_difference") variants.insert(r.variant);
    for (const auto& var : variants)
      out.push_back(all_rows(rows, "identical priors reproduce single prior " + var, "identical_max_abs_difference",
                             var, [](double v) { return v <= 1e-12; }));
  }
  return out;
}

Report run(const ExperimentConfig& config) {
  RowSink sink{config, config_hash(config.json), {}};
  Trajectories trajs;
  const std::string& s = config.scenario;
  if (s == "error_reduction") run_error_reduction(config, sink, trajs);
  else if (s == "lipschitz") run_lipschitz(config, sink, trajs);
  else if (s == "stability") run_stability(config, sink, trajs);
  else if (s == "wasserstein") run_wasserstein(config, sink, trajs);
  else if (s == "ambiguous") run_ambiguous(config, sink, trajs);
  else if (s == "visibility") sink.rows = scenario_visibility(config);
  else if (s == "ablation") run_ablation(config, sink, trajs);
  else if (s == "consensus") run_consensus(config, sink, trajs);
  else throw ConfigError({"scenario: unknown scenario '" + s + "'"});

  Report report;
  report.scenario = s;
  report.config_hash = sink.hash;
  report.config = config.json;
  report.rows = std::move(sink.rows);
  report.aggregates = aggregate_rows(report.rows);
  report.verdicts = verdicts_from_rows(config, report.rows);

  std::ostringstream metrics;
  write_metrics_csv(report.rows, metrics);
  report.artifacts["metrics.csv"] = fnv1a_hex(metrics.str());
  for (const auto& [name, text] : trajs) report.artifacts["trajectories/" + name + ".csv"] = fnv1a_hex(text);

  if (!config.output.empty()) {
    std::filesystem::create_directories(config.output / "trajectories");
    auto write = [](const std::filesystem::path& p, const std::string& text) {
      std::ofstream out(p, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + p.string());
      out << text;
    };
    write(config.output / "metrics.csv", metrics.str());
    for (const auto& [name, text] : trajs) write(config.output / "trajectories" / (name + ".csv"), text);
    write(config.output / "report.json", report.to_json().dump(2) + "\n");
  }
  return report;
}

}  // namespace relaxflow
