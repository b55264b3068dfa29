#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "postcon/experiment.hpp"

namespace postcon {

using nlohmann::json;

namespace {

std::string join_path(const std::string& prefix, std::string_view key) {
  return prefix.empty() ? std::string(key) : prefix + "." + std::string(key);
}

void convert(const json& v, const std::string& path, double& out) {
  if (!v.is_number()) throw ConfigError(path, path + " must be a number");
  out = v.get<double>();
  if (!std::isfinite(out)) throw ConfigError(path, path + " must be finite");
}

void convert(const json& v, const std::string& path, std::size_t& out) {
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError(path, path + " must be a non-negative integer");
  out = v.get<std::size_t>();
}

void convert(const json& v, const std::string& path, int& out) {
  if (!v.is_number_integer()) throw ConfigError(path, path + " must be an integer");
  out = v.get<int>();
}

void convert(const json& v, const std::string& path, bool& out) {
  if (!v.is_boolean()) throw ConfigError(path, path + " must be true or false");
  out = v.get<bool>();
}

void convert(const json& v, const std::string& path, std::string& out) {
  if (!v.is_string()) throw ConfigError(path, path + " must be a string");
  out = v.get<std::string>();
}

void convert(const json& v, const std::string& path, std::optional<double>& out) {
  if (v.is_null()) {
    out.reset();
    return;
  }
  double d = 0.0;
  convert(v, path, d);
  out = d;
}

template <class T>
void convert(const json& v, const std::string& path, std::vector<T>& out) {
  if (!v.is_array()) throw ConfigError(path, path + " must be an array");
  out.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    T item{};
    convert(v[i], path + "[" + std::to_string(i) + "]", item);
    out.push_back(std::move(item));
  }
}

// Reads known keys of one JSON object and rejects the rest.
class Fields {
 public:
  Fields(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object())
      throw ConfigError(prefix_.empty() ? "config" : prefix_, (prefix_.empty() ? "config" : prefix_) + " must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) convert(*it, join_path(prefix_, key), out);
  }

  template <class F>
  void section(const char* key, F&& fill) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      Fields sub(*it, join_path(prefix_, key));
      fill(sub);
      sub.finish();
    }
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) {
        const std::string p = join_path(prefix_, item.key());
        throw ConfigError(p, "unknown field '" + p + "'");
      }
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

template <class F>
void require_no_throw(const std::string& field, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field, field + ": " + e.what());
  }
}

std::optional<double> parse_call(const std::string& spec, const std::string& name) {
  if (spec.size() < name.size() + 2 || spec.compare(0, name.size() + 1, name + "(") != 0 || spec.back() != ')')
    return std::nullopt;
  const std::string inner = spec.substr(name.size() + 1, spec.size() - name.size() - 2);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(inner, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("malformed number in '" + spec + "'");
  }
  if (used != inner.size() || !std::isfinite(v)) throw std::invalid_argument("malformed number in '" + spec + "'");
  return v;
}

}  // namespace

Theta parse_theta(const std::string& spec, const ObservationModel& model, int dim, std::optional<double> sigma) {
  if (model.has_scale()) {
    if (!sigma) sigma = 1.0;
    if (!(*sigma > 0.0)) throw std::invalid_argument("theta sigma must be positive");
  } else {
    sigma.reset();
  }
  if (auto c = parse_call(spec, "constant")) return Theta{FieldFunction::constant(dim, *c), sigma};
  if (auto v = parse_call(spec, "mean")) {
    const bool linked = model.kind == ModelKind::binary || model.kind == ModelKind::poisson;
    return Theta{FieldFunction::constant(dim, linked ? model.link.inverse(*v) : *v), sigma};
  }
  throw std::invalid_argument("unknown theta '" + spec + "' (valid: constant(c), mean(v))");
}

ObservationModel ExperimentConfig::observation_model() const {
  const ModelKind kind = parse_model_kind(model.kind);
  switch (kind) {
    case ModelKind::binary: {
      LinkSpec link;
      link.kind = LinkKind::binary;
      link.base = model.link == "default" ? LinkBase::logistic_cdf : parse_link_base(model.link);
      link.kappa_b = model.kappa_b;
      link.kappa_p = model.kappa_p;
      return ObservationModel::binary(link);
    }
    case ModelKind::poisson: {
      LinkSpec link;
      link.kind = LinkKind::poisson;
      link.base = model.link == "default" ? LinkBase::softplus : parse_link_base(model.link);
      link.kappa_b = model.kappa_b;
      link.kappa_p = model.kappa_p;
      return ObservationModel::poisson(link);
    }
    case ModelKind::gaussian:
      if (model.link != "default" && model.link != "identity")
        throw std::invalid_argument("the gaussian model has no link; use \"default\"");
      return ObservationModel::gaussian();
    case ModelKind::laplace:
      if (model.link != "default" && model.link != "identity")
        throw std::invalid_argument("the laplace model has no link; use \"default\"");
      return ObservationModel::laplace();
  }
  throw std::logic_error("unreachable model kind");
}

TruthSpec ExperimentConfig::truth_spec() const {
  TruthSpec t = truth_catalog(truth.name, truth.dim);
  if (observation_model().has_scale()) t = t.with_sigma(truth.sigma0.value_or(1.0));
  return t;
}

PriorSpec ExperimentConfig::prior_spec() const {
  PriorSpec p;
  p.kernel.family = parse_kernel_family(prior.kernel);
  p.kernel.lengthscale = prior.lengthscale;
  p.kernel.amplitude = prior.amplitude;
  p.kernel.jitter = prior.jitter;
  p.kernel.validate();
  if (observation_model().has_scale()) p.sigma_prior = LogNormalPrior{prior.sigma_location, prior.sigma_scale};
  return p;
}

SieveSpec ExperimentConfig::sieve_spec() const {
  SieveSpec s;
  s.beta = sieve.beta;
  s.form = parse_sieve_form(sieve.form);
  s.includes_sigma_band = observation_model().has_scale();
  return s;
}

McmcConfig ExperimentConfig::mcmc_config() const {
  McmcConfig m;
  m.iterations = mcmc.iterations;
  m.burn_in = mcmc.burn_in;
  m.thin = mcmc.thin;
  m.sigma_step = mcmc.sigma_step;
  m.quadrature_nodes = mcmc.quadrature_nodes;
  return m;
}

void ExperimentConfig::validate() const {
  require_no_throw("model.kind", [&] { parse_model_kind(model.kind); });
  require(model.kappa_b > 0.0 && model.kappa_b < 0.5, "model.kappa_b", "model.kappa_b must lie in (0, 0.5)");
  require(model.kappa_p > 0.0, "model.kappa_p", "model.kappa_p must be positive");
  require_no_throw("model.link", [&] { observation_model(); });

  require(truth.dim == 1 || truth.dim == 2, "truth.dim", "truth.dim must be 1 or 2");
  require(!truth.sigma0 || *truth.sigma0 > 0.0, "truth.sigma0", "truth.sigma0 must be positive");
  require_no_throw("truth.name", [&] { truth_catalog(truth.name, truth.dim); });

  require_no_throw("prior.kernel", [&] { parse_kernel_family(prior.kernel); });
  require(prior.lengthscale > 0.0, "prior.lengthscale", "prior.lengthscale must be positive");
  require(prior.amplitude > 0.0, "prior.amplitude", "prior.amplitude must be positive");
  require(prior.jitter > 0.0, "prior.jitter", "prior.jitter must be positive");
  require(prior.sigma_scale > 0.0, "prior.sigma_scale", "prior.sigma_scale must be positive");

  require(sieve.beta > 0.0, "sieve.beta", "sieve.beta must be positive");
  require_no_throw("sieve.form", [&] { parse_sieve_form(sieve.form); });
  require(sieve.draws >= 1000, "sieve.draws", "sieve.draws must be at least 1000");
  require(sieve.n_max >= 1, "sieve.n_max", "sieve.n_max must be at least 1");

  require(!n_schedule.empty(), "n_schedule", "n_schedule must be nonempty");
  for (std::size_t i = 0; i < n_schedule.size(); ++i) {
    require(n_schedule[i] >= 1, "n_schedule", "n_schedule entries must be >= 1");
    require(i == 0 || n_schedule[i] > n_schedule[i - 1], "n_schedule", "n_schedule must be strictly increasing");
  }
  require(epsilon.c > 0.0, "epsilon.c", "epsilon.c must be positive");
  require(epsilon.gamma > 0.0 && epsilon.gamma < 1.0, "epsilon.gamma",
          "epsilon.gamma must lie in (0, 1) so that eps_n -> 0 and n eps_n -> infinity");

  require(mcmc.thin >= 1, "mcmc.thin", "mcmc.thin must be >= 1");
  require(mcmc.burn_in < mcmc.iterations, "mcmc.burn_in", "mcmc.burn_in must be smaller than mcmc.iterations");
  require((mcmc.iterations - mcmc.burn_in) / mcmc.thin >= 1, "mcmc.iterations",
          "mcmc.iterations leaves no retained draws after burn-in and thinning");
  require(mcmc.sigma_step > 0.0, "mcmc.sigma_step", "mcmc.sigma_step must be positive");
  require(mcmc.quadrature_nodes >= 2, "mcmc.quadrature_nodes", "mcmc.quadrature_nodes must be >= 2");

  require(replicates >= 1, "replicates", "replicates must be >= 1");
  require(!output_dir.empty(), "output_dir", "output_dir must be nonempty");

  const ObservationModel m = observation_model();
  require(!kl_rate.thetas.empty(), "kl_rate.thetas", "kl_rate.thetas must be nonempty");
  for (const auto& t : kl_rate.thetas)
    require_no_throw("kl_rate.thetas", [&] { parse_theta(t, m, truth.dim, kl_rate.theta_sigma); });
  require(kl_rate.quadrature_nodes >= 2, "kl_rate.quadrature_nodes", "kl_rate.quadrature_nodes must be >= 2");

  require_no_throw("equipartition.theta",
                   [&] { parse_theta(equipartition.theta, m, truth.dim, equipartition.theta_sigma); });
  require_no_throw("equipartition.scheme", [&] { parse_covariate_scheme(equipartition.scheme); });
  require(!equipartition.n_values.empty(), "equipartition.n_values", "equipartition.n_values must be nonempty");
  for (std::size_t i = 0; i < equipartition.n_values.size(); ++i)
    require(equipartition.n_values[i] >= 1 && (i == 0 || equipartition.n_values[i] > equipartition.n_values[i - 1]),
            "equipartition.n_values", "equipartition.n_values must be positive and strictly increasing");
  require(equipartition.replicates >= 1, "equipartition.replicates", "equipartition.replicates must be >= 1");

  require(posterior.set_threshold > 0.0, "posterior.set_threshold", "posterior.set_threshold must be positive");
  require(posterior.search_budget >= 100, "posterior.search_budget", "posterior.search_budget must be >= 100");

  require(!predictive.x.empty() && predictive.x.size() % static_cast<std::size_t>(truth.dim) == 0, "predictive.x",
          "predictive.x must hold one or more points of dimension truth.dim");
  for (double v : predictive.x)
    require(v >= 0.0 && v <= 1.0, "predictive.x", "predictive.x coordinates must lie in [0, 1]");

  require(bounds.samples >= 10000, "bounds.samples", "bounds.samples must be >= 10000");
  require(bounds.grid_points >= 2, "bounds.grid_points", "bounds.grid_points must be >= 2");
  require(bounds.n >= 1, "bounds.n", "bounds.n must be >= 1");
  require(bounds.lambda > 0.0, "bounds.lambda", "bounds.lambda must be positive");
  require(bounds.lambda0 > 0.0, "bounds.lambda0", "bounds.lambda0 must be positive");
  require(bounds.sigma0 > 0.0, "bounds.sigma0", "bounds.sigma0 must be positive");
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = {{"kind", c.model.kind}, {"link", c.model.link}, {"kappa_b", c.model.kappa_b},
                {"kappa_p", c.model.kappa_p}};
  j["truth"] = {{"name", c.truth.name}, {"dim", c.truth.dim}, {"sigma0", optional_json(c.truth.sigma0)}};
  j["prior"] = {{"kernel", c.prior.kernel},         {"lengthscale", c.prior.lengthscale},
                {"amplitude", c.prior.amplitude},   {"jitter", c.prior.jitter},
                {"sigma_location", c.prior.sigma_location}, {"sigma_scale", c.prior.sigma_scale}};
  j["sieve"] = {{"beta", c.sieve.beta}, {"form", c.sieve.form}, {"draws", c.sieve.draws}, {"n_max", c.sieve.n_max}};
  j["n_schedule"] = c.n_schedule;
  j["epsilon"] = {{"c", c.epsilon.c}, {"gamma", c.epsilon.gamma}};
  j["mcmc"] = {{"iterations", c.mcmc.iterations},
               {"burn_in", c.mcmc.burn_in},
               {"thin", c.mcmc.thin},
               {"sigma_step", c.mcmc.sigma_step},
               {"quadrature_nodes", c.mcmc.quadrature_nodes},
               {"persist_draws", c.mcmc.persist_draws}};
  j["replicates"] = c.replicates;
  j["master_seed"] = c.master_seed;
  j["output_dir"] = c.output_dir;
  j["kl_rate"] = {{"thetas", c.kl_rate.thetas},
                  {"theta_sigma", optional_json(c.kl_rate.theta_sigma)},
                  {"quadrature_nodes", c.kl_rate.quadrature_nodes}};
  j["equipartition"] = {{"theta", c.equipartition.theta},
                        {"theta_sigma", optional_json(c.equipartition.theta_sigma)},
                        {"scheme", c.equipartition.scheme},
                        {"n_values", c.equipartition.n_values},
                        {"replicates", c.equipartition.replicates}};
  j["posterior"] = {{"set_threshold", c.posterior.set_threshold}, {"search_budget", c.posterior.search_budget}};
  j["predictive"] = {{"x", c.predictive.x}};
  j["bounds"] = {{"samples", c.bounds.samples}, {"grid_points", c.bounds.grid_points}, {"n", c.bounds.n},
                 {"lambda", c.bounds.lambda},   {"lambda0", c.bounds.lambda0},         {"sigma0", c.bounds.sigma0}};
  return j;
}

ExperimentConfig config_from_json(const json& input) {
  const json& j = (input.is_object() && input.contains("config") && input.contains("stages")) ? input["config"] : input;
  ExperimentConfig c;
  Fields f(j, "");
  f.section("model", [&](Fields& s) {
    s.read("kind", c.model.kind);
    s.read("link", c.model.link);
    s.read("kappa_b", c.model.kappa_b);
    s.read("kappa_p", c.model.kappa_p);
  });
  f.section("truth", [&](Fields& s) {
    s.read("name", c.truth.name);
    s.read("dim", c.truth.dim);
    s.read("sigma0", c.truth.sigma0);
  });
  f.section("prior", [&](Fields& s) {
    s.read("kernel", c.prior.kernel);
    s.read("lengthscale", c.prior.lengthscale);
    s.read("amplitude", c.prior.amplitude);
    s.read("jitter", c.prior.jitter);
    s.read("sigma_location", c.prior.sigma_location);
    s.read("sigma_scale", c.prior.sigma_scale);
  });
  f.section("sieve", [&](Fields& s) {
    s.read("beta", c.sieve.beta);
    s.read("form", c.sieve.form);
    s.read("draws", c.sieve.draws);
    s.read("n_max", c.sieve.n_max);
  });
  f.read("n_schedule", c.n_schedule);
  f.section("epsilon", [&](Fields& s) {
    s.read("c", c.epsilon.c);
    s.read("gamma", c.epsilon.gamma);
  });
  f.section("mcmc", [&](Fields& s) {
    s.read("iterations", c.mcmc.iterations);
    s.read("burn_in", c.mcmc.burn_in);
    s.read("thin", c.mcmc.thin);
    s.read("sigma_step", c.mcmc.sigma_step);
    s.read("quadrature_nodes", c.mcmc.quadrature_nodes);
    s.read("persist_draws", c.mcmc.persist_draws);
  });
  f.read("replicates", c.replicates);
  f.read("master_seed", c.master_seed);
  f.read("output_dir", c.output_dir);
  f.section("kl_rate", [&](Fields& s) {
    s.read("thetas", c.kl_rate.thetas);
    s.read("theta_sigma", c.kl_rate.theta_sigma);
    s.read("quadrature_nodes", c.kl_rate.quadrature_nodes);
  });
  f.section("equipartition", [&](Fields& s) {
    s.read("theta", c.equipartition.theta);
    s.read("theta_sigma", c.equipartition.theta_sigma);
    s.read("scheme", c.equipartition.scheme);
    s.read("n_values", c.equipartition.n_values);
    s.read("replicates", c.equipartition.replicates);
  });
  f.section("posterior", [&](Fields& s) {
    s.read("set_threshold", c.posterior.set_threshold);
    s.read("search_budget", c.posterior.search_budget);
  });
  f.section("predictive", [&](Fields& s) { s.read("x", c.predictive.x); });
  f.section("bounds", [&](Fields& s) {
    s.read("samples", c.bounds.samples);
    s.read("grid_points", c.bounds.grid_points);
    s.read("n", c.bounds.n);
    s.read("lambda", c.bounds.lambda);
    s.read("lambda0", c.bounds.lambda0);
    s.read("sigma0", c.bounds.sigma0);
  });
  f.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", "config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::vector<std::string> preset_names() { return {"smoke", "paper-desk"}; }

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  if (name == "paper-desk") {
    c.output_dir = "out/paper-desk";
    c.kl_rate.thetas = {"mean(0.25)", "constant(0.5)", "constant(-1)"};
    return c;
  }
  if (name == "smoke") {
    c.output_dir = "out/smoke";
    c.n_schedule = {20, 40, 80};
    c.replicates = 2;
    c.mcmc.iterations = 1200;
    c.mcmc.burn_in = 200;
    c.mcmc.thin = 2;
    c.mcmc.quadrature_nodes = 24;
    c.sieve.draws = 1000;
    c.equipartition.n_values = {100, 1000};
    c.equipartition.replicates = 10;
    c.posterior.search_budget = 200;
    c.bounds.samples = 10000;
    c.kl_rate.thetas = {"mean(0.25)", "constant(0.5)"};
    return c;
  }
  std::ostringstream msg;
  msg << "unknown preset '" << name << "' (valid:";
  for (const auto& p : preset_names()) msg << ' ' << p;
  msg << ')';
  throw ConfigError("preset", msg.str());
}

}  // namespace postcon
