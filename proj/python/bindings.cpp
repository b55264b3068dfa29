#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "postcon/bounds.hpp"
#include "postcon/equipartition.hpp"
#include "postcon/experiment.hpp"
#include "postcon/posterior.hpp"

namespace py = pybind11;
using namespace postcon;
using nlohmann::json;

namespace {

ExperimentConfig base_config(const std::string& model_kind, const std::string& truth = "smooth-sin",
                             std::optional<double> sigma0 = std::nullopt) {
  ExperimentConfig c;
  c.model.kind = model_kind;
  c.truth.name = truth;
  c.truth.sigma0 = sigma0;
  return c;
}

ObservationModel model_for(const std::string& kind) { return base_config(kind).observation_model(); }

py::dict report_dict(const TailCheckReport& r) {
  py::list rows;
  for (const auto& row : r.rows) {
    py::dict d;
    d["t"] = row.t;
    d["empirical"] = row.empirical;
    d["ci_lo"] = row.ci_lo;
    d["ci_hi"] = row.ci_hi;
    d["bound"] = row.bound;
    d["pass"] = row.pass;
    d["validation"] = row.validation;
    d["exact"] = row.exact;
    d["standard_error"] = row.standard_error;
    rows.append(d);
  }
  py::dict out;
  out["kind"] = r.kind;
  out["rows"] = rows;
  out["calibrated_constant"] = r.calibrated_constant;
  out["constant_name"] = r.constant_name;
  out["validation_passed"] = r.validation_passed();
  return out;
}

}  // namespace

PYBIND11_MODULE(_postcon, m) {
  m.doc() = "Posterior consistency simulation core";
  m.attr("code_version") = kCodeVersion;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("preset_config", [](const std::string& name) { return to_json(preset_config(name)).dump(); });
  m.def("preset_names", &preset_names);
  m.def("normalize_config", [](const std::string& text) {
    const auto c = config_from_json(json::parse(text));
    c.validate();
    return to_json(c).dump();
  });
  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::string& study) {
        const auto c = config_from_json(json::parse(config_text));
        const Study s = parse_study(study);
        py::gil_scoped_release release;
        return to_json(run_experiment(c, s)).dump();
      },
      py::arg("config"), py::arg("study"));
  m.def("emit_report", [](const std::string& dir) { return emit_report(dir); });

  m.def(
      "kl_rate",
      [](const std::string& model_kind, const std::string& theta, const std::string& truth,
         std::optional<double> sigma, std::optional<double> sigma0, std::size_t nodes) {
        const auto c = base_config(model_kind, truth, sigma0);
        const auto model = c.observation_model();
        const auto t = c.truth_spec();
        const auto est = kl_rate(model, parse_theta(theta, model, 1, sigma), t, Integrator::quadrature(nodes));
        return py::make_tuple(est.value, est.err);
      },
      py::arg("model"), py::arg("theta"), py::arg("truth"), py::arg("sigma") = py::none(),
      py::arg("sigma0") = py::none(), py::arg("nodes") = 64);
  m.def(
      "pointwise_kl",
      [](const std::string& model_kind, double eta, std::optional<double> sigma, double eta0,
         std::optional<double> sigma0, bool oracle) {
        const auto model = model_for(model_kind);
        return oracle ? per_obs_kl_oracle_at(model, eta, sigma, eta0, sigma0).value
                      : pointwise_kl(model, eta, sigma, eta0, sigma0);
      },
      py::arg("model"), py::arg("eta"), py::arg("sigma"), py::arg("eta0"), py::arg("sigma0"),
      py::arg("oracle") = false);
  m.def("link", [](const std::string& model_kind, double u) { return model_for(model_kind).link(u); });

  m.def(
      "equipartition_trace",
      [](const std::string& model_kind, const std::string& theta, const std::string& truth,
         std::vector<std::size_t> n_values, std::size_t replicates, std::uint64_t seed) {
        const auto c = base_config(model_kind, truth);
        const auto model = c.observation_model();
        const auto t = c.truth_spec();
        const auto tr = equipartition_trace(model, parse_theta(theta, model, 1, std::nullopt), t, n_values,
                                            replicates, RngStream(seed));
        py::dict d;
        d["n_values"] = tr.n_values;
        d["deviations"] = tr.deviations;
        d["h"] = tr.h;
        d["loglog_slope"] = loglog_slope(tr);
        return d;
      },
      py::arg("model"), py::arg("theta"), py::arg("truth"), py::arg("n_values"), py::arg("replicates"),
      py::arg("seed"));

  m.def(
      "sieve_complement_mass",
      [](std::vector<std::size_t> n_values, std::size_t draws, std::uint64_t seed, double lengthscale,
         double amplitude, double beta) {
        PriorSpec prior;
        prior.kernel.lengthscale = lengthscale;
        prior.kernel.amplitude = amplitude;
        SieveSpec sieve;
        sieve.beta = beta;
        Engine rng = RngStream(seed).engine();
        py::list out;
        for (const auto& r : estimate_sieve_complement_mass(prior, sieve, n_values, draws, default_field_axes(1), rng))
          out.append(py::make_tuple(r.n, r.prob, r.ci_lo, r.ci_hi));
        return out;
      },
      py::arg("n_values"), py::arg("draws"), py::arg("seed"), py::arg("lengthscale") = 0.2,
      py::arg("amplitude") = 1.0, py::arg("beta") = 1.0);

  m.def(
      "posterior_h_draws",
      [](const std::string& model_kind, const std::string& truth, std::size_t n, std::uint64_t seed,
         std::size_t iterations, std::size_t burn_in, std::size_t thin) {
        auto c = base_config(model_kind, truth);
        c.mcmc.iterations = iterations;
        c.mcmc.burn_in = burn_in;
        c.mcmc.thin = thin;
        c.validate();
        const auto model = c.observation_model();
        const auto t = c.truth_spec();
        const PriorSpec prior = c.prior_spec();
        McmcConfig mc = c.mcmc_config();
        mc.quadrature_splits = t.jumps();
        const RngStream s(seed);
        Engine drng = s.child("data").engine();
        const Dataset data = simulate_responses(
            model, t, sample_covariates(n, CovariateScheme::iid_uniform, CovariateSpace(t.dim()), drng), drng);
        Engine mrng = s.child("mcmc").engine();
        py::gil_scoped_release release;
        return posterior_h_values(run_mcmc(model, data, prior, mc, mrng), model, t);
      },
      py::arg("model"), py::arg("truth"), py::arg("n"), py::arg("seed"), py::arg("iterations") = 2000,
      py::arg("burn_in") = 500, py::arg("thin") = 2);

  m.def(
      "check_hoeffding",
      [](double range, std::size_t n, std::vector<double> t_grid, std::size_t samples, std::uint64_t seed) {
        Engine rng = RngStream(seed).engine();
        return report_dict(check_hoeffding(range, n, t_grid, samples, rng));
      },
      py::arg("range"), py::arg("n"), py::arg("t_grid"), py::arg("samples"), py::arg("seed"));
  m.def(
      "check_hanson_wright",
      [](std::size_t n, std::vector<double> kappa_grid, std::size_t samples, std::uint64_t seed) {
        Engine rng = RngStream(seed).engine();
        return report_dict(check_hanson_wright(n, kappa_grid, samples, rng));
      },
      py::arg("n"), py::arg("kappa_grid"), py::arg("samples"), py::arg("seed"));

  m.def(
      "hellinger_tv",
      [](std::vector<double> f, std::vector<double> g) {
        PredictiveDistribution a, b;
        a.kind = b.kind = ModelKind::poisson;
        a.pmf = std::move(f);
        b.pmf = std::move(g);
        const auto d = hellinger_tv(a, b);
        return py::make_tuple(d.h2, d.tv);
      },
      py::arg("f"), py::arg("g"));
  m.def("wilson_interval", [](std::size_t hits, std::size_t trials) {
    const auto w = wilson_interval(hits, trials);
    return py::make_tuple(w.estimate, w.lo, w.hi);
  });
  m.def("epsilon_schedule", &epsilon_schedule, py::arg("n"), py::arg("c") = 1.0, py::arg("gamma") = 0.8);
}
