#include "postcon/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "postcon/bounds.hpp"
#include "postcon/equipartition.hpp"
#include "postcon/format.hpp"
#include "postcon/kl_rates.hpp"

namespace postcon {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Study s) {
  switch (s) {
    case Study::kl_rate: return "kl-rate";
    case Study::equipartition: return "equipartition";
    case Study::sieve_mass: return "sieve-mass";
    case Study::posterior: return "posterior";
    case Study::predictive: return "predictive";
    case Study::bounds: return "bounds";
  }
  return "unknown";
}

Study parse_study(std::string_view name) {
  for (Study s : all_studies())
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown study '" + std::string(name) +
                              "' (valid: kl-rate, equipartition, sieve-mass, posterior, predictive, bounds)");
}

std::vector<Study> all_studies() {
  return {Study::kl_rate, Study::equipartition, Study::sieve_mass, Study::posterior, Study::predictive, Study::bounds};
}

std::string claim_family(Study s) {
  switch (s) {
    case Study::kl_rate: return "KL divergence rate h(theta): closed forms against brute-force expectations";
    case Study::equipartition: return "asymptotic equipartition: n^-1 log R_n(theta) -> -h(theta)";
    case Study::sieve_mass: return "sieve condition: prior mass of G_n^c decays like exp(-beta n)";
    case Study::posterior: return "posterior concentration on N_eps_n and the rate -J(A) of pi(A|Y_n)";
    case Study::predictive: return "misspecified prediction: Hellinger/TV distance of F_pi^n to the best predictor";
    case Study::bounds: return "concentration inequalities: Hoeffding, Bernstein, Hanson-Wright, Poisson MGF";
  }
  return "";
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

json to_json(const RunManifest& m) {
  json stages = json::object();
  for (const auto& [name, st] : m.stages) {
    json arts = json::array();
    for (const auto& a : st.artifacts) arts.push_back({{"path", a.path}, {"fnv1a64", a.fnv1a64}});
    stages[name] = {{"status", st.status}, {"error", st.error}, {"wall_seconds", st.wall_seconds}, {"artifacts", arts}};
  }
  return {{"config", m.config}, {"code_version", m.code_version}, {"stages", stages}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.config = j.at("config");
  m.code_version = j.at("code_version").get<std::string>();
  for (const auto& [name, st] : j.at("stages").items()) {
    StageRecord r;
    r.status = st.at("status").get<std::string>();
    r.error = st.value("error", "");
    r.wall_seconds = st.value("wall_seconds", 0.0);
    for (const auto& a : st.at("artifacts")) r.artifacts.push_back({a.at("path"), a.at("fnv1a64")});
    m.stages[name] = std::move(r);
  }
  return m;
}

namespace {

std::string opt_real(std::optional<double> v) { return v ? format_real(*v) : std::string(); }

class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {}
  void write(const std::string& name, const std::string& contents) {
    write_file_atomic(dir_ / name, contents);
    records_.push_back({name, file_hash(dir_ / name)});
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
  std::vector<ArtifactRecord> records() const { return records_; }

 private:
  fs::path dir_;
  std::vector<ArtifactRecord> records_;
};

json real_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void run_kl_rate(const ExperimentConfig& cfg, ArtifactWriter& out) {
  const ObservationModel model = cfg.observation_model();
  const TruthSpec truth = cfg.truth_spec();
  const Integrator integ = Integrator::quadrature(cfg.kl_rate.quadrature_nodes);
  const CovariateSpace space(truth.dim());
  std::ostringstream csv;
  csv << "model,truth,theta,sigma,h,err,oracle,oracle_err\n";
  for (const auto& spec : cfg.kl_rate.thetas) {
    const Theta theta = parse_theta(spec, model, truth.dim(), cfg.kl_rate.theta_sigma);
    const KlRateEstimate est = kl_rate(model, theta, truth, integ);
    double pointwise_err = 0.0;
    const Expectation oracle = expect_over_Q(
        [&](std::span<const double> x) {
          const OracleValue v = per_obs_kl_oracle(model, theta, truth, x);
          pointwise_err = std::max(pointwise_err, v.err);
          return v.value;
        },
        space, integ, truth.jumps());
    csv << model.name() << ',' << truth.name << ',' << spec << ',' << opt_real(theta.sigma) << ','
        << format_real(est.value) << ',' << format_real(est.err) << ',' << format_real(oracle.value) << ','
        << format_real(oracle.err + pointwise_err) << '\n';
  }
  out.write("kl_rate.csv", csv.str());
}

void run_equipartition(const ExperimentConfig& cfg, const RngStream& root, ArtifactWriter& out) {
  const ObservationModel model = cfg.observation_model();
  const TruthSpec truth = cfg.truth_spec();
  const Theta theta = parse_theta(cfg.equipartition.theta, model, truth.dim(), cfg.equipartition.theta_sigma);
  EquipartitionOptions opts;
  opts.scheme = parse_covariate_scheme(cfg.equipartition.scheme);
  opts.integrator = Integrator::quadrature(cfg.kl_rate.quadrature_nodes);
  const auto trace = equipartition_trace(model, theta, truth, cfg.equipartition.n_values,
                                         cfg.equipartition.replicates, root.child("equipartition"), opts);
  std::ostringstream csv;
  csv << "model,n,replicate,deviation\n";
  json per_n = json::array();
  for (std::size_t i = 0; i < trace.n_values.size(); ++i) {
    for (std::size_t r = 0; r < trace.deviations[i].size(); ++r)
      csv << model.name() << ',' << trace.n_values[i] << ',' << r << ',' << format_real(trace.deviations[i][r]) << '\n';
    per_n.push_back({{"n", trace.n_values[i]},
                     {"median_abs_deviation", trace.median_abs_deviation(i)},
                     {"mean_deviation", trace.mean_deviation(i)},
                     {"standard_error", trace.standard_error(i)}});
  }
  out.write("equipartition_trace.csv", csv.str());
  const auto slope = loglog_slope(trace);
  out.write_json("equipartition_summary.json", {{"model", model.name()},
                                                {"theta", cfg.equipartition.theta},
                                                {"truth", truth.name},
                                                {"h", trace.h},
                                                {"per_n", per_n},
                                                {"loglog_slope", slope ? json(*slope) : json(nullptr)}});
}

void run_sieve_mass(const ExperimentConfig& cfg, const RngStream& root, ArtifactWriter& out) {
  const PriorSpec prior = cfg.prior_spec();
  const SieveSpec sieve = cfg.sieve_spec();
  std::vector<std::size_t> ns(cfg.sieve.n_max);
  for (std::size_t i = 0; i < ns.size(); ++i) ns[i] = i + 1;
  Engine rng = root.child("sieve-mass").engine();
  const auto rows = estimate_sieve_complement_mass(prior, sieve, ns, cfg.sieve.draws,
                                                   default_field_axes(cfg.truth.dim), rng);
  std::ostringstream csv;
  csv << "n,prob,ci_lo,ci_hi,bound\n";
  bool non_increasing = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    csv << r.n << ',' << format_real(r.prob) << ',' << format_real(r.ci_lo) << ',' << format_real(r.ci_hi) << ','
        << format_real(std::exp(-sieve.beta * static_cast<double>(r.n))) << '\n';
    if (i > 0 && r.prob > rows[i - 1].prob) non_increasing = false;
  }
  out.write("sieve_mass.csv", csv.str());
  const auto slope = fit_log_decay_slope(rows);
  out.write_json("sieve_mass_summary.json", {{"beta", sieve.beta},
                                             {"form", to_string(sieve.form)},
                                             {"draws", cfg.sieve.draws},
                                             {"non_increasing", non_increasing},
                                             {"final_ci_hi", rows.back().ci_hi},
                                             {"log_decay_slope", slope ? json(*slope) : json(nullptr)}});
}

struct Chain {
  Dataset data;
  PosteriorSamples samples;
};

Chain run_chain(const ExperimentConfig& cfg, const RngStream& root, std::size_t rep, std::size_t n,
                std::vector<double> extra_sites) {
  const ObservationModel model = cfg.observation_model();
  const TruthSpec truth = cfg.truth_spec();
  const RngStream s = root.child("chain").child("rep", rep).child("n", n);
  Engine drng = s.child("data").engine();
  Dataset data = simulate_responses(
      model, truth, sample_covariates(n, CovariateScheme::iid_uniform, CovariateSpace(truth.dim()), drng), drng);
  McmcConfig mc = cfg.mcmc_config();
  mc.quadrature_splits = truth.jumps();
  mc.extra_sites = std::move(extra_sites);
  Engine mrng = s.child("mcmc").engine();
  PosteriorSamples samples = run_mcmc(model, data, cfg.prior_spec(), mc, mrng);
  return {std::move(data), std::move(samples)};
}

void run_posterior(const ExperimentConfig& cfg, const RngStream& root, ArtifactWriter& out) {
  const ObservationModel model = cfg.observation_model();
  const TruthSpec truth = cfg.truth_spec();
  const PriorSpec prior = cfg.prior_spec();
  const RngStream stream = root.child("posterior");
  Engine hrng = stream.child("h-theta").engine();
  const HThetaEstimate h_theta = estimate_h_Theta(model, prior, truth, cfg.posterior.search_budget, hrng);
  const SetSpec set_a = SetSpec::h_above(cfg.posterior.set_threshold);
  double j_value = std::numeric_limits<double>::quiet_NaN();
  std::string j_note;
  try {
    Engine jrng = stream.child("j-rate").engine();
    j_value = j_rate(set_a, h_theta.value, model, prior, truth, cfg.posterior.search_budget, jrng);
  } catch (const std::exception& e) {
    j_note = e.what();
  }

  std::ostringstream csv;
  csv << "replicate,n,epsilon,prob_n_eps,mcse_n_eps,mean_h,prob_a,mcse_a,ess_a,below_resolution_a,sigma_acceptance\n";
  std::ostringstream rate_csv;
  rate_csv << "replicate,j,slope,verdict\n";
  const std::size_t first = 0, last = cfg.n_schedule.size() - 1;
  std::size_t n_eps_up = 0, mean_h_down = 0;
  json diagnostics = json::array();
  for (std::size_t r = 0; r < cfg.replicates; ++r) {
    std::vector<double> prob_a, ess_a, prob_n, mean_h;
    for (std::size_t n : cfg.n_schedule) {
      const Chain chain = run_chain(cfg, root, r, n, {});
      const auto h = posterior_h_values(chain.samples, model, truth);
      const double eps = epsilon_schedule(n, cfg.epsilon.c, cfg.epsilon.gamma);
      const SetProbability pn = posterior_set_probability(h, SetSpec::n_epsilon(eps), h_theta.value);
      const SetProbability pa = posterior_set_probability(h, set_a, h_theta.value);
      double mh = 0.0;
      for (double v : h) mh += v / static_cast<double>(h.size());
      prob_n.push_back(pn.prob);
      prob_a.push_back(pa.prob);
      ess_a.push_back(pa.ess);
      mean_h.push_back(mh);
      csv << r << ',' << n << ',' << format_real(eps) << ',' << format_real(pn.prob) << ',' << format_real(pn.mcse)
          << ',' << format_real(mh) << ',' << format_real(pa.prob) << ',' << format_real(pa.mcse) << ','
          << format_real(pa.ess) << ',' << (pa.below_resolution ? "true" : "false") << ','
          << format_real(chain.samples.sigma_acceptance) << '\n';
      if (cfg.mcmc.persist_draws) {
        std::ostringstream draws;
        write_draws_csv(draws, chain.samples);
        out.write("draws_rep" + std::to_string(r) + "_n" + std::to_string(n) + ".csv", draws.str());
      }
    }
    if (prob_n[last] > prob_n[first]) ++n_eps_up;
    if (mean_h[last] < mean_h[first]) ++mean_h_down;
    RateDiagnostic diag;
    if (std::isfinite(j_value)) {
      diag = concentration_rate_diagnostic(prob_a, ess_a, cfg.n_schedule, j_value);
    } else {
      diag.message = "J(A) unavailable: " + j_note;
    }
    rate_csv << r << ',' << (std::isfinite(j_value) ? format_real(j_value) : std::string()) << ','
             << opt_real(diag.slope) << ',' << to_string(diag.verdict) << '\n';
    diagnostics.push_back({{"replicate", r},
                           {"slope", diag.slope ? json(*diag.slope) : json(nullptr)},
                           {"verdict", to_string(diag.verdict)},
                           {"message", diag.message}});
  }
  out.write("posterior_summary.csv", csv.str());
  out.write("posterior_rate.csv", rate_csv.str());
  out.write_json("posterior_summary.json",
                 {{"model", model.name()},
                  {"truth", truth.name},
                  {"h_theta", h_theta.value},
                  {"h_theta_certificate", to_string(h_theta.certificate)},
                  {"set", set_a.describe()},
                  {"j", real_or_null(j_value)},
                  {"j_note", j_note},
                  {"n_schedule", cfg.n_schedule},
                  {"replicates_with_n_eps_increase", n_eps_up},
                  {"replicates_with_mean_h_decrease", mean_h_down},
                  {"rate_diagnostics", diagnostics}});
}

void run_predictive(const ExperimentConfig& cfg, const RngStream& root, ArtifactWriter& out) {
  const ObservationModel model = cfg.observation_model();
  const TruthSpec truth = cfg.truth_spec();
  const std::size_t dim = static_cast<std::size_t>(truth.dim());
  const std::size_t points = cfg.predictive.x.size() / dim;
  std::ostringstream csv;
  csv << "replicate,n";
  for (std::size_t k = 0; k < dim; ++k) csv << ",x" << k + 1;
  csv << ",h2,tv\n";
  // h2 at the first and last n, per replicate and point
  std::vector<std::vector<double>> first_h2(cfg.replicates, std::vector<double>(points)), last_h2 = first_h2;
  for (std::size_t r = 0; r < cfg.replicates; ++r) {
    for (std::size_t ni = 0; ni < cfg.n_schedule.size(); ++ni) {
      const std::size_t n = cfg.n_schedule[ni];
      const Chain chain = run_chain(cfg, root, r, n, cfg.predictive.x);
      for (std::size_t p = 0; p < points; ++p) {
        const std::span<const double> x(cfg.predictive.x.data() + p * dim, dim);
        const auto pred = posterior_predictive(chain.samples, model, x);
        const auto best = best_predictor(model, truth, x, pred);
        const HellingerTv d = hellinger_tv(best, pred);
        csv << r << ',' << n;
        for (double v : x) csv << ',' << format_real(v);
        csv << ',' << format_real(d.h2) << ',' << format_real(d.tv) << '\n';
        if (ni == 0) first_h2[r][p] = d.h2;
        if (ni + 1 == cfg.n_schedule.size()) last_h2[r][p] = d.h2;
      }
    }
  }
  out.write("predictive.csv", csv.str());
  json per_point = json::array();
  for (std::size_t p = 0; p < points; ++p) {
    std::size_t down = 0;
    std::vector<double> finals;
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      if (last_h2[r][p] < first_h2[r][p]) ++down;
      finals.push_back(last_h2[r][p]);
    }
    per_point.push_back({{"x", std::vector<double>(cfg.predictive.x.begin() + static_cast<std::ptrdiff_t>(p * dim),
                                                   cfg.predictive.x.begin() + static_cast<std::ptrdiff_t>((p + 1) * dim))},
                         {"replicates_with_h2_decrease", down},
                         {"median_final_h2", median(finals)}});
  }
  out.write_json("predictive_summary.json", {{"model", model.name()},
                                             {"truth", truth.name},
                                             {"n_schedule", cfg.n_schedule},
                                             {"query", "fixed held-out covariates"},
                                             {"points", per_point}});
}

void run_bounds(const ExperimentConfig& cfg, const RngStream& root, ArtifactWriter& out) {
  const auto& b = cfg.bounds;
  const RngStream stream = root.child("bounds");
  std::vector<TailCheckReport> reports;
  {
    Engine rng = stream.child("hoeffding").engine();
    reports.push_back(check_hoeffding(1.0, b.n, hoeffding_grid(1.0, b.n, b.samples, b.grid_points), b.samples, rng));
  }
  {
    Engine rng = stream.child("poisson-mgf").engine();
    reports.push_back(
        check_poisson_subexponential(b.lambda, b.lambda0, log_spaced(0.05, 1.0, b.grid_points), b.samples, rng));
  }
  {
    Engine rng = stream.child("hanson-wright").engine();
    reports.push_back(check_hanson_wright(b.n, log_spaced(0.1, 1.0, b.grid_points), b.samples, rng));
  }
  {
    Engine rng = stream.child("bernstein-laplace").engine();
    reports.push_back(check_bernstein_laplace(b.sigma0, b.n, log_spaced(0.05, 0.5, b.grid_points), b.samples, rng));
  }
  std::ostringstream csv;
  csv << "kind,t,empirical,ci_lo,ci_hi,bound,verdict,role,exact,standard_error\n";
  json summary = json::array();
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows)
      csv << rep.kind << ',' << format_real(r.t) << ',' << format_real(r.empirical) << ',' << format_real(r.ci_lo)
          << ',' << format_real(r.ci_hi) << ',' << format_real(r.bound) << ',' << (r.pass ? "PASS" : "FAIL") << ','
          << (r.validation ? "validation" : "calibration") << ',' << opt_real(r.exact) << ','
          << opt_real(r.standard_error) << '\n';
    summary.push_back({{"kind", rep.kind},
                       {"parameters", rep.parameters},
                       {"constant_name", rep.constant_name},
                       {"calibrated_constant", rep.calibrated_constant ? json(*rep.calibrated_constant) : json(nullptr)},
                       {"validation_passed", rep.validation_passed()}});
  }
  out.write("bounds.csv", csv.str());
  out.write_json("bounds_summary.json", summary);
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config, Study study) {
  config.validate();
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);
  const fs::path manifest_path = dir / "manifest.json";

  RunManifest manifest;
  if (fs::exists(manifest_path)) {
    try {
      std::ifstream in(manifest_path);
      manifest = manifest_from_json(json::parse(in));
    } catch (const std::exception&) {
      manifest = RunManifest{};  // unreadable manifest: start over
    }
  }
  manifest.config = to_json(config);
  manifest.code_version = kCodeVersion;

  const RngStream root(config.master_seed);
  ArtifactWriter out(dir);
  StageRecord stage;
  const auto t0 = std::chrono::steady_clock::now();
  std::exception_ptr failure;
  try {
    switch (study) {
      case Study::kl_rate: run_kl_rate(config, out); break;
      case Study::equipartition: run_equipartition(config, root, out); break;
      case Study::sieve_mass: run_sieve_mass(config, root, out); break;
      case Study::posterior: run_posterior(config, root, out); break;
      case Study::predictive: run_predictive(config, root, out); break;
      case Study::bounds: run_bounds(config, root, out); break;
    }
    stage.status = "completed";
  } catch (const std::exception& e) {
    stage.status = "failed";
    stage.error = e.what();
    failure = std::current_exception();
  }
  stage.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  stage.artifacts = out.records();
  manifest.stages[to_string(study)] = stage;
  write_file_atomic(manifest_path, to_json(manifest).dump(2) + "\n");
  if (failure) std::rethrow_exception(failure);
  return manifest;
}

}  // namespace postcon
