// Desk-scale acceptance run. Prints one PASS/FAIL line per criterion; pass the
// criterion numbers to run a subset (default: all). Exit status is 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "postcon/bounds.hpp"
#include "postcon/equipartition.hpp"
#include "postcon/experiment.hpp"
#include "postcon/kl_rates.hpp"
#include "postcon/posterior.hpp"

using namespace postcon;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

TruthSpec constant_truth(double eta0, std::optional<double> sigma0 = std::nullopt) {
  TruthSpec t = truth_catalog("constant(0)");
  t.eta0 = FieldFunction::constant(1, eta0);
  t.sigma0 = sigma0;
  return t;
}

std::vector<ObservationModel> all_models() {
  return {ObservationModel::binary(), ObservationModel::poisson(), ObservationModel::gaussian(),
          ObservationModel::laplace()};
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  Engine rng = RngStream(1001).engine();
  std::normal_distribution<double> nd;
  double worst_ratio = 0.0;
  int checked = 0;
  for (const auto& m : all_models()) {
    TruthSpec truth = truth_catalog("smooth-bump");
    if (m.has_scale()) truth = truth.with_sigma(0.8);
    for (int k = 0; k < 20; ++k) {
      const double a = nd(rng), b = nd(rng), c = 0.5 * nd(rng);
      Theta theta{FieldFunction::tabulate_uniform(
                      1, 65, [=](std::span<const double> x) { return a + b * x[0] + c * std::sin(6.0 * x[0]); }),
                  std::nullopt};
      if (m.has_scale()) theta.sigma = std::exp(0.5 * nd(rng));
      const auto h = kl_rate(m, theta, truth);
      double oracle_err = 0.0;
      const auto e = expect_over_Q(
          [&](std::span<const double> x) {
            const auto o = per_obs_kl_oracle(m, theta, truth, x);
            oracle_err = std::max(oracle_err, o.err);
            return o.value;
          },
          CovariateSpace(1), Integrator::quadrature(64), truth.jumps());
      const double tol = 3.0 * (h.err + e.err + oracle_err) + 1e-13 * (1.0 + h.value);
      worst_ratio = std::max(worst_ratio, std::abs(h.value - e.value) / tol);
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  return {worst_ratio <= 1.0 && secs < 60.0,
          std::to_string(checked) + " thetas, worst |diff|/tolerance " + fmt(worst_ratio) + ", " + fmt(secs) + " s"};
}

Outcome exactness_anchors() {
  double worst_zero = 0.0;
  for (const auto& m : all_models())
    for (const std::string name : {"smooth-sin", "smooth-bump", "linear(0.7)"}) {
      TruthSpec truth = truth_catalog(name);
      if (m.has_scale()) truth = truth.with_sigma(0.6);
      worst_zero = std::max(worst_zero, std::abs(kl_rate(m, Theta::from_truth(truth), truth).value));
    }
  const auto bin = ObservationModel::binary(), poi = ObservationModel::poisson();
  const auto gau = ObservationModel::gaussian(), lap = ObservationModel::laplace();
  struct Anchor {
    const char* name;
    double got, expected;
  };
  const std::vector<Anchor> anchors = {
      {"bernoulli", kl_rate(bin, {FieldFunction::constant(1, bin.link.inverse(0.25)), {}}, constant_truth(0.0)).value,
       0.143841},
      {"poisson",
       kl_rate(poi, {FieldFunction::constant(1, poi.link.inverse(2.0)), {}}, constant_truth(poi.link.inverse(1.0))).value,
       0.306853},
      {"gaussian", kl_rate(gau, {FieldFunction::constant(1, 0.0), 2.0}, constant_truth(0.0, 1.0)).value, 0.318147},
      {"laplace", kl_rate(lap, {FieldFunction::constant(1, 1.0), 1.0}, constant_truth(0.0, 1.0)).value, 0.367879},
  };
  bool ok = worst_zero <= 1e-10;
  std::string detail = "max |h(theta0)| " + fmt(worst_zero);
  for (const auto& a : anchors) {
    ok = ok && std::abs(a.got - a.expected) <= 5e-7;
    detail += std::string(", ") + a.name + " " + std::to_string(a.got);
  }
  return {ok, detail};
}

Outcome equipartition_scaling() {
  const auto t0 = Clock::now();
  const auto bin = ObservationModel::binary(), poi = ObservationModel::poisson();
  struct Case {
    ObservationModel model;
    Theta theta;
    TruthSpec truth;
  };
  const std::vector<Case> cases = {
      {bin, {FieldFunction::constant(1, bin.link.inverse(0.25)), {}}, constant_truth(0.0)},
      {poi, {FieldFunction::constant(1, poi.link.inverse(2.0)), {}}, constant_truth(poi.link.inverse(1.0))},
      {ObservationModel::gaussian(), {FieldFunction::constant(1, 0.5), 1.2}, constant_truth(0.0, 1.0)},
      {ObservationModel::laplace(), {FieldFunction::constant(1, 0.5), 1.2}, constant_truth(0.0, 1.0)},
  };
  const std::vector<std::size_t> ns{100, 1000, 10000};
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const auto tr = equipartition_trace(c.model, c.theta, c.truth, ns, 50, RngStream(1003).child(c.model.name()));
    const double med = tr.median_abs_deviation(2);
    const auto slope = loglog_slope(tr);
    ok = ok && med <= 0.05 && slope && *slope >= -0.7 && *slope <= -0.3;
    detail += c.model.name() + ": median " + fmt(med) + " slope " + (slope ? fmt(*slope) : "n/a") + "; ";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 300.0;
  return {ok, detail + fmt(secs) + " s"};
}

Outcome sieve_mass() {
  PriorSpec prior;
  prior.kernel.lengthscale = 0.2;
  prior.kernel.amplitude = 1.0;
  SieveSpec sieve;
  sieve.beta = 1.0;
  sieve.form = SieveForm::quartic_root;
  std::vector<std::size_t> ns(10);
  for (std::size_t i = 0; i < ns.size(); ++i) ns[i] = i + 1;
  Engine rng = RngStream(1004).engine();
  const auto rows = estimate_sieve_complement_mass(prior, sieve, ns, 10000, default_field_axes(1), rng);
  bool non_increasing = true;
  for (std::size_t i = 1; i < rows.size(); ++i) non_increasing = non_increasing && rows[i].prob <= rows[i - 1].prob;
  const double final_hi = rows.back().ci_hi;
  const auto slope = fit_log_decay_slope(rows);
  const bool ok = non_increasing && final_hi < 1e-3 && slope && *slope <= -sieve.beta;
  return {ok, std::string("non-increasing ") + (non_increasing ? "yes" : "no") + ", P(G_10^c) " +
                  fmt(rows.back().prob) + " (upper CI " + fmt(final_hi) + ", need < 1e-3), log-decay slope " +
                  (slope ? fmt(*slope) : "n/a") + " (need <= -1)"};
}

// Chains on the study's stream layout: root/chain/rep=r/n=n/{data,mcmc}.
PosteriorSamples chain(const ExperimentConfig& cfg, std::size_t rep, std::size_t n, std::vector<double> extra) {
  const auto model = cfg.observation_model();
  const auto truth = cfg.truth_spec();
  const RngStream s = RngStream(cfg.master_seed).child("chain").child("rep", rep).child("n", n);
  Engine drng = s.child("data").engine();
  const Dataset data =
      simulate_responses(model, truth, sample_covariates(n, CovariateScheme::iid_uniform, CovariateSpace(1), drng), drng);
  McmcConfig mc = cfg.mcmc_config();
  mc.quadrature_splits = truth.jumps();
  mc.extra_sites = std::move(extra);
  Engine mrng = s.child("mcmc").engine();
  return run_mcmc(model, data, cfg.prior_spec(), mc, mrng);
}

struct ChainSummary {
  double prob_n01 = 0.0;
  double mean_h = 0.0;
  SetProbability above;
};

std::vector<std::vector<ChainSummary>> well_specified_runs(const ExperimentConfig& cfg) {
  const auto model = cfg.observation_model();
  const auto truth = cfg.truth_spec();
  std::vector<std::vector<ChainSummary>> out(cfg.replicates);
  for (std::size_t r = 0; r < cfg.replicates; ++r)
    for (std::size_t n : cfg.n_schedule) {
      const auto h = posterior_h_values(chain(cfg, r, n, {}), model, truth);
      ChainSummary s;
      s.prob_n01 = posterior_set_probability(h, SetSpec::n_epsilon(0.1), 0.0).prob;
      for (double v : h) s.mean_h += v / static_cast<double>(h.size());
      s.above = posterior_set_probability(h, SetSpec::h_above(0.2), 0.0);
      out[r].push_back(s);
    }
  return out;
}

ExperimentConfig desk_config() {
  ExperimentConfig cfg = preset_config("paper-desk");
  cfg.model.kind = "binary";
  cfg.truth.name = "smooth-sin";
  return cfg;
}

Outcome posterior_concentration() {
  const auto t0 = Clock::now();
  const ExperimentConfig cfg = desk_config();
  const auto runs = well_specified_runs(cfg);
  std::size_t up = 0, down = 0;
  std::string detail;
  for (const auto& rep : runs) {
    if (rep.back().prob_n01 > rep.front().prob_n01) ++up;
    bool decreasing = true;
    for (std::size_t i = 1; i < rep.size(); ++i) decreasing = decreasing && rep[i].mean_h < rep[i - 1].mean_h;
    if (decreasing) ++down;
    detail += "[" + fmt(rep.front().prob_n01) + "->" + fmt(rep.back().prob_n01) + ", h " + fmt(rep.front().mean_h) +
              "->" + fmt(rep.back().mean_h) + "] ";
  }
  const double secs = seconds_since(t0);
  const std::size_t need = (4 * cfg.replicates + 4) / 5;
  return {up >= need && down >= need && secs < 900.0,
          "N_0.1 mass up in " + std::to_string(up) + "/" + std::to_string(cfg.replicates) + ", mean h decreasing in " +
              std::to_string(down) + "/" + std::to_string(cfg.replicates) + " " + detail + fmt(secs) + " s"};
}

Outcome rate_diagnostic() {
  const ExperimentConfig cfg = desk_config();
  const auto model = cfg.observation_model();
  const auto truth = cfg.truth_spec();
  Engine jrng = RngStream(cfg.master_seed).child("posterior").child("j-rate").engine();
  const double j = j_rate(SetSpec::h_above(0.2), 0.0, model, cfg.prior_spec(), truth, 10000, jrng);
  const auto runs = well_specified_runs(cfg);
  std::map<std::string, int> verdicts;
  bool ok = std::abs(j - 0.2) <= 0.02;
  for (const auto& rep : runs) {
    std::vector<double> probs, ess;
    for (const auto& s : rep) {
      probs.push_back(s.above.prob);
      ess.push_back(s.above.ess);
    }
    const auto d = concentration_rate_diagnostic(probs, ess, cfg.n_schedule, j);
    ++verdicts[to_string(d.verdict)];
    // PASS or an explicit underflow are the acceptable outcomes.
    if (d.verdict == RateVerdict::pass) ok = ok && d.slope && *d.slope < 0.0;
    else if (d.verdict == RateVerdict::underflow) ok = ok && !d.message.empty();
    else ok = false;
  }
  std::string detail = "J(A) " + fmt(j) + ", verdicts:";
  for (const auto& [v, c] : verdicts) detail += " " + v + " x" + std::to_string(c);
  return {ok, detail};
}

Outcome misspecified_predictive() {
  ExperimentConfig cfg = desk_config();
  cfg.truth.name = "step-jump";
  const auto model = cfg.observation_model();
  const auto truth = cfg.truth_spec();
  const std::vector<double> x{0.25};
  std::size_t down = 0, small_final = 0;
  double worst_identity = 0.0;
  std::string detail;
  for (std::size_t r = 0; r < cfg.replicates; ++r) {
    std::vector<double> h2;
    for (std::size_t n : cfg.n_schedule) {
      const auto pred = posterior_predictive(chain(cfg, r, n, x), model, x);
      const auto d = hellinger_tv(best_predictor(model, truth, x, pred), pred);
      worst_identity = std::max({worst_identity, d.h2 - d.tv, d.tv - std::sqrt(2.0 * d.h2)});
      h2.push_back(d.h2);
    }
    if (h2.back() < h2.front()) ++down;
    if (h2.back() <= 0.05) ++small_final;
    detail += "[" + fmt(h2.front()) + "->" + fmt(h2.back()) + "] ";
  }
  const std::size_t need = (4 * cfg.replicates + 4) / 5;
  const bool ok = down >= need && small_final == cfg.replicates && worst_identity <= 1e-10;
  return {ok, "rho_H^2 down in " + std::to_string(down) + "/" + std::to_string(cfg.replicates) + ", <= 0.05 at n=" +
                  std::to_string(cfg.n_schedule.back()) + " in " + std::to_string(small_final) + "/" +
                  std::to_string(cfg.replicates) + ", identity slack " + fmt(worst_identity) + " " + detail};
}

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

Outcome bound_checkers() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = preset_config("paper-desk");
  cfg.output_dir = (fs::temp_directory_path() / "postcon-acceptance-bounds").string();
  fs::remove_all(cfg.output_dir);
  run_experiment(cfg, Study::bounds);
  // kind,t,empirical,ci_lo,ci_hi,bound,verdict,role,exact,standard_error
  std::map<std::string, std::pair<int, int>> validation;
  double worst_mgf = 0.0;
  for (const auto& r : read_rows(fs::path(cfg.output_dir) / "bounds.csv")) {
    if (r[7] == "validation") {
      auto& v = validation[r[0]];
      ++v.second;
      if (r[6] == "PASS") ++v.first;
    }
    if (r[0] == "poisson-mgf")
      worst_mgf = std::max(worst_mgf, std::abs(std::stod(r[2]) - std::stod(r[8])) / (3.0 * std::stod(r[9]) + 1e-300));
  }
  bool ok = validation.size() == 4 && worst_mgf <= 1.0;
  std::string detail;
  for (const auto& [kind, v] : validation) {
    ok = ok && v.second > 0 && v.first == v.second;
    detail += kind + " " + std::to_string(v.first) + "/" + std::to_string(v.second) + "; ";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 120.0;
  return {ok, detail + "MGF worst |diff|/(3 SE) " + fmt(worst_mgf) + ", " + std::to_string(cfg.bounds.samples) +
                  " samples, " + fmt(secs) + " s"};
}

Outcome determinism(const std::string& cli) {
  const fs::path base = fs::temp_directory_path() / "postcon-acceptance-determinism";
  fs::remove_all(base);
  std::vector<std::string> mismatched;
  std::size_t compared = 0;
  for (Study s : all_studies()) {
    for (const char* run : {"a", "b"}) {
      const std::string cmd = "\"" + cli + "\" " + to_string(s) + " --preset smoke --seed 7 --out \"" +
                              (base / run).string() + "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
    }
  }
  for (const auto& entry : fs::directory_iterator(base / "a")) {
    if (entry.path().extension() != ".csv") continue;
    const fs::path other = base / "b" / entry.path().filename();
    std::ifstream fa(entry.path(), std::ios::binary), fb(other, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    ++compared;
    if (!fb || sa.str() != sb.str()) mismatched.push_back(entry.path().filename().string());
  }
  std::string detail = std::to_string(compared) + " CSV artifacts from " + std::to_string(all_studies().size()) +
                       " subcommands";
  for (const auto& m : mismatched) detail += ", differs: " + m;
  return {mismatched.empty() && compared >= all_studies().size(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli = POSTCON_CLI_PATH;
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a.rfind("--cli=", 0) == 0)
      cli = a.substr(6);
    else
      wanted.push_back(std::stoi(a));
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"KL-rate oracle equivalence", oracle_equivalence},
      {"exactness anchors", exactness_anchors},
      {"equipartition", equipartition_scaling},
      {"sieve mass", sieve_mass},
      {"posterior concentration", posterior_concentration},
      {"rate diagnostic", rate_diagnostic},
      {"misspecified predictive convergence", misspecified_predictive},
      {"bound checkers", bound_checkers},
      {"determinism", [&] { return determinism(cli); }},
  };
  if (wanted.empty())
    for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) wanted.push_back(k);

  bool all = true;
  for (int k : wanted) {
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::cerr << "no criterion " << k << "\n";
      return 2;
    }
    const auto& [name, run] = criteria[static_cast<std::size_t>(k - 1)];
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << k << " (" << name << "): " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
