#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "postcon/posterior.hpp"

using namespace postcon;

namespace {

Dataset empty_dataset() {
  Dataset d;
  d.covariates.dim = 1;
  return d;
}

Dataset simulated(const ObservationModel& model, const TruthSpec& truth, std::size_t n, std::uint64_t seed) {
  Engine rng = RngStream(seed).engine();
  return simulate_responses(model, truth, sample_covariates(n, CovariateScheme::iid_uniform, CovariateSpace(1), rng), rng);
}

McmcConfig short_chain(std::size_t iterations, std::size_t burn_in, std::size_t thin) {
  McmcConfig c;
  c.iterations = iterations;
  c.burn_in = burn_in;
  c.thin = thin;
  c.quadrature_nodes = 16;
  return c;
}

PriorSpec scale_prior() {
  PriorSpec p;
  p.sigma_prior = LogNormalPrior{};
  return p;
}

PredictiveDistribution bernoulli(double p) {
  PredictiveDistribution d;
  d.kind = ModelKind::binary;
  d.probability = p;
  return d;
}

}  // namespace

TEST_SUITE("posterior") {
  TEST_CASE("with no data the chain samples the prior") {
    const auto cfg = short_chain(10500, 500, 1);
    Engine rng = RngStream(51).engine();
    const auto s = run_mcmc(ObservationModel::binary(), empty_dataset(), PriorSpec{}, cfg, rng);
    REQUIRE(s.size() == 10000);
    const double prior_var = PriorSpec{}.kernel.amplitude * PriorSpec{}.kernel.amplitude;
    for (std::size_t node = 0; node < s.quadrature.size(); node += 3) {
      std::vector<double> col(s.size());
      for (std::size_t k = 0; k < s.size(); ++k) col[k] = s.eta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(node));
      double mean = 0.0, var = 0.0;
      for (double v : col) mean += v / static_cast<double>(col.size());
      for (double v : col) var += (v - mean) * (v - mean) / static_cast<double>(col.size() - 1);
      const double se = std::sqrt(var / effective_sample_size(col));
      INFO("node " << node);
      CHECK(std::abs(mean) <= 3.0 * se);
      CHECK(var == doctest::Approx(prior_var).epsilon(0.10));
    }
  }

  TEST_CASE("sigma draws stay positive and replay exactly") {
    const auto model = ObservationModel::gaussian();
    const auto truth = truth_catalog("smooth-sin").with_sigma(0.5);
    const auto data = simulated(model, truth, 60, 52);
    const auto cfg = short_chain(600, 100, 2);
    Engine a = RngStream(53).engine(), b = RngStream(53).engine();
    const auto s1 = run_mcmc(model, data, scale_prior(), cfg, a);
    const auto s2 = run_mcmc(model, data, scale_prior(), cfg, b);
    CHECK(s1.size() == cfg.draw_count());
    CHECK(s1.eta == s2.eta);
    CHECK(s1.sigma == s2.sigma);
    for (double v : s1.sigma) CHECK(v > 0.0);
    CHECK(s1.sigma_acceptance > 0.0);
    CHECK(s1.sigma_acceptance < 1.0);
  }

  TEST_CASE("scale models need a sigma prior") {
    Engine rng = RngStream(54).engine();
    CHECK_THROWS(run_mcmc(ObservationModel::laplace(), empty_dataset(), PriorSpec{}, short_chain(20, 10, 1), rng));
  }

  TEST_CASE("set probabilities") {
    const auto model = ObservationModel::binary();
    const auto truth = truth_catalog("smooth-sin");
    Engine rng = RngStream(55).engine();
    const auto s = run_mcmc(model, simulated(model, truth, 100, 56), PriorSpec{}, short_chain(1200, 200, 2), rng);
    const auto h = posterior_h_values(s, model, truth);
    REQUIRE(h.size() == s.size());

    const auto whole = posterior_set_probability(h, SetSpec::whole_space(), 0.0);
    CHECK(whole.prob == 1.0);
    CHECK(whole.mcse == 0.0);
    for (double c : {0.01, 0.05, 0.1, 0.2}) {
      const auto a = posterior_set_probability(h, SetSpec::h_above(c), 0.0);
      const auto ac = posterior_set_probability(h, SetSpec::h_above(c).complemented(), 0.0);
      CHECK(a.prob + ac.prob == 1.0);
    }
    double prev = 1.0;
    for (double c : {0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5}) {
      const double p = posterior_set_probability(h, SetSpec::h_above(c), 0.0).prob;
      CHECK(p <= prev);
      prev = p;
    }
    const auto direct = posterior_set_probability(s, model, truth, SetSpec::h_above(0.05), 0.0);
    CHECK(direct.prob == posterior_set_probability(h, SetSpec::h_above(0.05), 0.0).prob);
    const auto empty = posterior_set_probability(h, SetSpec::h_above(1e9), 0.0);
    CHECK(empty.prob == 0.0);
    CHECK(empty.below_resolution);
  }

  TEST_CASE("rate diagnostic verdicts") {
    const std::vector<std::size_t> n{10, 20, 30, 40};
    std::vector<double> probs, ess(4, 1e6);
    for (std::size_t v : n) probs.push_back(std::exp(-0.2 * static_cast<double>(v)));
    const auto exact = concentration_rate_diagnostic(probs, ess, n, 0.2);
    REQUIRE(exact.slope.has_value());
    CHECK(*exact.slope == doctest::Approx(-0.2).epsilon(1e-12));
    CHECK(exact.verdict == RateVerdict::pass);

    const std::vector<double> flat(4, 0.3);
    const auto constant = concentration_rate_diagnostic(flat, ess, n, 0.2);
    CHECK(*constant.slope == doctest::Approx(0.0).scale(1.0));
    CHECK(constant.verdict == RateVerdict::report);

    std::vector<double> with_zero = probs;
    with_zero.back() = 0.0;
    const auto under = concentration_rate_diagnostic(with_zero, ess, n, 0.2);
    CHECK(under.verdict == RateVerdict::underflow);
    CHECK_FALSE(under.slope.has_value());
    CHECK(under.message.find("underflow") != std::string::npos);

    const std::vector<double> shallow_ess(4, 100.0);
    CHECK(concentration_rate_diagnostic(probs, shallow_ess, n, 0.2).verdict == RateVerdict::underflow);

    const std::vector<std::size_t> two{10, 20};
    const std::vector<double> p2{0.5, 0.1}, e2{1e6, 1e6};
    CHECK(concentration_rate_diagnostic(p2, e2, two, 0.2).verdict == RateVerdict::insufficient_data);
  }

  TEST_CASE("predictive distributions normalize") {
    const auto xq = std::vector<double>{0.37};
    {
      const auto model = ObservationModel::poisson();
      const auto truth = truth_catalog("smooth-bump");
      Engine rng = RngStream(57).engine();
      const auto s = run_mcmc(model, simulated(model, truth, 80, 58), PriorSpec{}, short_chain(400, 100, 3), rng);
      const auto pred = posterior_predictive(s, model, xq);
      CHECK(std::abs(pred.total_mass() - 1.0) <= 1e-8);
      const auto best = best_predictor(model, truth, xq, pred);
      CHECK(std::abs(best.total_mass() - 1.0) <= 1e-8);
    }
    for (const auto& model : {ObservationModel::gaussian(), ObservationModel::laplace()}) {
      const auto truth = truth_catalog("smooth-sin").with_sigma(0.4);
      Engine rng = RngStream(59).engine();
      const auto s = run_mcmc(model, simulated(model, truth, 80, 60), scale_prior(), short_chain(400, 100, 3), rng);
      const auto pred = posterior_predictive(s, model, xq);
      CHECK(pred.grid.size() == 512);
      CHECK(std::abs(pred.total_mass() - 1.0) <= 1e-6);
      const auto best = best_predictor(model, truth, xq, pred);
      CHECK(std::abs(best.total_mass() - 1.0) <= 1e-6);
      const auto d = hellinger_tv(pred, best);
      CHECK(d.h2 >= 0.0);
      CHECK(d.tv <= 1.0);
    }
  }

  TEST_CASE("a single draw predicts its own distribution") {
    const auto model = ObservationModel::binary();
    auto cfg = short_chain(101, 100, 1);
    cfg.extra_sites = {0.61};
    Engine rng = RngStream(61).engine();
    const auto s = run_mcmc(model, simulated(model, truth_catalog("smooth-sin"), 30, 62), PriorSpec{}, cfg, rng);
    REQUIRE(s.size() == 1);
    const auto site = s.site_index(std::vector<double>{0.61});
    REQUIRE(site.has_value());
    const double eta = s.eta(0, static_cast<Eigen::Index>(*site));
    CHECK(posterior_predictive(s, model, std::vector<double>{0.61}).probability == doctest::Approx(model.link(eta)).epsilon(1e-12));
  }

  TEST_CASE("binary predictive stays inside the truncation band") {
    const auto model = ObservationModel::binary();
    TruthSpec extreme = truth_catalog("constant(0)");
    extreme.eta0 = FieldFunction::constant(1, 8.0);
    Engine rng = RngStream(63).engine();
    const auto s = run_mcmc(model, simulated(model, extreme, 300, 64), PriorSpec{}, short_chain(600, 100, 2), rng);
    for (double x : {0.0, 0.2, 0.5, 0.93, 1.0}) {
      const double p = posterior_predictive(s, model, std::vector<double>{x}).probability;
      CHECK(p >= 0.05);
      CHECK(p <= 0.95);
    }
  }

  TEST_CASE("zero-data binary predictive matches a prior Monte Carlo") {
    const auto model = ObservationModel::binary();
    Engine rng = RngStream(65).engine();
    const auto s = run_mcmc(model, empty_dataset(), PriorSpec{}, short_chain(8200, 200, 2), rng);
    const double x = 0.4321;  // off every latent site
    CHECK_FALSE(s.site_index(std::vector<double>{x}).has_value());
    const double chain = posterior_predictive(s, model, std::vector<double>{x}).probability;

    // Under the prior eta(x) ~ N(0, tau^2); average H over direct normal draws.
    const double tau = PriorSpec{}.kernel.amplitude;
    Engine mc = RngStream(66).engine();
    std::normal_distribution<double> nd(0.0, tau);
    double mean = 0.0, m2 = 0.0;
    const int m = 1000000;
    for (int i = 0; i < m; ++i) {
      const double v = model.link(nd(mc));
      const double d = v - mean;
      mean += d / (i + 1);
      m2 += d * (v - mean);
    }
    const double sd = std::sqrt(m2 / (m - 1));
    // The chain's error: per-draw predictive sd bounded by sd(H), over the ESS of the nearest node.
    std::size_t nearest = 0;
    for (std::size_t i = 1; i < s.quadrature.size(); ++i)
      if (std::abs(s.quadrature.point(i)[0] - x) < std::abs(s.quadrature.point(nearest)[0] - x)) nearest = i;
    std::vector<double> col(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) col[k] = s.eta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(nearest));
    const double se = std::sqrt(sd * sd / effective_sample_size(col) + sd * sd / m);
    CHECK(std::abs(chain - mean) <= 3.0 * se);
  }

  TEST_CASE("hellinger and total variation") {
    const auto same = hellinger_tv(bernoulli(0.3), bernoulli(0.3));
    CHECK(std::abs(same.h2) < 1e-15);
    CHECK(same.tv == 0.0);
    const double h2 = 1.0 - (std::sqrt(0.5 * 0.25) + std::sqrt(0.5 * 0.75));
    CHECK(h2 == doctest::Approx(0.034074).epsilon(1e-5));
    const auto d = hellinger_tv(bernoulli(0.5), bernoulli(0.25));
    CHECK(d.h2 == doctest::Approx(h2).epsilon(1e-14));
    CHECK(d.tv == doctest::Approx(0.25).epsilon(1e-14));

    PredictiveDistribution pmf;
    pmf.kind = ModelKind::poisson;
    pmf.pmf = {0.5, 0.5};
    CHECK_THROWS(hellinger_tv(pmf, bernoulli(0.5)));
  }

  TEST_CASE("hellinger-tv inequalities on random pairs") {
    Engine rng = RngStream(67).engine();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> len(1, 40);
    for (int k = 0; k < 1000; ++k) {
      PredictiveDistribution a, b;
      a.kind = b.kind = ModelKind::poisson;
      const int m = len(rng);
      double sa = 0.0, sb = 0.0;
      for (int i = 0; i < m; ++i) {
        a.pmf.push_back(std::pow(u(rng), 3.0));
        b.pmf.push_back(std::pow(u(rng), 3.0));
        sa += a.pmf.back();
        sb += b.pmf.back();
      }
      for (auto& v : a.pmf) v /= sa;
      for (auto& v : b.pmf) v /= sb;
      const auto d = hellinger_tv(a, b);
      if (!(d.h2 <= d.tv + 1e-10 && d.tv <= std::sqrt(2.0 * d.h2) + 1e-10 && d.h2 >= -1e-15 && d.tv <= 1.0 + 1e-15))
        FAIL("pair " << k << ": h2 = " << d.h2 << " tv = " << d.tv);
    }
  }

  TEST_CASE("gauss-hermite integrates normal moments exactly") {
    std::vector<double> z, w;
    gauss_hermite(32, z, w);
    REQUIRE(z.size() == 32);
    double moment_double_factorial = 1.0;
    for (int k = 0; k <= 20; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) s += w[i] * std::pow(z[i], k);
      if (k % 2 == 1) {
        // Terms reach ~k!! in size, so the cancellation error scales with it.
        CHECK(std::abs(s) < 1e-12 * moment_double_factorial * k);
      } else {
        if (k > 0) moment_double_factorial *= (k - 1);
        CHECK(s == doctest::Approx(moment_double_factorial).epsilon(1e-10));
      }
    }
  }

  TEST_CASE("effective sample size") {
    Engine rng = RngStream(68).engine();
    std::normal_distribution<double> nd;
    std::vector<double> iid(20000), ar(20000);
    double prev = 0.0;
    for (std::size_t i = 0; i < iid.size(); ++i) {
      iid[i] = nd(rng);
      prev = 0.9 * prev + std::sqrt(1.0 - 0.81) * nd(rng);
      ar[i] = prev;
    }
    CHECK(effective_sample_size(iid) == doctest::Approx(20000.0).epsilon(0.15));
    CHECK(effective_sample_size(ar) == doctest::Approx(20000.0 * 0.1 / 1.9).epsilon(0.25));
  }

  TEST_CASE("draws csv names every site") {
    Engine rng = RngStream(69).engine();
    const auto s = run_mcmc(ObservationModel::binary(), empty_dataset(), PriorSpec{}, short_chain(30, 10, 5), rng);
    std::ostringstream out;
    write_draws_csv(out, s);
    std::istringstream in(out.str());
    std::string header, line;
    std::getline(in, header);
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == s.size());
    CHECK(static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1 >= s.sites.size());
  }
}
