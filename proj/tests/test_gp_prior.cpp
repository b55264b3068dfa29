#include <cmath>
#include <numbers>

#include "doctest.h"
#include "postcon/gp_prior.hpp"

using namespace postcon;

TEST_SUITE("gp-prior") {
  TEST_CASE("kernel matrix entries") {
    KernelSpec k;
    PointSet one{1, {0.3}};
    const auto m1 = kernel_matrix(k, one);
    CHECK(m1(0, 0) == doctest::Approx(1.0 + 1e-9).epsilon(1e-15));
    KernelSpec k0 = k;
    k0.jitter = 0.0;
    const auto m2 = kernel_matrix(k0, PointSet{1, {0.4, 0.4}});
    CHECK(m2(0, 0) == 1.0);
    CHECK(m2(0, 1) == 1.0);
    CHECK(m2(1, 1) == 1.0);
    KernelSpec k1 = k0;
    k1.lengthscale = 1.0;
    CHECK(kernel_matrix(k1, PointSet{1, {0.0, 1.0}})(0, 1) == doctest::Approx(0.606531).epsilon(1e-6));
    CHECK(has_duplicate_points(PointSet{1, {0.4, 0.4}}));
  }

  TEST_CASE("kernel matrices factor for random point sets") {
    Engine rng = RngStream(11).engine();
    std::uniform_real_distribution<double> u;
    for (int trial = 0; trial < 100; ++trial) {
      PointSet pts{1 + trial % 2, {}};
      const std::size_t count = 5 + static_cast<std::size_t>(trial % 40);
      for (std::size_t i = 0; i < count * static_cast<std::size_t>(pts.dim); ++i) pts.coords.push_back(u(rng));
      CHECK_NOTHROW(factor_kernel(KernelSpec{}, pts));
    }
  }

  TEST_CASE("cholesky failure reports the spectrum") {
    KernelSpec k;
    k.lengthscale = 1.0;
    k.amplitude = 1e6;  // roundoff in K dwarfs every escalated jitter
    k.jitter = 0.0;
    PointSet pts{1, {}};
    for (int i = 0; i < 300; ++i) pts.coords.push_back(i / 299.0);
    try {
      factor_kernel(k, pts);
      FAIL("expected the factorization to fail");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("condition number") != std::string::npos);
    }
    k.jitter = -1.0;
    CHECK_THROWS(k.validate());
  }

  TEST_CASE("single-node draws have unit variance") {
    GpPathSampler sampler(KernelSpec{}, {{0.5}});
    Engine rng = RngStream(12).engine();
    const int draws = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double v = sampler.draw(rng).values()[0];
      s += v;
      s2 += v * v;
    }
    const double mean = s / draws, var = s2 / draws - mean * mean;
    CHECK(std::abs(var - 1.0) < 0.02);
  }

  TEST_CASE("distant nodes are uncorrelated; node means vanish") {
    GpPathSampler sampler(KernelSpec{}, {{0.0, 0.33, 1.0}});
    Engine rng = RngStream(13).engine();
    const int draws = 100000;
    double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0, sm = 0, smm = 0;
    for (int i = 0; i < draws; ++i) {
      const auto f = sampler.draw(rng);
      CHECK_EQ(f(std::vector<double>{0.33}), f.values()[1]);
      const double a = f.values()[0], b = f.values()[2], m = f.values()[1];
      sa += a, sb += b, sab += a * b, saa += a * a, sbb += b * b, sm += m, smm += m * m;
    }
    const double n = draws;
    const double cov = sab / n - (sa / n) * (sb / n);
    const double corr = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
    CHECK(std::abs(corr) < 0.02);
    const double se = std::sqrt((smm / n - sm * sm / n / n) / n);
    CHECK(std::abs(sm / n) < 3.0 * se);
  }

  TEST_CASE("sup and gradient norms") {
    const auto c = sup_and_grad_norms(FieldFunction::constant(1, -0.7));
    CHECK(c.sup == doctest::Approx(0.7));
    CHECK(c.grad_sup[0] == 0.0);
    const auto lin = sup_and_grad_norms(FieldFunction::tabulate_uniform(1, 101, [](std::span<const double> x) {
      return 2.0 * x[0];
    }));
    CHECK(lin.sup == doctest::Approx(2.0));
    CHECK(lin.grad_sup[0] == doctest::Approx(2.0).epsilon(1e-9));
    const auto s = sup_and_grad_norms(FieldFunction::tabulate_uniform(1, 401, [](std::span<const double> x) {
      return std::sin(2.0 * std::numbers::pi * x[0]);
    }));
    CHECK(std::abs(s.sup - 1.0) < 1e-3);
    CHECK(std::abs(s.grad_sup[0] - 2.0 * std::numbers::pi) < 1e-2);
  }

  TEST_CASE("sieve membership") {
    SieveSpec sieve;
    sieve.includes_sigma_band = true;
    const Theta zero{FieldFunction::constant(1, 0.0), 1.0};
    for (std::size_t n : {1u, 2u, 10u, 1000u}) CHECK(sieve_membership(zero, n, sieve));
    CHECK(sieve.threshold(1) == doctest::Approx(std::exp(1.0)));
    CHECK_FALSE(sieve_membership(Theta{FieldFunction::constant(1, 3.0), std::nullopt}, 1, sieve));

    GpPathSampler sampler(KernelSpec{}, default_field_axes(1));
    Engine rng = RngStream(14).engine();
    for (int i = 0; i < 100; ++i) {
      const auto norms = sup_and_grad_norms(sampler.draw(rng));
      for (std::size_t n = 1; n < 60; ++n)
        if (sieve_membership(norms, std::nullopt, n, sieve)) CHECK(sieve_membership(norms, std::nullopt, n + 1, sieve));
    }
  }

  TEST_CASE("wilson interval") {
    const auto zero = wilson_interval(0, 10000);
    CHECK(zero.lo == 0.0);
    CHECK(zero.hi == doctest::Approx(3.8415 / (10000 + 3.8415)).epsilon(1e-4));
    const auto mid = wilson_interval(50, 100);
    CHECK(mid.estimate == 0.5);
    CHECK(mid.lo == doctest::Approx(0.4038).epsilon(1e-3));
    CHECK(mid.hi == doctest::Approx(0.5962).epsilon(1e-3));
  }

  TEST_CASE("sieve complement mass is nested and vanishes far out") {
    PriorSpec prior;
    SieveSpec sieve;
    std::vector<std::size_t> ns{1, 2, 3, 5, 10, 40, 300};
    Engine rng = RngStream(15).engine();
    const auto rows = estimate_sieve_complement_mass(prior, sieve, ns, 10000, default_field_axes(1), rng);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].prob <= rows[i - 1].prob);
    CHECK(rows.back().prob == 0.0);
    CHECK(rows.back().ci_hi < 1e-3);
  }

  TEST_CASE("log decay slope on exact exponential input") {
    std::vector<SieveMassRow> rows;
    for (std::size_t n = 1; n <= 10; ++n) rows.push_back({n, std::exp(-0.7 * static_cast<double>(n)), 0.0, 1.0});
    const auto slope = fit_log_decay_slope(rows);
    REQUIRE(slope);
    CHECK(*slope == doctest::Approx(-0.7));
    CHECK_FALSE(fit_log_decay_slope(std::vector<SieveMassRow>{{1, 0.9, 0, 1}, {2, 0.8, 0, 1}}));
  }

  TEST_CASE("lognormal sigma prior") {
    LogNormalPrior p;
    CHECK(p.log_density_of_log(0.0) == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)));
    Engine rng = RngStream(16).engine();
    double s = 0.0;
    for (int i = 0; i < 20000; ++i) {
      const double v = p.sample(rng);
      CHECK(v > 0.0);
      s += std::log(v);
    }
    CHECK(std::abs(s / 20000) < 3.0 / std::sqrt(20000.0));
  }
}
