#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <cmath>

#include "doctest.h"
#include "postcon/bounds.hpp"
#include "postcon/gp_prior.hpp"

using namespace postcon;

namespace {

void check_report_shape(const TailCheckReport& r) {
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    CHECK(row.pass == (row.ci_hi <= row.bound * (1.0 + 1e-12)));
    if (r.kind == "poisson-mgf") continue;
    CHECK(row.empirical >= 0.0);
    CHECK(row.empirical <= 1.0);
    CHECK(row.ci_lo <= row.empirical);
    CHECK(row.empirical <= row.ci_hi);
    if (i > 0 && row.t > r.rows[i - 1].t) CHECK(row.empirical <= r.rows[i - 1].empirical);
  }
}

}  // namespace

TEST_SUITE("bound-checkers") {
  TEST_CASE("hoeffding examples") {
    Engine rng = RngStream(71).engine();
    const std::vector<double> ts{0.0, 0.1, 1.5};
    const auto r = check_hoeffding(1.0, 100, ts, 100000, rng);
    check_report_shape(r);
    CHECK(r.rows[0].bound == 2.0);
    CHECK(r.rows[0].pass);
    CHECK(2.0 * std::exp(-2.0) == doctest::Approx(0.270671).epsilon(1e-6));
    CHECK(r.rows[1].bound == doctest::Approx(2.0 * std::exp(-2.0)).epsilon(1e-14));
    CHECK(r.rows[1].empirical < r.rows[1].bound);
    CHECK(r.rows[1].pass);
    CHECK(r.rows[2].empirical == 0.0);
    CHECK_FALSE(r.calibrated_constant.has_value());
  }

  TEST_CASE("hoeffding grid stays above the zero-count resolution") {
    for (std::size_t n : {10, 100, 1000}) {
      const auto grid = hoeffding_grid(2.0, n, 100000, 8);
      REQUIRE(grid.size() == 8);
      const double floor = wilson_interval(0, 100000).hi;
      CHECK(2.0 * std::exp(-2.0 * static_cast<double>(n) * grid.back() * grid.back() / 4.0) ==
            doctest::Approx(10.0 * floor).epsilon(1e-9));
      Engine rng = RngStream(72).child("n", n).engine();
      const auto r = check_hoeffding(2.0, n, grid, 100000, rng);
      check_report_shape(r);
      CHECK(r.validation_passed());
    }
    CHECK_THROWS(hoeffding_grid(1.0, 100, 10, 8));
  }

  TEST_CASE("sample counts below 10^4 are rejected") {
    Engine rng = RngStream(73).engine();
    const std::vector<double> ts{0.1, 0.2};
    CHECK_THROWS(check_hoeffding(1.0, 10, ts, 9999, rng));
    CHECK_THROWS(check_hanson_wright(10, ts, 5000, rng));
    CHECK_THROWS(check_bernstein_laplace(1.0, 10, ts, 100, rng));
    CHECK_THROWS(check_poisson_subexponential(2.0, 1.0, ts, 10, rng));
  }

  TEST_CASE("poisson summand MGF") {
    // Closed form of the log-MGF at lambda0 = 1, lambda = 2, t = 0.1.
    const double log_mgf = -0.1 * std::log(2.0) + (std::pow(2.0, 0.1) - 1.0);
    CHECK(log_mgf == doctest::Approx(0.0024587).epsilon(1e-4));
    CHECK(std::log(poisson_summand_mgf(2.0, 1.0, 0.1)) == doctest::Approx(log_mgf).epsilon(1e-12));
    CHECK(poisson_summand_mgf(2.0, 1.0, 0.0) == 1.0);
    CHECK(poisson_summand_mgf(1.5, 1.5, 0.7) == 1.0);

    Engine rng = RngStream(74).engine();
    const std::vector<double> zero{0.0, 0.1};
    const auto z = check_poisson_subexponential(2.0, 1.0, zero, 10000, rng);
    CHECK(z.rows[0].empirical == 1.0);
    CHECK(*z.rows[0].exact == 1.0);

    // The smallest t must calibrate: the CI half-width is linear in t while log of
    // the bound is quadratic, so the constant a row needs grows like 1/t.
    const auto ts = log_spaced(0.05, 1.0, 8);
    const auto r = check_poisson_subexponential(2.0, 1.0, ts, 100000, rng);
    check_report_shape(r);
    for (const auto& row : r.rows) {
      REQUIRE(row.exact.has_value());
      CHECK(std::abs(row.empirical - *row.exact) <= 3.0 * *row.standard_error + 1e-15);
    }
    REQUIRE(r.calibrated_constant.has_value());
    CHECK(*r.calibrated_constant > 0.0);
    CHECK(r.validation_passed());
  }

  TEST_CASE("equal poisson rates give a degenerate summand") {
    Engine rng = RngStream(75).engine();
    const std::vector<double> ts{0.1, 0.5, 1.0};
    const auto r = check_poisson_subexponential(1.3, 1.3, ts, 10000, rng);
    for (const auto& row : r.rows) {
      CHECK(row.empirical == 1.0);
      CHECK(*row.exact == 1.0);
    }
  }

  TEST_CASE("poisson thresholds outside the window are rejected") {
    Engine rng = RngStream(76).engine();
    const std::vector<double> ts{0.01, 0.02, 0.03, 3.0};
    CHECK_THROWS_WITH(check_poisson_subexponential(2.0, 1.0, ts, 10000, rng), doctest::Contains("window"));
  }

  TEST_CASE("hanson-wright tail against the chi-square cdf") {
    Engine rng = RngStream(77).engine();
    const std::vector<double> ks{0.0, 0.25, 0.5, 0.75, 1.0};
    const auto r = check_hanson_wright(100, ks, 100000, rng);
    check_report_shape(r);
    CHECK(r.rows[0].bound == 2.0);
    const boost::math::chi_squared_distribution<> chi(100.0);
    const double exact = boost::math::cdf(boost::math::complement(chi, 150.0)) + boost::math::cdf(chi, 50.0);
    CHECK(exact == doctest::Approx(9.109e-4).epsilon(1e-3));
    const double se = std::sqrt(exact * (1.0 - exact) / 100000.0);
    CHECK(std::abs(r.rows[4].empirical - exact) <= 3.0 * se);
    REQUIRE(r.calibrated_constant.has_value());
    CHECK(r.validation_passed());
  }

  TEST_CASE("bernstein tail for laplace summands against the gamma cdf") {
    Engine rng = RngStream(78).engine();
    const std::vector<double> ts{0.0, 0.05, 0.1, 0.2, 0.3};
    const auto r = check_bernstein_laplace(1.0, 100, ts, 200000, rng);
    check_report_shape(r);
    CHECK(r.rows[0].bound == 2.0);
    // The sum of 100 |eps_i| is Gamma(100, 1).
    const boost::math::gamma_distribution<> g(100.0, 1.0);
    const double exact = boost::math::cdf(boost::math::complement(g, 130.0)) + boost::math::cdf(g, 70.0);
    CHECK(exact == doctest::Approx(0.0031808).epsilon(1e-3));
    const double se = std::sqrt(exact * (1.0 - exact) / 200000.0);
    CHECK(std::abs(r.rows[4].empirical - exact) <= 3.0 * se);
    CHECK(r.validation_passed());
  }

  TEST_CASE("calibration and validation grids are disjoint") {
    const std::vector<double> g{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<double> cal, val;
    split_grid(g, cal, val);
    CHECK(cal == std::vector<double>{1, 3, 5, 7, 8});
    CHECK(val == std::vector<double>{2, 4, 6});
    const auto ls = log_spaced(0.1, 10.0, 3);
    CHECK(ls[0] == 0.1);
    CHECK(ls[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(ls[2] == doctest::Approx(10.0).epsilon(1e-15));
  }
}
