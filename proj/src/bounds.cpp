#include "postcon/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "postcon/gp_prior.hpp"

namespace postcon {

namespace {

constexpr double kZ = 1.959963984540054;

void require_samples(std::size_t samples) {
  if (samples < 10000) throw std::invalid_argument("tail checks need >= 10^4 samples");
}

// Fills empirical/CI for a tail event counted over `samples` draws.
TailCheckRow tail_row(double t, std::size_t hits, std::size_t samples) {
  const auto ci = wilson_interval(hits, samples);
  TailCheckRow r;
  r.t = t;
  r.empirical = ci.estimate;
  r.ci_lo = ci.lo;
  r.ci_hi = ci.hi;
  return r;
}

bool passes(double ci_hi, double bound) { return ci_hi <= bound * (1.0 + 1e-12); }

void mark_split(TailCheckReport& report) {
  std::vector<double> ts, cal, val;
  for (const auto& r : report.rows) ts.push_back(r.t);
  split_grid(ts, cal, val);
  for (auto& r : report.rows) r.validation = std::find(val.begin(), val.end(), r.t) != val.end();
}

}  // namespace

bool TailCheckReport::validation_passed() const {
  bool any = false;
  for (const auto& r : rows) {
    if (!r.validation) continue;
    any = true;
    if (!r.pass) return false;
  }
  return any;
}

std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0 && hi > lo) || count < 2) throw std::invalid_argument("log_spaced: need 0 < lo < hi, count >= 2");
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i)
    g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(count - 1));
  return g;
}

std::vector<double> hoeffding_grid(double range_width, std::size_t n, std::size_t samples, std::size_t count) {
  const double floor = wilson_interval(0, samples).hi;
  const double t_hi =
      range_width * std::sqrt(std::log(2.0 / (10.0 * floor)) / (2.0 * static_cast<double>(n)));
  const double t_lo = 0.05 * range_width;
  if (!(t_hi > t_lo)) throw std::invalid_argument("hoeffding_grid: too few samples for this n");
  return log_spaced(t_lo, t_hi, count);
}

void split_grid(std::span<const double> grid, std::vector<double>& calibration, std::vector<double>& validation) {
  calibration.clear();
  validation.clear();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i % 2 == 0 || i + 1 == grid.size())
      calibration.push_back(grid[i]);
    else
      validation.push_back(grid[i]);
  }
}

TailCheckReport check_hoeffding(double range_width, std::size_t n, std::span<const double> t_grid,
                                std::size_t samples, Engine& rng, double p) {
  require_samples(samples);
  if (!(range_width > 0.0) || n == 0) throw std::invalid_argument("check_hoeffding: need range > 0 and n >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("check_hoeffding: p must lie in [0, 1]");
  TailCheckReport report;
  report.kind = "hoeffding";
  report.parameters = {{"range", range_width}, {"n", static_cast<double>(n)}, {"p", p},
                       {"samples", static_cast<double>(samples)}};
  const double mu = range_width * p;
  std::binomial_distribution<long long> binom(static_cast<long long>(n), p);
  std::vector<double> dev(samples);
  for (auto& d : dev) d = std::abs(range_width * static_cast<double>(binom(rng)) / static_cast<double>(n) - mu);
  for (double t : t_grid) {
    const auto hits = static_cast<std::size_t>(std::count_if(dev.begin(), dev.end(), [t](double d) { return d > t; }));
    TailCheckRow r = tail_row(t, hits, samples);
    r.bound = 2.0 * std::exp(-2.0 * static_cast<double>(n) * t * t / (range_width * range_width));
    r.pass = passes(r.ci_hi, r.bound);
    r.validation = true;
    report.rows.push_back(r);
  }
  return report;
}

double poisson_summand_mgf(double lambda, double lambda0, double t) {
  const double lr = std::log(lambda / lambda0);
  return std::exp(-t * lambda0 * lr) * std::exp(lambda0 * (std::exp(t * lr) - 1.0));
}

TailCheckReport check_poisson_subexponential(double lambda, double lambda0, std::span<const double> t_grid,
                                             std::size_t samples, Engine& rng) {
  require_samples(samples);
  if (!(lambda > 0.0 && lambda0 > 0.0)) throw std::invalid_argument("check_poisson_subexponential: need positive rates");
  TailCheckReport report;
  report.kind = "poisson-mgf";
  report.constant_name = "C";
  report.parameters = {{"lambda", lambda}, {"lambda0", lambda0}, {"samples", static_cast<double>(samples)}};
  const double lr = std::log(lambda / lambda0);
  const double delta = std::abs(lambda - lambda0);
  std::poisson_distribution<long long> pois(lambda0);
  std::vector<double> z(samples);
  for (auto& v : z) v = static_cast<double>(pois(rng)) * lr - lambda0 * lr;

  for (double t : t_grid) {
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
      const double v = std::exp(t * z[i]);
      const double d = v - mean;
      mean += d / static_cast<double>(i + 1);
      m2 += d * (v - mean);
    }
    const double se = std::sqrt(m2 / static_cast<double>(samples - 1) / static_cast<double>(samples));
    TailCheckRow r;
    r.t = t;
    r.empirical = mean;
    r.ci_lo = mean - kZ * se;
    r.ci_hi = mean + kZ * se;
    r.exact = poisson_summand_mgf(lambda, lambda0, t);
    r.standard_error = se;
    report.rows.push_back(r);
  }
  mark_split(report);

  double c_const = 0.0;
  for (const auto& r : report.rows) {
    if (r.validation || r.t == 0.0 || delta == 0.0) continue;
    const double need = std::sqrt(std::max(0.0, std::log(r.ci_hi))) / (delta * std::abs(r.t));
    c_const = std::max(c_const, need);
  }
  report.calibrated_constant = c_const;
  const double c_lambda = c_const * delta;
  for (auto& r : report.rows) {
    if (c_lambda > 0.0 && std::abs(r.t) > 1.0 / c_lambda) {
      std::ostringstream msg;
      msg << "check_poisson_subexponential: t = " << r.t << " lies outside the sub-exponential window |t| <= "
          << 1.0 / c_lambda;
      throw std::invalid_argument(msg.str());
    }
    r.bound = std::exp(c_lambda * c_lambda * r.t * r.t);
    r.pass = passes(r.ci_hi, r.bound);
  }
  return report;
}

TailCheckReport check_hanson_wright(std::size_t n, std::span<const double> kappa_grid, std::size_t samples,
                                    Engine& rng) {
  require_samples(samples);
  if (n == 0) throw std::invalid_argument("check_hanson_wright: n must be >= 1");
  TailCheckReport report;
  report.kind = "hanson-wright";
  report.constant_name = "c0";
  report.parameters = {{"n", static_cast<double>(n)}, {"samples", static_cast<double>(samples)}};
  const double nd = static_cast<double>(n);
  std::normal_distribution<double> normal;
  std::vector<double> dev(samples);
  for (auto& d : dev) {
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double zi = normal(rng);
      q += zi * zi;
    }
    d = std::abs(q - nd);
  }
  for (double kappa : kappa_grid) {
    const double thr = nd * kappa / 2.0;
    const auto hits =
        static_cast<std::size_t>(std::count_if(dev.begin(), dev.end(), [thr](double d) { return d > thr; }));
    report.rows.push_back(tail_row(kappa, hits, samples));
  }
  mark_split(report);

  double c0 = 0.0;
  for (const auto& r : report.rows) {
    if (r.validation || r.t <= 0.0) continue;
    const double rr = std::log(2.0 / r.ci_hi);
    c0 = std::max(c0, std::min(nd * r.t * r.t / (16.0 * rr), nd * r.t / (4.0 * rr)));
  }
  report.calibrated_constant = c0;
  for (auto& r : report.rows) {
    const double k = r.t;
    r.bound = c0 > 0.0 ? 2.0 * std::exp(-nd * std::min(k * k / (16.0 * c0), k / (4.0 * c0))) : 2.0;
    if (k == 0.0) r.bound = 2.0;
    r.pass = passes(r.ci_hi, r.bound);
  }
  return report;
}

TailCheckReport check_bernstein_laplace(double sigma0, std::size_t n, std::span<const double> t_grid,
                                        std::size_t samples, Engine& rng) {
  require_samples(samples);
  if (!(sigma0 > 0.0) || n == 0) throw std::invalid_argument("check_bernstein_laplace: need sigma0 > 0, n >= 1");
  TailCheckReport report;
  report.kind = "bernstein-laplace";
  report.constant_name = "s";
  report.parameters = {{"sigma0", sigma0}, {"n", static_cast<double>(n)}, {"samples", static_cast<double>(samples)}};
  const double nd = static_cast<double>(n);
  std::exponential_distribution<double> expo(1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> dev(samples);
  for (auto& d : dev) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = sigma0 * expo(rng);
      const double eps = coin(rng) ? e : -e;
      s += std::abs(eps) / sigma0 - 1.0;
    }
    d = std::abs(s / nd);
  }
  for (double t : t_grid) {
    const auto hits = static_cast<std::size_t>(std::count_if(dev.begin(), dev.end(), [t](double d) { return d > t; }));
    report.rows.push_back(tail_row(t, hits, samples));
  }
  mark_split(report);

  double s_const = 0.0;
  for (const auto& r : report.rows) {
    if (r.validation || r.t <= 0.0) continue;
    const double rr = std::log(2.0 / r.ci_hi);
    s_const = std::max(s_const, std::min(r.t * std::sqrt(nd / (8.0 * rr)), nd * r.t / (4.0 * rr)));
  }
  report.calibrated_constant = s_const;
  for (auto& r : report.rows) {
    const double t = r.t;
    r.bound = (s_const > 0.0 && t > 0.0)
                  ? 2.0 * std::exp(-(nd / 2.0) * std::min(t * t / (4.0 * s_const * s_const), t / (2.0 * s_const)))
                  : 2.0;
    r.pass = passes(r.ci_hi, r.bound);
  }
  return report;
}

}  // namespace postcon
