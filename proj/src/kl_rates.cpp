#include "postcon/kl_rates.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace postcon {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double scale_or_throw(std::optional<double> s, const char* who) {
  if (!s || !(*s > 0.0)) throw std::invalid_argument(std::string(who) + ": model needs a positive sigma");
  return *s;
}

}  // namespace

double pointwise_kl(const ObservationModel& model, double eta, std::optional<double> sigma, double eta0,
                    std::optional<double> sigma0) {
  switch (model.kind) {
    case ModelKind::binary: {
      const double p = model.link(eta), p0 = model.link(eta0);
      if (p == p0) return 0.0;
      return p0 * std::log(p0 / p) + (1.0 - p0) * std::log((1.0 - p0) / (1.0 - p));
    }
    case ModelKind::poisson: {
      const double l = model.link(eta), l0 = model.link(eta0);
      if (l == l0) return 0.0;
      return (l - l0) + l0 * std::log(l0 / l);
    }
    case ModelKind::gaussian: {
      const double s = scale_or_throw(sigma, "kl"), s0 = scale_or_throw(sigma0, "kl");
      if (s == s0 && eta == eta0) return 0.0;
      const double d = eta - eta0;
      return std::log(s / s0) - 0.5 + (s0 * s0 + d * d) / (2.0 * s * s);
    }
    case ModelKind::laplace: {
      const double s = scale_or_throw(sigma, "kl"), s0 = scale_or_throw(sigma0, "kl");
      if (s == s0 && eta == eta0) return 0.0;
      const double d = std::abs(eta - eta0);
      return std::log(s / s0) - 1.0 + d / s + (s0 / s) * std::exp(-d / s0);
    }
  }
  return 0.0;
}

KlRateEstimate kl_rate(const ObservationModel& model, const Theta& theta, const TruthSpec& truth,
                       const Integrator& integrator) {
  if (theta.eta.dim() != truth.dim()) throw std::invalid_argument("kl_rate: theta and truth dims differ");
  if (model.has_scale()) {
    scale_or_throw(theta.sigma, "kl_rate");
    scale_or_throw(truth.sigma0, "kl_rate");
  }
  const CovariateSpace space(truth.dim());
  const auto g = [&](std::span<const double> x) {
    return pointwise_kl(model, theta.eta(x), theta.sigma, truth.eta(x), truth.sigma0);
  };
  const Expectation e = expect_over_Q(g, space, integrator, truth.jumps());
  return {e.value, e.err, integrator.method};
}

double kl_rate_on_nodes(const ObservationModel& model, std::span<const double> eta_at_nodes,
                        std::optional<double> sigma, std::span<const double> eta0_at_nodes,
                        std::optional<double> sigma0, const QuadratureRule& rule) {
  if (eta_at_nodes.size() != rule.size() || eta0_at_nodes.size() != rule.size())
    throw std::invalid_argument("kl_rate_on_nodes: node count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i)
    sum += rule.weights[i] * pointwise_kl(model, eta_at_nodes[i], sigma, eta0_at_nodes[i], sigma0);
  return sum;
}

OracleValue per_obs_kl_oracle_at(const ObservationModel& model, double eta, std::optional<double> sigma, double eta0,
                                 std::optional<double> sigma0) {
  switch (model.kind) {
    case ModelKind::binary: {
      double sum = 0.0, abs_sum = 0.0;
      for (double y : {0.0, 1.0}) {
        const double l0 = log_density_at(model, eta0, sigma0, y);
        const double term = std::exp(l0) * (l0 - log_density_at(model, eta, sigma, y));
        sum += term;
        abs_sum += std::abs(term);
      }
      return {sum, 8.0 * kEps * abs_sum};
    }
    case ModelKind::poisson: {
      const double l0 = model.link(eta0);
      const double limit = l0 + 100.0 * std::sqrt(l0) + 1000.0;
      double sum = 0.0, abs_sum = 0.0;
      for (double y = 0.0;; y += 1.0) {
        const double lf0 = log_density_at(model, eta0, sigma0, y);
        const double diff = lf0 - log_density_at(model, eta, sigma, y);
        const double term = std::exp(lf0) * diff;
        sum += term;
        abs_sum += std::abs(term);
        if (y > l0) {
          // P(Y > y) under Poisson(l0).
          const double tail = boost::math::gamma_p(y + 1.0, l0);
          if (tail < 1e-12) {
            // The remaining terms are bounded by the tail mass times a log ratio
            // that grows at most linearly in y.
            const double slope = std::abs(std::log(l0 / model.link(eta)));
            const double bound = tail * (std::abs(diff) + slope * (y + 1.0) + 1.0);
            return {sum, bound + 8.0 * kEps * abs_sum};
          }
        }
        if (y > limit) {
          std::ostringstream msg;
          msg << "per_obs_kl_oracle: poisson series did not reach tail 1e-12 by y=" << y;
          throw std::runtime_error(msg.str());
        }
      }
    }
    case ModelKind::gaussian:
    case ModelKind::laplace: {
      scale_or_throw(sigma, "oracle");
      scale_or_throw(sigma0, "oracle");
      const auto integrand = [&](double y) {
        const double lf0 = log_density_at(model, eta0, sigma0, y);
        const double f0 = std::exp(lf0);
        if (f0 == 0.0) return 0.0;
        return f0 * (lf0 - log_density_at(model, eta, sigma, y));
      };
      using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
      const double lo = std::min(eta, eta0), hi = std::max(eta, eta0);
      const double inf = std::numeric_limits<double>::infinity();
      double total = 0.0, err_total = 0.0;
      auto piece = [&](double a, double b) {
        double err = 0.0;
        total += GK::integrate(integrand, a, b, 15, 1e-12, &err);
        err_total += err;
      };
      piece(-inf, lo);
      if (hi > lo) piece(lo, hi);
      piece(hi, inf);
      return {total, err_total + 8.0 * kEps * std::abs(total)};
    }
  }
  return {};
}

OracleValue per_obs_kl_oracle(const ObservationModel& model, const Theta& theta, const TruthSpec& truth,
                              std::span<const double> x) {
  for (double v : x)
    if (!(v >= 0.0 && v <= 1.0)) throw std::out_of_range("per_obs_kl_oracle: x outside the unit cube");
  return per_obs_kl_oracle_at(model, theta.eta(x), theta.sigma, truth.eta(x), truth.sigma0);
}

SetSpec SetSpec::n_epsilon(double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("N-epsilon needs epsilon > 0");
  return {Kind::n_epsilon, eps, 0.0, false};
}

std::string SetSpec::describe() const {
  std::ostringstream s;
  if (complement) s << "complement of ";
  switch (kind) {
    case Kind::whole: s << "whole space"; break;
    case Kind::h_above: s << "{h >= " << a << "}"; break;
    case Kind::h_below: s << "{h <= " << a << "}"; break;
    case Kind::h_band: s << "{" << a << " <= h <= " << b << "}"; break;
    case Kind::n_epsilon: s << "N_eps(" << a << ") = {h <= h(Theta) + " << a << "}"; break;
  }
  return s.str();
}

bool in_set(const SetSpec& set, double h_value, double h_theta) {
  bool inside = true;
  switch (set.kind) {
    case SetSpec::Kind::whole: inside = true; break;
    case SetSpec::Kind::h_above: inside = h_value >= set.a; break;
    case SetSpec::Kind::h_below: inside = h_value <= set.a; break;
    case SetSpec::Kind::h_band: inside = h_value >= set.a && h_value <= set.b; break;
    case SetSpec::Kind::n_epsilon: inside = h_value <= h_theta + set.a; break;
  }
  return set.complement ? !inside : inside;
}

std::string to_string(Certificate c) { return c == Certificate::analytic_zero ? "analytic-zero" : "empirical-min"; }

double epsilon_schedule(std::size_t n, double c, double gamma) {
  if (n == 0) throw std::invalid_argument("epsilon_schedule: n must be >= 1");
  return c * std::pow(static_cast<double>(n), -gamma);
}

namespace {

struct PriorDraw {
  Theta theta;
  double h = 0.0;
};

// Value-only h on the composite rule that splits at the truth's jumps.
class HEvaluator {
 public:
  HEvaluator(const ObservationModel& model, const TruthSpec& truth, std::size_t nodes)
      : model_(model), truth_(truth), rule_(QuadratureRule::gauss_legendre(truth.dim(), nodes, truth.jumps())) {
    eta0_.resize(rule_.size());
    for (std::size_t i = 0; i < rule_.size(); ++i) eta0_[i] = truth.eta(rule_.point(i));
  }

  double operator()(const Theta& theta) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < rule_.size(); ++i)
      sum += rule_.weights[i] * pointwise_kl(model_, theta.eta(rule_.point(i)), theta.sigma, eta0_[i], truth_.sigma0);
    return sum;
  }

  const QuadratureRule& rule() const { return rule_; }

 private:
  const ObservationModel& model_;
  const TruthSpec& truth_;
  QuadratureRule rule_;
  std::vector<double> eta0_;
};

std::vector<PriorDraw> draw_prior(const ObservationModel& model, const PriorSpec& prior, const HEvaluator& h,
                                  std::size_t budget, Engine& rng) {
  if (model.has_scale() && !prior.sigma_prior)
    throw std::invalid_argument("prior needs a sigma prior for the " + model.name() + " model");
  const GpPathSampler sampler(prior.kernel, h.rule().axes);
  std::vector<PriorDraw> draws;
  draws.reserve(budget);
  for (std::size_t k = 0; k < budget; ++k) {
    Theta t{sampler.draw(rng), std::nullopt};
    if (model.has_scale()) t.sigma = prior.sigma_prior->sample(rng);
    const double hv = h(t);
    draws.push_back({std::move(t), hv});
  }
  return draws;
}

double refine_with(const HEvaluator& h, const PriorSpec& prior, const Theta& start, const SetSpec& set,
                   double h_theta, const SearchOptions& options) {
  const int d = start.eta.dim();
  // Coarse parameterization: one level for the constant kernel, a uniform grid otherwise.
  std::vector<std::vector<double>> axes;
  if (prior.kernel.family == KernelFamily::constant)
    axes.assign(static_cast<std::size_t>(d), std::vector<double>{0.0, 1.0});
  else
    axes.assign(static_cast<std::size_t>(d), uniform_axis(options.coarse_nodes));

  std::vector<double> params;
  if (prior.kernel.family == KernelFamily::constant) {
    double mean = 0.0;
    for (double v : start.eta.values()) mean += v / static_cast<double>(start.eta.node_count());
    params.push_back(mean);
  } else {
    const FieldFunction coarse = FieldFunction::tabulate(axes, [&](std::span<const double> x) { return start.eta(x); });
    params = coarse.values();
  }
  const std::size_t n_eta = params.size();
  if (start.sigma) params.push_back(std::log(*start.sigma));

  const auto build = [&](const std::vector<double>& p) {
    Theta t{prior.kernel.family == KernelFamily::constant
                ? FieldFunction::constant(d, p[0])
                : FieldFunction(axes, std::vector<double>(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(n_eta))),
            std::nullopt};
    if (start.sigma) t.sigma = std::exp(p.back());
    return t;
  };

  double best = h(build(params));
  bool feasible = in_set(set, best, h_theta);
  if (!feasible) return std::numeric_limits<double>::infinity();

  double step = options.initial_step;
  for (std::size_t sweep = 0; sweep < options.max_sweeps && step >= options.min_step; ++sweep) {
    bool improved = false;
    for (std::size_t c = 0; c < params.size(); ++c) {
      for (double dir : {1.0, -1.0}) {
        std::vector<double> trial = params;
        trial[c] += dir * step;
        const double v = h(build(trial));
        if (v < best && in_set(set, v, h_theta)) {
          best = v;
          params = std::move(trial);
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

}  // namespace

double refine_minimum(const ObservationModel& model, const PriorSpec& prior, const TruthSpec& truth,
                      const Theta& start, const SetSpec& set, double h_theta, const SearchOptions& options) {
  const HEvaluator h(model, truth, options.quadrature_nodes);
  return refine_with(h, prior, start, set, h_theta, options);
}

HThetaEstimate estimate_h_Theta(const ObservationModel& model, const PriorSpec& prior, const TruthSpec& truth,
                                std::size_t budget, Engine& rng, const SearchOptions& options) {
  if (budget < 100) throw std::invalid_argument("estimate_h_Theta: budget must be >= 100");
  if (truth.representable_in_prior && prior.kernel.family == KernelFamily::squared_exponential)
    return {0.0, Certificate::analytic_zero};

  const HEvaluator h(model, truth, options.quadrature_nodes);
  const auto draws = draw_prior(model, prior, h, budget, rng);
  std::size_t best = 0;
  for (std::size_t k = 1; k < draws.size(); ++k)
    if (draws[k].h < draws[best].h) best = k;
  const double refined = refine_with(h, prior, draws[best].theta, SetSpec::whole_space(), 0.0, options);
  return {std::min(draws[best].h, refined), Certificate::empirical_min};
}

double j_rate(const SetSpec& set, double h_theta, const ObservationModel& model, const PriorSpec& prior,
              const TruthSpec& truth, std::size_t budget, Engine& rng, const SearchOptions& options) {
  const HEvaluator h(model, truth, options.quadrature_nodes);
  const auto draws = draw_prior(model, prior, h, budget, rng);
  std::size_t hits = 0;
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < draws.size(); ++k) {
    if (!in_set(set, draws[k].h, h_theta)) continue;
    ++hits;
    if (!best || draws[k].h < draws[*best].h) best = k;
  }
  if (hits < 10) {
    std::ostringstream msg;
    msg << "set has negligible prior mass: " << hits << " of " << budget << " prior draws landed in "
        << set.describe();
    throw std::runtime_error(msg.str());
  }
  const double refined = refine_with(h, prior, draws[*best].theta, set, h_theta, options);
  const double inf_h = std::min(draws[*best].h, refined);
  return std::max(0.0, inf_h - h_theta);
}

}  // namespace postcon
