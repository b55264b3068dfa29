#include "postcon/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "postcon/format.hpp"

namespace postcon {

void McmcConfig::validate() const {
  if (iterations == 0) throw std::invalid_argument("mcmc: iterations must be >= 1");
  if (burn_in >= iterations) throw std::invalid_argument("mcmc: burn_in must be < iterations");
  if (thin < 1) throw std::invalid_argument("mcmc: thin must be >= 1");
  if (!(sigma_step > 0.0)) throw std::invalid_argument("mcmc: sigma_step must be positive");
  if (quadrature_nodes < 1) throw std::invalid_argument("mcmc: quadrature_nodes must be >= 1");
  if (draw_count() == 0) throw std::invalid_argument("mcmc: configuration retains no draws");
}

Theta PosteriorSamples::theta(std::size_t draw) const {
  const auto v = quadrature_values(draw);
  Theta t{FieldFunction(quadrature.axes, std::vector<double>(v.begin(), v.end())), sigma_of(draw)};
  return t;
}

std::optional<std::size_t> PosteriorSamples::site_index(std::span<const double> x) const {
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto p = sites.point(i);
    if (std::equal(p.begin(), p.end(), x.begin(), x.end())) return i;
  }
  return std::nullopt;
}

namespace {

double log_likelihood(const ObservationModel& model, const Dataset& data, const double* eta_data,
                      std::optional<double> sigma) {
  double ll = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) ll += log_density_at(model, eta_data[i], sigma, data.responses[i]);
  return ll;
}

}  // namespace

PosteriorSamples run_mcmc(const ObservationModel& model, const Dataset& data, const PriorSpec& prior,
                          const McmcConfig& config, Engine& rng) {
  config.validate();
  prior.kernel.validate();
  if (model.has_scale() && !prior.sigma_prior)
    throw std::invalid_argument("run_mcmc: the " + model.name() + " model needs a sigma prior");
  if (data.covariates.size() != data.responses.size())
    throw std::invalid_argument("run_mcmc: dataset covariates and responses differ in length");

  const int dim = data.covariates.dim;
  if (!config.extra_sites.empty() && config.extra_sites.size() % static_cast<std::size_t>(dim) != 0)
    throw std::invalid_argument("run_mcmc: extra_sites length is not a multiple of the dimension");
  if (config.quadrature_nodes > 0 && dim > 2)
    throw std::invalid_argument("run_mcmc: quadrature latent sites support d <= 2");

  PosteriorSamples out;
  out.dim = dim;
  out.kernel = prior.kernel;
  out.quadrature = QuadratureRule::gauss_legendre(dim, config.quadrature_nodes, config.quadrature_splits);
  out.sites.dim = dim;
  out.sites.coords = out.quadrature.nodes;
  out.data_offset = out.quadrature.size();
  out.data_count = data.size();
  out.sites.coords.insert(out.sites.coords.end(), data.covariates.coords.begin(), data.covariates.coords.end());
  out.extra_offset = out.data_offset + out.data_count;
  out.sites.coords.insert(out.sites.coords.end(), config.extra_sites.begin(), config.extra_sites.end());
  if (!data.responses.empty()) {
    const auto [lo, hi] = std::minmax_element(data.responses.begin(), data.responses.end());
    out.response_range = std::make_pair(*lo, *hi);
  }

  const KernelFactor factor = factor_kernel(prior.kernel, out.sites);
  out.lower = factor.lower;
  out.jitter_used = factor.jitter_used;
  const auto L = out.lower.triangularView<Eigen::Lower>();
  const Eigen::Index n_sites = out.lower.rows();
  const auto n_data = static_cast<Eigen::Index>(out.data_count);
  const auto off = static_cast<Eigen::Index>(out.data_offset);

  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  Eigen::VectorXd z(n_sites);
  for (Eigen::Index i = 0; i < n_sites; ++i) z[i] = normal(rng);
  Eigen::VectorXd f = L * z;
  std::optional<double> sigma;
  if (model.has_scale()) sigma = prior.sigma_prior->sample(rng);

  double ll = log_likelihood(model, data, f.data() + off, sigma);
  Eigen::VectorXd nu(n_sites), proposal_data(n_data);

  const std::size_t draws = config.draw_count();
  out.eta.resize(static_cast<Eigen::Index>(draws), n_sites);
  if (model.has_scale()) out.sigma.reserve(draws);
  std::size_t stored = 0, sigma_accepts = 0, slice_evals = 0;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    // Elliptical slice step on eta.
    for (Eigen::Index i = 0; i < n_sites; ++i) z[i] = normal(rng);
    nu.noalias() = L * z;
    const double log_y = ll + std::log(unif(rng));
    double angle = unif(rng) * two_pi;
    double lo = angle - two_pi, hi = angle;
    while (true) {
      ++slice_evals;
      const double c = std::cos(angle), s = std::sin(angle);
      proposal_data = f.segment(off, n_data) * c + nu.segment(off, n_data) * s;
      const double ll_new = log_likelihood(model, data, proposal_data.data(), sigma);
      if (ll_new > log_y) {
        f = f * c + nu * s;
        ll = ll_new;
        break;
      }
      if (angle < 0.0)
        lo = angle;
      else
        hi = angle;
      angle = lo + (hi - lo) * unif(rng);
      if (hi - lo < 1e-300) break;  // degenerate bracket: keep the current state
    }

    if (model.has_scale()) {
      const double log_s = std::log(*sigma);
      const double log_prop = log_s + config.sigma_step * normal(rng);
      const double prop = std::exp(log_prop);
      const double ll_prop = log_likelihood(model, data, f.data() + off, prop);
      const double log_alpha = ll_prop - ll + prior.sigma_prior->log_density_of_log(log_prop) -
                               prior.sigma_prior->log_density_of_log(log_s);
      if (std::log(unif(rng)) < log_alpha) {
        sigma = prop;
        ll = ll_prop;
        ++sigma_accepts;
      }
    }

    if (it >= config.burn_in && (it - config.burn_in) % config.thin == config.thin - 1 && stored < draws) {
      out.eta.row(static_cast<Eigen::Index>(stored)) = f.transpose();
      if (sigma) out.sigma.push_back(*sigma);
      ++stored;
    }
  }
  out.sigma_acceptance = static_cast<double>(sigma_accepts) / static_cast<double>(config.iterations);
  out.mean_slice_evaluations = static_cast<double>(slice_evals) / static_cast<double>(config.iterations);
  return out;
}

std::vector<double> posterior_h_values(const PosteriorSamples& samples, const ObservationModel& model,
                                       const TruthSpec& truth) {
  if (truth.dim() != samples.dim) throw std::invalid_argument("posterior_h_values: dimension mismatch");
  std::vector<double> eta0(samples.quadrature.size());
  for (std::size_t i = 0; i < eta0.size(); ++i) eta0[i] = truth.eta(samples.quadrature.point(i));
  std::vector<double> h(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k)
    h[k] = kl_rate_on_nodes(model, samples.quadrature_values(k), samples.sigma_of(k), eta0, truth.sigma0,
                            samples.quadrature);
  return h;
}

double effective_sample_size(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 4) return static_cast<double>(n);
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  double c0 = 0.0;
  for (double v : series) c0 += (v - mean) * (v - mean);
  c0 /= static_cast<double>(n);
  if (c0 <= 0.0) return static_cast<double>(n);

  const auto autocorr = [&](std::size_t lag) {
    double c = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) c += (series[i] - mean) * (series[i + lag] - mean);
    return c / static_cast<double>(n) / c0;
  };
  // Geyer: sum consecutive pairs while positive, enforcing monotone decrease.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = autocorr(2 * k) + autocorr(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return std::min(static_cast<double>(n) / tau, static_cast<double>(n) * std::log10(static_cast<double>(n)));
}

SetProbability posterior_set_probability(std::span<const double> h_draws, const SetSpec& set, double h_theta) {
  if (h_draws.empty()) throw std::invalid_argument("posterior_set_probability: no draws");
  std::vector<double> indicator(h_draws.size());
  double hits = 0.0;
  for (std::size_t k = 0; k < h_draws.size(); ++k) {
    indicator[k] = in_set(set, h_draws[k], h_theta) ? 1.0 : 0.0;
    hits += indicator[k];
  }
  SetProbability out;
  out.prob = hits / static_cast<double>(h_draws.size());
  out.ess = effective_sample_size(indicator);
  out.mcse = std::sqrt(out.prob * (1.0 - out.prob) / out.ess);
  out.below_resolution = out.prob < 1.0 / out.ess;
  return out;
}

SetProbability posterior_set_probability(const PosteriorSamples& samples, const ObservationModel& model,
                                         const TruthSpec& truth, const SetSpec& set, double h_theta) {
  const auto h = posterior_h_values(samples, model, truth);
  return posterior_set_probability(h, set, h_theta);
}

std::string to_string(RateVerdict v) {
  switch (v) {
    case RateVerdict::pass: return "PASS";
    case RateVerdict::report: return "REPORT";
    case RateVerdict::underflow: return "underflow";
    case RateVerdict::insufficient_data: return "insufficient data";
  }
  return "?";
}

RateDiagnostic concentration_rate_diagnostic(std::span<const double> probs, std::span<const double> ess,
                                             std::span<const std::size_t> n_values, double j_value) {
  if (probs.size() != n_values.size() || ess.size() != n_values.size())
    throw std::invalid_argument("concentration_rate_diagnostic: length mismatch");
  RateDiagnostic out;
  if (n_values.size() < 3) {
    out.verdict = RateVerdict::insufficient_data;
    out.message = "insufficient data: fewer than 3 sample sizes";
    return out;
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] > 0.0) || probs[i] <= 1.0 / ess[i]) {
      std::ostringstream msg;
      msg << "underflow - set too deep for MCMC estimation: pi(A|Y_n) at n=" << n_values[i] << " is " << probs[i]
          << " (< 1/ESS = " << 1.0 / ess[i] << ")";
      out.verdict = RateVerdict::underflow;
      out.message = msg.str();
      return out;
    }
  }
  const double k = static_cast<double>(probs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    mx += static_cast<double>(n_values[i]) / k;
    my += std::log(probs[i]) / k;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double dx = static_cast<double>(n_values[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(probs[i]) - my);
  }
  out.slope = sxy / sxx;
  const double lo = -2.0 * j_value, hi = -0.5 * j_value;
  std::ostringstream msg;
  msg << "slope " << *out.slope << " vs band [" << lo << ", " << hi << "]";
  out.verdict = (*out.slope >= lo && *out.slope <= hi) ? RateVerdict::pass : RateVerdict::report;
  out.message = msg.str();
  return out;
}

void gauss_hermite(std::size_t m, std::vector<double>& nodes, std::vector<double>& weights) {
  if (m == 0) throw std::invalid_argument("gauss_hermite: m must be >= 1");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t k = 1; k < m; ++k) {
    const double b = std::sqrt(static_cast<double>(k));
    J(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = b;
    J(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
  nodes.resize(m);
  weights.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    nodes[i] = eig.eigenvalues()[static_cast<Eigen::Index>(i)];
    const double v = eig.eigenvectors()(0, static_cast<Eigen::Index>(i));
    weights[i] = v * v;
  }
}

namespace {

constexpr std::size_t kHermiteNodes = 32;
constexpr std::size_t kDensityGrid = 512;

// Conditional N(mean, var) of eta(x) for every draw.
struct ConditionalField {
  std::vector<double> mean;
  double var = 0.0;
};

ConditionalField condition_at(const PosteriorSamples& samples, std::span<const double> x) {
  ConditionalField out;
  out.mean.resize(samples.size());
  if (const auto idx = samples.site_index(x)) {
    for (std::size_t k = 0; k < samples.size(); ++k)
      out.mean[k] = samples.eta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(*idx));
    return out;
  }
  const Eigen::Index n = samples.lower.rows();
  Eigen::VectorXd kx(n);
  for (Eigen::Index i = 0; i < n; ++i) kx[i] = samples.kernel(samples.sites.point(static_cast<std::size_t>(i)), x);
  const Eigen::VectorXd v = samples.lower.triangularView<Eigen::Lower>().solve(kx);
  const Eigen::VectorXd a = samples.lower.transpose().triangularView<Eigen::Upper>().solve(v);
  out.var = std::max(0.0, samples.kernel(x, x) + samples.jitter_used - v.squaredNorm());
  for (std::size_t k = 0; k < samples.size(); ++k) out.mean[k] = samples.eta.row(static_cast<Eigen::Index>(k)).dot(a);
  return out;
}

double poisson_pmf(double y, double lambda) { return std::exp(y * std::log(lambda) - lambda - std::lgamma(y + 1.0)); }

// Laplace mass of [a, b] divided by its width. The density has a kink at loc, so
// point values on a 512 grid integrate poorly; cell averages keep the grid sum exact.
double laplace_cell_average(double a, double b, double loc, double s) {
  const auto upper = [&](double t) { return 0.5 * std::exp(-(t - loc) / s); };  // 1 - F(t), t >= loc
  const auto lower = [&](double t) { return 0.5 * std::exp((t - loc) / s); };   // F(t), t <= loc
  double mass;
  if (a >= loc)
    mass = upper(a) - upper(b);
  else if (b <= loc)
    mass = lower(b) - lower(a);
  else
    mass = (0.5 - lower(a)) + (0.5 - upper(b));
  return mass / (b - a);
}

// Trapezoid dual cell of grid node i: half a step either side, clipped at the ends.
std::pair<double, double> dual_cell(const std::vector<double>& grid, std::size_t i) {
  const double a = i == 0 ? grid[0] : 0.5 * (grid[i - 1] + grid[i]);
  const double b = i + 1 == grid.size() ? grid[i] : 0.5 * (grid[i] + grid[i + 1]);
  return {a, b};
}

}  // namespace

double PredictiveDistribution::total_mass() const {
  switch (kind) {
    case ModelKind::binary: return 1.0;
    case ModelKind::poisson: {
      double s = 0.0;
      for (double p : pmf) s += p;
      return s;
    }
    default: {
      double s = 0.0;
      for (std::size_t i = 1; i < grid.size(); ++i) s += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
      return s;
    }
  }
}

PredictiveDistribution posterior_predictive(const PosteriorSamples& samples, const ObservationModel& model,
                                            std::span<const double> x) {
  if (samples.size() == 0) throw std::invalid_argument("posterior_predictive: no draws");
  if (!CovariateSpace(samples.dim).contains(x)) throw std::out_of_range("posterior_predictive: x outside the cube");
  const ConditionalField cond = condition_at(samples, x);
  const double sd = std::sqrt(cond.var);
  std::vector<double> gh_nodes{0.0}, gh_weights{1.0};
  if (sd > 0.0) gauss_hermite(kHermiteNodes, gh_nodes, gh_weights);
  const double draws = static_cast<double>(samples.size());

  PredictiveDistribution out;
  out.kind = model.kind;
  out.x.assign(x.begin(), x.end());

  switch (model.kind) {
    case ModelKind::binary: {
      double p = 0.0;
      for (double m : cond.mean)
        for (std::size_t q = 0; q < gh_nodes.size(); ++q) p += gh_weights[q] * model.link(m + sd * gh_nodes[q]);
      out.probability = p / draws;
      return out;
    }
    case ModelKind::poisson: {
      double lambda_max = 0.0;
      for (double m : cond.mean)
        for (double zq : gh_nodes) lambda_max = std::max(lambda_max, model.link(m + sd * zq));
      const auto ymax = static_cast<std::size_t>(std::ceil(lambda_max + 20.0 * std::sqrt(lambda_max) + 20.0));
      out.pmf.assign(ymax + 1, 0.0);
      for (double m : cond.mean)
        for (std::size_t q = 0; q < gh_nodes.size(); ++q) {
          const double lambda = model.link(m + sd * gh_nodes[q]);
          for (std::size_t y = 0; y <= ymax; ++y)
            out.pmf[y] += gh_weights[q] * poisson_pmf(static_cast<double>(y), lambda) / draws;
        }
      return out;
    }
    case ModelKind::gaussian:
    case ModelKind::laplace: {
      if (samples.sigma.size() != samples.size()) throw std::invalid_argument("posterior_predictive: draws lack sigma");
      const double s_max = *std::max_element(samples.sigma.begin(), samples.sigma.end());
      double lo, hi;
      if (samples.response_range) {
        lo = samples.response_range->first;
        hi = samples.response_range->second;
      } else {
        const auto [mn, mx] = std::minmax_element(cond.mean.begin(), cond.mean.end());
        lo = *mn - 3.0 * sd;
        hi = *mx + 3.0 * sd;
      }
      // Laplace tails are exponential: 6 scales leave ~e^-6 of mass off the grid.
      const double pad = (model.kind == ModelKind::laplace ? 16.0 : 6.0) * s_max;
      lo -= pad;
      hi += pad;
      out.grid.resize(kDensityGrid);
      out.density.assign(kDensityGrid, 0.0);
      for (std::size_t i = 0; i < kDensityGrid; ++i)
        out.grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kDensityGrid - 1);
      for (std::size_t k = 0; k < samples.size(); ++k) {
        const double s = samples.sigma[k];
        if (model.kind == ModelKind::gaussian) {
          // eta(x) ~ N(m, var) convolved with N(0, s^2) is N(m, s^2 + var).
          const double tot = std::sqrt(s * s + cond.var);
          for (std::size_t i = 0; i < kDensityGrid; ++i) {
            const double zz = (out.grid[i] - cond.mean[k]) / tot;
            out.density[i] += std::exp(-0.5 * zz * zz) / (tot * std::sqrt(2.0 * std::numbers::pi)) / draws;
          }
        } else {
          for (std::size_t q = 0; q < gh_nodes.size(); ++q) {
            const double loc = cond.mean[k] + sd * gh_nodes[q];
            for (std::size_t i = 0; i < kDensityGrid; ++i) {
              const auto [a, b] = dual_cell(out.grid, i);
              out.density[i] += gh_weights[q] * laplace_cell_average(a, b, loc, s) / draws;
            }
          }
        }
      }
      return out;
    }
  }
  return out;
}

PredictiveDistribution best_predictor(const ObservationModel& model, const TruthSpec& truth, std::span<const double> x,
                                      const PredictiveDistribution& like) {
  if (like.kind != model.kind) throw std::invalid_argument("best_predictor: support of a different model kind");
  const double eta0 = truth.eta(x);
  PredictiveDistribution out;
  out.kind = model.kind;
  out.x.assign(x.begin(), x.end());
  switch (model.kind) {
    case ModelKind::binary: out.probability = model.link(eta0); break;
    case ModelKind::poisson: {
      const double lambda = model.link(eta0);
      out.pmf.resize(like.pmf.size());
      for (std::size_t y = 0; y < out.pmf.size(); ++y) out.pmf[y] = poisson_pmf(static_cast<double>(y), lambda);
      break;
    }
    case ModelKind::gaussian:
    case ModelKind::laplace: {
      if (!truth.sigma0) throw std::invalid_argument("best_predictor: truth needs sigma0");
      const double s0 = *truth.sigma0;
      out.grid = like.grid;
      out.density.resize(out.grid.size());
      for (std::size_t i = 0; i < out.grid.size(); ++i) {
        const double r = out.grid[i] - eta0;
        if (model.kind == ModelKind::gaussian) {
          out.density[i] = std::exp(-0.5 * r * r / (s0 * s0)) / (s0 * std::sqrt(2.0 * std::numbers::pi));
        } else {
          const auto [a, b] = dual_cell(out.grid, i);
          out.density[i] = laplace_cell_average(a, b, eta0, s0);
        }
      }
      break;
    }
  }
  return out;
}

HellingerTv hellinger_tv(const PredictiveDistribution& a, const PredictiveDistribution& b) {
  if (a.kind != b.kind) throw std::invalid_argument("hellinger_tv: mismatched distribution kinds");
  double affinity = 0.0, l1 = 0.0;
  switch (a.kind) {
    case ModelKind::binary: {
      const double p = a.probability, q = b.probability;
      affinity = std::sqrt(p * q) + std::sqrt((1.0 - p) * (1.0 - q));
      l1 = 2.0 * std::abs(p - q);
      break;
    }
    case ModelKind::poisson: {
      const std::size_t n = std::max(a.pmf.size(), b.pmf.size());
      for (std::size_t y = 0; y < n; ++y) {
        const double f = y < a.pmf.size() ? a.pmf[y] : 0.0;
        const double g = y < b.pmf.size() ? b.pmf[y] : 0.0;
        affinity += std::sqrt(f * g);
        l1 += std::abs(f - g);
      }
      break;
    }
    default: {
      if (a.grid != b.grid) throw std::invalid_argument("hellinger_tv: densities on different grids");
      // Trapezoid weights; each density is normalized to unit mass on the grid.
      const std::size_t n = a.grid.size();
      std::vector<double> w(n, 0.0);
      for (std::size_t i = 1; i < n; ++i) {
        const double h = a.grid[i] - a.grid[i - 1];
        w[i - 1] += 0.5 * h;
        w[i] += 0.5 * h;
      }
      const double ma = a.total_mass(), mb = b.total_mass();
      for (std::size_t i = 0; i < n; ++i) {
        const double f = a.density[i] / ma, g = b.density[i] / mb;
        affinity += w[i] * std::sqrt(f * g);
        l1 += w[i] * std::abs(f - g);
      }
      break;
    }
  }
  HellingerTv out;
  out.h2 = std::clamp(1.0 - affinity, 0.0, 1.0);
  out.tv = std::clamp(0.5 * l1, 0.0, 1.0);
  return out;
}

void write_draws_csv(std::ostream& out, const PosteriorSamples& samples) {
  out << "draw,sigma";
  for (std::size_t i = 0; i < samples.sites.size(); ++i) {
    out << ",x=";
    const auto p = samples.sites.point(i);
    for (std::size_t a = 0; a < p.size(); ++a) out << (a ? ";" : "") << format_real(p[a]);
  }
  out << '\n';
  for (std::size_t k = 0; k < samples.size(); ++k) {
    out << k << ',' << (samples.sigma.empty() ? std::string() : format_real(samples.sigma[k]));
    for (Eigen::Index i = 0; i < samples.eta.cols(); ++i)
      out << ',' << format_real(samples.eta(static_cast<Eigen::Index>(k), i));
    out << '\n';
  }
}

}  // namespace postcon
