#pragma once

// MCMC over theta = (eta, sigma), posterior set probabilities, the rate diagnostic,
// posterior predictive distributions and Hellinger/TV distances.

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "postcon/domain.hpp"
#include "postcon/gp_prior.hpp"
#include "postcon/kl_rates.hpp"
#include "postcon/observation.hpp"
#include "postcon/rng.hpp"

namespace postcon {

struct McmcConfig {
  std::size_t iterations = 10000;
  std::size_t burn_in = 2000;
  std::size_t thin = 4;
  double sigma_step = 0.3;  // random-walk width on log sigma
  std::size_t quadrature_nodes = 48;  // per axis; these nodes are always latent sites
  std::vector<std::vector<double>> quadrature_splits;
  // Extra latent sites (row-major, data dimension), e.g. predictive query points.
  std::vector<double> extra_sites;

  void validate() const;
  std::size_t draw_count() const { return (iterations - burn_in) / thin; }
};

using DrawMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Retained draws. Latent sites are ordered: quadrature nodes, data covariates,
/// extra sites.
struct PosteriorSamples {
  int dim = 1;
  PointSet sites;
  QuadratureRule quadrature;
  std::size_t data_offset = 0;
  std::size_t data_count = 0;
  std::size_t extra_offset = 0;
  DrawMatrix eta;             // draws x sites
  std::vector<double> sigma;  // empty when the model has no scale
  KernelSpec kernel;
  Eigen::MatrixXd lower;  // Cholesky factor of the site kernel matrix
  double jitter_used = 0.0;
  std::optional<std::pair<double, double>> response_range;

  double sigma_acceptance = 1.0;
  double mean_slice_evaluations = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(eta.rows()); }
  std::optional<double> sigma_of(std::size_t draw) const {
    return sigma.empty() ? std::nullopt : std::optional<double>(sigma[draw]);
  }
  /// The draw's field on the quadrature axes.
  Theta theta(std::size_t draw) const;
  std::span<const double> quadrature_values(std::size_t draw) const {
    return {eta.row(static_cast<Eigen::Index>(draw)).data(), quadrature.size()};
  }
  std::optional<std::size_t> site_index(std::span<const double> x) const;
};

/// Elliptical slice sampling for eta and a log-scale random-walk Metropolis step
/// for sigma under its lognormal prior.
PosteriorSamples run_mcmc(const ObservationModel& model, const Dataset& data, const PriorSpec& prior,
                          const McmcConfig& config, Engine& rng);

/// h(theta) of every draw, evaluated on the quadrature sites.
std::vector<double> posterior_h_values(const PosteriorSamples& samples, const ObservationModel& model,
                                       const TruthSpec& truth);

/// Initial-positive-sequence estimate of the effective sample size.
double effective_sample_size(std::span<const double> series);

struct SetProbability {
  double prob = 0.0;
  double mcse = 0.0;
  double ess = 0.0;
  // True when prob < 1/ESS: the chain cannot resolve the set's mass.
  bool below_resolution = false;
};

SetProbability posterior_set_probability(std::span<const double> h_draws, const SetSpec& set, double h_theta);
SetProbability posterior_set_probability(const PosteriorSamples& samples, const ObservationModel& model,
                                         const TruthSpec& truth, const SetSpec& set, double h_theta);

enum class RateVerdict { pass, report, underflow, insufficient_data };
std::string to_string(RateVerdict v);

struct RateDiagnostic {
  std::optional<double> slope;
  RateVerdict verdict = RateVerdict::insufficient_data;
  std::string message;
};

/// Least-squares slope of log pi(A|Y_n) against n, judged against [-2J, -0.5J].
/// Probabilities at or below 1/ESS give the underflow verdict rather than a slope.
RateDiagnostic concentration_rate_diagnostic(std::span<const double> probs, std::span<const double> ess,
                                             std::span<const std::size_t> n_values, double j_value);

struct PredictiveDistribution {
  ModelKind kind = ModelKind::binary;
  std::vector<double> x;
  double probability = 0.0;     // binary
  std::vector<double> pmf;      // poisson, support 0..size-1
  std::vector<double> grid;     // gaussian / laplace
  std::vector<double> density;  // on grid

  /// Sum of the pmf, trapezoid integral of the density, or 1 for binary.
  double total_mass() const;
};

/// Mixture over draws of the conditional distribution at x. Off-site covariates
/// use the GP conditional given the latent sites, integrated by Gauss–Hermite.
PredictiveDistribution posterior_predictive(const PosteriorSamples& samples, const ObservationModel& model,
                                            std::span<const double> x);

/// The true conditional distribution at x on the support of `like`.
PredictiveDistribution best_predictor(const ObservationModel& model, const TruthSpec& truth, std::span<const double> x,
                                      const PredictiveDistribution& like);

struct HellingerTv {
  double h2 = 0.0;  // 1 - sum sqrt(f g)
  double tv = 0.0;  // 1/2 sum |f - g|
};

HellingerTv hellinger_tv(const PredictiveDistribution& a, const PredictiveDistribution& b);

/// Probabilists' Gauss–Hermite rule: E[f(Z)] ~ sum w_i f(z_i), Z ~ N(0,1).
void gauss_hermite(std::size_t m, std::vector<double>& nodes, std::vector<double>& weights);

/// Raw draws as CSV; the header names each latent site by its coordinates.
void write_draws_csv(std::ostream& out, const PosteriorSamples& samples);

}  // namespace postcon
