#pragma once

// KL divergence rates h(theta), a brute-force per-observation oracle, h(Theta),
// J(A) and the set predicates built on them.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "postcon/domain.hpp"
#include "postcon/gp_prior.hpp"
#include "postcon/observation.hpp"

namespace postcon {

struct KlRateEstimate {
  double value = 0.0;  // nats per observation
  double err = 0.0;
  IntegrationMethod method = IntegrationMethod::quadrature;
};

/// Closed-form KL(f0(.|x) || f(.|x)) given latent values at one covariate.
double pointwise_kl(const ObservationModel& model, double eta, std::optional<double> sigma, double eta0,
                    std::optional<double> sigma0);

/// h(theta) = E_X[ KL(f0(.|X) || f_theta(.|X)) ].
///
/// Quadrature panels are split at the truth's jump locations.
KlRateEstimate kl_rate(const ObservationModel& model, const Theta& theta, const TruthSpec& truth,
                       const Integrator& integrator = Integrator::quadrature());

/// h(theta) when eta is only known at the nodes of `rule`, in node order.
double kl_rate_on_nodes(const ObservationModel& model, std::span<const double> eta_at_nodes,
                        std::optional<double> sigma, std::span<const double> eta0_at_nodes,
                        std::optional<double> sigma0, const QuadratureRule& rule);

struct OracleValue {
  double value = 0.0;
  double err = 0.0;
};

/// Brute-force KL at one covariate: the Bernoulli two-term sum, the Poisson series
/// summed until the remaining tail mass is below 1e-12, or adaptive Gauss–Kronrod
/// over the real line for the Gaussian and Laplace models. Test oracle only.
OracleValue per_obs_kl_oracle(const ObservationModel& model, const Theta& theta, const TruthSpec& truth,
                              std::span<const double> x);
OracleValue per_obs_kl_oracle_at(const ObservationModel& model, double eta, std::optional<double> sigma, double eta0,
                                 std::optional<double> sigma0);

/// A set of parameters described through h.
struct SetSpec {
  enum class Kind { whole, h_above, h_below, h_band, n_epsilon };
  Kind kind = Kind::whole;
  double a = 0.0;
  double b = 0.0;
  bool complement = false;

  static SetSpec whole_space() { return {}; }
  static SetSpec h_above(double c) { return {Kind::h_above, c, 0.0, false}; }
  static SetSpec h_below(double c) { return {Kind::h_below, c, 0.0, false}; }
  static SetSpec h_band(double lo, double hi) { return {Kind::h_band, lo, hi, false}; }
  static SetSpec n_epsilon(double eps);
  SetSpec complemented() const {
    SetSpec s = *this;
    s.complement = !s.complement;
    return s;
  }
  std::string describe() const;
};

bool in_set(const SetSpec& set, double h_value, double h_theta);

enum class Certificate { analytic_zero, empirical_min };
std::string to_string(Certificate c);

struct HThetaEstimate {
  double value = 0.0;
  Certificate certificate = Certificate::analytic_zero;
};

struct SearchOptions {
  std::size_t coarse_nodes = 17;  // per axis, for the coordinate-descent refinement
  std::size_t quadrature_nodes = 64;
  double initial_step = 0.5;
  double min_step = 1e-4;
  std::size_t max_sweeps = 400;
};

/// ess inf of h over the prior support. Exact zero when the truth is
/// representable; otherwise the minimum over `budget` prior draws refined by
/// coordinate descent, an upper bound on h(Theta).
HThetaEstimate estimate_h_Theta(const ObservationModel& model, const PriorSpec& prior, const TruthSpec& truth,
                                std::size_t budget, Engine& rng, const SearchOptions& options = {});

/// J(A) = ess inf_{A} h - h(Theta), with the ess inf taken over prior draws landing
/// in A and refined inside A. Throws when fewer than 10 draws hit A.
double j_rate(const SetSpec& set, double h_theta, const ObservationModel& model, const PriorSpec& prior,
              const TruthSpec& truth, std::size_t budget, Engine& rng, const SearchOptions& options = {});

/// Minimizes h over parameters on the coarse grid, starting from `start`, keeping
/// every accepted move inside `set`. Exposed for tests.
double refine_minimum(const ObservationModel& model, const PriorSpec& prior, const TruthSpec& truth,
                      const Theta& start, const SetSpec& set, double h_theta, const SearchOptions& options);

/// eps_n = c * n^(-gamma).
double epsilon_schedule(std::size_t n, double c = 1.0, double gamma = 0.8);

}  // namespace postcon
