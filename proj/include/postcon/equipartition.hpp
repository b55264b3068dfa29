#pragma once

// Empirical checks of n^-1 log R_n(theta) -> -h(theta), pointwise and uniformly
// over a finite subset of a sieve.

#include <optional>
#include <span>
#include <vector>

#include "postcon/domain.hpp"
#include "postcon/gp_prior.hpp"
#include "postcon/kl_rates.hpp"
#include "postcon/observation.hpp"
#include "postcon/rng.hpp"

namespace postcon {

struct EquipartitionTrace {
  std::vector<std::size_t> n_values;
  // deviations[i][r] = n_i^-1 log R_n + h(theta) for replicate r.
  std::vector<std::vector<double>> deviations;
  double h = 0.0;

  double median_abs_deviation(std::size_t i) const;
  double mean_deviation(std::size_t i) const;
  double standard_error(std::size_t i) const;
};

struct EquipartitionOptions {
  CovariateScheme scheme = CovariateScheme::iid_uniform;
  Integrator integrator = Integrator::quadrature();
};

/// Fresh covariates and responses under the truth for every (n, replicate); the
/// stream for each cell is stream/n=<n>/rep=<r>.
EquipartitionTrace equipartition_trace(const ObservationModel& model, const Theta& theta, const TruthSpec& truth,
                                       std::span<const std::size_t> n_values, std::size_t replicates,
                                       const RngStream& stream, const EquipartitionOptions& options = {});

/// Per replicate: one shared dataset, sup over thetas of |n^-1 log R_n + h|.
/// Every theta must lie in the sieve G_m.
std::vector<double> uniform_convergence_check(const ObservationModel& model, std::span<const Theta> thetas,
                                              const TruthSpec& truth, std::size_t n, std::size_t replicates,
                                              const RngStream& stream, std::size_t sieve_level,
                                              const SieveSpec& sieve, const EquipartitionOptions& options = {});

/// Least-squares slope of log(median |deviation|) against log n.
std::optional<double> loglog_slope(const EquipartitionTrace& trace);

double median(std::vector<double> values);

}  // namespace postcon
