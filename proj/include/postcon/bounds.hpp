#pragma once

// Monte-Carlo checks of the concentration inequalities used in the consistency
// arguments: Hoeffding, Bernstein for Laplace summands, Hanson–Wright for
// Gaussian quadratic forms, and the sub-exponential MGF of Poisson summands.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "postcon/rng.hpp"

namespace postcon {

struct TailCheckRow {
  double t = 0.0;
  double empirical = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double bound = 0.0;
  bool pass = false;
  bool validation = true;  // false for rows used to calibrate the constant
  // Poisson MGF rows only: closed-form MGF and the Monte-Carlo standard error.
  std::optional<double> exact;
  std::optional<double> standard_error;
};

struct TailCheckReport {
  std::string kind;
  std::map<std::string, double> parameters;
  std::vector<TailCheckRow> rows;
  // Constant fitted on the calibration rows (c0, s or C); absent for Hoeffding.
  std::optional<double> calibrated_constant;
  std::string constant_name;

  bool validation_passed() const;
};

/// `count` log-spaced points in [lo, hi].
std::vector<double> log_spaced(double lo, double hi, std::size_t count);

/// Default Hoeffding thresholds: `count` log-spaced points from 0.05 * range up to
/// the t where the bound falls to ten times the upper Wilson limit of a zero count,
/// beyond which no sample size in reach can confirm the bound.
std::vector<double> hoeffding_grid(double range_width, std::size_t n, std::size_t samples, std::size_t count);

/// Calibration/validation split of a sorted grid: even indices and the last point
/// calibrate, the remaining interior points validate.
void split_grid(std::span<const double> grid, std::vector<double>& calibration, std::vector<double>& validation);

/// P(|mean - mu| > t) for n summands range * Bernoulli(p) against
/// 2 exp(-2 n t^2 / range^2). Every row is a validation row.
TailCheckReport check_hoeffding(double range_width, std::size_t n, std::span<const double> t_grid,
                                std::size_t samples, Engine& rng, double p = 0.5);

/// Empirical MGF of z = y log(l/l0) - l0 log(l/l0), y ~ Poisson(l0), against
/// exp(c^2 t^2) with c = C |l - l0|; C is calibrated. Rows outside |t| <= 1/c throw.
TailCheckReport check_poisson_subexponential(double lambda, double lambda0, std::span<const double> t_grid,
                                             std::size_t samples, Engine& rng);

/// Closed-form MGF of the Poisson summand above.
double poisson_summand_mgf(double lambda, double lambda0, double t);

/// P(|z'z - n| > n kappa / 2), z ~ N(0, I_n), against
/// 2 exp(-n min(kappa^2 / (16 c0), kappa / (4 c0))); c0 is calibrated.
TailCheckReport check_hanson_wright(std::size_t n, std::span<const double> kappa_grid, std::size_t samples,
                                    Engine& rng);

/// P(|mean of |eps_i|/sigma0 - 1| > t), eps ~ Laplace(sigma0), against
/// 2 exp(-(n/2) min(t^2/(4 s^2), t/(2 s))); s is calibrated.
TailCheckReport check_bernstein_laplace(double sigma0, std::size_t n, std::span<const double> t_grid,
                                        std::size_t samples, Engine& rng);

}  // namespace postcon
