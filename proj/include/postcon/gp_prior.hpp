#pragma once

// Gaussian-process prior over the latent field, sieve sets and their prior mass.

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "postcon/domain.hpp"
#include "postcon/rng.hpp"

namespace postcon {

enum class KernelFamily { squared_exponential, constant };

std::string to_string(KernelFamily f);
KernelFamily parse_kernel_family(std::string_view name);

struct KernelSpec {
  KernelFamily family = KernelFamily::squared_exponential;
  double lengthscale = 0.2;
  double amplitude = 1.0;
  double jitter = 1e-9;

  void validate() const;
  double operator()(std::span<const double> a, std::span<const double> b) const;
};

enum class SieveForm { quartic_root, square_root };

std::string to_string(SieveForm f);
SieveForm parse_sieve_form(std::string_view name);

/// G_n = { ||eta|| <= t(n), ||d eta / dx_j|| <= t(n) [, 1/t(n) <= sigma <= t(n)] }
/// with t(n) = exp((beta n)^(1/4)) or exp(sqrt(beta n)).
struct SieveSpec {
  double beta = 1.0;
  SieveForm form = SieveForm::quartic_root;
  bool includes_sigma_band = false;

  double threshold(std::size_t n) const;
};

struct LogNormalPrior {
  double location = 0.0;
  double scale = 1.0;

  /// Log density of log(sigma), which is Normal(location, scale^2).
  double log_density_of_log(double log_sigma) const;
  double sample(Engine& rng) const;
};

struct PriorSpec {
  KernelSpec kernel;
  std::optional<LogNormalPrior> sigma_prior;
};

/// The latent parameter: a field plus an optional noise scale.
struct Theta {
  FieldFunction eta;
  std::optional<double> sigma;

  static Theta from_truth(const TruthSpec& truth);
};

/// Point sets are row-major (count x dim).
struct PointSet {
  int dim = 1;
  std::vector<double> coords;

  std::size_t size() const { return coords.size() / static_cast<std::size_t>(dim); }
  std::span<const double> point(std::size_t i) const {
    return {coords.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  static PointSet grid(const std::vector<std::vector<double>>& axes);
};

/// k(x_i, x_j) with jitter on the diagonal.
Eigen::MatrixXd kernel_matrix(const KernelSpec& k, const PointSet& points);
bool has_duplicate_points(const PointSet& points);

/// Lower Cholesky factor with the jitter escalation policy: if the factorization
/// fails the jitter is multiplied by 10, at most three times.
struct KernelFactor {
  Eigen::MatrixXd lower;
  double jitter_used = 0.0;
};

KernelFactor factor_kernel(const KernelSpec& k, const PointSet& points);

/// Draws GP paths on a fixed tensor grid, reusing one factorization. The constant
/// family draws a single N(0, tau^2) level per path and skips the factorization.
class GpPathSampler {
 public:
  GpPathSampler(const KernelSpec& kernel, std::vector<std::vector<double>> axes);

  FieldFunction draw(Engine& rng) const;
  const KernelFactor& factor() const { return factor_; }

 private:
  KernelSpec kernel_;
  std::vector<std::vector<double>> axes_;
  KernelFactor factor_;
};

FieldFunction sample_gp_path(const PriorSpec& prior, const std::vector<std::vector<double>>& axes, Engine& rng);

struct FieldNorms {
  double sup = 0.0;
  std::vector<double> grad_sup;
};

/// Sup norm over nodes and per-axis sup of central finite-difference partials
/// (one-sided at the edges).
FieldNorms sup_and_grad_norms(const FieldFunction& f);

bool sieve_membership(const FieldNorms& norms, std::optional<double> sigma, std::size_t n, const SieveSpec& sieve);
bool sieve_membership(const Theta& theta, std::size_t n, const SieveSpec& sieve);

struct ProportionInterval {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval at the given normal quantile.
ProportionInterval wilson_interval(std::size_t hits, std::size_t trials, double z = 1.959963984540054);

struct SieveMassRow {
  std::size_t n = 0;
  double prob = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 1.0;
};

/// Monte-Carlo prior mass of the complement of G_n for every n in `n_values`,
/// using one shared set of prior draws so the estimates are nested.
std::vector<SieveMassRow> estimate_sieve_complement_mass(const PriorSpec& prior, const SieveSpec& sieve,
                                                         std::span<const std::size_t> n_values, std::size_t draws,
                                                         const std::vector<std::vector<double>>& axes, Engine& rng);

/// Least-squares slope of log prob against n over rows with prob in (lo, hi).
/// Empty when fewer than two rows qualify.
std::optional<double> fit_log_decay_slope(std::span<const SieveMassRow> rows, double lo = 1e-3, double hi = 0.5);

}  // namespace postcon
