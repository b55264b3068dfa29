#pragma once

// Observation models: truncated links, log-densities, simulation and log R_n.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "postcon/domain.hpp"
#include "postcon/gp_prior.hpp"
#include "postcon/rng.hpp"

namespace postcon {

enum class LinkBase { logistic_cdf, normal_cdf, softplus, exp };
enum class LinkKind { binary, poisson };

std::string to_string(LinkBase b);
LinkBase parse_link_base(std::string_view name);

/// H(u): the base G truncated to [kappa_B, 1 - kappa_B] (binary) or floored at
/// kappa_P (poisson). kappa_B = 0 disables truncation and exists only as a test hook.
struct LinkSpec {
  LinkBase base = LinkBase::logistic_cdf;
  LinkKind kind = LinkKind::binary;
  double kappa_b = 0.05;
  double kappa_p = 0.1;

  void validate() const;
  double base_value(double u) const;
  double operator()(double u) const;
  /// Some u with H(u) = v for v strictly inside the link range.
  double inverse(double v) const;
};

enum class ModelKind { binary, poisson, gaussian, laplace };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view name);

struct ObservationModel {
  ModelKind kind = ModelKind::binary;
  LinkSpec link;

  static ObservationModel binary(LinkSpec link = {});
  static ObservationModel poisson(LinkSpec link = {LinkBase::softplus, LinkKind::poisson});
  static ObservationModel gaussian();
  static ObservationModel laplace();

  bool has_scale() const { return kind == ModelKind::gaussian || kind == ModelKind::laplace; }
  std::string name() const { return to_string(kind); }
  /// Conditional mean parameter at latent value u: p, lambda, or the location itself.
  double mean_parameter(double u) const;
};

struct Dataset {
  CovariateSample covariates;
  std::vector<double> responses;

  std::size_t size() const { return responses.size(); }
};

/// log f(y | eta(x), sigma) for a single latent value.
double log_density_at(const ObservationModel& model, double eta, std::optional<double> sigma, double y);
double log_density(const ObservationModel& model, const Theta& theta, std::span<const double> x, double y);

Dataset simulate_responses(const ObservationModel& model, const TruthSpec& truth, CovariateSample xs, Engine& rng);

/// One observation's contribution log f_theta(y|x) - log f_theta0(y|x), in the
/// cancelling closed form of each model.
double log_ratio_term(const ObservationModel& model, double eta, std::optional<double> sigma, double eta0,
                      std::optional<double> sigma0, double y);

/// log R_n(theta) = sum_i [log f_theta(y_i|x_i) - log f_theta0(y_i|x_i)].
double log_likelihood_ratio(const ObservationModel& model, const Theta& theta, const TruthSpec& truth,
                            const Dataset& data);

/// CSV with columns x1..xd,y. Integers are written without a decimal point and
/// reals with 17 significant digits, so reading back is exact.
void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(std::istream& in, ModelKind kind);

}  // namespace postcon
