#include "postcon/observation.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "postcon/format.hpp"

namespace postcon {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double softplus(double u) { return u > 30.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

const Theta& require_sigma(const Theta& t) {
  if (!t.sigma || !(*t.sigma > 0.0)) throw std::invalid_argument("model needs a positive sigma in theta");
  return t;
}

double need_sigma(std::optional<double> s, const char* what) {
  if (!s || !(*s > 0.0)) throw std::invalid_argument(std::string(what) + ": model needs a positive sigma");
  return *s;
}

}  // namespace

std::string to_string(LinkBase b) {
  switch (b) {
    case LinkBase::logistic_cdf: return "logistic-cdf";
    case LinkBase::normal_cdf: return "normal-cdf";
    case LinkBase::softplus: return "softplus";
    case LinkBase::exp: return "exp";
  }
  return "?";
}

LinkBase parse_link_base(std::string_view name) {
  if (name == "logistic-cdf" || name == "logistic") return LinkBase::logistic_cdf;
  if (name == "normal-cdf" || name == "probit") return LinkBase::normal_cdf;
  if (name == "softplus") return LinkBase::softplus;
  if (name == "exp") return LinkBase::exp;
  throw std::invalid_argument("unknown link base '" + std::string(name) +
                              "' (valid: logistic-cdf, normal-cdf, softplus, exp)");
}

void LinkSpec::validate() const {
  if (kind == LinkKind::binary) {
    if (base != LinkBase::logistic_cdf && base != LinkBase::normal_cdf)
      throw std::invalid_argument("binary link base must be logistic-cdf or normal-cdf");
    if (!(kappa_b >= 0.0 && kappa_b < 0.5)) throw std::invalid_argument("kappa_B must lie in (0, 1/2)");
  } else {
    if (base != LinkBase::softplus && base != LinkBase::exp)
      throw std::invalid_argument("poisson link base must be softplus or exp");
    if (!(kappa_p > 0.0)) throw std::invalid_argument("kappa_P must be positive");
  }
}

double LinkSpec::base_value(double u) const {
  switch (base) {
    case LinkBase::logistic_cdf: return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
    case LinkBase::normal_cdf: return 0.5 * std::erfc(-u / std::numbers::sqrt2);
    case LinkBase::softplus: return softplus(u);
    case LinkBase::exp: return std::exp(u);
  }
  return 0.0;
}

double LinkSpec::operator()(double u) const {
  const double g = base_value(u);
  if (kind == LinkKind::binary) {
    if (g <= kappa_b) return kappa_b;
    if (g >= 1.0 - kappa_b) return 1.0 - kappa_b;
    return g;
  }
  return g > kappa_p ? g : kappa_p;
}

double LinkSpec::inverse(double v) const {
  if (kind == LinkKind::binary) {
    if (!(v > kappa_b && v < 1.0 - kappa_b))
      throw std::invalid_argument("link inverse: probability outside (kappa_B, 1 - kappa_B)");
    if (base == LinkBase::logistic_cdf) return std::log(v / (1.0 - v));
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * v);
  }
  if (!(v > kappa_p)) throw std::invalid_argument("link inverse: intensity must exceed kappa_P");
  if (base == LinkBase::exp) return std::log(v);
  return v > 30.0 ? v + std::log(-std::expm1(-v)) : std::log(std::expm1(v));
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::binary: return "binary";
    case ModelKind::poisson: return "poisson";
    case ModelKind::gaussian: return "gaussian";
    case ModelKind::laplace: return "laplace";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "binary") return ModelKind::binary;
  if (name == "poisson") return ModelKind::poisson;
  if (name == "gaussian") return ModelKind::gaussian;
  if (name == "laplace") return ModelKind::laplace;
  throw std::invalid_argument("unknown model '" + std::string(name) + "' (valid: binary, poisson, gaussian, laplace)");
}

ObservationModel ObservationModel::binary(LinkSpec link) {
  link.kind = LinkKind::binary;
  link.validate();
  return {ModelKind::binary, link};
}

ObservationModel ObservationModel::poisson(LinkSpec link) {
  link.kind = LinkKind::poisson;
  link.validate();
  return {ModelKind::poisson, link};
}

ObservationModel ObservationModel::gaussian() { return {ModelKind::gaussian, {}}; }
ObservationModel ObservationModel::laplace() { return {ModelKind::laplace, {}}; }

double ObservationModel::mean_parameter(double u) const {
  return (kind == ModelKind::binary || kind == ModelKind::poisson) ? link(u) : u;
}

double log_density_at(const ObservationModel& model, double eta, std::optional<double> sigma, double y) {
  switch (model.kind) {
    case ModelKind::binary: {
      if (y != 0.0 && y != 1.0) throw std::invalid_argument("binary response must be 0 or 1");
      const double p = model.link(eta);
      return y == 1.0 ? std::log(p) : std::log1p(-p);
    }
    case ModelKind::poisson: {
      if (!(y >= 0.0) || y != std::floor(y)) throw std::invalid_argument("poisson response must be a count >= 0");
      const double lambda = model.link(eta);
      return y * std::log(lambda) - lambda - std::lgamma(y + 1.0);
    }
    case ModelKind::gaussian: {
      const double s = need_sigma(sigma, "gaussian log_density");
      const double z = (y - eta) / s;
      return -0.5 * z * z - std::log(s) - kHalfLog2Pi;
    }
    case ModelKind::laplace: {
      const double s = need_sigma(sigma, "laplace log_density");
      return -std::abs(y - eta) / s - std::log(2.0 * s);
    }
  }
  return 0.0;
}

double log_density(const ObservationModel& model, const Theta& theta, std::span<const double> x, double y) {
  if (model.has_scale()) require_sigma(theta);
  return log_density_at(model, theta.eta(x), theta.sigma, y);
}

Dataset simulate_responses(const ObservationModel& model, const TruthSpec& truth, CovariateSample xs, Engine& rng) {
  if (truth.dim() != xs.dim) throw std::invalid_argument("simulate_responses: truth and covariate dims differ");
  Dataset data;
  data.responses.resize(xs.size());
  const double s0 = model.has_scale() ? need_sigma(truth.sigma0, "simulate_responses") : 0.0;
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> expo(1.0);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double eta0 = truth.eta(xs.point(i));
    double y = 0.0;
    switch (model.kind) {
      case ModelKind::binary: y = std::bernoulli_distribution(model.link(eta0))(rng) ? 1.0 : 0.0; break;
      case ModelKind::poisson:
        y = static_cast<double>(std::poisson_distribution<long long>(model.link(eta0))(rng));
        break;
      case ModelKind::gaussian: y = eta0 + s0 * normal(rng); break;
      case ModelKind::laplace: {
        const double e = s0 * expo(rng);
        y = eta0 + (coin(rng) ? e : -e);
        break;
      }
    }
    data.responses[i] = y;
  }
  data.covariates = std::move(xs);
  return data;
}

double log_ratio_term(const ObservationModel& model, double eta, std::optional<double> sigma, double eta0,
                      std::optional<double> sigma0, double y) {
  switch (model.kind) {
    case ModelKind::binary: {
      const double p = model.link(eta), p0 = model.link(eta0);
      if (p == p0) return 0.0;
      return y == 1.0 ? std::log(p / p0) : std::log((1.0 - p) / (1.0 - p0));
    }
    case ModelKind::poisson: {
      const double l = model.link(eta), l0 = model.link(eta0);
      if (l == l0) return 0.0;
      return -(l - l0) + y * std::log(l / l0);
    }
    case ModelKind::gaussian: {
      const double s = need_sigma(sigma, "log ratio"), s0 = need_sigma(sigma0, "log ratio");
      if (s == s0 && eta == eta0) return 0.0;
      const double r0 = (y - eta0) / s0, r = (y - eta) / s;
      return std::log(s0 / s) + 0.5 * r0 * r0 - 0.5 * r * r;
    }
    case ModelKind::laplace: {
      const double s = need_sigma(sigma, "log ratio"), s0 = need_sigma(sigma0, "log ratio");
      if (s == s0 && eta == eta0) return 0.0;
      return std::log(s0 / s) + std::abs(y - eta0) / s0 - std::abs(y - eta) / s;
    }
  }
  return 0.0;
}

double log_likelihood_ratio(const ObservationModel& model, const Theta& theta, const TruthSpec& truth,
                            const Dataset& data) {
  if (data.covariates.size() != data.responses.size())
    throw std::invalid_argument("dataset covariates and responses differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.covariates.point(i);
    sum += log_ratio_term(model, theta.eta(x), theta.sigma, truth.eta(x), truth.sigma0, data.responses[i]);
  }
  return sum;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  const int d = data.covariates.dim;
  for (int j = 0; j < d; ++j) out << 'x' << (j + 1) << ',';
  out << "y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double c : data.covariates.point(i)) out << format_real(c) << ',';
    out << format_real(data.responses[i]) << '\n';
  }
}

Dataset read_dataset_csv(std::istream& in, ModelKind kind) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset CSV: missing header");
  int dim = 0;
  {
    std::stringstream hs(line);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(hs, col, ',')) cols.push_back(col);
    if (cols.size() < 2 || cols.back() != "y") throw std::runtime_error("dataset CSV: header must be x1..xd,y");
    dim = static_cast<int>(cols.size()) - 1;
  }
  Dataset data;
  data.covariates.dim = dim;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cell.size() || cell.empty())
        throw std::runtime_error("dataset CSV: bad number '" + cell + "' on line " + std::to_string(lineno));
      row.push_back(v);
    }
    if (static_cast<int>(row.size()) != dim + 1)
      throw std::runtime_error("dataset CSV: wrong column count on line " + std::to_string(lineno));
    const double y = row.back();
    if (kind == ModelKind::binary && y != 0.0 && y != 1.0)
      throw std::runtime_error("dataset CSV: binary response must be 0/1 on line " + std::to_string(lineno));
    if (kind == ModelKind::poisson && (y < 0.0 || y != std::floor(y)))
      throw std::runtime_error("dataset CSV: count response expected on line " + std::to_string(lineno));
    data.covariates.coords.insert(data.covariates.coords.end(), row.begin(), row.end() - 1);
    data.responses.push_back(y);
  }
  return data;
}

}  // namespace postcon
