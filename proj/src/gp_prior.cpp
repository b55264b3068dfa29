#include "postcon/gp_prior.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace postcon {

std::string to_string(KernelFamily f) {
  return f == KernelFamily::squared_exponential ? "squared-exponential" : "constant";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "squared-exponential" || name == "se") return KernelFamily::squared_exponential;
  if (name == "constant") return KernelFamily::constant;
  throw std::invalid_argument("unknown kernel family '" + std::string(name) +
                              "' (valid: squared-exponential, constant)");
}

void KernelSpec::validate() const {
  if (!(lengthscale > 0.0)) throw std::invalid_argument("kernel lengthscale must be positive");
  if (!(amplitude > 0.0)) throw std::invalid_argument("kernel amplitude must be positive");
  if (!(jitter >= 0.0)) throw std::invalid_argument("kernel jitter must be non-negative");
}

double KernelSpec::operator()(std::span<const double> a, std::span<const double> b) const {
  const double tau2 = amplitude * amplitude;
  if (family == KernelFamily::constant) return tau2;
  double r2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r2 += (a[i] - b[i]) * (a[i] - b[i]);
  return tau2 * std::exp(-r2 / (2.0 * lengthscale * lengthscale));
}

std::string to_string(SieveForm f) { return f == SieveForm::quartic_root ? "quartic-root" : "square-root"; }

SieveForm parse_sieve_form(std::string_view name) {
  if (name == "quartic-root") return SieveForm::quartic_root;
  if (name == "square-root") return SieveForm::square_root;
  throw std::invalid_argument("unknown sieve form '" + std::string(name) + "' (valid: quartic-root, square-root)");
}

double SieveSpec::threshold(std::size_t n) const {
  const double bn = beta * static_cast<double>(n);
  return std::exp(form == SieveForm::quartic_root ? std::pow(bn, 0.25) : std::sqrt(bn));
}

double LogNormalPrior::log_density_of_log(double log_sigma) const {
  const double z = (log_sigma - location) / scale;
  return -0.5 * z * z - std::log(scale) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double LogNormalPrior::sample(Engine& rng) const {
  std::normal_distribution<double> n(location, scale);
  return std::exp(n(rng));
}

Theta Theta::from_truth(const TruthSpec& truth) {
  if (!truth.representable_in_prior)
    throw std::invalid_argument("truth '" + truth.name + "' is not representable as a prior field");
  const auto* f = std::get_if<FieldFunction>(&truth.eta0);
  if (f == nullptr) throw std::invalid_argument("truth '" + truth.name + "' has no gridded field");
  return Theta{*f, truth.sigma0};
}

PointSet PointSet::grid(const std::vector<std::vector<double>>& axes) {
  PointSet ps;
  ps.dim = static_cast<int>(axes.size());
  std::size_t total = 1;
  for (const auto& ax : axes) total *= ax.size();
  ps.coords.resize(total * axes.size());
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t a = axes.size(); a-- > 0;) {
      ps.coords[flat * axes.size() + a] = axes[a][rem % axes[a].size()];
      rem /= axes[a].size();
    }
  }
  return ps;
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& k, const PointSet& points) {
  k.validate();
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = k(points.point(static_cast<std::size_t>(i)), points.point(static_cast<std::size_t>(j)));
      K(i, j) = v;
      K(j, i) = v;
    }
    K(i, i) += k.jitter;
  }
  return K;
}

bool has_duplicate_points(const PointSet& points) {
  std::vector<std::size_t> order(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto pa = points.point(a), pb = points.point(b);
    return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto pa = points.point(order[i - 1]), pb = points.point(order[i]);
    if (std::equal(pa.begin(), pa.end(), pb.begin())) return true;
  }
  return false;
}

KernelFactor factor_kernel(const KernelSpec& k, const PointSet& points) {
  KernelSpec spec = k;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    const Eigen::MatrixXd K = kernel_matrix(spec, points);
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() == Eigen::Success) return {llt.matrixL(), spec.jitter};
    if (attempt == 3) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, Eigen::EigenvaluesOnly);
      const auto& ev = eig.eigenvalues();
      std::ostringstream msg;
      msg << "kernel Cholesky failed after jitter escalation to " << spec.jitter << "; eigenvalue range ["
          << ev.minCoeff() << ", " << ev.maxCoeff() << "], condition number ~ "
          << ev.maxCoeff() / std::max(std::abs(ev.minCoeff()), 1e-300);
      throw std::runtime_error(msg.str());
    }
    spec.jitter = spec.jitter > 0.0 ? spec.jitter * 10.0 : 1e-12;
  }
  throw std::logic_error("unreachable");
}

GpPathSampler::GpPathSampler(const KernelSpec& kernel, std::vector<std::vector<double>> axes)
    : kernel_(kernel), axes_(std::move(axes)) {
  kernel_.validate();
  if (kernel_.family != KernelFamily::constant) factor_ = factor_kernel(kernel_, PointSet::grid(axes_));
}

FieldFunction GpPathSampler::draw(Engine& rng) const {
  std::normal_distribution<double> normal;
  if (kernel_.family == KernelFamily::constant) {
    // Rank-one covariance: every node carries the same N(0, tau^2) level.
    std::size_t total = 1;
    for (const auto& ax : axes_) total *= ax.size();
    return FieldFunction(axes_, std::vector<double>(total, kernel_.amplitude * normal(rng)));
  }
  Eigen::VectorXd z(factor_.lower.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  const Eigen::VectorXd v = factor_.lower.triangularView<Eigen::Lower>() * z;
  return FieldFunction(axes_, std::vector<double>(v.data(), v.data() + v.size()));
}

FieldFunction sample_gp_path(const PriorSpec& prior, const std::vector<std::vector<double>>& axes, Engine& rng) {
  if (axes.empty()) throw std::invalid_argument("sample_gp_path: empty grid");
  return GpPathSampler(prior.kernel, axes).draw(rng);
}

FieldNorms sup_and_grad_norms(const FieldFunction& f) {
  FieldNorms out;
  out.sup = f.sup_norm();
  const int d = f.dim();
  out.grad_sup.assign(static_cast<std::size_t>(d), 0.0);
  const auto& values = f.values();
  for (int a = 0; a < d; ++a) {
    const auto& ax = f.axes()[static_cast<std::size_t>(a)];
    if (ax.size() < 2) throw std::invalid_argument("sup_and_grad_norms: need >= 2 nodes per axis");
    const std::size_t stride = f.stride(a);
    const std::size_t len = ax.size();
    double g = 0.0;
    for (std::size_t flat = 0; flat < values.size(); ++flat) {
      const std::size_t i = (flat / stride) % len;
      double deriv;
      if (i == 0)
        deriv = (values[flat + stride] - values[flat]) / (ax[1] - ax[0]);
      else if (i + 1 == len)
        deriv = (values[flat] - values[flat - stride]) / (ax[i] - ax[i - 1]);
      else
        deriv = (values[flat + stride] - values[flat - stride]) / (ax[i + 1] - ax[i - 1]);
      g = std::max(g, std::abs(deriv));
    }
    out.grad_sup[static_cast<std::size_t>(a)] = g;
  }
  return out;
}

bool sieve_membership(const FieldNorms& norms, std::optional<double> sigma, std::size_t n, const SieveSpec& sieve) {
  const double t = sieve.threshold(n);
  if (norms.sup > t) return false;
  for (double g : norms.grad_sup)
    if (g > t) return false;
  if (sieve.includes_sigma_band && sigma) {
    if (*sigma < 1.0 / t || *sigma > t) return false;
  }
  return true;
}

bool sieve_membership(const Theta& theta, std::size_t n, const SieveSpec& sieve) {
  return sieve_membership(sup_and_grad_norms(theta.eta), theta.sigma, n, sieve);
}

ProportionInterval wilson_interval(std::size_t hits, std::size_t trials, double z) {
  if (trials == 0) return {0.0, 0.0, 1.0};
  const double nt = static_cast<double>(trials);
  const double p = static_cast<double>(hits) / nt;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nt;
  const double centre = (p + z2 / (2.0 * nt)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nt + z2 / (4.0 * nt * nt)) / denom;
  return {p, std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

std::vector<SieveMassRow> estimate_sieve_complement_mass(const PriorSpec& prior, const SieveSpec& sieve,
                                                         std::span<const std::size_t> n_values, std::size_t draws,
                                                         const std::vector<std::vector<double>>& axes, Engine& rng) {
  if (draws < 1000) throw std::invalid_argument("estimate_sieve_complement_mass: need >= 1000 draws");
  const GpPathSampler sampler(prior.kernel, axes);
  std::vector<std::size_t> outside(n_values.size(), 0);
  for (std::size_t k = 0; k < draws; ++k) {
    const FieldFunction path = sampler.draw(rng);
    std::optional<double> sigma;
    if (prior.sigma_prior && sieve.includes_sigma_band) sigma = prior.sigma_prior->sample(rng);
    const FieldNorms norms = sup_and_grad_norms(path);
    for (std::size_t i = 0; i < n_values.size(); ++i)
      if (!sieve_membership(norms, sigma, n_values[i], sieve)) ++outside[i];
  }
  std::vector<SieveMassRow> rows;
  rows.reserve(n_values.size());
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    const auto ci = wilson_interval(outside[i], draws);
    rows.push_back({n_values[i], ci.estimate, ci.lo, ci.hi});
  }
  return rows;
}

std::optional<double> fit_log_decay_slope(std::span<const SieveMassRow> rows, double lo, double hi) {
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    if (r.prob > lo && r.prob < hi) {
      xs.push_back(static_cast<double>(r.n));
      ys.push_back(std::log(r.prob));
    }
  }
  if (xs.size() < 2) return std::nullopt;
  const double k = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / k;
    my += ys[i] / k;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

}  // namespace postcon
