#include "postcon/domain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace postcon {

CovariateSpace::CovariateSpace(int dim) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("covariate dimension must be >= 1");
}

bool CovariateSpace::contains(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) return false;
  return std::all_of(x.begin(), x.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

std::string to_string(CovariateScheme s) {
  return s == CovariateScheme::iid_uniform ? "iid" : "fixed-grid";
}

CovariateScheme parse_covariate_scheme(std::string_view name) {
  if (name == "iid" || name == "iid-from-Q") return CovariateScheme::iid_uniform;
  if (name == "fixed-grid") return CovariateScheme::fixed_grid;
  throw std::invalid_argument("unknown covariate scheme '" + std::string(name) +
                              "' (valid: iid, fixed-grid)");
}

CovariateSample sample_covariates(std::size_t n, CovariateScheme scheme, const CovariateSpace& space,
                                  Engine& rng) {
  if (n == 0) throw std::invalid_argument("sample_covariates: n must be >= 1");
  const auto d = static_cast<std::size_t>(space.dim());
  CovariateSample out;
  out.dim = space.dim();
  out.scheme = scheme;
  out.coords.resize(n * d);

  if (scheme == CovariateScheme::iid_uniform) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& c : out.coords) c = u(rng);
    return out;
  }

  // Smallest k with k^d >= n.
  std::size_t k = static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), 1.0 / d)));
  k = std::max<std::size_t>(k, 1);
  auto power = [d](std::size_t base) {
    std::size_t p = 1;
    for (std::size_t j = 0; j < d; ++j) p *= base;
    return p;
  };
  while (power(k) < n) ++k;
  if (power(k) != n) {
    std::ostringstream note;
    note << "fixed-grid: n=" << n << " is not a perfect " << d << "-th power; used " << k
         << " cells per axis (" << power(k) << " cells) truncated to the first " << n;
    out.note = note.str();
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i;
    for (std::size_t j = d; j-- > 0;) {
      const std::size_t idx = rem % k;
      rem /= k;
      out.coords[i * d + j] = (static_cast<double>(idx) + 0.5) / static_cast<double>(k);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// FieldFunction

FieldFunction::FieldFunction(std::vector<std::vector<double>> axes, std::vector<double> values)
    : axes_(std::move(axes)), values_(std::move(values)) {
  if (axes_.empty()) throw std::invalid_argument("FieldFunction: need at least one axis");
  std::size_t total = 1;
  strides_.assign(axes_.size(), 1);
  for (std::size_t a = axes_.size(); a-- > 0;) {
    const auto& ax = axes_[a];
    if (ax.empty()) throw std::invalid_argument("FieldFunction: empty axis");
    for (std::size_t i = 1; i < ax.size(); ++i)
      if (!(ax[i] > ax[i - 1])) throw std::invalid_argument("FieldFunction: axis not strictly increasing");
    strides_[a] = total;
    total *= ax.size();
  }
  if (values_.size() != total) throw std::invalid_argument("FieldFunction: value count does not match grid");
  for (double v : values_)
    if (!std::isfinite(v)) throw std::invalid_argument("FieldFunction: non-finite node value");
}

FieldFunction FieldFunction::constant(int dim, double c) {
  std::vector<std::vector<double>> axes(static_cast<std::size_t>(dim), std::vector<double>{0.0, 1.0});
  const std::size_t count = std::size_t{1} << dim;
  return FieldFunction(std::move(axes), std::vector<double>(count, c));
}

FieldFunction FieldFunction::tabulate(std::vector<std::vector<double>> axes, const PointFn& f) {
  std::size_t total = 1;
  for (const auto& ax : axes) total *= ax.size();
  std::vector<double> values(total);
  std::vector<double> x(axes.size());
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t a = axes.size(); a-- > 0;) {
      x[a] = axes[a][rem % axes[a].size()];
      rem /= axes[a].size();
    }
    values[flat] = f(x);
  }
  return FieldFunction(std::move(axes), std::move(values));
}

FieldFunction FieldFunction::tabulate_uniform(int dim, std::size_t nodes_per_axis, const PointFn& f) {
  return tabulate(std::vector<std::vector<double>>(static_cast<std::size_t>(dim), uniform_axis(nodes_per_axis)),
                  f);
}

std::vector<double> FieldFunction::node(std::size_t flat_index) const {
  std::vector<double> x(axes_.size());
  for (std::size_t a = 0; a < axes_.size(); ++a)
    x[a] = axes_[a][(flat_index / strides_[a]) % axes_[a].size()];
  return x;
}

double FieldFunction::operator()(std::span<const double> x) const {
  if (x.size() != axes_.size()) throw std::invalid_argument("FieldFunction: dimension mismatch");
  for (double v : x)
    if (!(v >= 0.0 && v <= 1.0)) throw std::out_of_range("FieldFunction: point outside the unit cube");

  const std::size_t d = axes_.size();
  // Per axis: lower node index and weight of the upper node.
  std::size_t lo[8];
  double w[8];
  if (d > 8) throw std::invalid_argument("FieldFunction: at most 8 dimensions supported");
  for (std::size_t a = 0; a < d; ++a) {
    const auto& ax = axes_[a];
    if (ax.size() == 1 || x[a] <= ax.front()) {
      lo[a] = 0;
      w[a] = 0.0;
    } else if (x[a] >= ax.back()) {
      lo[a] = ax.size() - 2;
      w[a] = 1.0;
    } else {
      const auto it = std::upper_bound(ax.begin(), ax.end(), x[a]);
      lo[a] = static_cast<std::size_t>(it - ax.begin()) - 1;
      w[a] = (x[a] - ax[lo[a]]) / (ax[lo[a] + 1] - ax[lo[a]]);
    }
  }
  double acc = 0.0;
  for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
    double weight = 1.0;
    std::size_t flat = 0;
    for (std::size_t a = 0; a < d; ++a) {
      const bool upper = (corner >> a) & 1U;
      if (axes_[a].size() == 1) {
        if (upper) {
          weight = 0.0;
          break;
        }
        continue;
      }
      weight *= upper ? w[a] : 1.0 - w[a];
      flat += (lo[a] + (upper ? 1 : 0)) * strides_[a];
    }
    if (weight != 0.0) acc += weight * values_[flat];
  }
  return acc;
}

double FieldFunction::sup_norm() const {
  double s = 0.0;
  for (double v : values_) s = std::max(s, std::abs(v));
  return s;
}

std::vector<double> uniform_axis(std::size_t nodes) {
  if (nodes < 2) throw std::invalid_argument("uniform_axis: need at least 2 nodes");
  std::vector<double> ax(nodes);
  for (std::size_t i = 0; i < nodes; ++i) ax[i] = static_cast<double>(i) / static_cast<double>(nodes - 1);
  return ax;
}

std::vector<std::vector<double>> default_field_axes(int dim) {
  const std::size_t nodes = dim == 1 ? 401 : dim == 2 ? 51 : 11;
  return std::vector<std::vector<double>>(static_cast<std::size_t>(dim), uniform_axis(nodes));
}

// ---------------------------------------------------------------------------
// Quadrature

void gauss_legendre_1d(std::size_t m, double a, double b, std::vector<double>& nodes,
                       std::vector<double>& weights) {
  if (m == 0) throw std::invalid_argument("gauss_legendre_1d: m must be >= 1");
  nodes.assign(m, 0.0);
  weights.assign(m, 0.0);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  const double md = static_cast<double>(m);
  for (std::size_t i = 0; i < (m + 1) / 2; ++i) {
    // Newton iteration on P_m from the Chebyshev-like initial guess.
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (md + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = z;
      for (std::size_t k = 2; k <= m; ++k) {
        const double kd = static_cast<double>(k);
        const double p2 = ((2.0 * kd - 1.0) * z * p1 - (kd - 1.0) * p0) / kd;
        p0 = p1;
        p1 = p2;
      }
      if (m == 1) p0 = 1.0;
      dp = md * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute the derivative at the converged root.
    double p0 = 1.0, p1 = z;
    for (std::size_t k = 2; k <= m; ++k) {
      const double kd = static_cast<double>(k);
      const double p2 = ((2.0 * kd - 1.0) * z * p1 - (kd - 1.0) * p0) / kd;
      p0 = p1;
      p1 = p2;
    }
    if (m == 1) {
      p0 = 1.0;
      dp = 1.0;
    } else {
      dp = md * (z * p1 - p0) / (z * z - 1.0);
    }
    const double wgt = 2.0 / ((1.0 - z * z) * dp * dp);
    nodes[i] = mid - half * z;
    nodes[m - 1 - i] = mid + half * z;
    weights[i] = weights[m - 1 - i] = wgt * half;
  }
}

namespace {

void composite_axis(std::size_t m, const std::vector<double>& splits, std::vector<double>& nodes,
                    std::vector<double>& weights) {
  std::vector<double> edges{0.0};
  for (double s : splits)
    if (s > 0.0 && s < 1.0) edges.push_back(s);
  edges.push_back(1.0);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  nodes.clear();
  weights.clear();
  std::vector<double> pn, pw;
  for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
    gauss_legendre_1d(m, edges[e], edges[e + 1], pn, pw);
    nodes.insert(nodes.end(), pn.begin(), pn.end());
    weights.insert(weights.end(), pw.begin(), pw.end());
  }
}

}  // namespace

QuadratureRule QuadratureRule::gauss_legendre(int dim, std::size_t m,
                                              const std::vector<std::vector<double>>& splits) {
  if (dim < 1) throw std::invalid_argument("quadrature: dim must be >= 1");
  QuadratureRule rule;
  rule.dim = dim;
  const auto d = static_cast<std::size_t>(dim);
  std::vector<std::vector<double>> axw(d);
  rule.axes.resize(d);
  for (std::size_t a = 0; a < d; ++a)
    composite_axis(m, a < splits.size() ? splits[a] : std::vector<double>{}, rule.axes[a], axw[a]);

  std::size_t total = 1;
  for (const auto& ax : rule.axes) total *= ax.size();
  rule.nodes.resize(total * d);
  rule.weights.resize(total);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    double w = 1.0;
    for (std::size_t a = d; a-- > 0;) {
      const std::size_t idx = rem % rule.axes[a].size();
      rem /= rule.axes[a].size();
      rule.nodes[flat * d + a] = rule.axes[a][idx];
      w *= axw[a][idx];
    }
    rule.weights[flat] = w;
  }
  return rule;
}

std::string to_string(IntegrationMethod m) {
  return m == IntegrationMethod::quadrature ? "quadrature" : "monte-carlo";
}

Integrator Integrator::quadrature(std::size_t nodes_per_axis) {
  Integrator it;
  it.method = IntegrationMethod::quadrature;
  it.nodes = nodes_per_axis;
  return it;
}

Integrator Integrator::monte_carlo(std::size_t samples, RngStream stream) {
  Integrator it;
  it.method = IntegrationMethod::monte_carlo;
  it.samples = samples;
  it.stream = std::move(stream);
  return it;
}

namespace {

double checked_eval(const PointFn& g, std::span<const double> x) {
  const double v = g(x);
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "expect_over_Q: integrand is not finite (" << v << ") at x = (";
    for (std::size_t i = 0; i < x.size(); ++i) msg << (i ? ", " : "") << x[i];
    msg << ")";
    throw std::domain_error(msg.str());
  }
  return v;
}

std::pair<double, double> apply_rule(const PointFn& g, const QuadratureRule& rule) {
  double sum = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double v = rule.weights[i] * checked_eval(g, rule.point(i));
    sum += v;
    abs_sum += std::abs(v);
  }
  return {sum, abs_sum};
}

}  // namespace

Expectation expect_over_Q(const PointFn& g, const CovariateSpace& space, const Integrator& integrator,
                          const std::vector<std::vector<double>>& splits) {
  const int d = space.dim();
  if (integrator.method == IntegrationMethod::monte_carlo) {
    if (!integrator.stream) throw std::invalid_argument("monte-carlo integrator needs an RngStream");
    if (integrator.samples < 2) throw std::invalid_argument("monte-carlo integrator needs >= 2 samples");
    Engine rng = integrator.stream->engine();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(static_cast<std::size_t>(d));
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < integrator.samples; ++i) {
      for (double& c : x) c = u(rng);
      const double v = checked_eval(g, x);
      const double delta = v - mean;
      mean += delta / static_cast<double>(i + 1);
      m2 += delta * (v - mean);
    }
    const double var = m2 / static_cast<double>(integrator.samples - 1);
    return {mean, std::sqrt(var / static_cast<double>(integrator.samples))};
  }

  if (d > 2) throw std::invalid_argument("tensor quadrature supports d <= 2; use monte-carlo");
  const QuadratureRule fine = QuadratureRule::gauss_legendre(d, integrator.nodes, splits);
  const auto [value, abs_sum] = apply_rule(g, fine);

  // Embedded comparison: every panel halved, half the nodes per panel.
  std::vector<std::vector<double>> halved(static_cast<std::size_t>(d));
  for (std::size_t a = 0; a < halved.size(); ++a) {
    std::vector<double> edges{0.0};
    if (a < splits.size())
      for (double s : splits[a])
        if (s > 0.0 && s < 1.0) edges.push_back(s);
    edges.push_back(1.0);
    std::sort(edges.begin(), edges.end());
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
      if (e > 0) halved[a].push_back(edges[e]);
      halved[a].push_back(0.5 * (edges[e] + edges[e + 1]));
    }
  }
  const std::size_t coarse_m = std::max<std::size_t>(integrator.nodes / 2, 1);
  const auto [alt, alt_abs] = apply_rule(g, QuadratureRule::gauss_legendre(d, coarse_m, halved));
  (void)alt_abs;
  const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * abs_sum;
  return {value, std::max(std::abs(value - alt), roundoff)};
}

// ---------------------------------------------------------------------------
// Truths

int TruthSpec::dim() const {
  return std::visit(
      [](const auto& f) -> int {
        if constexpr (std::is_same_v<std::decay_t<decltype(f)>, FieldFunction>)
          return f.dim();
        else
          return f.dim;
      },
      eta0);
}

double TruthSpec::eta(std::span<const double> x) const {
  return std::visit(
      [&](const auto& f) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(f)>, FieldFunction>) {
          return f(x);
        } else {
          for (double v : x)
            if (!(v >= 0.0 && v <= 1.0)) throw std::out_of_range("truth: point outside the unit cube");
          return f.rule(x);
        }
      },
      eta0);
}

double TruthSpec::sup_norm() const {
  return std::visit(
      [](const auto& f) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(f)>, FieldFunction>)
          return f.sup_norm();
        else
          return f.sup;
      },
      eta0);
}

std::vector<std::vector<double>> TruthSpec::jumps() const {
  if (const auto* cf = std::get_if<ClosedFormField>(&eta0)) return cf->jumps;
  return {};
}

TruthSpec TruthSpec::with_sigma(double sigma) const {
  if (!(sigma > 0.0)) throw std::invalid_argument("truth sigma0 must be positive");
  TruthSpec t = *this;
  t.sigma0 = sigma;
  return t;
}

std::vector<std::string> truth_catalog_names() {
  return {"constant(c)", "linear(a)", "smooth-sin", "smooth-bump", "step-jump"};
}

namespace {

std::optional<double> parse_call(std::string_view name, std::string_view fn) {
  if (name.size() < fn.size() + 2 || name.substr(0, fn.size()) != fn || name[fn.size()] != '(' ||
      name.back() != ')')
    return std::nullopt;
  const std::string arg(name.substr(fn.size() + 1, name.size() - fn.size() - 2));
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(arg, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("truth_catalog: cannot parse argument of '" + std::string(name) + "'");
  }
  if (used != arg.size() || !std::isfinite(v))
    throw std::invalid_argument("truth_catalog: cannot parse argument of '" + std::string(name) + "'");
  return v;
}

}  // namespace

TruthSpec truth_catalog(std::string_view name, int dim) {
  if (dim < 1) throw std::invalid_argument("truth_catalog: dim must be >= 1");
  TruthSpec t;
  t.name = std::string(name);

  if (auto c = parse_call(name, "constant")) {
    t.eta0 = FieldFunction::constant(dim, *c);
    t.kappa0 = std::max(2.0, std::abs(*c) + 1.0);
    return t;
  }
  if (auto a = parse_call(name, "linear")) {
    const double slope = *a;
    t.eta0 = FieldFunction::tabulate(std::vector<std::vector<double>>(static_cast<std::size_t>(dim), {0.0, 1.0}),
                                     [slope](std::span<const double> x) { return slope * x[0]; });
    t.kappa0 = std::max(2.0, std::abs(slope) + 1.0);
    return t;
  }
  if (name == "smooth-sin") {
    t.eta0 = FieldFunction::tabulate(default_field_axes(dim), [](std::span<const double> x) {
      return std::sin(2.0 * std::numbers::pi * x[0]);
    });
    t.kappa0 = 2.0;
    return t;
  }
  if (name == "smooth-bump") {
    t.eta0 = FieldFunction::tabulate(default_field_axes(dim), [](std::span<const double> x) {
      double r2 = 0.0;
      for (double v : x) r2 += (v - 0.5) * (v - 0.5);
      return 1.5 * std::exp(-r2 / 0.02) - 0.5;
    });
    t.kappa0 = 2.0;
    return t;
  }
  if (name == "step-jump") {
    ClosedFormField f;
    f.dim = dim;
    f.rule = [](std::span<const double> x) { return x[0] < 0.5 ? -1.0 : 1.0; };
    f.sup = 1.0;
    f.jumps.assign(static_cast<std::size_t>(dim), {});
    f.jumps[0] = {0.5};
    t.eta0 = std::move(f);
    t.kappa0 = 2.0;
    t.representable_in_prior = false;
    return t;
  }

  std::string valid;
  for (const auto& n : truth_catalog_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown truth '" + std::string(name) + "'; valid names: " + valid);
}

}  // namespace postcon
