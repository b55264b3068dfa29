#pragma once

// Covariate space, gridded fields, the truth catalog and the E_X operator.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "postcon/rng.hpp"

namespace postcon {

using PointFn = std::function<double(std::span<const double>)>;

/// The unit cube [0,1]^d.
class CovariateSpace {
 public:
  explicit CovariateSpace(int dim);

  int dim() const { return dim_; }
  bool contains(std::span<const double> x) const;

 private:
  int dim_;
};

enum class CovariateScheme { iid_uniform, fixed_grid };

std::string to_string(CovariateScheme s);
CovariateScheme parse_covariate_scheme(std::string_view name);

/// n points in [0,1]^d stored row-major.
struct CovariateSample {
  int dim = 1;
  std::vector<double> coords;
  CovariateScheme scheme = CovariateScheme::iid_uniform;
  // Non-empty when the fixed-grid lattice had to be truncated to n points.
  std::string note;

  std::size_t size() const { return dim == 0 ? 0 : coords.size() / static_cast<std::size_t>(dim); }
  std::span<const double> point(std::size_t i) const {
    return {coords.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
};

/// Draws n covariates. The fixed-grid scheme returns cell midpoints of a lattice
/// with ceil(n^(1/d)) cells per axis, truncated to the first n in row-major order.
CovariateSample sample_covariates(std::size_t n, CovariateScheme scheme, const CovariateSpace& space,
                                  Engine& rng);

/// A real field on a tensor grid with multilinear interpolation.
///
/// Axis coordinates are strictly increasing and need not be equispaced. Points of the
/// cube lying outside the outermost nodes take the value of the nearest boundary cell
/// face (constant extrapolation).
class FieldFunction {
 public:
  FieldFunction(std::vector<std::vector<double>> axes, std::vector<double> values);

  static FieldFunction constant(int dim, double c);
  static FieldFunction tabulate(std::vector<std::vector<double>> axes, const PointFn& f);
  static FieldFunction tabulate_uniform(int dim, std::size_t nodes_per_axis, const PointFn& f);

  double operator()(std::span<const double> x) const;

  int dim() const { return static_cast<int>(axes_.size()); }
  const std::vector<std::vector<double>>& axes() const { return axes_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t node_count() const { return values_.size(); }
  std::vector<double> node(std::size_t flat_index) const;
  std::size_t stride(int axis) const { return strides_[static_cast<std::size_t>(axis)]; }

  double sup_norm() const;

 private:
  std::vector<std::vector<double>> axes_;
  std::vector<double> values_;
  std::vector<std::size_t> strides_;
};

/// Uniform axes with `nodes` points spanning [0,1].
std::vector<double> uniform_axis(std::size_t nodes);
std::vector<std::vector<double>> default_field_axes(int dim);

/// Nodes and weights of a product rule on [0,1]^d; weights sum to 1.
struct QuadratureRule {
  int dim = 1;
  std::vector<double> nodes;  // row-major
  std::vector<double> weights;
  // Per-axis node coordinates of the tensor product.
  std::vector<std::vector<double>> axes;

  std::size_t size() const { return weights.size(); }
  std::span<const double> point(std::size_t i) const {
    return {nodes.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }

  /// Composite Gauss–Legendre with `m` nodes per panel; each axis is split into
  /// panels at the given interior breakpoints.
  static QuadratureRule gauss_legendre(int dim, std::size_t m,
                                       const std::vector<std::vector<double>>& splits = {});
};

/// Gauss–Legendre nodes/weights on [a,b].
void gauss_legendre_1d(std::size_t m, double a, double b, std::vector<double>& nodes,
                       std::vector<double>& weights);

enum class IntegrationMethod { quadrature, monte_carlo };
std::string to_string(IntegrationMethod m);

struct Integrator {
  IntegrationMethod method = IntegrationMethod::quadrature;
  std::size_t nodes = 64;        // per axis, quadrature
  std::size_t samples = 100000;  // monte-carlo
  std::optional<RngStream> stream;

  static Integrator quadrature(std::size_t nodes_per_axis = 64);
  static Integrator monte_carlo(std::size_t samples, RngStream stream);
};

struct Expectation {
  double value = 0.0;
  double err = 0.0;
};

/// E_X[g(X)] for X uniform on the cube.
///
/// Quadrature error is estimated against the rule with every panel halved; Monte
/// Carlo reports the standard error. Non-finite g aborts with the offending point.
Expectation expect_over_Q(const PointFn& g, const CovariateSpace& space, const Integrator& integrator,
                          const std::vector<std::vector<double>>& splits = {});

/// A closed-form field, used for truths that a grid would smear (jumps).
struct ClosedFormField {
  int dim = 1;
  PointFn rule;
  double sup = 0.0;
  // Per-axis locations of jump discontinuities.
  std::vector<std::vector<double>> jumps;
};

struct TruthSpec {
  std::string name;
  std::variant<ClosedFormField, FieldFunction> eta0;
  std::optional<double> sigma0;
  double kappa0 = 2.0;
  bool representable_in_prior = true;

  int dim() const;
  double eta(std::span<const double> x) const;
  double sup_norm() const;
  std::vector<std::vector<double>> jumps() const;
  TruthSpec with_sigma(double sigma) const;
};

/// Catalog entries: "constant(c)", "smooth-sin", "smooth-bump", "step-jump",
/// "linear(a)". Unknown names throw std::invalid_argument listing valid names.
TruthSpec truth_catalog(std::string_view name, int dim = 1);
std::vector<std::string> truth_catalog_names();

}  // namespace postcon
