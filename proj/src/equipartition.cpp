#include "postcon/equipartition.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace postcon {

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double EquipartitionTrace::median_abs_deviation(std::size_t i) const {
  std::vector<double> a(deviations.at(i).size());
  std::transform(deviations[i].begin(), deviations[i].end(), a.begin(), [](double v) { return std::abs(v); });
  return median(std::move(a));
}

double EquipartitionTrace::mean_deviation(std::size_t i) const {
  const auto& d = deviations.at(i);
  double s = 0.0;
  for (double v : d) s += v;
  return s / static_cast<double>(d.size());
}

double EquipartitionTrace::standard_error(std::size_t i) const {
  const auto& d = deviations.at(i);
  if (d.size() < 2) return 0.0;
  const double m = mean_deviation(i);
  double ss = 0.0;
  for (double v : d) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(d.size() - 1) / static_cast<double>(d.size()));
}

EquipartitionTrace equipartition_trace(const ObservationModel& model, const Theta& theta, const TruthSpec& truth,
                                       std::span<const std::size_t> n_values, std::size_t replicates,
                                       const RngStream& stream, const EquipartitionOptions& options) {
  if (replicates < 1) throw std::invalid_argument("equipartition_trace: replicates must be >= 1");
  if (n_values.empty()) throw std::invalid_argument("equipartition_trace: n_values must be nonempty");
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    if (n_values[i] == 0) throw std::invalid_argument("equipartition_trace: n must be >= 1");
    if (i > 0 && n_values[i] <= n_values[i - 1])
      throw std::invalid_argument("equipartition_trace: n_values must be increasing");
  }
  EquipartitionTrace trace;
  trace.n_values.assign(n_values.begin(), n_values.end());
  trace.h = kl_rate(model, theta, truth, options.integrator).value;
  const CovariateSpace space(truth.dim());
  for (std::size_t n : n_values) {
    std::vector<double> row(replicates);
    for (std::size_t r = 0; r < replicates; ++r) {
      Engine rng = stream.child("n", n).child("rep", r).engine();
      const Dataset data = simulate_responses(model, truth, sample_covariates(n, options.scheme, space, rng), rng);
      row[r] = log_likelihood_ratio(model, theta, truth, data) / static_cast<double>(n) + trace.h;
    }
    trace.deviations.push_back(std::move(row));
  }
  return trace;
}

std::vector<double> uniform_convergence_check(const ObservationModel& model, std::span<const Theta> thetas,
                                              const TruthSpec& truth, std::size_t n, std::size_t replicates,
                                              const RngStream& stream, std::size_t sieve_level,
                                              const SieveSpec& sieve, const EquipartitionOptions& options) {
  if (thetas.empty()) throw std::invalid_argument("uniform_convergence_check: empty theta set");
  if (n == 0) throw std::invalid_argument("uniform_convergence_check: n must be >= 1");
  std::vector<double> h(thetas.size());
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    if (!sieve_membership(thetas[k], sieve_level, sieve))
      throw std::invalid_argument("uniform_convergence_check: theta " + std::to_string(k) +
                                  " is outside the sieve G_" + std::to_string(sieve_level));
    h[k] = kl_rate(model, thetas[k], truth, options.integrator).value;
  }
  const CovariateSpace space(truth.dim());
  std::vector<double> sup_dev(replicates, 0.0);
  for (std::size_t r = 0; r < replicates; ++r) {
    Engine rng = stream.child("n", n).child("rep", r).engine();
    const Dataset data = simulate_responses(model, truth, sample_covariates(n, options.scheme, space, rng), rng);
    for (std::size_t k = 0; k < thetas.size(); ++k) {
      const double dev = log_likelihood_ratio(model, thetas[k], truth, data) / static_cast<double>(n) + h[k];
      sup_dev[r] = std::max(sup_dev[r], std::abs(dev));
    }
  }
  return sup_dev;
}

std::optional<double> loglog_slope(const EquipartitionTrace& trace) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < trace.n_values.size(); ++i) {
    const double m = trace.median_abs_deviation(i);
    if (m <= 0.0) continue;
    xs.push_back(std::log(static_cast<double>(trace.n_values[i])));
    ys.push_back(std::log(m));
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
  return sxy / sxx;
}

}  // namespace postcon
