#pragma once

// Config-driven study runner: JSON configs, CSV/JSON artifacts, a manifest that
// accumulates across runs in one output directory, and a markdown report.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "postcon/domain.hpp"
#include "postcon/gp_prior.hpp"
#include "postcon/observation.hpp"
#include "postcon/posterior.hpp"

namespace postcon {

inline constexpr const char* kCodeVersion = "0.1.0";

/// Invalid configuration; `field()` names the offending key path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ModelSection {
  std::string kind = "binary";
  std::string link = "default";  // binary: logistic | probit; poisson: softplus | exp
  double kappa_b = 0.05;
  double kappa_p = 0.1;
  bool operator==(const ModelSection&) const = default;
};

struct TruthSection {
  std::string name = "smooth-sin";
  int dim = 1;
  std::optional<double> sigma0;  // scale models; defaults to 1
  bool operator==(const TruthSection&) const = default;
};

struct PriorSection {
  std::string kernel = "squared-exponential";
  double lengthscale = 0.2;
  double amplitude = 1.0;
  double jitter = 1e-9;
  double sigma_location = 0.0;
  double sigma_scale = 1.0;
  bool operator==(const PriorSection&) const = default;
};

struct SieveSection {
  double beta = 1.0;
  std::string form = "quartic-root";
  std::size_t draws = 10000;
  std::size_t n_max = 10;
  bool operator==(const SieveSection&) const = default;
};

struct EpsilonSection {
  double c = 1.0;
  double gamma = 0.8;
  bool operator==(const EpsilonSection&) const = default;
};

struct McmcSection {
  std::size_t iterations = 10000;
  std::size_t burn_in = 2000;
  std::size_t thin = 4;
  double sigma_step = 0.3;
  std::size_t quadrature_nodes = 48;
  bool persist_draws = false;
  bool operator==(const McmcSection&) const = default;
};

struct KlRateSection {
  // "constant(c)" sets eta = c; "mean(v)" sets the mean parameter to v through the link inverse.
  std::vector<std::string> thetas = {"mean(0.25)"};
  std::optional<double> theta_sigma;
  std::size_t quadrature_nodes = 64;
  bool operator==(const KlRateSection&) const = default;
};

struct EquipartitionSection {
  std::string theta = "mean(0.25)";
  std::optional<double> theta_sigma;
  std::string scheme = "iid";
  std::vector<std::size_t> n_values = {100, 1000, 10000};
  std::size_t replicates = 50;
  bool operator==(const EquipartitionSection&) const = default;
};

struct PosteriorSection {
  double set_threshold = 0.2;  // A = {h >= threshold}
  std::size_t search_budget = 2000;
  bool operator==(const PosteriorSection&) const = default;
};

struct PredictiveSection {
  std::vector<double> x = {0.25};  // row-major query points
  bool operator==(const PredictiveSection&) const = default;
};

struct BoundsSection {
  std::size_t samples = 100000;
  std::size_t grid_points = 8;
  std::size_t n = 100;
  double lambda = 2.0;
  double lambda0 = 1.0;
  double sigma0 = 1.0;
  bool operator==(const BoundsSection&) const = default;
};

struct ExperimentConfig {
  ModelSection model;
  TruthSection truth;
  PriorSection prior;
  SieveSection sieve;
  std::vector<std::size_t> n_schedule = {50, 200, 800};
  EpsilonSection epsilon;
  McmcSection mcmc;
  std::size_t replicates = 5;
  std::uint64_t master_seed = 20240601;
  std::string output_dir = "postcon-out";

  KlRateSection kl_rate;
  EquipartitionSection equipartition;
  PosteriorSection posterior;
  PredictiveSection predictive;
  BoundsSection bounds;

  bool operator==(const ExperimentConfig&) const = default;

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  ObservationModel observation_model() const;
  TruthSpec truth_spec() const;
  PriorSpec prior_spec() const;
  SieveSpec sieve_spec() const;
  McmcConfig mcmc_config() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults; unknown keys are errors. A manifest is
/// accepted too, in which case its config snapshot is used.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Built-in presets: "smoke" (seconds) and "paper-desk" (the desk-scale study).
ExperimentConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

/// Parses "constant(c)" or "mean(v)" for the given model.
Theta parse_theta(const std::string& spec, const ObservationModel& model, int dim, std::optional<double> sigma);

enum class Study { kl_rate, equipartition, sieve_mass, posterior, predictive, bounds };
std::string to_string(Study s);
Study parse_study(std::string_view name);
std::vector<Study> all_studies();
/// The claim family each study checks; used in help text and reports.
std::string claim_family(Study s);

struct ArtifactRecord {
  std::string path;  // relative to the output directory
  std::string fnv1a64;
};

struct StageRecord {
  std::string status;  // completed | failed
  std::string error;
  double wall_seconds = 0.0;
  std::vector<ArtifactRecord> artifacts;
};

struct RunManifest {
  nlohmann::json config;
  std::string code_version = kCodeVersion;
  std::map<std::string, StageRecord> stages;
};

nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);

/// Runs one study, writes its artifacts under config.output_dir and merges the
/// stage into manifest.json there. A failed stage is recorded before rethrowing.
RunManifest run_experiment(const ExperimentConfig& config, Study study);

/// Writes report.md into `dir` from the manifest and artifacts found there and
/// returns the markdown.
std::string emit_report(const std::filesystem::path& dir);

/// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string file_hash(const std::filesystem::path& path);

}  // namespace postcon
