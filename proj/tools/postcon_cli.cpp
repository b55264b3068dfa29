// postcon: runs the simulation studies from a JSON config or a built-in preset.
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "postcon/experiment.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct CommonFlags {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file (a manifest.json also works)");
  cmd->add_option("--preset", f.preset, "built-in config: smoke | paper-desk");
  cmd->add_option("--seed", f.seed, "master seed, overrides the config");
  cmd->add_option("--out", f.out, "output directory, overrides the config");
}

postcon::ExperimentConfig resolve(const CommonFlags& f) {
  if (!f.config_path.empty() && !f.preset.empty())
    throw postcon::ConfigError("config", "--config and --preset are mutually exclusive");
  postcon::ExperimentConfig c = !f.config_path.empty() ? postcon::load_config(f.config_path)
                                : !f.preset.empty()     ? postcon::preset_config(f.preset)
                                                        : postcon::ExperimentConfig{};
  if (f.seed) c.master_seed = *f.seed;
  if (!f.out.empty()) c.output_dir = f.out;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation checks of posterior consistency for GP-based nonparametric regression"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::vector<std::pair<CLI::App*, postcon::Study>> study_cmds;
  for (postcon::Study s : postcon::all_studies()) {
    CLI::App* cmd = app.add_subcommand(postcon::to_string(s), "Checks " + postcon::claim_family(s));
    add_common(cmd, flags);
    study_cmds.emplace_back(cmd, s);
  }
  std::string report_dir;
  CLI::App* report = app.add_subcommand("report", "Summarizes the artifacts of an output directory into report.md");
  report->add_option("--out", report_dir, "output directory holding manifest.json");
  std::string report_config_path, report_preset;
  report->add_option("--config", report_config_path, "take the output directory from this config");
  report->add_option("--preset", report_preset, "take the output directory from this preset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (report->parsed()) {
      if (report_dir.empty()) {
        CommonFlags f;
        f.config_path = report_config_path;
        f.preset = report_preset;
        report_dir = resolve(f).output_dir;
      }
      std::cout << postcon::emit_report(report_dir);
      return 0;
    }
    for (const auto& [cmd, study] : study_cmds) {
      if (!cmd->parsed()) continue;
      const postcon::ExperimentConfig config = resolve(flags);
      const auto manifest = postcon::run_experiment(config, study);
      const auto& stage = manifest.stages.at(postcon::to_string(study));
      std::cout << postcon::to_string(study) << ": " << stage.status << " in " << stage.wall_seconds << " s\n";
      for (const auto& a : stage.artifacts) std::cout << "  " << config.output_dir << "/" << a.path << "\n";
      return 0;
    }
  } catch (const postcon::ConfigError& e) {
    std::cerr << "config error (" << e.field() << "): " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kRuntimeError;
}
