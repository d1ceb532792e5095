// kws: train | adapt | ablate | report
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "kws/harness.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<double> alpha;
  std::vector<double> snrs;
  std::vector<std::string> envs;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "config file (key = value lines)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--alpha", o.alpha, "spectral-denoise attenuation in [0,1]");
  cmd->add_option("--snr", o.snrs, "SNR in dB (repeatable)");
  cmd->add_option("--env", o.envs, "environment name (repeatable)");
  cmd->add_option("--out", o.out, "output directory");
}

kws::ExperimentConfig build_config(const CommonOpts& o) {
  kws::ExperimentConfig cfg =
      o.config.empty() ? kws::ExperimentConfig{} : kws::parse_config_file(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.alpha) {
    if (*o.alpha < 0.0 || *o.alpha > 1.0) kws::fail(kws::ErrorKind::Usage, "--alpha must be in [0,1]");
    cfg.cl.alpha = float(*o.alpha);
  }
  if (!o.snrs.empty()) cfg.snrs_db = o.snrs;
  if (!o.envs.empty()) cfg.environments = o.envs;
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual-learning keyword spotting toolkit"};
  app.require_subcommand(1);

  CommonOpts train_opts, adapt_opts, ablate_opts, report_opts;
  std::string resume_dir, sweep_name, report_dir;

  CLI::App* train = app.add_subcommand("train", "initial training + quantization");
  add_common(train, train_opts);

  CLI::App* adapt = app.add_subcommand("adapt", "noisy-stream adaptation evaluation");
  add_common(adapt, adapt_opts);
  adapt->add_option("--resume", resume_dir, "resume from a state snapshot directory")
      ->check(CLI::ExistingDirectory);

  CLI::App* ablate = app.add_subcommand("ablate", "parameter/component sweeps");
  add_common(ablate, ablate_opts);
  ablate->add_option("sweep", sweep_name, "alpha | prob_threshold | dist_threshold | components")
      ->required();

  CLI::App* report = app.add_subcommand("report", "aggregate metrics CSVs into a table");
  add_common(report, report_opts);
  report->add_option("dir", report_dir, "metrics directory (defaults to --out)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      kws::run_train(build_config(train_opts));
    } else if (adapt->parsed()) {
      kws::run_adapt(build_config(adapt_opts), resume_dir);
    } else if (ablate->parsed()) {
      kws::run_ablate(build_config(ablate_opts), kws::sweep_from_name(sweep_name));
    } else if (report->parsed()) {
      const kws::ExperimentConfig cfg = build_config(report_opts);
      kws::run_report(report_dir.empty() ? cfg.output_dir : std::filesystem::path(report_dir),
                      std::cout);
    }
  } catch (const kws::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == kws::ErrorKind::Usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
