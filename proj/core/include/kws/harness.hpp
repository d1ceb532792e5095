// Experiment runner behind the CLI: initial training, SNR-sweep adaptation
// across environments, ablation sweeps, and metrics reporting.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "kws/cl.hpp"

namespace kws {

struct ExperimentConfig {
  enum class DatasetMode { Synthetic, Real };
  DatasetMode mode = DatasetMode::Synthetic;
  std::filesystem::path gscd_root;
  std::filesystem::path demand_root;
  int gscd_limit_per_class = 0; // 0 = all files

  std::vector<std::string> environments = {"WHITE"};
  std::vector<double> snrs_db = {-10.0, -5.0, 0.0, 5.0, 10.0};
  CLConfig cl;
  int intervals = 25;
  int yes_per_interval = 64;
  int no_per_interval = 64;
  uint64_t seed = 1;
  std::filesystem::path output_dir = "out";

  int synth_n_per_class = 80;
  double synth_noise_seconds = 60.0;
  double train_fraction = 0.75;
  int train_epochs = 2000;
};

// Flat key=value file; '#' starts a comment. Unknown keys are usage errors.
ExperimentConfig parse_config_file(const std::filesystem::path& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& key, const std::string& value);

struct MetricsRow {
  std::string environment;
  double snr_db = 0.0;
  int interval_index = 0;
  double accuracy = 0.0;
  int n_effective_accepted = 0;
  int n_rejected_conf = 0;
  int n_rejected_dist = 0;
  double mean_confidence = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "environment,snr_db,interval_index,accuracy,n_effective_accepted,"
    "n_rejected_conf,n_rejected_dist,mean_confidence";

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

struct DataSplit {
  std::vector<AudioClip> train, test;
};

DataSplit load_clips(const ExperimentConfig& cfg);

double accuracy_float(const DualKwsModel& model, std::span<const FeaturePair> denoised);
double accuracy_quant(const QuantizedModel& qm, std::span<const FeaturePair> denoised);

struct TrainOutputs {
  std::filesystem::path checkpoint, qcheckpoint, rehearsal;
  double clean_accuracy_float = 0.0;
  double clean_accuracy_quant = 0.0;
};

// Train the dual model, quantize, compute initial artifacts, persist
// checkpoint + rehearsal buffer, report held-out clean accuracy.
TrainOutputs run_train(const ExperimentConfig& cfg);

struct CellResult {
  std::string environment;
  double snr_db = 0.0;
  std::vector<IntervalMetrics> intervals;

  double final_accuracy() const;
  double mean_accuracy() const;
};

// One environment x SNR deployment: initial adaptation, then the stream with
// periodic updates. Snapshots saved under state_dir after every update when
// state_dir is nonempty; final_state receives the post-run state when set.
CellResult run_cell(const ExperimentConfig& cfg, const CLState& initial,
                    std::span<const AudioClip> test_pool, const std::string& environment,
                    double snr_db, const std::filesystem::path& state_dir = {},
                    CLState* final_state = nullptr);

// Assemble the starting state from run_train outputs (or a snapshot dir).
CLState load_initial_state(const ExperimentConfig& cfg,
                           const std::filesystem::path& resume_dir = {});

NoiseRecording make_environment_noise(const ExperimentConfig& cfg, const std::string& environment);

// Full adaptation evaluation over the configured grid; writes per-cell CSVs
// plus a combined metrics.csv under output_dir and prints a summary table.
void run_adapt(const ExperimentConfig& cfg, const std::filesystem::path& resume_dir = {});

enum class SweepKind { Alpha, ProbThreshold, DistThreshold, Components };

SweepKind sweep_from_name(const std::string& name);

// Parameter grids mirroring the evaluated ranges; writes sweep_<name>.csv.
void run_ablate(const ExperimentConfig& cfg, SweepKind kind);

// Aggregate metrics CSVs into an environment x SNR table (final-interval
// accuracy headline, interval mean in parentheses).
void run_report(const std::filesystem::path& metrics_dir, std::ostream& out);

} // namespace kws
