#include "kws/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace kws {

namespace {

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= uint8_t(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(trim(part));
  return out;
}

int to_int(const std::string& v, const std::string& key) {
  try {
    return std::stoi(v);
  } catch (...) {
    fail(ErrorKind::Usage, "bad integer for " + key + ": " + v);
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    return std::stod(v);
  } catch (...) {
    fail(ErrorKind::Usage, "bad number for " + key + ": " + v);
  }
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  fail(ErrorKind::Usage, "bad flag for " + key + ": " + v);
}

std::string format_num(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string snr_tag(double snr) {
  std::string s = format_num(snr, "%g");
  return s + "dB";
}

} // namespace

void apply_config_line(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "dataset.mode") {
    if (value == "synthetic") cfg.mode = ExperimentConfig::DatasetMode::Synthetic;
    else if (value == "real") cfg.mode = ExperimentConfig::DatasetMode::Real;
    else fail(ErrorKind::Usage, "dataset.mode must be synthetic or real");
  } else if (key == "dataset.gscd") cfg.gscd_root = value;
  else if (key == "dataset.demand") cfg.demand_root = value;
  else if (key == "gscd.limit_per_class") cfg.gscd_limit_per_class = to_int(value, key);
  else if (key == "envs") cfg.environments = split(value, ',');
  else if (key == "snrs") {
    cfg.snrs_db.clear();
    for (const std::string& s : split(value, ',')) cfg.snrs_db.push_back(to_double(s, key));
  } else if (key == "seed") cfg.seed = uint64_t(std::stoull(value));
  else if (key == "out") cfg.output_dir = value;
  else if (key == "denoise.alpha") {
    cfg.cl.alpha = float(to_double(value, key));
    if (cfg.cl.alpha < 0.0f || cfg.cl.alpha > 1.0f)
      fail(ErrorKind::Usage, "denoise.alpha must be in [0,1]");
  } else if (key == "cl.confidence_threshold")
    cfg.cl.confidence_threshold_q = confidence_threshold_from_prob(to_double(value, key));
  else if (key == "cl.confidence_threshold_q") cfg.cl.confidence_threshold_q = to_int(value, key);
  else if (key == "cl.n_sigma") cfg.cl.n_sigma = to_double(value, key);
  else if (key == "cl.interval") cfg.cl.interval = to_int(value, key);
  else if (key == "cl.rehearsal_per_class") cfg.cl.rehearsal_per_class = to_int(value, key);
  else if (key == "cl.epochs_per_update") cfg.cl.epochs_per_update = to_int(value, key);
  else if (key == "cl.effective_capacity") cfg.cl.effective_capacity = to_int(value, key);
  else if (key == "cl.learning_rate") cfg.cl.learning_rate = float(to_double(value, key));
  else if (key == "cl.batch_size") cfg.cl.batch_size = to_int(value, key);
  else if (key == "cl.retrain") cfg.cl.retrain = to_bool(value, key);
  else if (key == "cl.use_wavelet") cfg.cl.use_wavelet = to_bool(value, key);
  else if (key == "stream.intervals") cfg.intervals = to_int(value, key);
  else if (key == "stream.yes_per_interval") cfg.yes_per_interval = to_int(value, key);
  else if (key == "stream.no_per_interval") cfg.no_per_interval = to_int(value, key);
  else if (key == "synth.n_per_class") cfg.synth_n_per_class = to_int(value, key);
  else if (key == "synth.noise_seconds") cfg.synth_noise_seconds = to_double(value, key);
  else if (key == "train.epochs") cfg.train_epochs = to_int(value, key);
  else if (key == "train.fraction") cfg.train_fraction = to_double(value, key);
  else fail(ErrorKind::Usage, "unknown config key: " + key);
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Usage, "cannot open config " + path.string());
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Usage, path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::State, "cannot write " + path.string());
  out << kMetricsHeader << "\n";
  for (const MetricsRow& r : rows) {
    out << r.environment << ',' << format_num(r.snr_db, "%g") << ',' << r.interval_index << ','
        << format_num(r.accuracy, "%.6f") << ',' << r.n_effective_accepted << ','
        << r.n_rejected_conf << ',' << r.n_rejected_dist << ','
        << format_num(r.mean_confidence, "%.6f") << "\n";
  }
  if (!out) fail(ErrorKind::State, "write failed: " + path.string());
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Usage, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != kMetricsHeader)
    fail(ErrorKind::Format, "unexpected header in " + path.string());
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) fail(ErrorKind::Format, "bad row in " + path.string());
    MetricsRow r;
    r.environment = f[0];
    r.snr_db = to_double(f[1], "snr_db");
    r.interval_index = to_int(f[2], "interval_index");
    r.accuracy = to_double(f[3], "accuracy");
    r.n_effective_accepted = to_int(f[4], "n_effective_accepted");
    r.n_rejected_conf = to_int(f[5], "n_rejected_conf");
    r.n_rejected_dist = to_int(f[6], "n_rejected_dist");
    r.mean_confidence = to_double(f[7], "mean_confidence");
    rows.push_back(std::move(r));
  }
  return rows;
}

DataSplit load_clips(const ExperimentConfig& cfg) {
  DataSplit out;
  if (cfg.mode == ExperimentConfig::DatasetMode::Synthetic) {
    const auto corpus = synth_test_corpus(cfg.synth_n_per_class, cfg.seed);
    const int k = int(cfg.train_fraction * cfg.synth_n_per_class + 0.5);
    int idx_yes = 0, idx_no = 0;
    for (const AudioClip& c : corpus) {
      int& idx = *c.label == Label::Yes ? idx_yes : idx_no;
      (idx < k ? out.train : out.test).push_back(c);
      ++idx;
    }
    return out;
  }

  if (cfg.gscd_root.empty()) fail(ErrorKind::Dataset, "real mode requires dataset.gscd");
  // honor the dataset's official split when present
  std::set<std::string> test_list;
  const auto list_path = cfg.gscd_root / "testing_list.txt";
  if (std::filesystem::exists(list_path)) {
    std::ifstream in(list_path);
    std::string line;
    while (std::getline(in, line)) {
      line = trim(line);
      if (!line.empty()) test_list.insert(line);
    }
  }
  for (Label label : {Label::Yes, Label::No}) {
    const std::string prefix = label == Label::Yes ? "yes/" : "no/";
    auto files = list_gscd_files(cfg.gscd_root, label);
    if (cfg.gscd_limit_per_class > 0 && int(files.size()) > cfg.gscd_limit_per_class)
      files.resize(size_t(cfg.gscd_limit_per_class));
    for (const auto& f : files) {
      const std::string rel = prefix + f.filename().string();
      bool is_test;
      if (!test_list.empty()) {
        is_test = test_list.count(rel) > 0;
      } else {
        is_test = fnv1a(rel) % 100 >= uint64_t(cfg.train_fraction * 100);
      }
      AudioClip clip = fit_to_window(load_wav(f));
      clip.label = label;
      (is_test ? out.test : out.train).push_back(std::move(clip));
    }
  }
  if (out.train.empty() || out.test.empty())
    fail(ErrorKind::Dataset, "empty train or test split");
  return out;
}

double accuracy_float(const DualKwsModel& model, std::span<const FeaturePair> denoised) {
  int n = 0, correct = 0;
  for (const FeaturePair& p : denoised) {
    if (!p.label || *p.label == Label::NoiseOnly) continue;
    ++n;
    if (label_of(forward(model, p).prob) == *p.label) ++correct;
  }
  return n > 0 ? double(correct) / n : 0.0;
}

double accuracy_quant(const QuantizedModel& qm, std::span<const FeaturePair> denoised) {
  int n = 0, correct = 0;
  for (const FeaturePair& p : denoised) {
    if (!p.label || *p.label == Label::NoiseOnly) continue;
    ++n;
    if (quantized_inference(qm, p).predicted == *p.label) ++correct;
  }
  return n > 0 ? double(correct) / n : 0.0;
}

TrainOutputs run_train(const ExperimentConfig& cfg) {
  const DataSplit data = load_clips(cfg);
  const DenoiseConfig denoise{cfg.cl.alpha};

  std::vector<FeaturePair> train_raw, test_dn;
  train_raw.reserve(data.train.size());
  for (const AudioClip& c : data.train) train_raw.push_back(clean_features(c, cfg.cl.use_wavelet));
  std::vector<FeaturePair> train_dn;
  train_dn.reserve(train_raw.size());
  for (const FeaturePair& p : train_raw) train_dn.push_back(denoise_pair(p, denoise));
  for (const AudioClip& c : data.test)
    test_dn.push_back(denoise_pair(clean_features(c, cfg.cl.use_wavelet), denoise));

  DualKwsModel model = make_dual_model(cfg.seed);
  TrainConfig tc;
  tc.learning_rate = cfg.cl.learning_rate;
  tc.epochs = cfg.train_epochs;
  tc.batch_size = cfg.cl.batch_size;
  tc.seed = cfg.seed;
  const TrainReport report = train(model, train_dn, tc);

  const CalibrationResult calib = calibrate(model, train_dn);
  const QuantizedModel qm = quantize_model(model, calib);

  const RehearsalBuffer rehearsal = make_rehearsal_buffer(train_raw, cfg.cl.rehearsal_per_class);
  std::vector<LabeledLatent> latents;
  for (const FeaturePair& entry : rehearsal.entries) {
    const FeaturePair dn = denoise_pair(entry, denoise);
    const QuantInference qi = quantized_inference(qm, dn);
    latents.push_back({dequantize_latent(qm, qi.latent_q), *entry.label});
  }
  const ArtifactSet artifacts = compute_artifacts(latents, cfg.cl.n_sigma);

  std::filesystem::create_directories(cfg.output_dir);
  TrainOutputs out;
  out.checkpoint = cfg.output_dir / "model.ckpt";
  out.qcheckpoint = cfg.output_dir / "model.qckpt";
  out.rehearsal = cfg.output_dir / "rehearsal.bin";
  save_checkpoint(out.checkpoint, model);
  save_quantized_checkpoint(out.qcheckpoint, qm, &artifacts);
  save_feature_pairs(out.rehearsal, rehearsal.entries);

  out.clean_accuracy_float = accuracy_float(model, test_dn);
  out.clean_accuracy_quant = accuracy_quant(qm, test_dn);

  std::cout << "trained dual model: " << param_count(model) << " parameters, "
            << cfg.train_epochs << " epochs, final loss "
            << format_num(report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back(), "%.4f")
            << "\n";
  std::cout << "clean test accuracy (float): " << format_num(out.clean_accuracy_float, "%.4f")
            << "\n";
  std::cout << "clean test accuracy (int8):  " << format_num(out.clean_accuracy_quant, "%.4f")
            << "\n";
  std::cout << "wrote " << out.checkpoint.string() << ", " << out.qcheckpoint.string() << ", "
            << out.rehearsal.string() << "\n";
  return out;
}

double CellResult::final_accuracy() const {
  return intervals.empty() ? 0.0 : intervals.back().accuracy;
}

double CellResult::mean_accuracy() const {
  if (intervals.empty()) return 0.0;
  double acc = 0.0;
  for (const IntervalMetrics& m : intervals) acc += m.accuracy;
  return acc / double(intervals.size());
}

NoiseRecording make_environment_noise(const ExperimentConfig& cfg,
                                      const std::string& environment) {
  if (cfg.mode == ExperimentConfig::DatasetMode::Synthetic) {
    return synth_noise_recording(synth_noise_kind_from_name(environment),
                                 cfg.synth_noise_seconds,
                                 SeededRng(cfg.seed).fork(fnv1a(environment)).seed());
  }
  if (cfg.demand_root.empty()) fail(ErrorKind::Dataset, "real mode requires dataset.demand");
  return load_demand(cfg.demand_root, environment);
}

CLState load_initial_state(const ExperimentConfig& cfg,
                           const std::filesystem::path& resume_dir) {
  if (!resume_dir.empty()) return load_state(resume_dir);
  CLState state;
  state.model = load_dual_checkpoint(cfg.output_dir / "model.ckpt");
  QuantizedCheckpoint q = load_quantized_checkpoint(cfg.output_dir / "model.qckpt");
  if (!q.artifacts) fail(ErrorKind::State, "checkpoint missing class artifacts");
  state.qm = std::move(q.model);
  state.artifacts = std::move(*q.artifacts);
  state.rehearsal.entries = load_feature_pairs(cfg.output_dir / "rehearsal.bin");
  state.rehearsal.capacity_per_class = cfg.cl.rehearsal_per_class;
  state.seed = cfg.seed;
  return state;
}

CellResult run_cell(const ExperimentConfig& cfg, const CLState& initial,
                    std::span<const AudioClip> test_pool, const std::string& environment,
                    double snr_db, const std::filesystem::path& state_dir,
                    CLState* final_state) {
  CLState state = initial;
  const uint64_t cell_key = fnv1a(environment + "/" + snr_tag(snr_db));
  state.seed = SeededRng(cfg.seed).fork(cell_key).seed();

  const NoiseRecording noise = make_environment_noise(cfg, environment);
  const uint32_t max_offset = uint32_t(noise.samples.size() - size_t(kClipSamples));
  // the environment is captured at its deployed level for augmentation
  const double env_gain = environment_noise_gain(test_pool, noise, snr_db);
  const SeededRng base(state.seed);
  const NoiseProvider provider = [&noise, base, max_offset, env_gain](uint64_t k) {
    SeededRng r = base.fork(0xA000 + k);
    return noise_segment_at_gain(noise, r.below(max_offset + 1), env_gain);
  };

  if (cfg.cl.retrain) {
    // initial adaptation: rehearsal + augmented rehearsal only
    continual_update(state, {}, provider(state.update_count), cfg.cl);
    if (!state_dir.empty()) save_state(state_dir, state);
  }

  StreamSpec spec;
  spec.interval = cfg.cl.interval;
  spec.yes_per_interval = cfg.yes_per_interval;
  spec.no_per_interval = cfg.no_per_interval;
  spec.intervals = cfg.intervals;
  spec.snr_db = snr_db;
  spec.seed = base.fork(0xC0DE).seed();

  // lazy stream: one interval block in memory at a time
  struct BlockCache {
    std::vector<AudioClip> block;
    int index = -1;
  };
  auto cache = std::make_shared<BlockCache>();
  const ClipSource source = [cache, &noise, test_pool, spec](size_t idx) {
    const int block_idx = int(idx / size_t(spec.interval));
    if (cache->index != block_idx) {
      cache->block = build_stream_interval(test_pool, noise, spec, block_idx);
      cache->index = block_idx;
    }
    return cache->block[idx % size_t(spec.interval)];
  };

  std::function<void(const CLState&)> on_update;
  if (!state_dir.empty()) {
    on_update = [state_dir](const CLState& s) { save_state(state_dir, s); };
  }

  CellResult cell;
  cell.environment = environment;
  cell.snr_db = snr_db;
  cell.intervals = run_deployment(state, size_t(spec.interval) * size_t(spec.intervals), source,
                                  cfg.cl, provider, on_update);
  if (final_state) *final_state = std::move(state);
  return cell;
}

namespace {

std::vector<MetricsRow> to_rows(const CellResult& cell) {
  std::vector<MetricsRow> rows;
  for (const IntervalMetrics& m : cell.intervals) {
    MetricsRow r;
    r.environment = cell.environment;
    r.snr_db = cell.snr_db;
    r.interval_index = m.interval_index;
    r.accuracy = m.accuracy;
    r.n_effective_accepted = m.n_accepted;
    r.n_rejected_conf = m.n_rejected_conf;
    r.n_rejected_dist = m.n_rejected_dist;
    r.mean_confidence = m.mean_confidence;
    rows.push_back(std::move(r));
  }
  return rows;
}

void render_table(std::span<const MetricsRow> rows, std::ostream& out) {
  std::vector<double> snrs;
  std::vector<std::string> envs;
  // final = highest interval index per cell; mean over all intervals
  std::map<std::pair<std::string, double>, std::pair<MetricsRow, std::pair<double, int>>> cells;
  for (const MetricsRow& r : rows) {
    if (std::find(snrs.begin(), snrs.end(), r.snr_db) == snrs.end()) snrs.push_back(r.snr_db);
    if (std::find(envs.begin(), envs.end(), r.environment) == envs.end())
      envs.push_back(r.environment);
    auto key = std::make_pair(r.environment, r.snr_db);
    auto it = cells.find(key);
    if (it == cells.end()) {
      cells.emplace(key, std::make_pair(r, std::make_pair(r.accuracy, 1)));
    } else {
      if (r.interval_index > it->second.first.interval_index) it->second.first = r;
      it->second.second.first += r.accuracy;
      ++it->second.second.second;
    }
  }
  std::sort(snrs.begin(), snrs.end());

  constexpr int w = 16;
  out << "final-interval accuracy (interval mean)\n";
  out << std::string(12, ' ');
  for (double s : snrs) {
    std::string head = snr_tag(s);
    out << head << std::string(size_t(std::max(1, w - int(head.size()))), ' ');
  }
  out << "\n";
  for (const std::string& env : envs) {
    std::string row = env;
    row.resize(12, ' ');
    out << row;
    for (double s : snrs) {
      auto it = cells.find(std::make_pair(env, s));
      std::string cell = "-";
      if (it != cells.end()) {
        const double mean = it->second.second.first / it->second.second.second;
        cell = format_num(it->second.first.accuracy, "%.4f") + " (" +
               format_num(mean, "%.4f") + ")";
      }
      out << cell << std::string(size_t(std::max(1, w - int(cell.size()))), ' ');
    }
    out << "\n";
  }
}

} // namespace

void run_adapt(const ExperimentConfig& cfg, const std::filesystem::path& resume_dir) {
  const CLState initial = load_initial_state(cfg, resume_dir);
  const DataSplit data = load_clips(cfg);
  std::filesystem::create_directories(cfg.output_dir);

  std::vector<MetricsRow> all_rows;
  for (const std::string& env : cfg.environments) {
    for (double snr : cfg.snrs_db) {
      const auto state_dir = cfg.output_dir / ("state_" + env + "_" + snr_tag(snr));
      const CellResult cell = run_cell(cfg, initial, data.test, env, snr, state_dir);
      const auto rows = to_rows(cell);
      write_metrics_csv(cfg.output_dir / ("metrics_" + env + "_" + snr_tag(snr) + ".csv"), rows);
      all_rows.insert(all_rows.end(), rows.begin(), rows.end());
      std::cout << env << " @ " << snr_tag(snr) << ": final "
                << format_num(cell.final_accuracy(), "%.4f") << ", mean "
                << format_num(cell.mean_accuracy(), "%.4f") << "\n";
    }
  }
  write_metrics_csv(cfg.output_dir / "metrics.csv", all_rows);
  render_table(all_rows, std::cout);
}

SweepKind sweep_from_name(const std::string& name) {
  if (name == "alpha") return SweepKind::Alpha;
  if (name == "prob_threshold") return SweepKind::ProbThreshold;
  if (name == "dist_threshold") return SweepKind::DistThreshold;
  if (name == "components") return SweepKind::Components;
  fail(ErrorKind::Usage, "unknown sweep: " + name +
                             " (expected alpha|prob_threshold|dist_threshold|components)");
}

void run_ablate(const ExperimentConfig& cfg, SweepKind kind) {
  const CLState initial = load_initial_state(cfg);
  const DataSplit data = load_clips(cfg);
  std::filesystem::create_directories(cfg.output_dir);

  struct Point {
    std::string name;
    ExperimentConfig cfg;
  };
  std::vector<Point> points;
  const char* sweep_name = "";
  switch (kind) {
    case SweepKind::Alpha: {
      sweep_name = "alpha";
      for (int i = 0; i <= 5; ++i) {
        ExperimentConfig c = cfg;
        c.cl.alpha = float(0.4 + 0.1 * i);
        points.push_back({format_num(0.4 + 0.1 * i, "%.1f"), c});
      }
      break;
    }
    case SweepKind::ProbThreshold: {
      sweep_name = "prob_threshold";
      for (int i = 0; i <= 3; ++i) {
        const double t = 0.70 + 0.05 * i;
        ExperimentConfig c = cfg;
        c.cl.confidence_threshold_q = confidence_threshold_from_prob(t);
        points.push_back({format_num(t, "%.2f"), c});
      }
      break;
    }
    case SweepKind::DistThreshold: {
      sweep_name = "dist_threshold";
      for (int i = 0; i <= 7; ++i) {
        const double n = 1.7 + 0.1 * i;
        ExperimentConfig c = cfg;
        c.cl.n_sigma = n;
        points.push_back({format_num(n, "%.1f"), c});
      }
      break;
    }
    case SweepKind::Components: {
      sweep_name = "components";
      const struct {
        const char* name;
        bool wavelet, retrain;
      } combos[4] = {{"spectral_only", false, false},
                     {"wavelet_spectral", true, false},
                     {"retrain_spectral", false, true},
                     {"retrain_wavelet_spectral", true, true}};
      for (const auto& combo : combos) {
        ExperimentConfig c = cfg;
        c.cl.use_wavelet = combo.wavelet;
        c.cl.retrain = combo.retrain;
        points.push_back({combo.name, c});
      }
      break;
    }
  }

  const auto csv_path = cfg.output_dir / ("sweep_" + std::string(sweep_name) + ".csv");
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) fail(ErrorKind::State, "cannot write " + csv_path.string());
  out << "sweep,param,environment,snr_db,final_accuracy,mean_accuracy\n";
  for (const Point& pt : points) {
    for (const std::string& env : pt.cfg.environments) {
      for (double snr : pt.cfg.snrs_db) {
        const CellResult cell = run_cell(pt.cfg, initial, data.test, env, snr);
        out << sweep_name << ',' << pt.name << ',' << env << ',' << format_num(snr, "%g") << ','
            << format_num(cell.final_accuracy(), "%.6f") << ','
            << format_num(cell.mean_accuracy(), "%.6f") << "\n";
        std::cout << sweep_name << "=" << pt.name << " " << env << " @ " << snr_tag(snr)
                  << ": final " << format_num(cell.final_accuracy(), "%.4f") << "\n";
      }
    }
  }
  if (!out) fail(ErrorKind::State, "write failed: " + csv_path.string());
  std::cout << "wrote " << csv_path.string() << "\n";
}

void run_report(const std::filesystem::path& metrics_dir, std::ostream& out) {
  if (!std::filesystem::is_directory(metrics_dir))
    fail(ErrorKind::Usage, "not a directory: " + metrics_dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(metrics_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<MetricsRow> rows;
  for (const auto& f : files) {
    std::ifstream probe(f);
    std::string header;
    if (!std::getline(probe, header) || trim(header) != kMetricsHeader) continue;
    probe.close();
    const auto file_rows = read_metrics_csv(f);
    rows.insert(rows.end(), file_rows.begin(), file_rows.end());
  }
  if (rows.empty()) fail(ErrorKind::Usage, "no metrics CSVs under " + metrics_dir.string());
  render_table(rows, out);
}

} // namespace kws
