#pragma once

#include "ldiff/metrics.hpp"
#include "ldiff/score.hpp"
#include "ldiff/training.hpp"
#include "ldiff/zoo.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace ldiff {

/// Invalid configuration; `problems` lists every offending field.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// More chains failed projection than the sampling budget allows.
class ProjectionBudgetExceeded : public Error {
 public:
  using Error::Error;
};

/// Three modes on S^2 with kappa = 20.
std::vector<VmfMode> default_vmf_modes();

struct DatasetConfig {
  std::string kind = "vmf_mixture";  // vmf_mixture | son_mixture | uniform
  int n_train = 5000;
  int n_heldout = 20000;
  std::vector<VmfMode> vmf_modes = default_vmf_modes();
  std::vector<double> weights{0.4, 0.35, 0.25};
  int son_modes = 2;
  double son_concentration = 50.0;
};

struct EvalConfig {
  int theta_bins = 20;
  int phi_bins = 40;
  int power_bins = 64;
  std::vector<int> powers{1, 2, 4, 5};
  int coordinate_bins = 40;
};

/// One run. Table 4 hyperparameters keep their names as top-level keys:
/// gamma, sigma_min, sigma_max, N, T, l_f, N_epoch, B, N_hidden, N_layer,
/// alpha, epsilon. N_layer counts hidden layers.
struct PipelineConfig {
  std::string task = "sphere";
  int task_dim = 3;    // sphere/disk ambient dimension
  int task_n = 3;      // SO(n)
  double zmax = 0.5;   // sphere cap
  PriorKind prior = PriorKind::Uniform;
  int pool_size = 5000;

  std::uint64_t seed = 0;
  int threads = 1;
  bool slow = false;

  double gamma = 3.0, sigma_min = 0.1, sigma_max = 1.3, T = 2.0, alpha = 50.0, epsilon = 0.05;
  int N = 50, l_f = 1, N_epoch = 2000, B = 128, N_hidden = 128, N_layer = 3;

  SamplerConfig sampler;  // mode, curvature, projection and Newton options
  DatasetConfig dataset;
  ScoreNetConfig network;  // activation, conditioning, embed_width
  TrainConfig training;    // lr, optimiser, steps_per_traj, lr schedule
  int checkpoint_every = 0;

  int n_samples = 10000;
  double max_failure_fraction = 0.05;
  int simulate_chains = 16;
  EvalConfig eval;

  /// Fully resolved sub-configurations.
  NoiseSchedule schedule() const;
  SamplerConfig sampler_config() const;
  TrainConfig train_config() const;
  ScoreNetConfig net_config() const;
};

/// Parses and validates; throws ConfigError listing all problems.
PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::string& path);
nlohmann::json to_json(const PipelineConfig& cfg);

TaskSpec build_task(const PipelineConfig& cfg);

struct Datasets {
  std::vector<Vec> train, heldout;
  nlohmann::json meta;
};
Datasets make_datasets(const PipelineConfig& cfg, const TaskSpec& task);

struct EvalReport {
  double jsd = 0.0;
  double avg_abs_h = 0.0;
  double avg_g_plus = 0.0;
  int n_samples = 0;
  int projection_failures = 0;
  int nonfinite_failures = 0;
  int rejected = 0;
  nlohmann::json statistics;  // per-statistic JSDs
  std::vector<std::pair<std::string, std::pair<Histogram, Histogram>>> histograms;  // generated vs held-out
};

EvalReport evaluate_samples(const PipelineConfig& cfg, const TaskSpec& task, const std::vector<Vec>& samples,
                            const std::vector<Vec>& heldout);
nlohmann::json to_json(const EvalReport& r);

// ---------------------------------------------------------------------------
// Stages. Each reads/writes its artifacts under `out_dir`.
// ---------------------------------------------------------------------------

/// dataset.csv, dataset_meta.json, heldout.csv.
Datasets stage_dataset(const PipelineConfig& cfg, const std::string& out_dir);
/// trajectories.bin (all chains, concatenated dumps), trajectory_0.csv.
void stage_simulate_forward(const PipelineConfig& cfg, const std::string& out_dir);
/// checkpoint.ldnet, train_log.jsonl (and periodic checkpoints).
void stage_train(const PipelineConfig& cfg, const std::string& out_dir);
/// samples.csv, samples_meta.json. Throws ProjectionBudgetExceeded.
void stage_sample(const PipelineConfig& cfg, const std::string& out_dir);
/// eval_report.json, histograms.csv, from saved samples and held-out data.
EvalReport stage_evaluate(const PipelineConfig& cfg, const std::string& out_dir);

struct DecayCheck {
  bool pass = false;
  double max_rel_error = 0.0;
  double threshold = 0.05;
  double floor = 1e-6;
  int steps_compared = 0;
};
/// Forward landing run from a point off the manifold, compared with the
/// closed-form decay; writes decay_check.json.
DecayCheck stage_decay_check(const PipelineConfig& cfg, const std::string& out_dir);

/// run_metadata.json plus every stage in order.
EvalReport run_pipeline(const PipelineConfig& cfg, const std::string& out_dir);
/// Writes resolved_config.json only.
void dry_run(const PipelineConfig& cfg, const std::string& out_dir);

}  // namespace ldiff
