#include "ldiff/pipeline.hpp"

#include "ldiff/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace ldiff {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string join_problems(const std::vector<std::string>& p) {
  std::string s = "invalid configuration:";
  for (const auto& e : p) s += "\n  - " + e;
  return s;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : Error(join_problems(problems)), problems_(std::move(problems)) {}

// Stream tags for derive_seed.
enum : std::uint64_t {
  kSeedDataset = 1,
  kSeedHeldout = 2,
  kSeedNetInit = 3,
  kSeedTrain = 4,
  kSeedPool = 5,
  kSeedSample = 6,
  kSeedSimulate = 7,
  kSeedDecay = 8,
};

std::vector<VmfMode> default_vmf_modes() {
  return {{Vec::Unit(3, 2), 20.0}, {Vec::Unit(3, 0), 20.0}, {(Vec(3) << 0.0, -0.6, -0.8).finished(), 20.0}};
}

NoiseSchedule PipelineConfig::schedule() const { return NoiseSchedule(sigma_min, sigma_max, T, N); }

SamplerConfig PipelineConfig::sampler_config() const {
  SamplerConfig s = sampler;
  s.alpha = alpha;
  s.gamma = gamma;
  s.seed = seed;
  return s;
}

TrainConfig PipelineConfig::train_config() const {
  TrainConfig t = training;
  t.epochs = N_epoch;
  t.batch = B;
  t.l_f = l_f;
  t.seed = derive_seed(seed, kSeedTrain);
  t.threads = threads;
  return t;
}

ScoreNetConfig PipelineConfig::net_config() const {
  ScoreNetConfig n = network;
  if (task == "so") n.dim = task_n * task_n;
  else if (task == "sphere_cap") n.dim = 3;
  else n.dim = task_dim;
  n.underdamped = is_underdamped(sampler.mode);
  n.hidden.assign(N_layer, N_hidden);
  n.N = N;
  n.sigma_min = sigma_min;
  n.sigma_max = sigma_max;
  return n;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace {

class Reader {
 public:
  Reader(const json& j, std::string prefix, std::vector<std::string>& problems)
      : j_(j), prefix_(std::move(prefix)), problems_(problems) {
    if (!j_.is_object()) problems_.push_back((prefix_.empty() ? "config" : prefix_) + ": expected an object");
  }

  template <class T>
  bool get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return false;
    try {
      out = j_.at(key).get<T>();
      return true;
    } catch (const std::exception&) {
      problem(key, "has the wrong type");
      return false;
    }
  }

  const json* section(const char* key) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

  void problem(const std::string& key, const std::string& what) { problems_.push_back(name(key) + " " + what); }
  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) problems_.push_back(name(k) + " is not a recognised key");
  }

 private:
  const json& j_;
  std::string prefix_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

template <class F>
void enum_field(Reader& r, const char* key, F&& parse) {
  std::string s;
  if (!r.get(key, s)) return;
  try {
    parse(s);
  } catch (const std::exception&) {
    r.problem(key, "has unknown value '" + s + "'");
  }
}

}  // namespace

PipelineConfig parse_config(const json& j) {
  PipelineConfig c;
  std::vector<std::string> problems;
  Reader top(j, "", problems);

  top.get("task", c.task);
  top.get("seed", c.seed);
  top.get("threads", c.threads);
  top.get("slow", c.slow);
  enum_field(top, "mode", [&](const std::string& s) { c.sampler.mode = mode_from_string(s); });
  top.get("gamma", c.gamma);
  top.get("sigma_min", c.sigma_min);
  top.get("sigma_max", c.sigma_max);
  top.get("N", c.N);
  top.get("T", c.T);
  top.get("l_f", c.l_f);
  top.get("N_epoch", c.N_epoch);
  top.get("B", c.B);
  top.get("N_hidden", c.N_hidden);
  top.get("N_layer", c.N_layer);
  top.get("alpha", c.alpha);
  top.get("epsilon", c.epsilon);
  top.get("n_samples", c.n_samples);
  top.get("max_failure_fraction", c.max_failure_fraction);
  top.get("simulate_chains", c.simulate_chains);
  top.get("checkpoint_every", c.checkpoint_every);

  if (const json* s = top.section("task_options")) {
    Reader r(*s, "task_options", problems);
    r.get("dim", c.task_dim);
    r.get("n", c.task_n);
    r.get("zmax", c.zmax);
    r.get("pool_size", c.pool_size);
    enum_field(r, "prior", [&](const std::string& v) {
      if (v == "uniform") c.prior = PriorKind::Uniform;
      else if (v == "empirical_terminal") c.prior = PriorKind::EmpiricalTerminal;
      else throw std::invalid_argument(v);
    });
    r.finish();
  }
  if (const json* s = top.section("sampler")) {
    Reader r(*s, "sampler", problems);
    r.get("use_curvature", c.sampler.use_curvature);
    r.get("terminal_projection", c.sampler.terminal_projection);
    r.get("newton_max_iter", c.sampler.newton.max_iter);
    r.get("newton_tol", c.sampler.newton.tol);
    r.get("projection_retries", c.sampler.projection_retries);
    r.get("noise_scale", c.sampler.noise_scale);
    enum_field(r, "olla_forward_landing", [&](const std::string& v) {
      if (v == "lemma") c.sampler.olla_forward_landing = OllaForwardLanding::kLemma;
      else if (v == "euler_display") c.sampler.olla_forward_landing = OllaForwardLanding::kEulerDisplay;
      else throw std::invalid_argument(v);
    });
    r.finish();
  }
  if (const json* s = top.section("dataset")) {
    Reader r(*s, "dataset", problems);
    r.get("kind", c.dataset.kind);
    r.get("n_train", c.dataset.n_train);
    r.get("n_heldout", c.dataset.n_heldout);
    r.get("weights", c.dataset.weights);
    r.get("son_modes", c.dataset.son_modes);
    r.get("son_concentration", c.dataset.son_concentration);
    if (const json* m = r.section("modes")) {
      if (!m->is_array()) {
        r.problem("modes", "must be an array");
      } else {
        c.dataset.vmf_modes.clear();
        for (std::size_t i = 0; i < m->size(); ++i) {
          Reader mr((*m)[i], "dataset.modes[" + std::to_string(i) + "]", problems);
          std::vector<double> mean;
          double kappa = 0.0;
          mr.get("mean", mean);
          mr.get("kappa", kappa);
          mr.finish();
          Vec v = Eigen::Map<const Vec>(mean.data(), static_cast<Eigen::Index>(mean.size()));
          if (v.size() > 0 && v.norm() > 0.0) v /= v.norm();
          c.dataset.vmf_modes.push_back({v, kappa});
        }
      }
    }
    r.finish();
  }
  if (const json* s = top.section("network")) {
    Reader r(*s, "network", problems);
    enum_field(r, "activation", [&](const std::string& v) { c.network.activation = activation_from_string(v); });
    enum_field(r, "conditioning", [&](const std::string& v) { c.network.conditioning = conditioning_from_string(v); });
    r.get("embed_width", c.network.embed_width);
    r.finish();
  }
  if (const json* s = top.section("training")) {
    Reader r(*s, "training", problems);
    r.get("lr", c.training.lr);
    r.get("lr_min", c.training.lr_min);
    enum_field(r, "lr_schedule", [&](const std::string& v) {
      if (v == "constant") c.training.lr_schedule = LrSchedule::Constant;
      else if (v == "cosine") c.training.lr_schedule = LrSchedule::Cosine;
      else throw std::invalid_argument(v);
    });
    enum_field(r, "optimizer", [&](const std::string& v) {
      if (v == "adam") c.training.optimizer = OptimizerKind::Adam;
      else if (v == "sgd") c.training.optimizer = OptimizerKind::SGD;
      else throw std::invalid_argument(v);
    });
    r.get("beta1", c.training.beta1);
    r.get("beta2", c.training.beta2);
    r.get("delta", c.training.delta);
    r.get("steps_per_traj", c.training.steps_per_traj);
    r.get("ema_decay", c.training.ema_decay);
    r.finish();
  }
  if (const json* s = top.section("evaluation")) {
    Reader r(*s, "evaluation", problems);
    r.get("theta_bins", c.eval.theta_bins);
    r.get("phi_bins", c.eval.phi_bins);
    r.get("power_bins", c.eval.power_bins);
    r.get("powers", c.eval.powers);
    r.get("coordinate_bins", c.eval.coordinate_bins);
    r.finish();
  }
  top.finish();

  // Semantic checks.
  auto bad = [&](const std::string& field, const std::string& what) { problems.push_back(field + " " + what); };
  static const std::set<std::string> tasks{"sphere", "so", "disk", "sphere_cap"};
  if (!tasks.count(c.task)) bad("task", "must be one of sphere, so, disk, sphere_cap");
  if (c.task_dim < 2) bad("task_options.dim", "must be >= 2");
  if (c.task_n < 2) bad("task_options.n", "must be >= 2");
  if (c.task == "so" && c.task_n > 5 && !c.slow) bad("task_options.n", "above 5 requires the slow flag");
  if (!(c.zmax > -1.0 && c.zmax < 1.0)) bad("task_options.zmax", "must lie in (-1, 1)");
  if (c.pool_size < 1) bad("task_options.pool_size", "must be >= 1");
  if (c.threads < 1) bad("threads", "must be >= 1");
  if (!(c.gamma > 0.0)) bad("gamma", "must be > 0");
  if (!(c.sigma_min >= 0.0)) bad("sigma_min", "must be >= 0");
  if (!(c.sigma_max > 0.0)) bad("sigma_max", "must be > 0");
  if (c.sigma_min > c.sigma_max) bad("sigma_min", "must not exceed sigma_max");
  if (c.N < 1) bad("N", "must be >= 1");
  if (!(c.T > 0.0)) bad("T", "must be > 0");
  if (c.l_f < 1) bad("l_f", "must be >= 1");
  if (c.N_epoch < 0) bad("N_epoch", "must be >= 0");
  if (c.B < 1) bad("B", "must be >= 1");
  if (c.N_hidden < 1) bad("N_hidden", "must be >= 1");
  if (c.N_layer < 1) bad("N_layer", "must be >= 1");
  if (!(c.alpha >= 0.0)) bad("alpha", "must be >= 0");
  if (!is_projected(c.sampler.mode) && !(c.alpha > 0.0)) bad("alpha", "must be > 0 for landing modes");
  if (!(c.epsilon > 0.0) && (c.task == "disk" || c.task == "sphere_cap")) bad("epsilon", "must be > 0 for tasks with inequalities");
  if (!(c.epsilon >= 0.0)) bad("epsilon", "must be >= 0");
  if (c.n_samples < 0) bad("n_samples", "must be >= 0");
  if (!(c.max_failure_fraction >= 0.0 && c.max_failure_fraction <= 1.0)) bad("max_failure_fraction", "must lie in [0, 1]");
  if (c.simulate_chains < 1) bad("simulate_chains", "must be >= 1");
  if (c.checkpoint_every < 0) bad("checkpoint_every", "must be >= 0");
  if (c.sampler.newton.max_iter < 1) bad("sampler.newton_max_iter", "must be >= 1");
  if (!(c.sampler.newton.tol > 0.0)) bad("sampler.newton_tol", "must be > 0");
  if (c.sampler.projection_retries < 0) bad("sampler.projection_retries", "must be >= 0");
  if (!(c.sampler.noise_scale >= 0.0)) bad("sampler.noise_scale", "must be >= 0");
  static const std::set<std::string> kinds{"vmf_mixture", "son_mixture", "uniform"};
  if (!kinds.count(c.dataset.kind)) bad("dataset.kind", "must be one of vmf_mixture, son_mixture, uniform");
  if (c.dataset.kind == "vmf_mixture") {
    if (c.task != "sphere" && c.task != "sphere_cap") bad("dataset.kind", "vmf_mixture needs a sphere task");
    if (c.dataset.vmf_modes.empty()) bad("dataset.modes", "must list at least one mode");
    if (c.dataset.weights.size() != c.dataset.vmf_modes.size()) bad("dataset.weights", "needs one weight per mode");
    double total = 0.0;
    for (double w : c.dataset.weights) {
      if (!(w >= 0.0)) bad("dataset.weights", "must be nonnegative");
      total += w;
    }
    if (!c.dataset.weights.empty() && std::abs(total - 1.0) > 1e-9) bad("dataset.weights", "must sum to 1");
    const int d = c.task == "sphere" ? c.task_dim : 3;
    for (std::size_t i = 0; i < c.dataset.vmf_modes.size(); ++i) {
      const auto& m = c.dataset.vmf_modes[i];
      if (m.mean.size() != d || !(m.mean.norm() > 0.0)) bad("dataset.modes[" + std::to_string(i) + "].mean", "must be a nonzero vector of the task dimension");
      if (!(m.kappa >= 0.0)) bad("dataset.modes[" + std::to_string(i) + "].kappa", "must be >= 0");
    }
  }
  if (c.dataset.kind == "son_mixture") {
    if (c.task != "so") bad("dataset.kind", "son_mixture needs the so task");
    if (c.dataset.son_modes < 1) bad("dataset.son_modes", "must be >= 1");
    if (!(c.dataset.son_concentration > 0.0)) bad("dataset.son_concentration", "must be > 0");
  }
  if (c.dataset.n_train < 1) bad("dataset.n_train", "must be >= 1");
  if (c.dataset.n_heldout < 1) bad("dataset.n_heldout", "must be >= 1");
  if (c.network.embed_width < 2 || c.network.embed_width % 2) bad("network.embed_width", "must be even and >= 2");
  if (!(c.training.lr > 0.0)) bad("training.lr", "must be > 0");
  if (!(c.training.lr_min >= 0.0 && c.training.lr_min <= c.training.lr)) bad("training.lr_min", "must lie in [0, lr]");
  if (!(c.training.beta1 >= 0.0 && c.training.beta1 < 1.0)) bad("training.beta1", "must lie in [0, 1)");
  if (!(c.training.beta2 >= 0.0 && c.training.beta2 < 1.0)) bad("training.beta2", "must lie in [0, 1)");
  if (!(c.training.delta > 0.0)) bad("training.delta", "must be > 0");
  if (c.training.steps_per_traj < 0) bad("training.steps_per_traj", "must be >= 0");
  if (!(c.training.ema_decay >= 0.0 && c.training.ema_decay < 1.0)) bad("training.ema_decay", "must lie in [0, 1)");
  if (c.eval.theta_bins < 2 || c.eval.phi_bins < 2 || c.eval.power_bins < 2 || c.eval.coordinate_bins < 2)
    bad("evaluation", "bin counts must be >= 2");
  for (int k : c.eval.powers)
    if (k < 1) bad("evaluation.powers", "entries must be >= 1");

  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError({"cannot open config file " + path});
  json j;
  try {
    j = json::parse(is, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
  }
  return parse_config(j);
}

json to_json(const PipelineConfig& c) {
  json j;
  j["task"] = c.task;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["slow"] = c.slow;
  j["mode"] = to_string(c.sampler.mode);
  j["gamma"] = c.gamma;
  j["sigma_min"] = c.sigma_min;
  j["sigma_max"] = c.sigma_max;
  j["N"] = c.N;
  j["T"] = c.T;
  j["l_f"] = c.l_f;
  j["N_epoch"] = c.N_epoch;
  j["B"] = c.B;
  j["N_hidden"] = c.N_hidden;
  j["N_layer"] = c.N_layer;
  j["alpha"] = c.alpha;
  j["epsilon"] = c.epsilon;
  j["n_samples"] = c.n_samples;
  j["max_failure_fraction"] = c.max_failure_fraction;
  j["simulate_chains"] = c.simulate_chains;
  j["checkpoint_every"] = c.checkpoint_every;
  j["task_options"] = {{"dim", c.task_dim},
                       {"n", c.task_n},
                       {"zmax", c.zmax},
                       {"pool_size", c.pool_size},
                       {"prior", c.prior == PriorKind::Uniform ? "uniform" : "empirical_terminal"}};
  j["sampler"] = {{"use_curvature", c.sampler.use_curvature},
                  {"terminal_projection", c.sampler.terminal_projection},
                  {"newton_max_iter", c.sampler.newton.max_iter},
                  {"newton_tol", c.sampler.newton.tol},
                  {"projection_retries", c.sampler.projection_retries},
                  {"noise_scale", c.sampler.noise_scale},
                  {"olla_forward_landing",
                   c.sampler.olla_forward_landing == OllaForwardLanding::kLemma ? "lemma" : "euler_display"}};
  json modes = json::array();
  for (const auto& m : c.dataset.vmf_modes)
    modes.push_back({{"mean", std::vector<double>(m.mean.data(), m.mean.data() + m.mean.size())}, {"kappa", m.kappa}});
  j["dataset"] = {{"kind", c.dataset.kind},
                  {"n_train", c.dataset.n_train},
                  {"n_heldout", c.dataset.n_heldout},
                  {"modes", modes},
                  {"weights", c.dataset.weights},
                  {"son_modes", c.dataset.son_modes},
                  {"son_concentration", c.dataset.son_concentration}};
  j["network"] = {{"activation", to_string(c.network.activation)},
                  {"conditioning", to_string(c.network.conditioning)},
                  {"embed_width", c.network.embed_width}};
  j["training"] = {{"lr", c.training.lr},
                   {"lr_min", c.training.lr_min},
                   {"lr_schedule", c.training.lr_schedule == LrSchedule::Cosine ? "cosine" : "constant"},
                   {"optimizer", c.training.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                   {"beta1", c.training.beta1},
                   {"beta2", c.training.beta2},
                   {"delta", c.training.delta},
                   {"steps_per_traj", c.training.steps_per_traj},
                   {"ema_decay", c.training.ema_decay}};
  j["evaluation"] = {{"theta_bins", c.eval.theta_bins},
                     {"phi_bins", c.eval.phi_bins},
                     {"power_bins", c.eval.power_bins},
                     {"powers", c.eval.powers},
                     {"coordinate_bins", c.eval.coordinate_bins}};
  return j;
}

// ---------------------------------------------------------------------------

TaskSpec build_task(const PipelineConfig& c) {
  TaskSpec t;
  if (c.task == "sphere") t = make_sphere(c.task_dim);
  else if (c.task == "so") t = make_son(c.task_n);
  else if (c.task == "disk") t = make_disk(c.task_dim, c.epsilon);
  else t = make_sphere_cap(c.zmax, c.epsilon);
  t.prior = c.prior;
  return t;
}

Datasets make_datasets(const PipelineConfig& c, const TaskSpec& task) {
  Datasets ds;
  Rng rtrain = make_stream(c.seed, kSeedDataset);
  Rng rheld = make_stream(c.seed, kSeedHeldout);
  ds.meta["task"] = task.name;
  ds.meta["generator"] = c.dataset.kind;
  ds.meta["seed"] = c.seed;
  ds.meta["n_train"] = c.dataset.n_train;
  ds.meta["n_heldout"] = c.dataset.n_heldout;

  auto keep_feasible = [&](std::vector<Vec> v) {
    // Sphere-cap data: mixture draws outside the cap are rejected.
    if (task.cs.num_ineq == 0) return v;
    std::vector<Vec> out;
    for (auto& x : v)
      if (task.cs.g(x).maxCoeff() <= 0.0) out.push_back(std::move(x));
    return out;
  };
  auto draw = [&](Rng& rng, int n) {
    std::vector<Vec> out;
    while (static_cast<int>(out.size()) < n) {
      std::vector<Vec> batch;
      if (c.dataset.kind == "uniform") {
        batch = prior_uniform(task, rng, n - static_cast<int>(out.size()));
      } else {
        batch = keep_feasible(dataset_vmf_mixture(c.dataset.vmf_modes, c.dataset.weights,
                                                  n - static_cast<int>(out.size()), rng));
        if (batch.empty() && out.empty()) throw ConfigError({"dataset: mixture has no mass in the feasible set"});
      }
      for (auto& x : batch) out.push_back(std::move(x));
    }
    return out;
  };

  if (c.dataset.kind == "son_mixture") {
    // Shared centres: the held-out set reuses the training rotations.
    auto mix = dataset_son_mixture(task.n, c.dataset.son_modes, c.dataset.son_concentration, c.dataset.n_train, rtrain);
    ds.train = std::move(mix.samples);
    const double scale = 1.0 / std::sqrt(c.dataset.son_concentration);
    std::uniform_int_distribution<int> pick(0, c.dataset.son_modes - 1);
    for (int i = 0; i < c.dataset.n_heldout; ++i) {
      const Mat& R = mix.centers[pick(rheld)];
      Mat A(task.n, task.n);
      for (int j = 0; j < task.n; ++j) A.col(j) = standard_normal(rheld, task.n);
      ds.heldout.push_back(vec(nearest_rotation(R * (Mat::Identity(task.n, task.n) + scale * A))));
    }
    json centers = json::array();
    for (const auto& R : mix.centers) centers.push_back(std::vector<double>(R.data(), R.data() + R.size()));
    ds.meta["params"] = {{"modes", c.dataset.son_modes},
                         {"concentration", c.dataset.son_concentration},
                         {"centers_colmajor", centers},
                         {"construction", "perturbed rotations R (I + A / sqrt(concentration)) mapped to SO(n) by polar factor (stand-in)"}};
  } else {
    ds.train = draw(rtrain, c.dataset.n_train);
    ds.heldout = draw(rheld, c.dataset.n_heldout);
    json modes = json::array();
    for (const auto& m : c.dataset.vmf_modes)
      modes.push_back({{"mean", std::vector<double>(m.mean.data(), m.mean.data() + m.mean.size())}, {"kappa", m.kappa}});
    ds.meta["params"] = {{"modes", modes}, {"weights", c.dataset.weights}};
  }

  // Generation-time projection onto the feasible set.
  for (auto* set : {&ds.train, &ds.heldout})
    for (auto& x : *set) x = terminal_project(task.cs, c.sampler.newton, x);
  return ds;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalReport evaluate_samples(const PipelineConfig& c, const TaskSpec& task, const std::vector<Vec>& samples,
                            const std::vector<Vec>& heldout) {
  EvalReport r;
  r.n_samples = static_cast<int>(samples.size());
  const auto vs = violation_stats(task.cs, samples);
  r.avg_abs_h = vs.avg_abs_h;
  r.avg_g_plus = vs.avg_g_plus;
  r.statistics = json::object();
  if (samples.empty() || heldout.empty()) {
    r.jsd = 1.0;
    return r;
  }
  if (task.kind == TaskKind::SO) {
    double worst = 0.0;
    for (int k : c.eval.powers) {
      auto ta = power_traces(samples, task.n, k);
      auto tb = power_traces(heldout, task.n, k);
      std::vector<double> all = ta;
      all.insert(all.end(), tb.begin(), tb.end());
      auto [mn, mx] = std::minmax_element(all.begin(), all.end());
      double lo = *mn, hi = *mx;
      if (!(hi > lo)) {
        lo -= 1e-6;
        hi += 1e-6;
      }
      Histogram ha = histogram_1d(ta, c.eval.power_bins, lo, hi, Binning::PowerTrace);
      Histogram hb = histogram_1d(tb, c.eval.power_bins, lo, hi, Binning::PowerTrace);
      const double v = jsd_histograms(ha, hb);
      r.statistics["power_trace_jsd_k" + std::to_string(k)] = v;
      worst = std::max(worst, v);
      r.histograms.push_back({"power_trace_k" + std::to_string(k), {std::move(ha), std::move(hb)}});
    }
    r.jsd = worst;
  } else if (task.cs.dim == 3 && task.kind != TaskKind::Disk) {
    Histogram ha = spherical_histogram(samples, c.eval.theta_bins, c.eval.phi_bins);
    Histogram hb = spherical_histogram(heldout, c.eval.theta_bins, c.eval.phi_bins);
    r.jsd = jsd_histograms(ha, hb);
    r.statistics["spherical_jsd"] = r.jsd;
    r.histograms.push_back({"spherical_theta_phi", {std::move(ha), std::move(hb)}});
  } else {
    double worst = 0.0;
    for (int i = 0; i < task.cs.dim; ++i) {
      std::vector<double> a, b;
      for (const auto& x : samples) a.push_back(x[i]);
      for (const auto& x : heldout) b.push_back(x[i]);
      Histogram ha = histogram_1d(a, c.eval.coordinate_bins, -1.0, 1.0);
      Histogram hb = histogram_1d(b, c.eval.coordinate_bins, -1.0, 1.0);
      const double v = jsd_histograms(ha, hb);
      r.statistics["coordinate_jsd_x" + std::to_string(i)] = v;
      worst = std::max(worst, v);
      r.histograms.push_back({"coordinate_x" + std::to_string(i), {std::move(ha), std::move(hb)}});
    }
    r.jsd = worst;
  }
  return r;
}

json to_json(const EvalReport& r) {
  return {{"jsd", r.jsd},
          {"avg_abs_h", r.avg_abs_h},
          {"avg_g_plus", r.avg_g_plus},
          {"n_samples", r.n_samples},
          {"projection_failures", r.projection_failures},
          {"nonfinite_failures", r.nonfinite_failures},
          {"rejected", r.rejected},
          {"statistics", r.statistics}};
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

namespace {

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_json(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path);
  os << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  return json::parse(is);
}

Datasets load_or_make_datasets(const PipelineConfig& c, const std::string& out) {
  const auto train = path_in(out, "dataset.csv");
  const auto held = path_in(out, "heldout.csv");
  if (fs::exists(train) && fs::exists(held)) {
    Datasets ds;
    ds.train = load_samples_csv(train);
    ds.heldout = load_samples_csv(held);
    return ds;
  }
  return stage_dataset(c, out);
}

}  // namespace

Datasets stage_dataset(const PipelineConfig& c, const std::string& out) {
  fs::create_directories(out);
  const TaskSpec task = build_task(c);
  Datasets ds = make_datasets(c, task);
  save_samples_csv(path_in(out, "dataset.csv"), ds.train, task.cs.dim);
  save_samples_csv(path_in(out, "heldout.csv"), ds.heldout, task.cs.dim);
  write_json(path_in(out, "dataset_meta.json"), ds.meta);
  return ds;
}

void stage_simulate_forward(const PipelineConfig& c, const std::string& out) {
  fs::create_directories(out);
  const TaskSpec task = build_task(c);
  const Datasets ds = load_or_make_datasets(c, out);
  const auto sched = c.schedule();
  const auto scfg = c.sampler_config();
  std::vector<Vec> starts;
  for (int i = 0; i < c.simulate_chains; ++i) starts.push_back(ds.train[i % ds.train.size()]);
  const auto trajs = simulate_forward_batch(task.cs, scfg, sched, starts, derive_seed(c.seed, kSeedSimulate), c.threads);
  {
    std::ofstream os(path_in(out, "trajectories.bin"), std::ios::binary);
    if (!os) throw Error("cannot open trajectories.bin");
    for (const auto& tr : trajs) write_trajectory_binary(os, tr);
  }
  std::ofstream csv(path_in(out, "trajectory_0.csv"));
  write_trajectory_csv(csv, task.cs, trajs.front());
  json summary = {{"chains", trajs.size()}, {"N", sched.N()}, {"mode", to_string(scfg.mode)}};
  std::vector<double> terminal_h;
  long retries = 0;
  for (const auto& tr : trajs) {
    terminal_h.push_back(tr.h_inf.back());
    retries += tr.projection_retries;
  }
  summary["terminal_h_inf"] = terminal_h;
  summary["projection_retries"] = retries;
  write_json(path_in(out, "simulate_summary.json"), summary);
}

void stage_train(const PipelineConfig& c, const std::string& out) {
  fs::create_directories(out);
  const TaskSpec task = build_task(c);
  const Datasets ds = load_or_make_datasets(c, out);
  Rng init = make_stream(c.seed, kSeedNetInit);
  ScoreNet net(c.net_config(), init);
  std::ofstream log(path_in(out, "train_log.jsonl"));
  if (!log) throw Error("cannot open train_log.jsonl");
  const auto tcfg = c.train_config();
  char buf[64];
  try {
    train(task.cs, c.sampler_config(), c.schedule(), tcfg, ds.train, net, [&](const LossReport& r) {
      json line = {{"epoch", r.epoch}, {"loss", r.loss}, {"grad_norm", r.grad_norm}, {"cache_age", r.cache_age},
                   {"cache_id", r.cache_id}, {"lr", r.lr}};
      log << line.dump() << '\n';
      if (c.checkpoint_every > 0 && (r.epoch + 1) % c.checkpoint_every == 0) {
        std::snprintf(buf, sizeof buf, "checkpoint_epoch_%06d.ldnet", r.epoch + 1);
        save_checkpoint(path_in(out, buf), net);
      }
    });
  } catch (const NumericalFailure&) {
    save_checkpoint(path_in(out, "checkpoint_last_good.ldnet"), net);
    throw;
  }
  save_checkpoint(path_in(out, "checkpoint.ldnet"), net);
}

void stage_sample(const PipelineConfig& c, const std::string& out) {
  fs::create_directories(out);
  const TaskSpec task = build_task(c);
  const ScoreNet net = load_checkpoint(path_in(out, "checkpoint.ldnet"));
  const auto sched = c.schedule();
  const auto scfg = c.sampler_config();
  if (net.dim() != task.cs.dim || net.underdamped() != is_underdamped(scfg.mode))
    throw ConfigError({"checkpoint.ldnet does not match the configured task/mode"});

  PriorSampler prior;
  std::optional<EmpiricalPrior> pool;
  if (c.prior == PriorKind::EmpiricalTerminal) {
    const Datasets ds = load_or_make_datasets(c, out);
    pool.emplace(prior_empirical_terminal(task.cs, scfg, sched, ds.train, derive_seed(c.seed, kSeedPool), c.pool_size,
                                          c.threads));
    prior = [&](Rng& r) { return (*pool)(r); };
  } else {
    prior = [&](Rng& r) { return sample_uniform(task, r); };
  }
  SampleOptions opts;
  opts.threads = c.threads;
  opts.accept = task.accept;
  const auto res = sample_backward(task.cs, scfg, sched, net, prior, c.n_samples, derive_seed(c.seed, kSeedSample), opts);
  save_samples_csv(path_in(out, "samples.csv"), res.samples, task.cs.dim);
  write_json(path_in(out, "samples_meta.json"), {{"requested", c.n_samples},
                                                  {"returned", res.samples.size()},
                                                  {"projection_failures", res.projection_failures},
                                                  {"nonfinite_failures", res.nonfinite_failures},
                                                  {"rejected", res.rejected},
                                                  {"projection_retries", res.projection_retries}});
  if (c.n_samples > 0 && static_cast<double>(res.failures()) / c.n_samples > c.max_failure_fraction)
    throw ProjectionBudgetExceeded("sampling: " + std::to_string(res.failures()) + " of " +
                                   std::to_string(c.n_samples) + " chains failed (budget " +
                                   std::to_string(c.max_failure_fraction) + ")");
}

EvalReport stage_evaluate(const PipelineConfig& c, const std::string& out) {
  const TaskSpec task = build_task(c);
  const auto samples = load_samples_csv(path_in(out, "samples.csv"));
  const auto heldout = load_samples_csv(path_in(out, "heldout.csv"));
  EvalReport r = evaluate_samples(c, task, samples, heldout);
  const auto meta_path = path_in(out, "samples_meta.json");
  if (fs::exists(meta_path)) {
    const json meta = read_json(meta_path);
    r.projection_failures = meta.value("projection_failures", 0);
    r.nonfinite_failures = meta.value("nonfinite_failures", 0);
    r.rejected = meta.value("rejected", 0);
  }
  json rep = to_json(r);
  rep["binning"] = {{"theta_bins", c.eval.theta_bins}, {"phi_bins", c.eval.phi_bins},
                    {"power_bins", c.eval.power_bins}, {"coordinate_bins", c.eval.coordinate_bins}};
  write_json(path_in(out, "eval_report.json"), rep);

  std::ofstream csv(path_in(out, "histograms.csv"));
  csv << "statistic,bin,lo,hi,generated,heldout\n";
  for (const auto& [name, pair] : r.histograms) {
    const auto& spec = pair.first.spec;
    for (std::size_t b = 0; b < pair.first.counts.size(); ++b)
      csv << name << ',' << b << ',' << spec.lo.front() << ',' << spec.hi.back() << ',' << pair.first.counts[b] << ','
          << pair.second.counts[b] << '\n';
  }
  return r;
}

DecayCheck stage_decay_check(const PipelineConfig& c, const std::string& out) {
  fs::create_directories(out);
  if (is_projected(c.sampler.mode)) throw ConfigError({"mode: decay-check needs a landing mode (OLLA or ULLA)"});
  const TaskSpec task = build_task(c);
  if (task.cs.num_eq == 0) throw ConfigError({"task: decay-check needs equality constraints"});
  const auto sched = c.schedule();
  auto scfg = c.sampler_config();
  scfg.terminal_projection = false;

  // Start from a uniform point pushed off the manifold: |h| = 0.2 on spheres.
  Rng rng = make_stream(c.seed, kSeedDecay);
  Vec x0 = sample_uniform(task, rng) * std::sqrt(1.2);
  Trajectory tr = simulate_forward(task.cs, scfg, sched, x0, rng);

  DecayCheck dc;
  json rows = json::array();
  for (int k = 0; k <= sched.N(); ++k) {
    const double t = k * sched.dt();
    const auto pred = decay_oracle(task.cs, sched, c.alpha, x0, t);
    const Vec h = task.cs.h(tr.state(k));
    const double hp = pred.h_pred.lpNorm<Eigen::Infinity>();
    if (hp <= dc.floor) break;
    const double err = (h - pred.h_pred).lpNorm<Eigen::Infinity>() / hp;
    dc.max_rel_error = std::max(dc.max_rel_error, err);
    ++dc.steps_compared;
    rows.push_back({{"step", k}, {"t", t}, {"h_inf", h.lpNorm<Eigen::Infinity>()}, {"h_pred_inf", hp}, {"rel_error", err}});
  }
  dc.pass = dc.steps_compared > 0 && dc.max_rel_error < dc.threshold;
  write_json(path_in(out, "decay_check.json"), {{"pass", dc.pass},
                                                 {"max_rel_error", dc.max_rel_error},
                                                 {"threshold", dc.threshold},
                                                 {"floor", dc.floor},
                                                 {"steps_compared", dc.steps_compared},
                                                 {"mode", to_string(scfg.mode)},
                                                 {"rows", rows}});
  return dc;
}

EvalReport run_pipeline(const PipelineConfig& c, const std::string& out) {
  fs::create_directories(out);
  json meta = to_json(c);
  meta["stages"] = {"dataset", "train", "sample", "evaluate"};
  meta["defaults_note"] = {
      {"optimizer", c.training.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
      {"conditioning", to_string(c.network.conditioning)},
      {"spherical_bins", std::to_string(c.eval.theta_bins) + "x" + std::to_string(c.eval.phi_bins)},
      {"power_bins", c.eval.power_bins}};
  write_json(path_in(out, "run_metadata.json"), meta);
  stage_dataset(c, out);
  stage_train(c, out);
  stage_sample(c, out);
  return stage_evaluate(c, out);
}

void dry_run(const PipelineConfig& c, const std::string& out) {
  fs::create_directories(out);
  write_json(path_in(out, "resolved_config.json"), to_json(c));
}

}  // namespace ldiff
