// ldiff: command-line front end for the constrained diffusion pipeline.

#include "ldiff/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kProjectionBudget = 4 };

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "ldiff_out";
  int threads = 0;
  bool slow = false;
  bool dry_run = false;
};

ldiff::PipelineConfig resolve(const Globals& g) {
  nlohmann::json j = nlohmann::json::object();
  if (!g.config.empty()) {
    std::ifstream is(g.config);
    if (!is) throw ldiff::ConfigError({"cannot open config file " + g.config});
    try {
      j = nlohmann::json::parse(is, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
      throw ldiff::ConfigError({std::string("config is not valid JSON: ") + e.what()});
    }
  }
  if (j.is_object()) {
    if (g.slow) j["slow"] = true;
    if (g.seed_set) j["seed"] = g.seed;
    if (g.threads > 0) j["threads"] = g.threads;
  }
  return ldiff::parse_config(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landing-based constrained Langevin diffusion"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](const std::uint64_t& s) { g.seed = s, g.seed_set = true; }, "Master seed (overrides config)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads (overrides config)")->check(CLI::PositiveNumber);
  app.add_flag("--slow", g.slow, "Allow SO(n) tasks with n > 5");
  app.add_flag("--dry-run", g.dry_run, "Validate the config, write the resolved config and stop");

  auto* sim = app.add_subcommand("simulate-forward", "Run forward chains and dump trajectories");
  auto* trn = app.add_subcommand("train", "Train the score network");
  auto* smp = app.add_subcommand("sample", "Generate samples from a trained checkpoint");
  auto* evl = app.add_subcommand("evaluate", "Evaluate saved samples against held-out data");
  auto* dec = app.add_subcommand("decay-check", "Compare landing decay with its closed form");
  auto* pip = app.add_subcommand("pipeline", "Dataset, training, sampling and evaluation");
  for (auto* sc : {sim, trn, smp, evl, dec, pip}) sc->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(g);
    if (g.dry_run) {
      ldiff::dry_run(cfg, g.out);
      std::cout << "config ok; resolved config written to " << g.out << "/resolved_config.json\n";
      return kOk;
    }
    if (sim->parsed()) {
      ldiff::stage_simulate_forward(cfg, g.out);
    } else if (trn->parsed()) {
      ldiff::stage_train(cfg, g.out);
    } else if (smp->parsed()) {
      ldiff::stage_sample(cfg, g.out);
    } else if (evl->parsed()) {
      const auto r = ldiff::stage_evaluate(cfg, g.out);
      std::cout << ldiff::to_json(r).dump(2) << '\n';
    } else if (dec->parsed()) {
      const auto r = ldiff::stage_decay_check(cfg, g.out);
      std::printf("decay-check: %s (max relative error %.4g over %d steps, threshold %.3g)\n", r.pass ? "PASS" : "FAIL",
                  r.max_rel_error, r.steps_compared, r.threshold);
      return r.pass ? kOk : kNumerical;
    } else if (pip->parsed()) {
      const auto r = ldiff::run_pipeline(cfg, g.out);
      std::cout << ldiff::to_json(r).dump(2) << '\n';
    }
    return kOk;
  } catch (const ldiff::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kConfig;
  } catch (const ldiff::ProjectionBudgetExceeded& e) {
    std::cerr << "projection failure budget exceeded: " << e.what() << '\n';
    return kProjectionBudget;
  } catch (const ldiff::ProjectionFailure& e) {
    std::cerr << "projection failure: " << e.what() << '\n';
    return kProjectionBudget;
  } catch (const ldiff::NonFiniteState& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const ldiff::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
