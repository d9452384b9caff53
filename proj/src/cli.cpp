#include "fedmix/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "fedmix/error.hpp"
#include "fedmix/harness.hpp"
#include "fedmix/persistence.hpp"

namespace fedmix {
namespace fs = std::filesystem;
namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitAlgorithm = 2;

void report(std::ostream& err, const std::string& code, const std::string& message) {
  err << Json{{"error", code}, {"message", message}}.dump() << "\n";
}

fs::path default_output_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("FEDMIX_OUTPUT_DIR"); env && *env) return env;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  return "fedmix_out";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Clustered federated learning simulator for mixed linear regression"};
  app.require_subcommand(1);

  std::string config, instance, start, run_dir, out_dir;
  std::optional<std::uint64_t> seed;
  double c_cal = 1.0;

  auto* generate = app.add_subcommand("generate", "Sample and persist an instance");
  generate->add_option("--config", config, "Experiment config (JSON)")->required();
  generate->add_option("--seed", seed, "Seed override");
  generate->add_option("--out", out_dir, "Output directory")->required();

  auto* phase1 = app.add_subcommand("phase1", "Run anchor moment descent on an instance");
  phase1->add_option("--config", config)->required();
  phase1->add_option("--instance", instance, "Instance directory")->required();
  phase1->add_option("--seed", seed);
  phase1->add_option("--out", out_dir)->required();

  auto* phase2 = app.add_subcommand("phase2", "Run clustered FedAvg/FedProx from a start");
  phase2->add_option("--config", config)->required();
  phase2->add_option("--instance", instance)->required();
  phase2->add_option("--start", start, "phase1.json or {\"thetas\": ...}")->required();
  phase2->add_option("--out", out_dir)->required();

  auto* full = app.add_subcommand("full", "Generate, both phases and evaluation per seed");
  full->add_option("--config", config)->required();
  full->add_option("--seed", seed);
  full->add_option("--out", out_dir);

  auto* eval = app.add_subcommand("eval", "Evaluate a finished run directory");
  eval->add_option("--run", run_dir, "Run directory")->required();
  eval->add_option("--c-cal", c_cal, "Calibration constant of the error probability");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report(err, "usage", e.what());
    return kExitConfig;
  }

  try {
    if (*eval) {
      out << to_json(evaluate_run(run_dir, c_cal)).dump(2) << "\n";
      return kExitOk;
    }
    const ExperimentConfig cfg = load_experiment(config);
    if (*generate) {
      stage_generate(cfg, seed.value_or(cfg.mixture.seed), out_dir);
      return kExitOk;
    }
    if (*phase1) {
      if (!stage_phase1(cfg, instance, seed, out_dir)) {
        report(err, "clustering_failed", "anchor clustering did not return k components");
        return kExitAlgorithm;
      }
      return kExitOk;
    }
    if (*phase2) {
      stage_phase2(cfg, instance, start, out_dir);
      return kExitOk;
    }
    ExperimentConfig run = cfg;
    if (seed) run.seeds = {*seed};
    const fs::path dir = out_dir.empty() ? default_output_dir(run) : fs::path(out_dir);
    const auto records = run_full(run, dir);
    int code = kExitOk;
    for (const auto& r : records) {
      if (r.at("status") != "ok") {
        report(err, r.at("failure").at("code").get<std::string>(),
               "seed " + std::to_string(r.at("seed").get<std::uint64_t>()) + ": " +
                   r.at("failure").at("message").get<std::string>());
        code = kExitAlgorithm;
      }
    }
    return code;
  } catch (const ConfigError& e) {
    report(err, e.code(), e.what());
    return kExitConfig;
  } catch (const Error& e) {
    report(err, e.code(), e.what());
    return kExitAlgorithm;
  } catch (const fs::filesystem_error& e) {
    report(err, "io_error", e.what());
    return kExitConfig;
  }
}

}  // namespace fedmix
