#pragma once

// End-to-end pipeline: generate -> phase 1 -> phase 2 -> evaluation, per seed,
// plus the staged entry points used by the CLI.
//
// Per-seed output directory <out>/seed_<s>/:
//   truth.json, phase1.json, phase1_trace.jsonl, phase2.json,
//   phase2_trace.jsonl, trace.jsonl (both phases), distance.csv, summary.json
// and <out>/summary.json across seeds.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedmix/config.hpp"
#include "fedmix/metrics.hpp"
#include "fedmix/model.hpp"
#include "fedmix/phase1.hpp"
#include "fedmix/phase2.hpp"

namespace fedmix {

struct SeedOutcome {
  std::uint64_t seed = 0;
  Instance instance;
  Phase1Result phase1;
  std::optional<Phase2Result> phase2;
  std::optional<EvalReport> eval;
  std::string failure_code;  // empty on success
  std::string failure_message;

  bool ok() const { return failure_code.empty(); }
};

/// Mixture config with the seed replaced.
MixtureConfig mixture_for_seed(const MixtureConfig& cfg, std::uint64_t seed);

/// In-memory pipeline for one seed; never touches the filesystem. Phase
/// failures are recorded in the outcome rather than thrown.
SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// GlobalModel to start phase 2 from: phase1.json centers or a {"thetas": ...}
/// document.
GlobalModel read_start_model(const std::filesystem::path& path);

Json seed_summary(const SeedOutcome& outcome, const GroundTruth& truth);

/// Writes every per-seed file for an outcome into dir.
void write_seed_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                        const SeedOutcome& outcome);

/// Runs every seed, writing per-seed directories and the top-level summary.
/// Returns one summary record per seed.
std::vector<Json> run_full(const ExperimentConfig& cfg, const std::filesystem::path& out);

/// Staged pipeline. Each stage reads what the previous one persisted.
void stage_generate(const ExperimentConfig& cfg, std::uint64_t seed,
                    const std::filesystem::path& out);
/// Returns false when anchor clustering failed (outputs are still written).
bool stage_phase1(const ExperimentConfig& cfg, const std::filesystem::path& instance_dir,
                  std::optional<std::uint64_t> seed, const std::filesystem::path& out);
void stage_phase2(const ExperimentConfig& cfg, const std::filesystem::path& instance_dir,
                  const std::filesystem::path& start, const std::filesystem::path& out);

/// EvalReport of a finished run directory.
EvalReport evaluate_run(const std::filesystem::path& run_dir, double c_cal = 1.0);

}  // namespace fedmix
