#pragma once

// JSON experiment configuration.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedmix/model.hpp"
#include "fedmix/phase1.hpp"
#include "fedmix/phase2.hpp"

namespace fedmix {

using Json = nlohmann::json;

/// Phase 1 settings whose model constants may default to the generator's.
struct Phase1Section {
  Phase1Config base;
  std::optional<double> delta_hint;
  std::optional<double> alpha;
  std::optional<double> beta;

  /// Fills defaults: delta_hint from the instance's separation, alpha/beta
  /// from the mixture's covariance bounds.
  Phase1Config resolve(const MixtureConfig& mixture, const GroundTruth& truth) const;
};

struct ExperimentConfig {
  MixtureConfig mixture;
  Phase1Section phase1;
  Phase2Config phase2;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir;
  bool emit_instance = false;
  double c_cal = 1.0;
};

MixtureConfig parse_mixture(const Json& j);
Json mixture_to_json(const MixtureConfig& cfg);
Phase1Section parse_phase1(const Json& j, const MixtureConfig& mixture);
Phase2Config parse_phase2(const Json& j);

/// Throws ConfigError on schema violations or inconsistent phases.
ExperimentConfig parse_experiment(const Json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);
Json vectors_to_json(const std::vector<Vector>& vs);
std::vector<Vector> vectors_from_json(const Json& j);

}  // namespace fedmix
