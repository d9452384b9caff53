#pragma once

// On-disk formats.
//
// Instance directory:
//   manifest.json       shapes, hidden labels, ground truth and the mixture config
//   client_<i>.bin      n_i x (d + 1) row-major little-endian float64 matrix;
//                       the first d columns are features, the last the response
//
// Run outputs: JSON documents, JSONL traces (one row per anchor-round in
// phase 1, one row per round in phase 2) and a CSV of per-round distances.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedmix/config.hpp"
#include "fedmix/metrics.hpp"
#include "fedmix/model.hpp"
#include "fedmix/phase1.hpp"
#include "fedmix/phase2.hpp"

namespace fedmix {

/// Writes a row-major little-endian float64 matrix (no header).
void write_matrix(const std::filesystem::path& path, const Matrix& m);
/// Reads a rows x cols matrix written by write_matrix.
Matrix read_matrix(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols);

void save_instance(const std::filesystem::path& dir, const Instance& instance,
                   const MixtureConfig& cfg);

struct LoadedInstance {
  Instance instance;
  MixtureConfig mixture;
};
LoadedInstance load_instance(const std::filesystem::path& dir);

Json truth_to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const Json& j);

Json to_json(const CommBytes& c);
Json to_json(const Phase1TraceRow& row);
Json to_json(const Phase2TraceRow& row);
Json to_json(const EvalReport& r);

Json phase1_to_json(const Phase1Result& r, std::uint64_t seed);
Json phase2_to_json(const Phase2Result& r, std::uint64_t seed);

/// Writes phase1.json and phase1_trace.jsonl into dir.
void write_phase1_outputs(const std::filesystem::path& dir, const Phase1Result& r,
                          std::uint64_t seed);
/// Writes phase2.json and phase2_trace.jsonl into dir.
void write_phase2_outputs(const std::filesystem::path& dir, const Phase2Result& r,
                          std::uint64_t seed);

/// Serialized document with a trailing newline, written atomically enough for
/// single-writer use.
void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

}  // namespace fedmix
