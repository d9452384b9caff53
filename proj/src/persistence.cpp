#include "fedmix/persistence.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fedmix/error.hpp"

namespace fedmix {
namespace fs = std::filesystem;
namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t out = 0;
    for (int b = 0; b < 8; ++b) out |= ((v >> (8 * b)) & 0xffULL) << (8 * (7 - b));
    return out;
  }
}

std::string client_file(std::size_t i) {
  std::ostringstream name;
  name << "client_" << std::setw(6) << std::setfill('0') << i << ".bin";
  return name.str();
}

Json optional_number(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    Json j;
    in >> j;
    return j;
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_matrix(const fs::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(m(r, c)));
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
}

Matrix read_matrix(const fs::path& path, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::uint64_t bits = 0;
      if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits))
        throw ConfigError(path.string() + ": truncated matrix file");
      m(r, c) = std::bit_cast<double>(to_little_endian(bits));
    }
  if (in.peek() != std::char_traits<char>::eof())
    throw ConfigError(path.string() + ": trailing bytes after matrix");
  return m;
}

Json truth_to_json(const GroundTruth& truth) {
  return {{"thetas", vectors_to_json(truth.thetas)},
          {"labels", truth.labels},
          {"p", truth.p},
          {"covariances", vectors_to_json(truth.covariances)},
          {"delta", truth.delta},
          {"p_min", truth.p_min}};
}

GroundTruth truth_from_json(const Json& j) {
  GroundTruth t;
  try {
    t.thetas = vectors_from_json(j.at("thetas"));
    t.labels = j.at("labels").get<std::vector<std::size_t>>();
    t.p = j.at("p").get<std::vector<double>>();
    t.covariances = vectors_from_json(j.at("covariances"));
    t.delta = j.at("delta").get<double>();
    t.p_min = j.at("p_min").get<double>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed ground truth: ") + e.what());
  }
  return t;
}

void save_instance(const fs::path& dir, const Instance& instance, const MixtureConfig& cfg) {
  fs::create_directories(dir);
  const std::size_t d = instance.dim();
  Json clients = Json::array();
  for (std::size_t i = 0; i < instance.clients.size(); ++i) {
    const auto& c = instance.clients[i];
    Matrix block(c.features.rows(), c.features.cols() + 1);
    block << c.features, c.responses;
    const std::string file = client_file(i);
    write_matrix(dir / file, block);
    clients.push_back({{"file", file},
                       {"rows", c.size()},
                       {"cols", d + 1},
                       {"label", instance.truth.labels.at(i)}});
  }
  Json manifest = {
      {"format", "fedmix-instance"},
      {"version", 1},
      {"layout", "row-major little-endian float64; d feature columns then the response"},
      {"d", d},
      {"k", instance.num_clusters()},
      {"M", instance.clients.size()},
      {"seed", cfg.seed},
      {"sigma", cfg.sigma},
      {"mixture", mixture_to_json(cfg)},
      {"truth", truth_to_json(instance.truth)},
      {"clients", clients}};
  write_json(dir / "manifest.json", manifest);
}

LoadedInstance load_instance(const fs::path& dir) {
  const Json manifest = read_json(dir / "manifest.json");
  if (manifest.value("format", "") != "fedmix-instance")
    throw ConfigError(dir.string() + " is not an instance directory");
  LoadedInstance out;
  out.mixture = parse_mixture(manifest.at("mixture"));
  out.instance.truth = truth_from_json(manifest.at("truth"));
  const auto d = manifest.at("d").get<Eigen::Index>();
  for (const auto& entry : manifest.at("clients")) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    if (cols != d + 1) throw ConfigError("instance: client file has wrong column count");
    const Matrix block = read_matrix(dir / entry.at("file").get<std::string>(), rows, cols);
    out.instance.clients.push_back({block.leftCols(d), block.col(d)});
  }
  if (out.instance.truth.labels.size() != out.instance.clients.size())
    throw ConfigError("instance: label count differs from client count");
  return out;
}

Json to_json(const CommBytes& c) { return {{"bytes_up", c.up}, {"bytes_down", c.down}}; }

Json to_json(const Phase1TraceRow& row) {
  return {{"phase", "phase1"},
          {"round", row.round},
          {"anchor", row.anchor},
          {"sigma_hat", row.sigma_hat},
          {"residual_true", optional_number(row.residual_true)},
          {"residual_next", optional_number(row.residual_next)},
          {"delta_max", optional_number(row.delta_max)},
          {"theta_norm", row.theta_norm},
          {"frozen", row.frozen},
          {"updated", row.updated},
          {"bytes_up", row.cumulative.up},
          {"bytes_down", row.cumulative.down},
          {"msg_bytes_up", row.message.up},
          {"msg_bytes_down", row.message.down}};
}

Json to_json(const Phase2TraceRow& row) {
  return {{"phase", "phase2"},
          {"round", row.round},
          {"distance_to_truth", optional_number(row.distance_to_truth)},
          {"misclustering_mass", optional_number(row.misclustering_mass)},
          {"mode", to_string(row.mode)},
          {"stability_warnings", row.stability_warnings},
          {"bytes_up", row.cumulative.up},
          {"bytes_down", row.cumulative.down}};
}

Json to_json(const EvalReport& r) {
  return {{"distance", r.distance},
          {"best_permutation", r.best_permutation},
          {"misclustering_mass", r.misclustering_mass},
          {"chi2", r.chi2},
          {"per_cluster_mass", r.per_cluster_mass},
          {"rho", r.rho},
          {"nu_uniform_term", r.nu_uniform_term},
          {"pe_sum_term", r.pe_sum_term}};
}

Json phase1_to_json(const Phase1Result& r, std::uint64_t seed) {
  Json anchors = Json::array();
  for (const auto& s : r.states)
    anchors.push_back({{"client", s.client_index},
                       {"theta", vector_to_json(s.theta)},
                       {"sigma_hat", s.sigma_hat},
                       {"frozen", s.frozen},
                       {"rounds_used", s.rounds_used}});
  return {{"seed", seed},
          {"anchors", anchors},
          {"components", r.components},
          {"centers", r.centers ? vectors_to_json(*r.centers) : Json(nullptr)},
          {"failure", r.failure.empty() ? Json(nullptr) : Json(r.failure)},
          {"comm", to_json(r.comm)}};
}

Json phase2_to_json(const Phase2Result& r, std::uint64_t seed) {
  return {{"seed", seed},
          {"eta", r.eta},
          {"gamma", r.gamma},
          {"rounds", r.model.round},
          {"thetas", vectors_to_json(r.model.thetas)},
          {"labels", r.labels},
          {"comm", to_json(r.comm)}};
}

void write_phase1_outputs(const fs::path& dir, const Phase1Result& r, std::uint64_t seed) {
  fs::create_directories(dir);
  write_json(dir / "phase1.json", phase1_to_json(r, seed));
  std::string lines;
  for (const auto& row : r.trace) lines += to_json(row).dump() + "\n";
  write_text(dir / "phase1_trace.jsonl", lines);
}

void write_phase2_outputs(const fs::path& dir, const Phase2Result& r, std::uint64_t seed) {
  fs::create_directories(dir);
  write_json(dir / "phase2.json", phase2_to_json(r, seed));
  std::string lines;
  for (const auto& row : r.trace) lines += to_json(row).dump() + "\n";
  write_text(dir / "phase2_trace.jsonl", lines);
}

}  // namespace fedmix
