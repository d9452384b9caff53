#include "fedmix/harness.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "fedmix/error.hpp"
#include "fedmix/persistence.hpp"

namespace fedmix {
namespace fs = std::filesystem;
namespace {

Json comm_json(const CommBytes& c) { return to_json(c); }

// Largest own-cluster residual over anchors after each phase-1 round.
std::map<std::size_t, double> phase1_round_errors(const Phase1Result& r) {
  std::map<std::size_t, double> worst;
  for (const auto& row : r.trace) {
    if (!row.residual_next) continue;
    const double e = *row.residual_next;
    auto [it, inserted] = worst.emplace(row.round, e);
    if (!inserted) it->second = std::max(it->second, e);
  }
  return worst;
}

std::string distance_csv(const SeedOutcome& o) {
  std::ostringstream csv;
  csv.precision(17);
  csv << "phase,round,distance,misclustering,bytes\n";
  std::map<std::size_t, CommBytes> p1_bytes;
  for (const auto& row : o.phase1.trace) p1_bytes[row.round] = row.cumulative;
  for (const auto& [round, err] : phase1_round_errors(o.phase1)) {
    const CommBytes& b = p1_bytes[round];
    csv << "phase1," << round << "," << err << ",," << (b.up + b.down) << "\n";
  }
  if (o.phase2) {
    const std::uint64_t base = o.phase1.comm.up + o.phase1.comm.down;
    for (const auto& row : o.phase2->trace) {
      csv << "phase2," << row.round << ",";
      if (row.distance_to_truth) csv << *row.distance_to_truth;
      csv << ",";
      if (row.misclustering_mass) csv << *row.misclustering_mass;
      csv << "," << (base + row.cumulative.up + row.cumulative.down) << "\n";
    }
  }
  return csv.str();
}

Json truth_document(const Instance& instance, const MixtureConfig& mixture) {
  Json j = truth_to_json(instance.truth);
  j["sigma"] = mixture.sigma;
  j["sizes"] = instance.sizes();
  return j;
}

Phase2Result run_phase2(const std::vector<ClientDataset>& clients, const GlobalModel& start,
                        const Phase2Config& cfg, const GroundTruth& truth) {
  return run_fedx(clients, start, cfg, &truth);
}

}  // namespace

MixtureConfig mixture_for_seed(const MixtureConfig& cfg, std::uint64_t seed) {
  MixtureConfig out = cfg;
  out.seed = seed;
  return out;
}

SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutcome o;
  o.seed = seed;
  const MixtureConfig mixture = mixture_for_seed(cfg.mixture, seed);
  o.instance = generate_instance(mixture);
  const Phase1Config p1 = cfg.phase1.resolve(mixture, o.instance.truth);
  try {
    o.phase1 = run_fedmd(o.instance.clients, p1, seed, &o.instance.truth);
    if (!o.phase1.centers) {
      o.failure_code = "clustering_failed";
      o.failure_message = o.phase1.failure;
      return o;
    }
    o.phase2 = run_phase2(o.instance.clients, GlobalModel{*o.phase1.centers, 0}, cfg.phase2,
                          o.instance.truth);
    o.eval = evaluate(o.phase2->model.thetas, o.phase2->labels, o.instance.truth,
                      o.instance.sizes(), mixture.sigma, cfg.c_cal);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    o.failure_code = e.code();
    o.failure_message = e.what();
  }
  return o;
}

GlobalModel read_start_model(const fs::path& path) {
  const Json j = read_json(path);
  if (j.contains("thetas") && !j["thetas"].is_null())
    return GlobalModel{vectors_from_json(j["thetas"]), 0};
  if (j.contains("centers")) {
    if (j["centers"].is_null())
      throw ClusteringError(j.value("components", std::size_t{0}),
                            "start file holds no centers: anchor clustering failed");
    return GlobalModel{vectors_from_json(j["centers"]), 0};
  }
  throw ConfigError(path.string() + ": expected \"centers\" or \"thetas\"");
}

Json seed_summary(const SeedOutcome& o, const GroundTruth& truth) {
  Json j;
  j["seed"] = o.seed;
  j["status"] = o.ok() ? "ok" : "failed";
  j["failure"] = o.ok() ? Json(nullptr)
                        : Json{{"code", o.failure_code}, {"message", o.failure_message}};
  j["delta"] = truth.delta;
  j["phase1"] = {{"anchors", o.phase1.anchors},
                 {"components", o.phase1.components},
                 {"comm", comm_json(o.phase1.comm)}};
  CommBytes total = o.phase1.comm;
  if (o.phase2) {
    j["phase2"] = {{"eta", o.phase2->eta},
                   {"gamma", o.phase2->gamma},
                   {"rounds", o.phase2->model.round},
                   {"comm", comm_json(o.phase2->comm)}};
    total += o.phase2->comm;
  } else {
    j["phase2"] = nullptr;
  }
  j["comm"] = comm_json(total);
  if (o.eval) {
    j["eval"] = to_json(*o.eval);
    j["final_distance"] = o.eval->distance;
    j["final_distance_over_delta"] = o.eval->distance / truth.delta;
  } else {
    j["eval"] = nullptr;
    j["final_distance"] = nullptr;
    j["final_distance_over_delta"] = nullptr;
  }
  return j;
}

void write_seed_outputs(const fs::path& dir, const ExperimentConfig& cfg,
                        const SeedOutcome& o) {
  fs::create_directories(dir);
  const MixtureConfig mixture = mixture_for_seed(cfg.mixture, o.seed);
  write_json(dir / "truth.json", truth_document(o.instance, mixture));
  if (cfg.emit_instance) save_instance(dir / "instance", o.instance, mixture);
  write_phase1_outputs(dir, o.phase1, o.seed);
  std::string trace;
  for (const auto& row : o.phase1.trace) trace += to_json(row).dump() + "\n";
  if (o.phase2) {
    write_phase2_outputs(dir, *o.phase2, o.seed);
    for (const auto& row : o.phase2->trace) trace += to_json(row).dump() + "\n";
  }
  write_text(dir / "trace.jsonl", trace);
  write_text(dir / "distance.csv", distance_csv(o));
  write_json(dir / "summary.json", seed_summary(o, o.instance.truth));
}

std::vector<Json> run_full(const ExperimentConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  std::vector<Json> records;
  std::size_t successes = 0;
  for (std::uint64_t seed : cfg.seeds) {
    const SeedOutcome o = run_seed(cfg, seed);
    write_seed_outputs(out / ("seed_" + std::to_string(seed)), cfg, o);
    records.push_back(seed_summary(o, o.instance.truth));
    if (o.ok()) ++successes;
  }
  write_json(out / "summary.json", {{"seeds", records},
                                    {"successes", successes},
                                    {"failures", records.size() - successes}});
  return records;
}

void stage_generate(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& out) {
  const MixtureConfig mixture = mixture_for_seed(cfg.mixture, seed);
  const Instance instance = generate_instance(mixture);
  fs::create_directories(out);
  save_instance(out / "instance", instance, mixture);
  write_json(out / "truth.json", truth_document(instance, mixture));
}

bool stage_phase1(const ExperimentConfig& cfg, const fs::path& instance_dir,
                  std::optional<std::uint64_t> seed, const fs::path& out) {
  const LoadedInstance loaded = load_instance(instance_dir);
  const std::uint64_t s = seed.value_or(loaded.mixture.seed);
  // The loaded truth supplies Delta for the stopping rule, as in the full run.
  const Phase1Config p1 = cfg.phase1.resolve(loaded.mixture, loaded.instance.truth);
  const Phase1Result r = run_fedmd(loaded.instance.clients, p1, s, &loaded.instance.truth);
  write_phase1_outputs(out, r, s);
  return r.centers.has_value();
}

void stage_phase2(const ExperimentConfig& cfg, const fs::path& instance_dir,
                  const fs::path& start, const fs::path& out) {
  const LoadedInstance loaded = load_instance(instance_dir);
  const GlobalModel model = read_start_model(start);
  const Phase2Result r = run_phase2(loaded.instance.clients, model, cfg.phase2,
                                    loaded.instance.truth);
  write_phase2_outputs(out, r, loaded.mixture.seed);
}

EvalReport evaluate_run(const fs::path& run_dir, double c_cal) {
  GroundTruth truth;
  std::vector<std::size_t> sizes;
  double sigma = 0.0;
  if (fs::exists(run_dir / "truth.json")) {
    const Json j = read_json(run_dir / "truth.json");
    truth = truth_from_json(j);
    sizes = j.at("sizes").get<std::vector<std::size_t>>();
    sigma = j.at("sigma").get<double>();
  } else if (fs::exists(run_dir / "instance" / "manifest.json")) {
    const LoadedInstance loaded = load_instance(run_dir / "instance");
    truth = loaded.instance.truth;
    sizes = loaded.instance.sizes();
    sigma = loaded.mixture.sigma;
  } else {
    throw ConfigError(run_dir.string() + ": no truth.json or instance/manifest.json");
  }
  if (!fs::exists(run_dir / "phase2.json"))
    throw ConfigError(run_dir.string() + ": no phase2.json");
  const Json p2 = read_json(run_dir / "phase2.json");
  return evaluate(vectors_from_json(p2.at("thetas")),
                  p2.at("labels").get<std::vector<std::size_t>>(), truth, sizes, sigma,
                  c_cal);
}

}  // namespace fedmix
