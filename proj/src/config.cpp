#include "fedmix/config.hpp"

#include <fstream>

#include "fedmix/error.hpp"

namespace fedmix {
namespace {

template <typename T>
T get(const Json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) && !j.at(key).is_null() ? get<T>(j, key) : fallback;
}

template <typename T>
std::optional<T> get_opt(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<T>(j, key);
}

SizeSpec parse_sizes(const Json& j) {
  SizeSpec s;
  if (j.is_array()) {
    s.kind = SizeSpec::Kind::kExplicit;
    s.sizes = j.get<std::vector<std::size_t>>();
  } else if (j.contains("uniform")) {
    s.kind = SizeSpec::Kind::kUniform;
    s.n_min = get<std::size_t>(j["uniform"], "min");
    s.n_max = get<std::size_t>(j["uniform"], "max");
  } else if (j.contains("zipf")) {
    s.kind = SizeSpec::Kind::kZipf;
    s.zipf_exponent = get<double>(j["zipf"], "s");
    s.n_min = get<std::size_t>(j["zipf"], "min");
    s.n_max = get<std::size_t>(j["zipf"], "max");
  } else if (j.contains("blocks")) {
    s.kind = SizeSpec::Kind::kBlocks;
    for (const auto& b : j["blocks"])
      s.blocks.push_back({get<std::size_t>(b, "count"), get<std::size_t>(b, "n")});
  } else {
    throw ConfigError("sizes: expected a list, or an object with uniform/zipf/blocks");
  }
  return s;
}

Json sizes_to_json(const SizeSpec& s) {
  switch (s.kind) {
    case SizeSpec::Kind::kExplicit:
      return s.sizes;
    case SizeSpec::Kind::kUniform:
      return {{"uniform", {{"min", s.n_min}, {"max", s.n_max}}}};
    case SizeSpec::Kind::kZipf:
      return {{"zipf", {{"s", s.zipf_exponent}, {"min", s.n_min}, {"max", s.n_max}}}};
    case SizeSpec::Kind::kBlocks: {
      Json blocks = Json::array();
      for (const auto& b : s.blocks) blocks.push_back({{"count", b.count}, {"n", b.n}});
      return {{"blocks", blocks}};
    }
  }
  return nullptr;
}

std::size_t implied_client_count(const SizeSpec& s) {
  if (s.kind == SizeSpec::Kind::kExplicit) return s.sizes.size();
  std::size_t total = 0;
  for (const auto& b : s.blocks) total += b.count;
  return total;
}

}  // namespace

Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw ConfigError("expected a numeric array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError("expected a numeric array");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Json vectors_to_json(const std::vector<Vector>& vs) {
  Json out = Json::array();
  for (const auto& v : vs) out.push_back(vector_to_json(v));
  return out;
}

std::vector<Vector> vectors_from_json(const Json& j) {
  if (!j.is_array()) throw ConfigError("expected an array of vectors");
  std::vector<Vector> out;
  for (const auto& v : j) out.push_back(vector_from_json(v));
  return out;
}

MixtureConfig parse_mixture(const Json& j) {
  if (!j.is_object()) throw ConfigError("mixture section must be an object");
  MixtureConfig cfg;
  cfg.k = get<std::size_t>(j, "k");
  cfg.d = get<std::size_t>(j, "d");
  cfg.sizes = parse_sizes(j.contains("sizes") ? j["sizes"] : throw ConfigError("missing field 'sizes'"));
  const bool count_implied = cfg.sizes.kind == SizeSpec::Kind::kExplicit ||
                             cfg.sizes.kind == SizeSpec::Kind::kBlocks;
  cfg.M = count_implied ? get_or<std::size_t>(j, "M", implied_client_count(cfg.sizes))
                        : get<std::size_t>(j, "M");
  cfg.p = get_or<std::vector<double>>(j, "p", {});
  cfg.sigma = get_or<double>(j, "sigma", 0.0);
  cfg.alpha = get_or<double>(j, "alpha", 1.0);
  cfg.beta = get_or<double>(j, "beta", 1.0);
  cfg.R = get<double>(j, "R");
  cfg.radius = get_or<double>(j, "radius", 0.0);
  cfg.delta_target = get_or<double>(j, "delta_target", 0.0);
  cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
  if (j.contains("thetas") && !j["thetas"].is_null()) cfg.thetas = vectors_from_json(j["thetas"]);

  cfg.feature_map = FeatureMap::identity(cfg.d);
  if (j.contains("feature_map")) {
    const Json& fm = j["feature_map"];
    if (fm.is_string() && fm.get<std::string>() == "identity") {
    } else if (fm.is_object() && fm.contains("polynomial")) {
      cfg.feature_map = FeatureMap::polynomial(get<std::size_t>(fm["polynomial"], "raw_dim"),
                                               get<std::size_t>(fm["polynomial"], "degree"));
    } else {
      throw ConfigError("feature_map: expected \"identity\" or {\"polynomial\": ...}");
    }
  }

  if (j.contains("covariances")) {
    const Json& cov = j["covariances"];
    if (cov.is_string() && cov.get<std::string>() == "identity") {
      cfg.covariances.kind = CovarianceSpec::Kind::kIdentity;
    } else if (cov.is_string() && cov.get<std::string>() == "random") {
      cfg.covariances.kind = CovarianceSpec::Kind::kRandom;
    } else if (cov.is_array()) {
      cfg.covariances.kind = CovarianceSpec::Kind::kExplicit;
      cfg.covariances.diagonals = vectors_from_json(cov);
    } else {
      throw ConfigError("covariances: expected \"identity\", \"random\" or a list");
    }
  }
  validate(cfg);
  return cfg;
}

Json mixture_to_json(const MixtureConfig& cfg) {
  Json j;
  j["k"] = cfg.k;
  j["d"] = cfg.d;
  j["M"] = cfg.M;
  j["sizes"] = sizes_to_json(cfg.sizes);
  j["p"] = mixing_weights(cfg);
  j["sigma"] = cfg.sigma;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["R"] = cfg.R;
  j["radius"] = cfg.radius;
  j["delta_target"] = cfg.delta_target;
  j["seed"] = cfg.seed;
  if (!cfg.thetas.empty()) j["thetas"] = vectors_to_json(cfg.thetas);
  if (cfg.feature_map.kind == FeatureMap::Kind::kIdentity)
    j["feature_map"] = "identity";
  else
    j["feature_map"] = {{"polynomial",
                         {{"raw_dim", cfg.feature_map.raw_dim},
                          {"degree", cfg.feature_map.degree}}}};
  switch (cfg.covariances.kind) {
    case CovarianceSpec::Kind::kIdentity:
      j["covariances"] = "identity";
      break;
    case CovarianceSpec::Kind::kRandom:
      j["covariances"] = "random";
      break;
    case CovarianceSpec::Kind::kExplicit:
      j["covariances"] = vectors_to_json(cfg.covariances.diagonals);
      break;
  }
  return j;
}

Phase1Config Phase1Section::resolve(const MixtureConfig& mixture,
                                    const GroundTruth& truth) const {
  Phase1Config cfg = base;
  cfg.k = mixture.k;
  cfg.delta_hint = delta_hint.value_or(truth.delta);
  cfg.alpha = alpha.value_or(mixture.alpha);
  cfg.beta = beta.value_or(mixture.beta);
  return cfg;
}

Phase1Section parse_phase1(const Json& j, const MixtureConfig& mixture) {
  if (!j.is_object()) throw ConfigError("phase1 section must be an object");
  if (j.contains("k") && get<std::size_t>(j, "k") != mixture.k)
    throw ConfigError("phase1.k disagrees with mixture.k");
  Phase1Section s;
  Phase1Config& c = s.base;
  c.k = mixture.k;
  c.n_H = get<std::size_t>(j, "n_H");
  c.m = get<std::size_t>(j, "m");
  c.ell = get<std::size_t>(j, "ell");
  c.T = get<std::size_t>(j, "T");
  c.T1 = get<std::size_t>(j, "T1");
  c.T2 = get<std::size_t>(j, "T2");
  c.epsilon = get<double>(j, "epsilon");
  c.allow_data_reuse = get_or<bool>(j, "allow_data_reuse", false);
  c.min_local = get_opt<std::size_t>(j, "min_local");
  if (j.contains("theta0") && !j["theta0"].is_null()) {
    c.theta0 = vector_from_json(j["theta0"]);
    if (static_cast<std::size_t>(c.theta0.size()) != mixture.d)
      throw ConfigError("phase1.theta0 length differs from mixture.d");
    if (c.theta0.norm() > mixture.R * (1.0 + 1e-12))
      throw ConfigError("phase1.theta0 exceeds the norm bound R");
  }
  s.delta_hint = get_opt<double>(j, "delta_hint");
  s.alpha = get_opt<double>(j, "alpha");
  s.beta = get_opt<double>(j, "beta");

  // Validate with placeholder constants where defaults apply later.
  Phase1Config probe = c;
  probe.delta_hint = s.delta_hint.value_or(1.0);
  probe.alpha = s.alpha.value_or(mixture.alpha);
  probe.beta = s.beta.value_or(mixture.beta);
  validate(probe);
  return s;
}

Phase2Config parse_phase2(const Json& j) {
  if (!j.is_object()) throw ConfigError("phase2 section must be an object");
  Phase2Config c;
  c.mode = parse_fed_mode(get_or<std::string>(j, "mode", "fedavg"));
  c.gamma_target = get_opt<double>(j, "gamma_target");
  c.eta = c.gamma_target ? 0.0 : get<double>(j, "eta");
  c.s = get_or<std::size_t>(j, "s", 1);
  c.T_prime = get<std::size_t>(j, "T_prime");
  const auto tie = get_or<std::string>(j, "tie_break", "lowest-index");
  if (tie != "lowest-index") throw ConfigError("phase2.tie_break must be \"lowest-index\"");
  validate(c);
  return c;
}

ExperimentConfig parse_experiment(const Json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig cfg;
  if (!j.contains("mixture")) throw ConfigError("missing section 'mixture'");
  cfg.mixture = parse_mixture(j["mixture"]);
  if (!j.contains("phase1")) throw ConfigError("missing section 'phase1'");
  cfg.phase1 = parse_phase1(j["phase1"], cfg.mixture);
  if (!j.contains("phase2")) throw ConfigError("missing section 'phase2'");
  const Json& p2 = j["phase2"];
  if (p2.contains("k") && get<std::size_t>(p2, "k") != cfg.mixture.k)
    throw ConfigError("phase2.k disagrees with mixture.k");
  cfg.phase2 = parse_phase2(p2);
  cfg.seeds = get_or<std::vector<std::uint64_t>>(j, "seeds", {cfg.mixture.seed});
  if (cfg.seeds.empty()) throw ConfigError("seeds must be non-empty");
  cfg.output_dir = get_or<std::string>(j, "output_dir", "");
  cfg.emit_instance = get_or<bool>(j, "emit_instance", false);
  cfg.c_cal = get_or<double>(j, "c_cal", 1.0);
  if (!(cfg.c_cal > 0.0)) throw ConfigError("c_cal must be positive");
  return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_experiment(j);
}

}  // namespace fedmix
