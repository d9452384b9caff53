#include "fedmix/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fedmix/error.hpp"
#include "fedmix/rng.hpp"

namespace fedmix {
namespace {

// Exponent tuples of total degree `total` over `vars` variables, first
// variable's exponent descending.
void monomials_of_degree(std::size_t vars, std::size_t total,
                         std::vector<std::size_t>& prefix,
                         std::vector<std::vector<std::size_t>>& out) {
  if (prefix.size() + 1 == vars) {
    prefix.push_back(total);
    out.push_back(prefix);
    prefix.pop_back();
    return;
  }
  for (std::size_t e = total + 1; e-- > 0;) {
    prefix.push_back(e);
    monomials_of_degree(vars, total - e, prefix, out);
    prefix.pop_back();
  }
}

std::vector<std::vector<std::size_t>> monomial_basis(std::size_t vars,
                                                     std::size_t degree) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> prefix;
  for (std::size_t t = 0; t <= degree; ++t)
    monomials_of_degree(vars, t, prefix, out);
  return out;
}

std::size_t draw_zipf(Rng& rng, std::size_t n_min, std::size_t n_max,
                      double exponent) {
  double total = 0.0;
  for (std::size_t n = n_min; n <= n_max; ++n)
    total += std::pow(static_cast<double>(n), -exponent);
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t n = n_min; n <= n_max; ++n) {
    acc += std::pow(static_cast<double>(n), -exponent);
    if (u < acc) return n;
  }
  return n_max;
}

std::size_t draw_label(Rng& rng, const std::vector<double>& p) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < p.size(); ++j) {
    acc += p[j];
    if (u < acc) return j;
  }
  return p.size() - 1;
}

}  // namespace

FeatureMap FeatureMap::identity(std::size_t dim) {
  return FeatureMap{Kind::kIdentity, dim, 1};
}

FeatureMap FeatureMap::polynomial(std::size_t raw_dim, std::size_t degree) {
  return FeatureMap{Kind::kPolynomial, raw_dim, degree};
}

std::size_t FeatureMap::output_dim() const {
  if (kind == Kind::kIdentity) return raw_dim;
  // C(raw_dim + degree, degree)
  std::size_t num = 1;
  for (std::size_t i = 1; i <= degree; ++i) num = num * (raw_dim + i) / i;
  return num;
}

Vector feature_map(const Vector& raw_point, const FeatureMap& spec) {
  if (static_cast<std::size_t>(raw_point.size()) != spec.raw_dim)
    throw DimensionError("feature_map: raw point has dimension " +
                         std::to_string(raw_point.size()) + ", expected " +
                         std::to_string(spec.raw_dim));
  if (spec.kind == FeatureMap::Kind::kIdentity) return raw_point;

  const auto basis = monomial_basis(spec.raw_dim, spec.degree);
  Vector out(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t m = 0; m < basis.size(); ++m) {
    double v = 1.0;
    for (std::size_t i = 0; i < spec.raw_dim; ++i)
      for (std::size_t e = 0; e < basis[m][i]; ++e) v *= raw_point(i);
    out(static_cast<Eigen::Index>(m)) = v;
  }
  return out;
}

std::vector<double> mixing_weights(const MixtureConfig& cfg) {
  if (!cfg.p.empty()) return cfg.p;
  return std::vector<double>(cfg.k, 1.0 / static_cast<double>(cfg.k));
}

void validate(const MixtureConfig& cfg) {
  if (cfg.k == 0) throw ConfigError("k must be positive");
  if (cfg.d == 0) throw ConfigError("d must be positive");
  if (cfg.M == 0) throw ConfigError("M must be positive");
  if (cfg.feature_map.output_dim() != cfg.d)
    throw ConfigError("feature map produces " +
                      std::to_string(cfg.feature_map.output_dim()) +
                      " features but d = " + std::to_string(cfg.d));
  const auto p = mixing_weights(cfg);
  if (p.size() != cfg.k) throw ConfigError("p must have length k");
  double sum = 0.0;
  for (double pj : p) {
    if (!(pj > 0.0)) throw ConfigError("zero-probability mixture component");
    sum += pj;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("p must sum to 1");
  if (!(cfg.sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  if (!(cfg.alpha > 0.0) || !(cfg.alpha <= cfg.beta))
    throw ConfigError("covariance bounds require 0 < alpha <= beta");
  if (!(cfg.R > 0.0)) throw ConfigError("R must be positive");
  if (cfg.radius < 0.0 || cfg.radius > cfg.R)
    throw ConfigError("center radius must lie in [0, R]");

  if (cfg.covariances.kind == CovarianceSpec::Kind::kIdentity &&
      (cfg.alpha > 1.0 || cfg.beta < 1.0))
    throw ConfigError("covariance bound violated: identity outside [alpha, beta]");
  if (cfg.covariances.kind == CovarianceSpec::Kind::kExplicit) {
    const auto& diags = cfg.covariances.diagonals;
    if (diags.size() != cfg.k)
      throw ConfigError("need one covariance diagonal per cluster");
    for (const auto& diag : diags) {
      if (static_cast<std::size_t>(diag.size()) != cfg.feature_map.raw_dim)
        throw ConfigError("covariance diagonal has wrong dimension");
      if (diag.minCoeff() < cfg.alpha || diag.maxCoeff() > cfg.beta)
        throw ConfigError("covariance bound violated: entry outside [alpha, beta]");
    }
  }

  if (!cfg.thetas.empty()) {
    if (cfg.thetas.size() != cfg.k) throw ConfigError("need k explicit thetas");
    for (const auto& t : cfg.thetas) {
      if (static_cast<std::size_t>(t.size()) != cfg.d)
        throw ConfigError("explicit theta has wrong dimension");
      if (t.norm() > cfg.R * (1.0 + 1e-12))
        throw ConfigError("explicit theta exceeds norm bound R");
    }
  }

  const auto& s = cfg.sizes;
  switch (s.kind) {
    case SizeSpec::Kind::kExplicit:
      if (s.sizes.size() != cfg.M)
        throw ConfigError("explicit size list must have length M");
      for (std::size_t n : s.sizes)
        if (n == 0) throw ConfigError("client data count n_i = 0");
      break;
    case SizeSpec::Kind::kUniform:
    case SizeSpec::Kind::kZipf:
      if (s.n_min == 0) throw ConfigError("client data count n_i = 0");
      if (s.n_min > s.n_max) throw ConfigError("n_min > n_max");
      break;
    case SizeSpec::Kind::kBlocks: {
      std::size_t total = 0;
      for (const auto& b : s.blocks) {
        if (b.n == 0) throw ConfigError("client data count n_i = 0");
        total += b.count;
      }
      if (total != cfg.M) throw ConfigError("size blocks must cover M clients");
      break;
    }
  }
}

std::vector<std::size_t> resolve_sizes(const MixtureConfig& cfg) {
  const auto& s = cfg.sizes;
  switch (s.kind) {
    case SizeSpec::Kind::kExplicit:
      return s.sizes;
    case SizeSpec::Kind::kBlocks: {
      std::vector<std::size_t> out;
      out.reserve(cfg.M);
      for (const auto& b : s.blocks) out.insert(out.end(), b.count, b.n);
      return out;
    }
    case SizeSpec::Kind::kUniform: {
      Rng rng = make_stream(cfg.seed, Stream::kSizes);
      const std::size_t span = s.n_max - s.n_min + 1;
      std::vector<std::size_t> out(cfg.M);
      for (auto& n : out)
        n = s.n_min + std::min(span - 1, static_cast<std::size_t>(
                                             uniform01(rng) * static_cast<double>(span)));
      return out;
    }
    case SizeSpec::Kind::kZipf: {
      Rng rng = make_stream(cfg.seed, Stream::kSizes);
      std::vector<std::size_t> out(cfg.M);
      for (auto& n : out) n = draw_zipf(rng, s.n_min, s.n_max, s.zipf_exponent);
      return out;
    }
  }
  return {};
}

std::vector<Vector> resolve_covariances(const MixtureConfig& cfg) {
  const auto raw = static_cast<Eigen::Index>(cfg.feature_map.raw_dim);
  switch (cfg.covariances.kind) {
    case CovarianceSpec::Kind::kExplicit:
      return cfg.covariances.diagonals;
    case CovarianceSpec::Kind::kRandom: {
      Rng rng = make_stream(cfg.seed, Stream::kCovariances);
      std::vector<Vector> out(cfg.k, Vector(raw));
      for (auto& diag : out)
        for (Eigen::Index i = 0; i < raw; ++i)
          diag(i) = cfg.alpha + (cfg.beta - cfg.alpha) * uniform01(rng);
      return out;
    }
    case CovarianceSpec::Kind::kIdentity:
      break;
  }
  return std::vector<Vector>(cfg.k, Vector::Ones(raw));
}

std::vector<Vector> draw_centers(const MixtureConfig& cfg) {
  if (!cfg.thetas.empty()) return cfg.thetas;
  const double radius = cfg.radius > 0.0 ? cfg.radius : cfg.R;
  constexpr std::uint64_t kMaxAttempts = 100000;
  for (std::uint64_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng = make_stream(cfg.seed, Stream::kCenters, {attempt});
    std::vector<Vector> thetas;
    thetas.reserve(cfg.k);
    for (std::size_t j = 0; j < cfg.k; ++j) {
      Vector g = normal_vector(rng, static_cast<Eigen::Index>(cfg.d));
      thetas.push_back(radius * (g / g.norm()));
    }
    if (cfg.k < 2 || min_separation(thetas) >= cfg.delta_target) return thetas;
  }
  throw ConfigError("could not draw centers meeting the separation target");
}

double min_separation(const std::vector<Vector>& thetas) {
  if (thetas.size() < 2)
    throw DimensionError("min_separation needs at least two centers");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < thetas.size(); ++a)
    for (std::size_t b = a + 1; b < thetas.size(); ++b)
      best = std::min(best, (thetas[a] - thetas[b]).norm());
  return best;
}

std::size_t Instance::dim() const {
  if (!truth.thetas.empty()) return static_cast<std::size_t>(truth.thetas[0].size());
  return clients.empty() ? 0 : static_cast<std::size_t>(clients[0].features.cols());
}

std::vector<std::size_t> Instance::sizes() const {
  std::vector<std::size_t> out;
  out.reserve(clients.size());
  for (const auto& c : clients) out.push_back(c.size());
  return out;
}

std::size_t Instance::total_size() const {
  std::size_t n = 0;
  for (const auto& c : clients) n += c.size();
  return n;
}

Instance generate_instance(const MixtureConfig& cfg) {
  validate(cfg);
  Instance inst;
  GroundTruth& truth = inst.truth;
  truth.p = mixing_weights(cfg);
  truth.p_min = *std::min_element(truth.p.begin(), truth.p.end());
  truth.covariances = resolve_covariances(cfg);
  truth.thetas = draw_centers(cfg);
  truth.delta = cfg.k >= 2 ? min_separation(truth.thetas) : cfg.delta_target;

  std::vector<Vector> scales;
  scales.reserve(cfg.k);
  for (const auto& diag : truth.covariances) scales.push_back(diag.cwiseSqrt());

  const auto sizes = resolve_sizes(cfg);
  const auto raw_dim = static_cast<Eigen::Index>(cfg.feature_map.raw_dim);
  const auto d = static_cast<Eigen::Index>(cfg.d);
  const bool identity = cfg.feature_map.kind == FeatureMap::Kind::kIdentity;

  inst.clients.resize(cfg.M);
  truth.labels.resize(cfg.M);
  for (std::size_t i = 0; i < cfg.M; ++i) {
    Rng rng = make_stream(cfg.seed, Stream::kClient, {i});
    const std::size_t z = draw_label(rng, truth.p);
    truth.labels[i] = z;

    const auto n = static_cast<Eigen::Index>(sizes[i]);
    ClientDataset& client = inst.clients[i];
    client.features.resize(n, d);
    Vector noise(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      Vector raw(raw_dim);
      for (Eigen::Index c = 0; c < raw_dim; ++c)
        raw(c) = scales[z](c) * standard_normal(rng);
      client.features.row(r) =
          identity ? raw.transpose() : feature_map(raw, cfg.feature_map).transpose();
      noise(r) = cfg.sigma * standard_normal(rng);
    }
    client.responses = client.features * truth.thetas[z];
    client.responses += noise;
  }
  return inst;
}

}  // namespace fedmix
