#include <acn/random.hpp>
#include <acn/saa.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace acn {

const char* to_string(MuRule rule) {
  return rule == MuRule::LogNOverN ? "logN_over_N" : "inv_sqrt_N";
}

MuRule parse_mu_rule(const std::string& s) {
  if (s == "logN_over_N") return MuRule::LogNOverN;
  if (s == "inv_sqrt_N") return MuRule::InvSqrtN;
  throw Error(ErrorCode::Config, "unknown mu_rule '" + s + "'");
}

double SaaProblem::value(const Vector& x) const {
  double f = 0;
  for (const auto& s : shards) {
    f += s.value(x);
  }
  return f / double(m);
}

Vector SaaProblem::gradient(const Vector& x) const {
  Vector g = Vector::Zero(d());
  for (const auto& s : shards) {
    g += s.gradient(x);
  }
  return g / double(m);
}

Matrix SaaProblem::hessian(const Vector& x) const {
  Matrix H = Matrix::Zero(d(), d());
  for (const auto& s : shards) {
    H += s.hessian(x);
  }
  return H / double(m);
}

double SaaProblem::strong_convexity() const {
  double mod = 0;
  for (const auto& s : shards) {
    mod += s.mu_reg() + s.ridge();
  }
  return mod / double(m);
}

LipschitzConstants SaaProblem::constants() const {
  LipschitzConstants c;
  for (const auto& s : shards) {
    const auto k = lipschitz_constants(s);
    c.L0 += k.L0;
    c.L1 += k.L1;
    c.L += k.L;
  }
  c.L0 /= double(m);
  c.L1 /= double(m);
  c.L /= double(m);
  return c;
}

std::vector<ObjectiveShard> shard_dataset(const Dataset& ds, std::size_t m, const ShardOptions& opt) {
  const std::size_t N = ds.N();
  if (m == 0 || m > N) {
    throw Error(ErrorCode::TooManyWorkers,
                "shard_dataset: m = " + std::to_string(m) + " with N = " + std::to_string(N));
  }
  if (N % m != 0) {
    throw Error(ErrorCode::IndivisibleN,
                "shard_dataset: m = " + std::to_string(m) + " does not divide N = " + std::to_string(N));
  }
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (opt.shuffle) {
    auto rng = rng_stream(ds.seed, streams::kShuffle);
    // Fisher-Yates with explicit index draws; std::shuffle's algorithm is
    // implementation-defined.
    for (std::size_t i = N - 1; i > 0; --i) {
      const std::size_t j = rng() % (i + 1);
      std::swap(order[i], order[j]);
    }
  }
  const std::size_t n = N / m;
  const Vector anchor = opt.anchor ? *opt.anchor : Vector(Vector::Zero(ds.d));
  std::vector<ObjectiveShard> shards;
  shards.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<DataSample> part;
    part.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      part.push_back(ds.samples[order[k * n + j]]);
    }
    shards.push_back(ObjectiveShard::from_samples(opt.kind, part, ds.d, opt.mu_reg, anchor, opt.ridge)
                         .with_domain_radius(opt.domain_radius));
  }
  return shards;
}

double regularization_mu(double L0, double R, std::size_t N) {
  if (!(L0 > 0) || !(R > 0)) {
    throw Error(ErrorCode::InvalidParameter, "regularization_mu: L0 and R must be > 0");
  }
  if (N < 2) {
    throw Error(ErrorCode::InvalidParameter, "regularization_mu: N must be >= 2");
  }
  const double n = static_cast<double>(N);
  return L0 * std::log(n) / (R * n);
}

double regularization_mu_inv_sqrt(double L0, double R, std::size_t N) {
  if (!(L0 > 0) || !(R > 0) || N == 0) {
    throw Error(ErrorCode::InvalidParameter, "regularization_mu_inv_sqrt: invalid argument");
  }
  return L0 / (R * std::sqrt(static_cast<double>(N)));
}

double similarity_bound(double L, Eigen::Index d, std::size_t n) {
  if (n == 0) {
    throw Error(ErrorCode::InvalidParameter, "similarity_bound: n must be >= 1");
  }
  return std::sqrt(32.0 * L * L * double(d) / double(n));
}

SaaProblem build_saa_problem(const Dataset& ds, const SaaOptions& opt) {
  const ObjectiveKind kind = opt.kind;
  const Eigen::Index d = ds.d;
  const Vector x0 = opt.x0 ? *opt.x0 : Vector(Vector::Zero(d));
  require_dim(x0.size(), d, "build_saa_problem: x0");
  if (!(opt.R > 0)) {
    throw Error(ErrorCode::InvalidParameter, "build_saa_problem: R must be > 0");
  }
  const double domain_radius = 10.0 * opt.R;

  // Constants of the unregularized loss over the full sample.
  const auto loss = ObjectiveShard::from_samples(kind, ds.samples, d, 0.0, x0)
                        .with_domain_radius(domain_radius);
  const auto loss_c = lipschitz_constants(loss);

  double mu = 0;
  if (opt.regularize) {
    mu = opt.mu_scale * (opt.mu_rule == MuRule::LogNOverN
                             ? regularization_mu(loss_c.L0, opt.R, ds.N())
                             : regularization_mu_inv_sqrt(loss_c.L0, opt.R, ds.N()));
  }

  ShardOptions so;
  so.kind = kind;
  so.mu_reg = mu;
  so.anchor = x0;
  so.ridge = opt.ridge;
  so.domain_radius = domain_radius;

  SaaProblem p;
  p.shards = shard_dataset(ds, opt.m, so);
  p.m = opt.m;
  p.n = ds.N() / opt.m;
  p.mu = mu;
  p.x0 = x0;
  p.R = opt.R;
  p.beta_theory = opt.beta_scale * similarity_bound(loss_c.L1, d, p.n);
  return p;
}

SaaProblem make_problem(std::vector<ObjectiveShard> shards, Vector x0, double mu) {
  if (shards.empty()) {
    throw Error(ErrorCode::InvalidParameter, "make_problem: no shards");
  }
  for (const auto& s : shards) {
    require_dim(s.dim(), x0.size(), "make_problem: shard dimension");
  }
  SaaProblem p;
  p.m = shards.size();
  p.n = shards.front().sample_count();
  p.shards = std::move(shards);
  p.x0 = std::move(x0);
  p.mu = mu;
  return p;
}

double hessian_deviation(const SaaProblem& problem, std::size_t k, const Vector& x) {
  const Matrix diff = problem.shards.at(k).hessian(x) - problem.hessian(x);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(diff, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

SimilarityReport estimate_beta(const SaaProblem& problem, const std::vector<Vector>& probes) {
  if (probes.empty()) {
    throw Error(ErrorCode::InvalidParameter, "estimate_beta: need at least one probe");
  }
  SimilarityReport rep;
  rep.probe_points = probes;
  rep.per_worker_max.assign(problem.m, 0.0);
  rep.n = problem.n;
  rep.d = problem.d();
  for (const auto& x : probes) {
    require_dim(x.size(), problem.d(), "estimate_beta: probe");
    std::vector<Matrix> local(problem.m);
    Matrix global = Matrix::Zero(problem.d(), problem.d());
    for (std::size_t k = 0; k < problem.m; ++k) {
      local[k] = problem.shards[k].hessian(x);
      global += local[k];
    }
    global /= double(problem.m);
    for (std::size_t k = 0; k < problem.m; ++k) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(local[k] - global, Eigen::EigenvaluesOnly);
      rep.per_worker_max[k] = std::max(rep.per_worker_max[k], eig.eigenvalues().cwiseAbs().maxCoeff());
    }
  }
  rep.beta_hat = *std::max_element(rep.per_worker_max.begin(), rep.per_worker_max.end());
  return rep;
}

std::vector<Vector> default_probes(const SaaProblem& problem, std::size_t count, double radius,
                                   std::uint64_t seed) {
  auto rng = rng_stream(seed, streams::kProbes);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  const Eigen::Index d = problem.d();
  std::vector<Vector> probes{problem.x0};
  for (std::size_t i = 0; i < count; ++i) {
    Vector dir(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      dir(j) = normal(rng);
    }
    const double rad = radius * std::pow(uniform(rng), 1.0 / double(d));
    probes.push_back(problem.x0 + rad * dir / dir.norm());
  }
  return probes;
}

nlohmann::json to_json(const SimilarityReport& report) {
  return {{"beta_hat", report.beta_hat},
          {"per_worker_max", report.per_worker_max},
          {"n", report.n},
          {"d", report.d},
          {"probe_count", report.probe_points.size()}};
}

}  // namespace acn
