#pragma once

// Regularized finite-sum approximation of a stochastic problem: sharding,
// the regularization weight, and theoretical/empirical Hessian similarity.

#include <acn/objective.hpp>

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <vector>

namespace acn {

enum class MuRule { LogNOverN, InvSqrtN };

const char* to_string(MuRule rule);
MuRule parse_mu_rule(const std::string& s);

/// F(x) = (1/m) sum_k f_k(x), each f_k carrying the full regularizer so that
/// the average reproduces (mu/2)||x - x0||^2 exactly once.
struct SaaProblem {
  std::vector<ObjectiveShard> shards;
  std::size_t m = 0;
  std::size_t n = 0;
  double mu = 0;  ///< SAA regularization weight
  Vector x0;
  double beta_theory = 0;
  std::optional<double> beta_hat;
  double R = 1.0;  ///< solution-ball radius estimate

  Eigen::Index d() const { return x0.size(); }
  ObjectiveKind kind() const { return shards.front().kind(); }

  /// Sums run over shards in ascending worker order.
  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  Matrix hessian(const Vector& x) const;

  /// Modulus of strong convexity guaranteed by the construction (mu_reg + ridge).
  double strong_convexity() const;

  /// Constants of F: L0 and L1 averaged, L bounded by the mean of the shards'.
  LipschitzConstants constants() const;
};

struct ShardOptions {
  ObjectiveKind kind = ObjectiveKind::Logistic;
  double mu_reg = 0;
  std::optional<Vector> anchor;  ///< defaults to the origin
  double ridge = 0;              ///< intrinsic per-sample strong convexity
  double domain_radius = 10.0;
  bool shuffle = true;           ///< one global shuffle seeded by ds.seed
};

/// Contiguous split into m shards of n = N/m samples after one global shuffle.
std::vector<ObjectiveShard> shard_dataset(const Dataset& ds, std::size_t m,
                                          const ShardOptions& opt = {});

/// mu = L0 ln N / (R N).
double regularization_mu(double L0, double R, std::size_t N);

/// mu = L0 / (R sqrt N).
double regularization_mu_inv_sqrt(double L0, double R, std::size_t N);

/// sqrt(32 L^2 d / n), logarithmic factors dropped.
double similarity_bound(double L, Eigen::Index d, std::size_t n);

struct SaaOptions {
  ObjectiveKind kind = ObjectiveKind::Logistic;
  std::size_t m = 1;
  double R = 1.0;
  MuRule mu_rule = MuRule::LogNOverN;
  double mu_scale = 1.0;
  double beta_scale = 1.0;
  double ridge = 0;
  bool regularize = true;  ///< false for intrinsically strongly convex losses
  std::optional<Vector> x0;
};

/// Builds the regularized problem from a dataset: loss constants, mu by rule,
/// theoretical beta, and the shards.
SaaProblem build_saa_problem(const Dataset& ds, const SaaOptions& opt);

/// Problem over explicitly given shards (all sharing dimension and anchor).
SaaProblem make_problem(std::vector<ObjectiveShard> shards, Vector x0, double mu = 0.0);

struct SimilarityReport {
  std::vector<Vector> probe_points;
  std::vector<double> per_worker_max;
  double beta_hat = 0;
  std::size_t n = 0;
  Eigen::Index d = 0;
};

/// ||grad^2 f_k(x) - grad^2 F(x)|| in spectral norm.
double hessian_deviation(const SaaProblem& problem, std::size_t k, const Vector& x);

/// Offline diagnostic: max over workers and probes of the spectral deviation
/// of local Hessians from the global one.
SimilarityReport estimate_beta(const SaaProblem& problem, const std::vector<Vector>& probes);

/// x0 plus `count` points uniform in the ball of radius `radius` around x0.
std::vector<Vector> default_probes(const SaaProblem& problem, std::size_t count, double radius,
                                   std::uint64_t seed);

nlohmann::json to_json(const SimilarityReport& report);

}  // namespace acn
