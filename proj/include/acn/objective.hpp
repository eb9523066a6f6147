#pragma once

// Synthetic convex test objectives with exact value/gradient/Hessian oracles
// and closed-form Lipschitz bounds.

#include <acn/linalg.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace acn {

enum class ObjectiveKind { Logistic, Quadratic };

const char* to_string(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(const std::string& s);

struct DataSample {
  Vector features;
  double label = 0;  ///< +-1 for logistic, real target for quadratic

  bool operator==(const DataSample&) const = default;
};

struct Dataset {
  std::vector<DataSample> samples;
  Eigen::Index d = 0;
  std::uint64_t seed = 0;

  std::size_t N() const { return samples.size(); }
  bool operator==(const Dataset&) const = default;
};

struct GenOptions {
  double label_noise = 0.1;  ///< flip probability (logistic) or noise std (quadratic)
  double truth_norm = 4.0;   ///< norm of the ground-truth parameter vector
};

/// iid samples: Gaussian features projected onto the ball of radius
/// feat_bound, labels from a fixed ground-truth linear model plus noise.
Dataset gen_synthetic(std::uint64_t seed, std::size_t N, Eigen::Index d, ObjectiveKind kind,
                      double feat_bound, const GenOptions& opt = {});

/// Ground-truth parameter used by gen_synthetic for this (seed, d).
Vector ground_truth(std::uint64_t seed, Eigen::Index d, const GenOptions& opt = {});

struct LipschitzConstants {
  double L0 = 0;  ///< value
  double L1 = 0;  ///< gradient
  double L = 0;   ///< Hessian
};

/// Local objective of one worker:
///
///   f(x) = (1/n) sum_i loss(a_i, y_i; x) + (ridge/2)||x||^2
///          + 1/2 (x - c)^T Q (x - c) + (mu_reg/2)||x - anchor||^2
///
/// with loss the logistic loss log(1 + exp(-y a^T x)) or the least-squares
/// loss 1/2 (a^T x - y)^2. The explicit quadratic term is optional and only
/// present on quadratic shards. Immutable after construction.
class ObjectiveShard {
 public:
  ObjectiveShard() = default;

  static ObjectiveShard from_samples(ObjectiveKind kind, const std::vector<DataSample>& samples,
                                     Eigen::Index d, double mu_reg, Vector anchor,
                                     double ridge = 0.0);

  /// f(x) = 1/2 (x - c)^T Q (x - c) + (mu_reg/2)||x - anchor||^2.
  static ObjectiveShard quadratic_form(Matrix Q, Vector c, double mu_reg = 0.0,
                                       std::optional<Vector> anchor = std::nullopt);

  ObjectiveKind kind() const { return kind_; }
  Eigen::Index dim() const { return d_; }
  std::size_t sample_count() const { return static_cast<std::size_t>(labels_.size()); }
  double mu_reg() const { return mu_reg_; }
  double ridge() const { return ridge_; }
  const Vector& anchor() const { return anchor_; }
  double domain_radius() const { return domain_radius_; }
  const Matrix& features() const { return features_; }
  const Vector& labels() const { return labels_; }
  bool has_quadratic_term() const { return has_quad_; }
  const Matrix& quad_Q() const { return quad_Q_; }
  const Vector& quad_c() const { return quad_c_; }

  std::vector<DataSample> samples() const;

  /// Radius of the ball around the anchor on which lipschitz_constants holds.
  ObjectiveShard with_domain_radius(double radius) const;

  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  Matrix hessian(const Vector& x) const;

  /// Value and gradient in one pass.
  double value_gradient(const Vector& x, Vector* grad) const;

 private:
  ObjectiveKind kind_ = ObjectiveKind::Logistic;
  Eigen::Index d_ = 0;
  Matrix features_;  ///< n x d, one sample per row
  Vector labels_;
  double mu_reg_ = 0;
  double ridge_ = 0;
  Vector anchor_;
  double domain_radius_ = 10.0;
  bool has_quad_ = false;
  Matrix quad_Q_;
  Vector quad_c_;
  Matrix ls_hessian_;  ///< A^T A / n for least squares
};

double eval_f(const ObjectiveShard& shard, const Vector& x);
Vector eval_grad(const ObjectiveShard& shard, const Vector& x);
Matrix eval_hessian(const ObjectiveShard& shard, const Vector& x);

/// Closed-form bounds valid on the ball of radius shard.domain_radius()
/// around the anchor. L is global for both kinds and exactly 0 for
/// quadratics.
LipschitzConstants lipschitz_constants(const ObjectiveShard& shard);

/// Largest |sigma''(t)| over the real line, 1/(6 sqrt 3).
inline constexpr double kLogisticThirdDerivBound = 0.096225044864937627;

struct DerivativeReport {
  double max_rel_err_grad = 0;
  double max_rel_err_hess = 0;
};

/// Central finite differences against the analytic oracles. Errors are
/// infinity norms relative to max(1, ||analytic||_inf).
DerivativeReport check_derivatives(const ObjectiveShard& shard, const Vector& x, double h);

// Dataset serialization.
void write_csv(const Dataset& ds, std::ostream& out);
Dataset read_csv(std::istream& in, std::uint64_t seed = 0);
std::vector<std::uint8_t> to_binary(const Dataset& ds);
Dataset from_binary(const std::vector<std::uint8_t>& bytes, std::uint64_t seed = 0);

}  // namespace acn
