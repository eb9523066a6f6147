#include <acn/objective.hpp>
#include <acn/random.hpp>
#include <acn/wire.hpp>

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace acn {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParameter: return "invalid-parameter";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::NonSymmetric: return "non-symmetric";
    case ErrorCode::DimensionOverLimit: return "dimension-over-limit";
    case ErrorCode::NotPositiveSemidefinite: return "not-psd";
    case ErrorCode::NonConvergence: return "nonconvergence";
    case ErrorCode::IndivisibleN: return "indivisible-N";
    case ErrorCode::TooManyWorkers: return "too-many-workers";
    case ErrorCode::DegenerateEstimateSequence: return "degenerate-estimate-sequence";
    case ErrorCode::OddCommunicationCount: return "odd-T";
    case ErrorCode::Transport: return "transport";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::MalformedMessage: return "malformed-message";
    case ErrorCode::RuntimeClosed: return "runtime-closed";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

const char* to_string(ObjectiveKind kind) {
  return kind == ObjectiveKind::Logistic ? "logistic" : "quadratic";
}

ObjectiveKind parse_objective_kind(const std::string& s) {
  if (s == "logistic") return ObjectiveKind::Logistic;
  if (s == "quadratic") return ObjectiveKind::Quadratic;
  throw Error(ErrorCode::InvalidParameter, "unknown objective kind '" + s + "'");
}

namespace {

// log(1 + exp(t))
double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

Vector ground_truth(std::uint64_t seed, Eigen::Index d, const GenOptions& opt) {
  auto rng = rng_stream(seed, streams::kTruth);
  std::normal_distribution<double> normal;
  Vector w(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    w(j) = normal(rng);
  }
  const double n = w.norm();
  if (n > 0) {
    w *= opt.truth_norm / n;
  }
  return w;
}

Dataset gen_synthetic(std::uint64_t seed, std::size_t N, Eigen::Index d, ObjectiveKind kind,
                      double feat_bound, const GenOptions& opt) {
  if (N == 0 || d <= 0) {
    throw Error(ErrorCode::InvalidParameter, "gen_synthetic: N and d must be >= 1");
  }
  if (!(feat_bound > 0)) {
    throw Error(ErrorCode::InvalidParameter, "gen_synthetic: feat_bound must be > 0");
  }
  const Vector truth = ground_truth(seed, d, opt);
  auto feat_rng = rng_stream(seed, streams::kFeatures);
  auto label_rng = rng_stream(seed, streams::kLabels);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  const double scale = feat_bound / std::sqrt(static_cast<double>(d));

  Dataset ds;
  ds.d = d;
  ds.seed = seed;
  ds.samples.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    DataSample s;
    s.features.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      s.features(j) = scale * normal(feat_rng);
    }
    const double norm = s.features.norm();
    if (norm > feat_bound) {
      s.features *= feat_bound / norm;
    }
    const double margin = s.features.dot(truth);
    if (kind == ObjectiveKind::Logistic) {
      double y = margin >= 0 ? 1.0 : -1.0;
      if (uniform(label_rng) < opt.label_noise) {
        y = -y;
      }
      s.label = y;
    } else {
      s.label = margin + opt.label_noise * normal(label_rng);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

ObjectiveShard ObjectiveShard::from_samples(ObjectiveKind kind, const std::vector<DataSample>& samples,
                                            Eigen::Index d, double mu_reg, Vector anchor,
                                            double ridge) {
  if (d <= 0) {
    throw Error(ErrorCode::InvalidParameter, "ObjectiveShard: d must be >= 1");
  }
  if (!(mu_reg >= 0) || !(ridge >= 0)) {
    throw Error(ErrorCode::InvalidParameter, "ObjectiveShard: mu_reg and ridge must be >= 0");
  }
  require_dim(anchor.size(), d, "ObjectiveShard: anchor");
  ObjectiveShard s;
  s.kind_ = kind;
  s.d_ = d;
  s.mu_reg_ = mu_reg;
  s.ridge_ = ridge;
  s.anchor_ = std::move(anchor);
  const auto n = static_cast<Eigen::Index>(samples.size());
  s.features_.resize(n, d);
  s.labels_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& sample = samples[static_cast<std::size_t>(i)];
    require_dim(sample.features.size(), d, "ObjectiveShard: sample features");
    if (kind == ObjectiveKind::Logistic && std::abs(sample.label) != 1.0) {
      throw Error(ErrorCode::InvalidParameter, "ObjectiveShard: logistic labels must be +-1");
    }
    s.features_.row(i) = sample.features.transpose();
    s.labels_(i) = sample.label;
  }
  if (kind == ObjectiveKind::Quadratic) {
    s.ls_hessian_ = n > 0 ? Matrix(s.features_.transpose() * s.features_ / double(n))
                          : Matrix(Matrix::Zero(d, d));
  }
  return s;
}

ObjectiveShard ObjectiveShard::quadratic_form(Matrix Q, Vector c, double mu_reg,
                                              std::optional<Vector> anchor) {
  const Eigen::Index d = c.size();
  require_dim(Q.rows(), d, "quadratic_form: Q rows");
  require_dim(Q.cols(), d, "quadratic_form: Q cols");
  ObjectiveShard s = from_samples(ObjectiveKind::Quadratic, {}, d, mu_reg,
                                  anchor ? *anchor : Vector(Vector::Zero(d)));
  s.has_quad_ = true;
  s.quad_Q_ = std::move(Q);
  s.quad_c_ = std::move(c);
  return s;
}

std::vector<DataSample> ObjectiveShard::samples() const {
  std::vector<DataSample> out(static_cast<std::size_t>(labels_.size()));
  for (Eigen::Index i = 0; i < labels_.size(); ++i) {
    out[static_cast<std::size_t>(i)] = {features_.row(i).transpose(), labels_(i)};
  }
  return out;
}

ObjectiveShard ObjectiveShard::with_domain_radius(double radius) const {
  if (!(radius > 0)) {
    throw Error(ErrorCode::InvalidParameter, "with_domain_radius: radius must be > 0");
  }
  ObjectiveShard s = *this;
  s.domain_radius_ = radius;
  return s;
}

double ObjectiveShard::value_gradient(const Vector& x, Vector* grad) const {
  require_dim(x.size(), d_, "eval_f: x");
  const auto n = labels_.size();
  double f = 0;
  if (grad) {
    grad->setZero(d_);
  }
  if (n > 0) {
    const Vector margins = features_ * x;
    if (kind_ == ObjectiveKind::Logistic) {
      Vector coef(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double z = labels_(i) * margins(i);
        f += softplus(-z);
        coef(i) = -labels_(i) * sigmoid(-z);
      }
      if (grad) {
        *grad += features_.transpose() * coef / double(n);
      }
    } else {
      const Vector resid = margins - labels_;
      f += 0.5 * resid.squaredNorm();
      if (grad) {
        *grad += features_.transpose() * resid / double(n);
      }
    }
    f /= double(n);
  }
  if (ridge_ > 0) {
    f += 0.5 * ridge_ * x.squaredNorm();
    if (grad) *grad += ridge_ * x;
  }
  if (has_quad_) {
    const Vector dx = x - quad_c_;
    const Vector qdx = quad_Q_ * dx;
    f += 0.5 * dx.dot(qdx);
    if (grad) *grad += qdx;
  }
  if (mu_reg_ > 0) {
    const Vector dx = x - anchor_;
    f += 0.5 * mu_reg_ * dx.squaredNorm();
    if (grad) *grad += mu_reg_ * dx;
  }
  return f;
}

double ObjectiveShard::value(const Vector& x) const { return value_gradient(x, nullptr); }

Vector ObjectiveShard::gradient(const Vector& x) const {
  Vector g;
  value_gradient(x, &g);
  return g;
}

Matrix ObjectiveShard::hessian(const Vector& x) const {
  require_dim(x.size(), d_, "eval_hessian: x");
  const auto n = labels_.size();
  Matrix H = Matrix::Zero(d_, d_);
  if (n > 0) {
    if (kind_ == ObjectiveKind::Logistic) {
      const Vector margins = features_ * x;
      Vector w(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double s = sigmoid(labels_(i) * margins(i));
        w(i) = s * (1.0 - s) / double(n);
      }
      H.selfadjointView<Eigen::Lower>().rankUpdate(features_.transpose() * w.cwiseSqrt().asDiagonal());
      H.triangularView<Eigen::StrictlyUpper>() = H.transpose();
    } else {
      H += ls_hessian_;
    }
  }
  if (has_quad_) {
    H += quad_Q_;
  }
  H.diagonal().array() += ridge_ + mu_reg_;
  return H;
}

double eval_f(const ObjectiveShard& shard, const Vector& x) { return shard.value(x); }
Vector eval_grad(const ObjectiveShard& shard, const Vector& x) { return shard.gradient(x); }
Matrix eval_hessian(const ObjectiveShard& shard, const Vector& x) { return shard.hessian(x); }

LipschitzConstants lipschitz_constants(const ObjectiveShard& shard) {
  const Eigen::Index n = shard.labels().size();
  const double radius = shard.domain_radius();
  const double reach = shard.anchor().norm() + radius;  // max ||x|| on the ball
  double mean1 = 0, mean2 = 0, mean3 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = shard.features().row(i).norm();
    mean1 += a;
    mean2 += a * a;
    mean3 += a * a * a;
  }
  if (n > 0) {
    mean1 /= double(n);
    mean2 /= double(n);
    mean3 /= double(n);
  }

  LipschitzConstants c;
  if (shard.kind() == ObjectiveKind::Logistic) {
    c.L0 = mean1;
    c.L1 = 0.25 * mean2;
    c.L = kLogisticThirdDerivBound * mean3;
  } else {
    // |a^T x - y| ||a|| <= (||a|| reach + |y|) ||a||
    double l0 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = shard.features().row(i).norm();
      l0 += (a * reach + std::abs(shard.labels()(i))) * a;
    }
    c.L0 = n > 0 ? l0 / double(n) : 0.0;
    c.L1 = mean2;
    if (shard.has_quadratic_term()) {
      const double qnorm = shard.quad_Q().operatorNorm();
      c.L0 += qnorm * (reach + shard.quad_c().norm());
      c.L1 += qnorm;
    }
    c.L = 0;
  }
  c.L0 += shard.ridge() * reach + shard.mu_reg() * radius;
  c.L1 += shard.ridge() + shard.mu_reg();
  return c;
}

DerivativeReport check_derivatives(const ObjectiveShard& shard, const Vector& x, double h) {
  if (!(h > 0)) {
    throw Error(ErrorCode::InvalidParameter, "check_derivatives: h must be > 0");
  }
  const Eigen::Index d = shard.dim();
  require_dim(x.size(), d, "check_derivatives: x");
  const Vector g = shard.gradient(x);
  const Matrix H = shard.hessian(x);
  Vector g_fd(d);
  Matrix H_fd(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Vector xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    g_fd(j) = (shard.value(xp) - shard.value(xm)) / (2 * h);
    H_fd.col(j) = (shard.gradient(xp) - shard.gradient(xm)) / (2 * h);
  }
  DerivativeReport r;
  r.max_rel_err_grad = (g_fd - g).cwiseAbs().maxCoeff() / std::max(1.0, g.cwiseAbs().maxCoeff());
  r.max_rel_err_hess = (H_fd - H).cwiseAbs().maxCoeff() / std::max(1.0, H.cwiseAbs().maxCoeff());
  return r;
}

void write_csv(const Dataset& ds, std::ostream& out) {
  out << "label";
  for (Eigen::Index j = 0; j < ds.d; ++j) {
    out << ",f" << j;
  }
  out << '\n';
  out << std::setprecision(17);
  for (const auto& s : ds.samples) {
    out << s.label;
    for (Eigen::Index j = 0; j < ds.d; ++j) {
      out << ',' << s.features(j);
    }
    out << '\n';
  }
}

Dataset read_csv(std::istream& in, std::uint64_t seed) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::Io, "read_csv: missing header");
  }
  Eigen::Index d = 0;
  {
    std::stringstream header(line);
    std::string cell;
    std::getline(header, cell, ',');
    if (cell != "label") {
      throw Error(ErrorCode::Io, "read_csv: header must start with 'label'");
    }
    while (std::getline(header, cell, ',')) {
      if (cell != "f" + std::to_string(d)) {
        throw Error(ErrorCode::Io, "read_csv: unexpected column '" + cell + "'");
      }
      ++d;
    }
  }
  Dataset ds;
  ds.d = d;
  ds.seed = seed;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(row, cell, ',')) {
      values.push_back(std::stod(cell));
    }
    if (static_cast<Eigen::Index>(values.size()) != d + 1) {
      throw Error(ErrorCode::Io, "read_csv: row has wrong number of columns");
    }
    DataSample s;
    s.label = values[0];
    s.features = Eigen::Map<const Vector>(values.data() + 1, d);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<std::uint8_t> to_binary(const Dataset& ds) {
  std::vector<double> values;
  values.reserve(2 + ds.N() * static_cast<std::size_t>(ds.d + 1));
  values.push_back(static_cast<double>(ds.N()));
  values.push_back(static_cast<double>(ds.d));
  for (const auto& s : ds.samples) {
    values.push_back(s.label);
    values.insert(values.end(), s.features.data(), s.features.data() + s.features.size());
  }
  return wire::encode_payload(values);
}

Dataset from_binary(const std::vector<std::uint8_t>& bytes, std::uint64_t seed) {
  const auto values = wire::decode_payload(bytes);
  if (values.size() < 2) {
    throw Error(ErrorCode::Io, "from_binary: missing N and d");
  }
  const auto N = static_cast<std::size_t>(values[0]);
  const auto d = static_cast<Eigen::Index>(values[1]);
  if (values.size() != 2 + N * static_cast<std::size_t>(d + 1)) {
    throw Error(ErrorCode::Io, "from_binary: value count does not match N and d");
  }
  Dataset ds;
  ds.d = d;
  ds.seed = seed;
  ds.samples.resize(N);
  const double* p = values.data() + 2;
  for (auto& s : ds.samples) {
    s.label = *p++;
    s.features = Eigen::Map<const Vector>(p, d);
    p += d;
  }
  return ds;
}

}  // namespace acn
