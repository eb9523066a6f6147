#include <doctest.h>

#include <acn/objective.hpp>
#include <acn/random.hpp>

#include <cmath>
#include <sstream>

using namespace acn;

namespace {

ObjectiveShard single_logistic(const Vector& a, double y) {
  return ObjectiveShard::from_samples(ObjectiveKind::Logistic, {{a, y}}, a.size(), 0.0, Vector::Zero(a.size()));
}

ObjectiveShard identity_quadratic(const Vector& c) {
  return ObjectiveShard::quadratic_form(Matrix::Identity(c.size(), c.size()), c);
}

}  // namespace

TEST_CASE("gen_synthetic respects the feature bound and is deterministic") {
  const Dataset ds = gen_synthetic(7, 4, 2, ObjectiveKind::Logistic, 1.0);
  CHECK(ds.N() == 4);
  CHECK(ds.d == 2);
  for (const auto& s : ds.samples) {
    CHECK(s.features.norm() <= 1.0 + 1e-15);
    CHECK((s.label == 1.0 || s.label == -1.0));
  }
  CHECK(gen_synthetic(7, 4, 2, ObjectiveKind::Logistic, 1.0) == ds);
  CHECK_FALSE(gen_synthetic(8, 4, 2, ObjectiveKind::Logistic, 1.0) == ds);

  const Dataset big = gen_synthetic(3, 200, 5, ObjectiveKind::Quadratic, 0.5);
  for (const auto& s : big.samples) {
    CHECK(s.features.norm() <= 0.5 + 1e-15);
  }
}

TEST_CASE("gen_synthetic rejects empty shapes") {
  CHECK_THROWS_AS(gen_synthetic(7, 0, 2, ObjectiveKind::Logistic, 1.0), Error);
  CHECK_THROWS_AS(gen_synthetic(7, 4, 0, ObjectiveKind::Logistic, 1.0), Error);
  try {
    gen_synthetic(7, 0, 2, ObjectiveKind::Logistic, 1.0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidParameter);
  }
}

TEST_CASE("label noise flips roughly the requested fraction") {
  GenOptions clean;
  clean.label_noise = 0.0;
  GenOptions noisy;
  noisy.label_noise = 0.2;
  const Dataset a = gen_synthetic(11, 4000, 3, ObjectiveKind::Logistic, 1.0, clean);
  const Dataset b = gen_synthetic(11, 4000, 3, ObjectiveKind::Logistic, 1.0, noisy);
  const Vector w = ground_truth(11, 3, clean);
  int agree = 0, flipped = 0;
  for (std::size_t i = 0; i < a.N(); ++i) {
    agree += (a.samples[i].features.dot(w) >= 0) == (a.samples[i].label > 0);
    flipped += a.samples[i].label != b.samples[i].label;
  }
  CHECK(agree == 4000);
  CHECK(flipped == doctest::Approx(800).epsilon(0.15));
}

TEST_CASE("eval_f closed forms") {
  CHECK(eval_f(identity_quadratic(Vector::Unit(2, 0)), Vector::Unit(2, 0)) == 0.0);
  CHECK(eval_f(single_logistic(Vector::Unit(2, 0), 1.0), Vector::Zero(2)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const ObjectiveShard reg =
      ObjectiveShard::from_samples(ObjectiveKind::Logistic, {}, 2, 2.0, Vector::Zero(2));
  CHECK(eval_f(reg, Vector::Ones(2)) == doctest::Approx(2.0));
  CHECK_THROWS_AS(eval_f(reg, Vector::Ones(3)), Error);
}

TEST_CASE("gradient and Hessian closed forms") {
  const ObjectiveShard q = identity_quadratic(Vector::Unit(2, 0));
  const Vector x = (Vector(2) << 3, 0).finished();
  CHECK((eval_grad(q, x) - (Vector(2) << 2, 0).finished()).norm() == 0.0);
  CHECK((eval_hessian(q, x) - Matrix::Identity(2, 2)).norm() == 0.0);

  const ObjectiveShard lg = single_logistic(Vector::Unit(2, 0), 1.0);
  CHECK((eval_grad(lg, Vector::Zero(2)) - (Vector(2) << -0.5, 0).finished()).norm() < 1e-15);
  const Matrix H = eval_hessian(lg, Vector::Zero(2));
  CHECK(H(0, 0) == doctest::Approx(0.25));
  CHECK(H(1, 1) == 0.0);
  CHECK(H(0, 1) == 0.0);
  CHECK_THROWS_AS(eval_grad(lg, Vector::Zero(1)), Error);
  CHECK_THROWS_AS(eval_hessian(lg, Vector::Zero(3)), Error);
}

TEST_CASE("value_gradient agrees with the separate calls") {
  const Dataset ds = gen_synthetic(5, 30, 4, ObjectiveKind::Logistic, 1.0);
  const auto shard = ObjectiveShard::from_samples(ObjectiveKind::Logistic, ds.samples, 4, 0.3, Vector::Ones(4), 0.1);
  const Vector x = (Vector(4) << 0.3, -1, 2, 0.5).finished();
  Vector g;
  const double f = shard.value_gradient(x, &g);
  CHECK(f == shard.value(x));
  CHECK((g - shard.gradient(x)).norm() == 0.0);
}

TEST_CASE("logistic loss is stable for large margins") {
  const ObjectiveShard lg = single_logistic(Vector::Unit(1, 0), 1.0);
  const Vector far = Vector::Constant(1, -800.0);
  CHECK(std::isfinite(eval_f(lg, far)));
  CHECK(eval_f(lg, far) == doctest::Approx(800.0));
  CHECK(eval_f(lg, -far) >= 0.0);
  CHECK(eval_f(lg, -far) < 1e-300);
  CHECK(std::isfinite(eval_hessian(lg, far)(0, 0)));
}

TEST_CASE("third-derivative constant matches a brute-force maximum") {
  // |l'''(z)| for l(z) = log(1 + exp(-z)) equals s(1-s)|1-2s| with s the sigmoid.
  double best = 0;
  for (double z = -10.0; z <= 10.0; z += 1e-5) {
    const double s = 1.0 / (1.0 + std::exp(-z));
    best = std::max(best, s * (1 - s) * std::abs(1 - 2 * s));
  }
  CHECK(best == doctest::Approx(kLogisticThirdDerivBound).epsilon(1e-9));
  CHECK(kLogisticThirdDerivBound == doctest::Approx(1.0 / (6.0 * std::sqrt(3.0))).epsilon(1e-15));
}

TEST_CASE("Lipschitz constants") {
  CHECK(lipschitz_constants(identity_quadratic(Vector::Ones(3))).L == 0.0);

  std::vector<DataSample> unit;
  auto rng = rng_stream(1, 99);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 50; ++i) {
    Vector a(3);
    for (auto& v : a) v = nd(rng);
    unit.push_back({a.normalized(), i % 2 ? 1.0 : -1.0});
  }
  const auto shard = ObjectiveShard::from_samples(ObjectiveKind::Logistic, unit, 3, 0.0, Vector::Zero(3));
  const auto c = lipschitz_constants(shard);
  CHECK(c.L0 == doctest::Approx(1.0));
  CHECK(c.L1 <= 0.25 + 1e-15);
  CHECK(c.L <= 1.0 / (6.0 * std::sqrt(3.0)) + 1e-15);

  // Certified constants bound measured Hessian variation along random segments.
  for (int k = 0; k < 20; ++k) {
    Vector x(3), y(3);
    for (auto& v : x) v = nd(rng);
    for (auto& v : y) v = nd(rng);
    const Matrix dH = shard.hessian(x) - shard.hessian(y);
    CHECK(dH.operatorNorm() <= c.L * (x - y).norm() + 1e-12);
    CHECK(shard.hessian(x).operatorNorm() <= c.L1 + 1e-12);
    CHECK(shard.gradient(x).norm() <= c.L0 + 1e-12);
  }
}

TEST_CASE("finite-difference derivative checks") {
  const Dataset ds = gen_synthetic(9, 40, 5, ObjectiveKind::Logistic, 1.0);
  const auto lg = ObjectiveShard::from_samples(ObjectiveKind::Logistic, ds.samples, 5, 0.1, Vector::Zero(5));
  const Dataset dq = gen_synthetic(9, 40, 5, ObjectiveKind::Quadratic, 1.0);
  const auto qd = ObjectiveShard::from_samples(ObjectiveKind::Quadratic, dq.samples, 5, 0.1, Vector::Zero(5));
  const auto qf = ObjectiveShard::quadratic_form(Matrix::Identity(5, 5) * 3.0, Vector::Ones(5));

  auto rng = rng_stream(2, 7);
  std::uniform_real_distribution<double> ud(-2, 2);
  for (int k = 0; k < 20; ++k) {
    Vector x(5);
    for (auto& v : x) v = ud(rng);
    const auto rl = check_derivatives(lg, x, 1e-5);
    CHECK(rl.max_rel_err_grad <= 1e-5);
    CHECK(rl.max_rel_err_hess <= 1e-4);
    const auto rq = check_derivatives(qd, x, 1e-5);
    CHECK(rq.max_rel_err_grad <= 1e-8);
    CHECK(rq.max_rel_err_hess <= 1e-8);
    const auto rf = check_derivatives(qf, x, 1e-5);
    CHECK(rf.max_rel_err_grad <= 1e-8);
    CHECK(rf.max_rel_err_hess <= 1e-8);
  }
  const Vector x = Vector::Constant(5, 0.7);
  const double fine = check_derivatives(lg, x, 1e-5).max_rel_err_grad;
  const double coarse = check_derivatives(lg, x, 1e-1).max_rel_err_grad;
  CHECK(coarse > fine);
}

TEST_CASE("CSV and binary round trips are exact") {
  const Dataset ds = gen_synthetic(13, 17, 3, ObjectiveKind::Logistic, 1.0);
  std::stringstream csv;
  write_csv(ds, csv);
  CHECK(csv.str().rfind("label,f0,f1,f2\n", 0) == 0);
  CHECK(read_csv(csv, ds.seed) == ds);
  CHECK(from_binary(to_binary(ds), ds.seed) == ds);
  auto bytes = to_binary(ds);
  bytes.pop_back();
  CHECK_THROWS_AS(from_binary(bytes), Error);
}

TEST_CASE("kind names round trip") {
  CHECK(parse_objective_kind(to_string(ObjectiveKind::Logistic)) == ObjectiveKind::Logistic);
  CHECK(parse_objective_kind(to_string(ObjectiveKind::Quadratic)) == ObjectiveKind::Quadratic);
  CHECK_THROWS_AS(parse_objective_kind("hinge"), Error);
}
