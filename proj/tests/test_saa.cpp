#include <doctest.h>

#include <acn/saa.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

using namespace acn;

namespace {

ObjectiveShard diag_quadratic(double a, double b) {
  Matrix Q = Matrix::Zero(2, 2);
  Q(0, 0) = a;
  Q(1, 1) = b;
  return ObjectiveShard::quadratic_form(Q, Vector::Zero(2));
}

}  // namespace

TEST_CASE("shard_dataset splits evenly and validates m") {
  const Dataset ds = gen_synthetic(7, 8, 3, ObjectiveKind::Logistic, 1.0);
  const auto shards = shard_dataset(ds, 4);
  REQUIRE(shards.size() == 4);
  std::vector<double> seen;
  for (const auto& s : shards) {
    CHECK(s.sample_count() == 2);
    for (const auto& smp : s.samples()) seen.push_back(smp.features(0));
  }
  std::vector<double> orig;
  for (const auto& smp : ds.samples) orig.push_back(smp.features(0));
  std::sort(seen.begin(), seen.end());
  std::sort(orig.begin(), orig.end());
  CHECK(seen == orig);

  try {
    shard_dataset(ds, 3);
    FAIL("expected indivisible-N");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IndivisibleN);
  }
  CHECK_THROWS_AS(shard_dataset(ds, 0), Error);
  CHECK_THROWS_AS(shard_dataset(ds, 16), Error);
}

TEST_CASE("one shard reproduces the full objective") {
  const Dataset ds = gen_synthetic(3, 12, 3, ObjectiveKind::Logistic, 1.0);
  ShardOptions opt;
  opt.shuffle = false;
  const auto shards = shard_dataset(ds, 1, opt);
  const auto full = ObjectiveShard::from_samples(ObjectiveKind::Logistic, ds.samples, 3, 0.0, Vector::Zero(3));
  const SaaProblem p = make_problem(shards, Vector::Zero(3));
  const Vector x = (Vector(3) << 0.1, -0.4, 2.0).finished();
  CHECK(p.value(x) == doctest::Approx(full.value(x)).epsilon(1e-15));
  CHECK((p.gradient(x) - full.gradient(x)).norm() < 1e-15);
}

TEST_CASE("shuffle is reproducible from the dataset seed") {
  const Dataset ds = gen_synthetic(21, 40, 2, ObjectiveKind::Logistic, 1.0);
  const auto a = shard_dataset(ds, 4);
  const auto b = shard_dataset(ds, 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(a[k].features() == b[k].features());
    CHECK(a[k].labels() == b[k].labels());
  }
}

TEST_CASE("regularization weight") {
  CHECK(regularization_mu(2, 1, 100) == doctest::Approx(0.0921034037).epsilon(1e-9));
  CHECK(regularization_mu(1, 1, 3) == doctest::Approx(std::log(3.0) / 3.0).epsilon(1e-15));
  CHECK(regularization_mu(4, 1, 100) == doctest::Approx(2 * regularization_mu(2, 1, 100)).epsilon(1e-15));
  CHECK_THROWS_AS(regularization_mu(1, 1, 1), Error);
  CHECK(regularization_mu_inv_sqrt(2, 1, 100) == doctest::Approx(0.2));
}

TEST_CASE("similarity bound") {
  CHECK(similarity_bound(1, 4, 32) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(similarity_bound(1, 4, 128) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(similarity_bound(0.3, 7, 400) == doctest::Approx(2 * similarity_bound(0.3, 7, 1600)).epsilon(1e-15));
}

TEST_CASE("estimate_beta on diagonal quadratics") {
  const SaaProblem p = make_problem({diag_quadratic(1, 1), diag_quadratic(3, 1)}, Vector::Zero(2));
  const Matrix H = p.hessian(Vector::Zero(2));
  CHECK(H(0, 0) == doctest::Approx(2.0));
  CHECK(H(1, 1) == doctest::Approx(1.0));
  CHECK(hessian_deviation(p, 0, Vector::Zero(2)) == doctest::Approx(1.0));
  CHECK(hessian_deviation(p, 1, Vector::Zero(2)) == doctest::Approx(1.0));
  const auto rep = estimate_beta(p, {Vector::Zero(2), Vector::Ones(2)});
  CHECK(rep.beta_hat == doctest::Approx(1.0));
  CHECK(rep.per_worker_max.size() == 2);

  const SaaProblem swapped = make_problem({diag_quadratic(3, 1), diag_quadratic(1, 1)}, Vector::Zero(2));
  CHECK(estimate_beta(swapped, {Vector::Zero(2)}).beta_hat == rep.beta_hat);

  const SaaProblem same = make_problem({diag_quadratic(3, 1), diag_quadratic(3, 1)}, Vector::Zero(2));
  CHECK(estimate_beta(same, {Vector::Zero(2), Vector::Ones(2)}).beta_hat == 0.0);
  CHECK_THROWS_AS(estimate_beta(p, {Vector::Zero(3)}), Error);

  const auto j = to_json(rep);
  CHECK(j.at("beta_hat").get<double>() == rep.beta_hat);
  CHECK(j.at("probe_count").get<std::size_t>() == 2);
}

TEST_CASE("build_saa_problem assembles mu, beta and shards") {
  const Dataset ds = gen_synthetic(7, 256, 20, ObjectiveKind::Logistic, 1.0);
  SaaOptions opt;
  opt.m = 4;
  opt.R = 1.0;
  const SaaProblem p = build_saa_problem(ds, opt);
  CHECK(p.m == 4);
  CHECK(p.n == 64);
  CHECK(p.d() == 20);
  CHECK(p.x0.norm() == 0.0);
  double mean_norm = 0;
  for (const auto& s : ds.samples) mean_norm += s.features.norm();
  mean_norm /= 256.0;
  CHECK(p.mu == doctest::Approx(mean_norm * std::log(256.0) / 256.0).epsilon(1e-12));
  double mean_sq = 0;
  for (const auto& s : ds.samples) mean_sq += s.features.squaredNorm();
  CHECK(p.beta_theory == doctest::Approx(std::sqrt(32.0 * std::pow(0.25 * mean_sq / 256.0, 2) * 20 / 64)).epsilon(1e-12));
  CHECK(p.strong_convexity() == doctest::Approx(p.mu));
  for (const auto& s : p.shards) {
    CHECK(s.mu_reg() == p.mu);
    CHECK(s.domain_radius() == 10.0);
  }

  opt.mu_rule = MuRule::InvSqrtN;
  opt.mu_scale = 2.0;
  const SaaProblem q = build_saa_problem(ds, opt);
  CHECK(q.mu == doctest::Approx(2.0 * mean_norm / 16.0).epsilon(1e-12));

  opt.regularize = false;
  opt.ridge = 0.1;
  const SaaProblem r = build_saa_problem(ds, opt);
  CHECK(r.mu == 0.0);
  CHECK(r.strong_convexity() == doctest::Approx(0.1));
}

TEST_CASE("measured similarity shrinks with shard size") {
  std::vector<double> betas;
  for (std::size_t n : {16u, 64u, 256u, 1024u}) {
    const Dataset ds = gen_synthetic(5, 4 * n, 10, ObjectiveKind::Logistic, 1.0);
    SaaOptions opt;
    opt.m = 4;
    const SaaProblem p = build_saa_problem(ds, opt);
    betas.push_back(estimate_beta(p, default_probes(p, 10, 10.0, 5)).beta_hat);
  }
  for (std::size_t i = 1; i < betas.size(); ++i) {
    CHECK(betas[i] < betas[i - 1]);
  }
}

TEST_CASE("default probes start at x0 and stay in the ball") {
  const Dataset ds = gen_synthetic(7, 16, 3, ObjectiveKind::Logistic, 1.0);
  SaaOptions opt;
  opt.m = 2;
  opt.x0 = Vector::Ones(3);
  const SaaProblem p = build_saa_problem(ds, opt);
  const auto probes = default_probes(p, 10, 2.5, 1);
  REQUIRE(probes.size() == 11);
  CHECK(probes.front() == p.x0);
  for (const auto& v : probes) CHECK((v - p.x0).norm() <= 2.5 + 1e-12);
  CHECK(default_probes(p, 10, 2.5, 1) == probes);
}
