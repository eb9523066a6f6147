#include <doctest.h>

#include <acn/restart.hpp>

#include <nlohmann/json.hpp>

#include <cmath>

using namespace acn;

TEST_CASE("restart iteration counts") {
  RestartPlan plan{1.0, 196.0, 196.0 / 24.0, 1.0};
  CHECK(restart_iterations(plan, 1) == 4);

  // 196 L R0 / mu = 8 with beta = 0.
  RestartPlan cube{8.0 / 196.0, 1.0, 0.0, 1.0};
  CHECK(restart_iterations(cube, 1) == 4);
  // R halves, the cube root drops by 2^{1/3}: ceil(2 * 2 / 2^{1/3}) = 4, then ceil(2 * 2^{1/3}) = 3.
  CHECK(restart_iterations(cube, 2) == 4);
  CHECK(restart_iterations(cube, 3) == 3);

  RestartPlan mixed{0.3, 0.05, 0.01, 5.0};
  int prev = restart_iterations(mixed, 1);
  for (int s = 2; s <= 20; ++s) {
    const int t = restart_iterations(mixed, s);
    CHECK(t <= prev);
    CHECK(t >= int(std::ceil(4 * std::sqrt(24 * 0.01 / 0.05) - 1e-9)));
    prev = t;
  }
  CHECK_THROWS_AS(restart_iterations(mixed, 0), Error);
  CHECK_THROWS_AS(restart_iterations(RestartPlan{1, 0, 1, 1}, 1), Error);
}

TEST_CASE("predicted error after T rounds") {
  // tau1 = 2 (196 L/mu)^{1/3} = 1 and tau2 = 4 (24 beta/mu)^{1/2} = 2.
  const RestartPlan plan{1.0 / 8.0, 196.0, 196.0 / 96.0, 1.0};
  CHECK(plan.tau1() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(plan.tau2() == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(predicted_error_after_T(plan, 8) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(predicted_error_after_T(plan, 4) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(predicted_error_after_T(plan, 0) == 1.0);
  try {
    predicted_error_after_T(plan, 7);
    FAIL("expected odd-count error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OddCommunicationCount);
  }
}

TEST_CASE("complexity estimate") {
  // 392 L R0 / mu = 1, beta = 0: only the cube-root term, 8.
  const RestartPlan cubic{1.0 / 392.0, 1.0, 0.0, 1.0};
  CHECK(complexity_estimate(cubic, 1e-3, 1.0) == 8);
  CHECK(complexity_estimate(cubic, 1e-9, 1.0) == 8);
  // 24 beta / mu = 1: quadrupling the ratio adds 4.
  const RestartPlan both{1.0 / 392.0, 1.0, 1.0 / 24.0, 1.0};
  CHECK(complexity_estimate(both, 1.0 / 4.0, 1.0) == 12);
  CHECK(complexity_estimate(both, 1.0 / 16.0, 1.0) == 16);
  CHECK(complexity_estimate(both, 1.0 / 64.0, 1.0) == 20);
  CHECK_THROWS_AS(complexity_estimate(both, 0.0, 1.0), Error);
}

namespace {

struct QuadraticSuite {
  SaaProblem problem;
  Vector x_star;
  double mu;
};

QuadraticSuite quadratic_suite() {
  Matrix Q1(3, 3), Q2(3, 3);
  Q1 << 2, 0.3, 0, 0.3, 1, 0.1, 0, 0.1, 0.5;
  Q2 << 1.6, 0.1, 0.2, 0.1, 1.2, 0, 0.2, 0, 0.7;
  const Vector c1 = (Vector(3) << 1, -2, 0.5).finished();
  const Vector c2 = (Vector(3) << 0, 1, 3).finished();
  QuadraticSuite s;
  s.problem = make_problem({ObjectiveShard::quadratic_form(Q1, c1), ObjectiveShard::quadratic_form(Q2, c2)},
                           Vector::Zero(3));
  const Matrix Q = 0.5 * (Q1 + Q2);
  s.x_star = Q.ldlt().solve(0.5 * (Q1 * c1 + Q2 * c2));
  s.mu = Eigen::SelfAdjointEigenSolver<Matrix>(Q).eigenvalues()(0);
  return s;
}

}  // namespace

TEST_CASE("zero stages return the start point") {
  const auto s = quadratic_suite();
  InprocRuntime rt(s.problem.shards);
  const RestartPlan plan{0.0, s.mu, 0.5, 10.0};
  const auto res = run_restarted(rt, s.problem.x0, plan, 0);
  CHECK(res.z == s.problem.x0);
  CHECK(res.trace.empty());
  CHECK(rt.comm_rounds() == 0);
}

TEST_CASE("distance halves every stage on a strongly convex quadratic") {
  const auto s = quadratic_suite();
  const double beta = estimate_beta(s.problem, {Vector::Zero(3)}).beta_hat;
  const double R0 = s.problem.gradient(s.problem.x0).norm() / s.mu;
  REQUIRE(s.x_star.norm() <= R0);
  const RestartPlan plan{0.0, s.mu, beta, R0};
  InprocRuntime rt(s.problem.shards);
  RestartOptions opt;
  opt.x_star = s.x_star;
  opt.trace_iterates = true;
  const auto res = run_restarted(rt, s.problem.x0, plan, 8, opt);
  REQUIRE(res.trace.size() == 8);
  const double f_star = s.problem.value(s.x_star);
  std::uint64_t rounds = 0;
  for (const auto& st : res.trace) {
    CHECK(st.t_s == restart_iterations(plan, st.s));
    rounds += 2 * std::uint64_t(st.t_s) + 1;
    CHECK(st.comm_rounds == rounds);
    CHECK(st.R_s == doctest::Approx(R0 * std::ldexp(1.0, -st.s)));
    CHECK(*st.dist_to_opt <= std::max(R0 * std::ldexp(1.0, -st.s), 1e-11 * R0));
  }
  CHECK(rt.comm_rounds() == rounds);
  CHECK(s.problem.value(res.z) - f_star <= s.mu * R0 * R0 * std::ldexp(1.0, -17) + 1e-14);
  CHECK(res.iterates.back().comm_rounds <= rounds);
  CHECK(res.iterates.back().x == res.z);

  const auto j = to_json(res.trace);
  CHECK(j.size() == 8);
  CHECK(j[0].at("t_s").get<int>() == res.trace[0].t_s);
}

TEST_CASE("function gap bound per stage on a logistic problem with ridge") {
  const Dataset ds = gen_synthetic(7, 128, 5, ObjectiveKind::Logistic, 1.0);
  SaaOptions so;
  so.m = 4;
  so.regularize = false;
  so.ridge = 0.1;
  const SaaProblem p = build_saa_problem(ds, so);
  // High-accuracy minimizer by Newton.
  Vector x = p.x0;
  for (int it = 0; it < 50; ++it) x -= p.hessian(x).ldlt().solve(p.gradient(x));
  REQUIRE(p.gradient(x).norm() < 1e-13);
  const double f_star = p.value(x);

  const double mu = p.strong_convexity();
  const double R0 = p.gradient(p.x0).norm() / mu;
  const double beta = estimate_beta(p, default_probes(p, 10, 10.0, 7)).beta_hat;
  const RestartPlan plan{p.constants().L, mu, beta, R0};
  InprocRuntime rt(p.shards);
  Vector z = p.x0;
  for (int s = 1; s <= 6; ++s) {
    // One stage at a time so every z_s can be inspected.
    RestartPlan stage_plan = plan;
    stage_plan.R0 = R0 * std::ldexp(1.0, -(s - 1));
    z = run_restarted(rt, z, stage_plan, 1).z;
    CHECK((z - x).norm() <= R0 * std::ldexp(1.0, -s) + 1e-11 * R0);
    CHECK(p.value(z) - f_star <= mu * R0 * R0 * std::ldexp(1.0, -2 * s - 1) + 1e-14);
  }
}

TEST_CASE("radius floor stops the schedule") {
  const auto s = quadratic_suite();
  const RestartPlan plan{0.0, s.mu, 0.5, 8.0};
  InprocRuntime rt(s.problem.shards);
  RestartOptions opt;
  opt.eps_R = 1.0;
  const auto res = run_restarted(rt, s.problem.x0, plan, 100, opt);
  CHECK(res.trace.size() == 3);
}
