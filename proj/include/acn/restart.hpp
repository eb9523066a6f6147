#pragma once

// Restarted accelerated cubic Newton for strongly convex objectives and the
// closed-form round-count predictors that go with it.

#include <acn/acn.hpp>

#include <nlohmann/json_fwd.hpp>

#include <optional>

namespace acn {

struct RestartPlan {
  double L = 0;
  double mu = 0;  ///< strong convexity, > 0
  double beta = 0;
  double R0 = 0;  ///< bound on ||z0 - x*||
  EsCoefRule es_coef = EsCoefRule::CurrentA;

  /// 2 (196 L R0 / mu)^{1/3}
  double tau1() const;
  /// 4 (24 beta / mu)^{1/2}
  double tau2() const;
  void validate() const;
};

struct StageRecord {
  int s = 0;
  double R_s = 0;  ///< R0 2^{-s}
  int t_s = 0;
  std::optional<double> dist_to_opt;  ///< ||z_s - x*|| when x* is known
  std::uint64_t comm_rounds = 0;      ///< cumulative over the whole run
};

using RestartTrace = std::vector<StageRecord>;

/// t_s = ceil(2 max{(196 L R_{s-1}/mu)^{1/3}, 2 (24 beta/mu)^{1/2}}), R_{s-1} = R0 2^{1-s}.
int restart_iterations(const RestartPlan& plan, int s);

/// R0 2^{-T / (2 max{tau1, tau2})} for an even number T of rounds.
double predicted_error_after_T(const RestartPlan& plan, std::uint64_t T);

/// 8 (392 L R0/mu)^{1/3} + 4 sqrt(24 beta/mu) log_4(delta_f0/eps), rounded up.
std::uint64_t complexity_estimate(const RestartPlan& plan, double eps, double delta_f0);

struct RestartOptions {
  std::optional<Vector> x_star;   ///< fills StageRecord::dist_to_opt
  std::optional<double> eps_R;    ///< stop once R_s <= eps_R
  IterateObserver observer;       ///< sees every iterate, with cumulative rounds
  bool trace_iterates = false;
};

struct RestartResult {
  Vector z;
  RestartTrace trace;
  std::vector<IterateRecord> iterates;  ///< cumulative rounds, when traced
  std::uint64_t total_iterations = 0;
  bool stopped_early = false;
};

/// Runs `stages` restarts (or until eps_R), chaining z_s = last x-iterate of
/// stage s into the next stage's starting point.
RestartResult run_restarted(DistRuntime& runtime, const Vector& z0, const RestartPlan& plan, int stages,
                            const RestartOptions& opt = {});

nlohmann::json to_json(const RestartTrace& trace);

}  // namespace acn
