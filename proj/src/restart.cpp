#include <acn/restart.hpp>

#include <nlohmann/json.hpp>

#include <cmath>

namespace acn {

double RestartPlan::tau1() const { return 2.0 * std::cbrt(196.0 * L * R0 / mu); }

double RestartPlan::tau2() const { return 4.0 * std::sqrt(24.0 * beta / mu); }

void RestartPlan::validate() const {
  if (!(mu > 0) || !(R0 > 0) || !(L >= 0) || !(beta >= 0)) {
    throw Error(ErrorCode::InvalidParameter, "RestartPlan: need mu > 0, R0 > 0, L >= 0, beta >= 0");
  }
  if (L == 0 && beta == 0) {
    throw Error(ErrorCode::InvalidParameter, "RestartPlan: L and beta cannot both be 0");
  }
}

namespace {

// Round up, ignoring representation error just above an exact integer.
int ceil_count(double v) {
  const double r = std::round(v);
  if (std::abs(v - r) <= 1e-9 * std::max(1.0, r)) {
    return static_cast<int>(r);
  }
  return static_cast<int>(std::ceil(v));
}

}  // namespace

int restart_iterations(const RestartPlan& plan, int s) {
  if (s < 1) {
    throw Error(ErrorCode::InvalidParameter, "restart_iterations: stage must be >= 1");
  }
  plan.validate();
  const double R_prev = plan.R0 * std::ldexp(1.0, -(s - 1));
  const double cubic = std::cbrt(196.0 * plan.L * R_prev / plan.mu);
  const double quad = 2.0 * std::sqrt(24.0 * plan.beta / plan.mu);
  return std::max(1, ceil_count(2.0 * std::max(cubic, quad)));
}

double predicted_error_after_T(const RestartPlan& plan, std::uint64_t T) {
  if (T % 2 != 0) {
    throw Error(ErrorCode::OddCommunicationCount, "predicted_error_after_T: T must be even");
  }
  const double tau = std::max(plan.tau1(), plan.tau2());
  if (T == 0) {
    return plan.R0;
  }
  return plan.R0 * std::exp2(-double(T) / (2.0 * tau));
}

std::uint64_t complexity_estimate(const RestartPlan& plan, double eps, double delta_f0) {
  if (!(eps > 0)) {
    throw Error(ErrorCode::InvalidParameter, "complexity_estimate: eps must be > 0");
  }
  const double cubic = 8.0 * std::cbrt(392.0 * plan.L * plan.R0 / plan.mu);
  const double log4 = std::max(0.0, std::log(delta_f0 / eps) / std::log(4.0));
  const double quad = 4.0 * std::sqrt(24.0 * plan.beta / plan.mu) * log4;
  return static_cast<std::uint64_t>(ceil_count(cubic + quad));
}

RestartResult run_restarted(DistRuntime& runtime, const Vector& z0, const RestartPlan& plan, int stages,
                            const RestartOptions& opt) {
  plan.validate();
  RestartResult out;
  out.z = z0;
  const std::uint64_t start_rounds = runtime.comm_rounds();
  const AcnParams params{plan.L, plan.beta, plan.es_coef};

  for (int s = 1; s <= stages; ++s) {
    const double R_prev = plan.R0 * std::ldexp(1.0, -(s - 1));
    if (opt.eps_R && R_prev <= *opt.eps_R) {
      break;
    }
    const int t_s = restart_iterations(plan, s);
    const std::uint64_t stage_base = runtime.comm_rounds() - start_rounds;

    IterateObserver stage_observer;
    if (opt.observer || opt.trace_iterates) {
      stage_observer = [&](const IterateRecord& rec) {
        IterateRecord global = rec;
        global.comm_rounds += stage_base;
        if (opt.trace_iterates) {
          out.iterates.push_back(global);
        }
        return opt.observer && opt.observer(global);
      };
    }
    AcnResult stage = acn_run(runtime, out.z, params, t_s, false, stage_observer);
    out.z = stage.x;
    out.total_iterations += static_cast<std::uint64_t>(stage.state.t - 1);

    StageRecord rec;
    rec.s = s;
    rec.R_s = plan.R0 * std::ldexp(1.0, -s);
    rec.t_s = t_s;
    if (opt.x_star) {
      rec.dist_to_opt = (out.z - *opt.x_star).norm();
    }
    rec.comm_rounds = runtime.comm_rounds() - start_rounds;
    out.trace.push_back(rec);
    if (stage.stopped_early) {
      out.stopped_early = true;
      break;
    }
  }
  return out;
}

nlohmann::json to_json(const RestartTrace& trace) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : trace) {
    nlohmann::json row = {{"s", r.s}, {"R_s", r.R_s}, {"t_s", r.t_s}, {"comm_rounds", r.comm_rounds}};
    row["dist_to_opt"] = r.dist_to_opt ? nlohmann::json(*r.dist_to_opt) : nlohmann::json(nullptr);
    arr.push_back(std::move(row));
  }
  return arr;
}

}  // namespace acn
