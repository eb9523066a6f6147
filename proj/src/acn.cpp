#include <acn/acn.hpp>

namespace acn {

Vector cubic_model_step(const DistRuntime& runtime, const Vector& z, const Vector& grad,
                        const AcnParams& params) {
  CubicSubproblem<double> sub;
  sub.g = grad;
  sub.H = runtime.master_shard().hessian(z);
  sub.H.diagonal().array() += 3.0 * params.beta;
  sub.M = params.M();
  return z + solve_cubic_subproblem(sub).h;
}

AcnState acn_init(DistRuntime& runtime, const Vector& x0, const AcnParams& params) {
  if (!(params.L >= 0) || !(params.beta >= 0) || (params.L == 0 && params.beta == 0)) {
    throw Error(ErrorCode::InvalidParameter, "acn_init: need L >= 0, beta >= 0, L + beta > 0");
  }
  require_dim(x0.size(), runtime.dim(), "acn_init: x0");
  const std::uint64_t before = runtime.comm_rounds();
  const GatherResult g0 = runtime.gather(x0);

  AcnState s;
  s.params = params;
  s.x0 = x0;
  s.x = cubic_model_step(runtime, x0, g0.grad_mean, params);
  s.es = es_init(params.beta, params.L, x0);
  s.y = minimize_estimate_sequence(s.es);
  s.t = 1;
  s.A = 1.0;
  s.comm_rounds = runtime.comm_rounds() - before;
  return s;
}

AcnState acn_step(AcnState s, DistRuntime& runtime) {
  const std::uint64_t before = runtime.comm_rounds();
  const double t = s.t;
  const double alpha = 3.0 / (t + 3.0);
  s.w = (1.0 - alpha) * s.x + alpha * s.y;

  const GatherResult gw = runtime.gather(s.w);
  s.x = cubic_model_step(runtime, s.w, gw.grad_mean, s.params);

  const GatherResult gx = runtime.gather(s.x);
  const double A_prev = s.A;
  s.A = A_prev * (1.0 - alpha);
  const double A_coef = s.params.es_coef == EsCoefRule::CurrentA ? s.A : A_prev;
  s.es = es_update(s.es, s.params.beta, 3.0 / (A_coef * (t + 3.0)), gx.grad_mean);
  s.y = minimize_estimate_sequence(s.es);
  s.t += 1;
  s.comm_rounds += runtime.comm_rounds() - before;
  return s;
}

double acn_A(int t) {
  double A = 1.0;
  for (int j = 1; j <= t; ++j) {
    A *= 1.0 - 3.0 / (j + 3.0);
  }
  return A;
}

AcnResult acn_run(DistRuntime& runtime, const Vector& x0, const AcnParams& params, int t_max,
                  bool trace, const IterateObserver& observer) {
  if (t_max < 0) {
    throw Error(ErrorCode::InvalidParameter, "acn_run: t_max must be >= 0");
  }
  AcnResult out;
  AcnState s = acn_init(runtime, x0, params);
  auto emit = [&](std::uint64_t rounds_at_x) {
    IterateRecord rec{s.t, s.x, s.w, rounds_at_x};
    const bool stop = observer && observer(rec);
    if (trace) {
      out.trajectory.push_back(std::move(rec));
    }
    return stop;
  };
  bool stop = emit(s.comm_rounds);
  for (int k = 0; k < t_max && !stop; ++k) {
    s = acn_step(std::move(s), runtime);
    // x_{t+1} is known after the gather at w_t, before the gather at x_{t+1}.
    stop = emit(s.comm_rounds - 1);
  }
  out.stopped_early = stop;
  out.x = s.x;
  out.state = std::move(s);
  return out;
}

}  // namespace acn
