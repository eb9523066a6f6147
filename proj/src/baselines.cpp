#include <acn/baselines.hpp>

#include <cmath>

namespace acn {

BaselineResult cubic_newton_run(DistRuntime& runtime, const Vector& x0, double L, double beta, int t_max,
                                bool trace, const IterateObserver& observer) {
  if (t_max < 0 || !(L >= 0) || !(beta >= 0) || (L == 0 && beta == 0)) {
    throw Error(ErrorCode::InvalidParameter, "cubic_newton_run: invalid parameters");
  }
  const AcnParams params{L, beta};
  const std::uint64_t base = runtime.comm_rounds();
  BaselineResult out;
  out.x = x0;
  GatherResult g = runtime.gather(x0);
  for (int t = 1; t <= t_max; ++t) {
    IterateRecord rec{t, Vector(), out.x, 0};
    out.x = cubic_model_step(runtime, out.x, g.grad_mean, params);
    rec.x = out.x;
    rec.comm_rounds = runtime.comm_rounds() - base;
    const bool stop = observer && observer(rec);
    if (trace) {
      out.trajectory.push_back(std::move(rec));
    }
    g = runtime.gather(out.x);
    if (stop) {
      out.stopped_early = true;
      break;
    }
  }
  return out;
}

BaselineResult agd_run(DistRuntime& runtime, const Vector& x0, double L1, double mu, int t_max,
                       bool trace, const IterateObserver& observer) {
  if (!(L1 > 0) || !(mu >= 0) || mu > L1 || t_max < 0) {
    throw Error(ErrorCode::InvalidParameter, "agd_run: need L1 > 0 and 0 <= mu <= L1");
  }
  const std::uint64_t base = runtime.comm_rounds();
  const double sqrt_kappa = mu > 0 ? std::sqrt(L1 / mu) : 0.0;
  const double strong_momentum = (sqrt_kappa - 1.0) / (sqrt_kappa + 1.0);

  BaselineResult out;
  Vector x = x0;
  Vector y = x0;
  double lambda = 1.0;
  GatherResult g = runtime.gather(y);
  for (int t = 1; t <= t_max; ++t) {
    const Vector x_next = y - g.grad_mean / L1;
    double momentum = strong_momentum;
    if (mu == 0) {
      const double lambda_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * lambda * lambda));
      momentum = (lambda - 1.0) / lambda_next;
      lambda = lambda_next;
    }
    y = x_next + momentum * (x_next - x);
    x = x_next;

    IterateRecord rec{t, x, Vector(), runtime.comm_rounds() - base};
    const bool stop = observer && observer(rec);
    if (trace) {
      out.trajectory.push_back(std::move(rec));
    }
    g = runtime.gather(y);
    if (stop) {
      out.stopped_early = true;
      break;
    }
  }
  out.x = x;
  return out;
}

}  // namespace acn
