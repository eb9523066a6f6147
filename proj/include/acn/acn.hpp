#pragma once

// Distributed accelerated cubic-regularized Newton method. The master owns
// the control loop; all communication goes through DistRuntime::gather.

#include <acn/cubic.hpp>
#include <acn/runtime.hpp>

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

namespace acn {

/// One primal iterate as produced by a method.
struct IterateRecord {
  int t = 0;
  Vector x;
  Vector w;  ///< point where the master Hessian was taken; empty if none
  /// Rounds consumed by the method when x became available.
  std::uint64_t comm_rounds = 0;
};

/// Called for every iterate; returning true stops the method early.
using IterateObserver = std::function<bool(const IterateRecord&)>;

/// Which A enters the estimate-sequence weight 3/(A (t+3)).
enum class EsCoefRule { CurrentA, PreviousA };

struct AcnParams {
  double L = 0;     ///< Hessian Lipschitz constant; the cubic weight is 4L
  double beta = 0;  ///< similarity of the master's Hessian to the global one
  EsCoefRule es_coef = EsCoefRule::CurrentA;

  double M() const { return 4.0 * L; }
};

struct AcnState {
  int t = 1;
  Vector x;  ///< x_t
  Vector y;  ///< y_t
  Vector w;  ///< w_{t-1}; empty before the first step
  double A = 1.0;  ///< A_{t-1}
  EstimateSequence<double> es;
  Vector x0;
  AcnParams params;
  std::uint64_t comm_rounds = 0;  ///< rounds used by this run
};

/// x_{t+1} = z + argmin of the model at z with surrogate Hessian
/// master_hessian(z) + 3 beta I.
Vector cubic_model_step(const DistRuntime& runtime, const Vector& z, const Vector& grad,
                        const AcnParams& params);

/// Step 0: one gather at x0, the first cubic step, and psi_1.
AcnState acn_init(DistRuntime& runtime, const Vector& x0, const AcnParams& params);

/// Steps 1-3: two gathers.
AcnState acn_step(AcnState state, DistRuntime& runtime);

/// Product of (1 - 3/(j+3)) for j = 1..t.
double acn_A(int t);

struct AcnResult {
  Vector x;  ///< last x-iterate
  AcnState state;
  std::vector<IterateRecord> trajectory;
  bool stopped_early = false;
};

/// acn_init followed by t_max steps; the trajectory holds x_1 .. x_{t_max+1}.
AcnResult acn_run(DistRuntime& runtime, const Vector& x0, const AcnParams& params, int t_max,
                  bool trace = true, const IterateObserver& observer = {});

}  // namespace acn
