#pragma once

// Reference distributed methods sharing the same gather primitive and round
// counter as the accelerated method.

#include <acn/acn.hpp>

namespace acn {

struct BaselineResult {
  Vector x;
  std::vector<IterateRecord> trajectory;
  bool stopped_early = false;
};

/// Non-accelerated cubic Newton with the same surrogate Hessian
/// master_hessian(x) + 3 beta I and cubic weight 4L. One gather per iteration.
BaselineResult cubic_newton_run(DistRuntime& runtime, const Vector& x0, double L, double beta, int t_max,
                                bool trace = true, const IterateObserver& observer = {});

/// Constant-step accelerated gradient descent with step 1/L1 on full gathered
/// gradients. mu > 0 selects the strongly convex momentum
/// (sqrt(kappa) - 1)/(sqrt(kappa) + 1); mu = 0 the convex lambda-sequence.
BaselineResult agd_run(DistRuntime& runtime, const Vector& x0, double L1, double mu, int t_max,
                       bool trace = true, const IterateObserver& observer = {});

}  // namespace acn
