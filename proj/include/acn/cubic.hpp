#pragma once

// Exact solvers for the two inner problems of the accelerated cubic Newton
// iteration: the cubic-regularized model step and the minimizer of the
// estimate sequence. Dense, header-only, templated on the scalar type.

#include <acn/linalg.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

namespace acn {

inline constexpr Eigen::Index kDefaultMaxEigDim = 512;

template <typename Scalar>
struct EigenFactorization {
  Mat<Scalar> Q;       ///< orthonormal eigenvectors, one per column
  Vec<Scalar> lambda;  ///< eigenvalues, ascending
};

/// Symmetric eigendecomposition H = Q diag(lambda) Q^T.
template <typename Derived>
EigenFactorization<typename Derived::Scalar> sym_eig(const Eigen::MatrixBase<Derived>& H,
                                                     Eigen::Index max_dim = kDefaultMaxEigDim) {
  using Scalar = typename Derived::Scalar;
  if (H.rows() != H.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "sym_eig: matrix is not square");
  }
  if (H.rows() > max_dim) {
    throw Error(ErrorCode::DimensionOverLimit,
                "sym_eig: dimension " + std::to_string(H.rows()) + " over limit " +
                    std::to_string(max_dim));
  }
  const Scalar asym = (H - H.transpose()).cwiseAbs().maxCoeff();
  if (H.size() > 0 && asym > Scalar(1e-8)) {
    throw Error(ErrorCode::NonSymmetric, "sym_eig: asymmetry " + std::to_string(double(asym)));
  }
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> solver(H.eval());
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::NonConvergence, "sym_eig: eigensolver failed");
  }
  return {solver.eigenvectors(), solver.eigenvalues()};
}

template <typename Scalar>
struct CubicSubproblem {
  Vec<Scalar> g;  ///< linear term
  Mat<Scalar> H;  ///< symmetric PSD quadratic term
  Scalar M;       ///< cubic weight
};

template <typename Scalar>
struct CubicStep {
  Vec<Scalar> h;
  Scalar r = 0;  ///< ||h||
  int iterations = 0;
};

struct CubicOptions {
  double root_tol = 1e-12;
  int max_iterations = 200;
  double psd_slack = 1e-10;
};

/// Value of <g,h> + 1/2 <Hh,h> + M/6 ||h||^3.
template <typename Scalar>
Scalar cubic_model_value(const CubicSubproblem<Scalar>& p, const Vec<Scalar>& h) {
  const Scalar r = h.norm();
  return p.g.dot(h) + Scalar(0.5) * h.dot(p.H * h) + p.M / Scalar(6) * r * r * r;
}

/// ||(H + M r/2 I) h + g||, the first-order optimality residual.
template <typename Scalar>
Scalar cubic_stationarity_residual(const CubicSubproblem<Scalar>& p, const Vec<Scalar>& h) {
  const Scalar r = h.norm();
  return (p.H * h + (p.M * r / Scalar(2)) * h + p.g).norm();
}

/// Global minimizer of <g,h> + 1/2 <Hh,h> + M/6 ||h||^3 for H PSD.
///
/// In the eigenbasis of H the minimizer is h(r) = -(H + M r/2 I)^{-1} g with r
/// the unique root of ||h(r)|| = r. The root is bracketed in [0, sqrt(2||g||/M)]
/// and located by Newton on ||h(r)||^2 - r^2, falling back to bisection
/// whenever a Newton step leaves the bracket. M = 0 is accepted when H is
/// positive definite and reduces to a Newton step.
template <typename Scalar>
CubicStep<Scalar> solve_cubic_subproblem(const CubicSubproblem<Scalar>& p,
                                         const CubicOptions& opt = {}) {
  const Eigen::Index d = p.g.size();
  require_dim(p.H.rows(), d, "solve_cubic_subproblem: H rows");
  require_dim(p.H.cols(), d, "solve_cubic_subproblem: H cols");
  if (!(p.M >= Scalar(0)) || !std::isfinite(double(p.M))) {
    throw Error(ErrorCode::InvalidParameter, "solve_cubic_subproblem: M must be >= 0");
  }

  auto eig = sym_eig(p.H);
  const Scalar scale = std::max<Scalar>(Scalar(1), d > 0 ? eig.lambda.cwiseAbs().maxCoeff() : Scalar(0));
  for (Eigen::Index i = 0; i < d; ++i) {
    if (eig.lambda(i) < Scalar(0)) {
      if (eig.lambda(i) < -Scalar(opt.psd_slack) * scale) {
        throw Error(ErrorCode::NotPositiveSemidefinite,
                    "solve_cubic_subproblem: eigenvalue " + std::to_string(double(eig.lambda(i))));
      }
      eig.lambda(i) = Scalar(0);
    }
  }

  CubicStep<Scalar> out;
  out.h = Vec<Scalar>::Zero(d);
  const Scalar gnorm = p.g.norm();
  if (gnorm == Scalar(0)) {
    return out;
  }
  const Vec<Scalar> gt = eig.Q.transpose() * p.g;

  if (p.M == Scalar(0)) {
    if (!(eig.lambda(0) > Scalar(0))) {
      throw Error(ErrorCode::NotPositiveSemidefinite,
                  "solve_cubic_subproblem: M = 0 requires positive definite H");
    }
    out.h = -(eig.Q * gt.cwiseQuotient(eig.lambda));
    out.r = out.h.norm();
    return out;
  }

  const Scalar half_m = p.M / Scalar(2);
  // phi(r) = ||h(r)||^2 - r^2, strictly decreasing on r > 0.
  auto phi = [&](Scalar r, Scalar* dphi) {
    Scalar s2 = 0;
    Scalar s3 = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const Scalar den = eig.lambda(i) + half_m * r;
      const Scalar q = gt(i) * gt(i) / (den * den);
      s2 += q;
      s3 += q / den;
    }
    *dphi = -p.M * s3 - Scalar(2) * r;
    return s2 - r * r;
  };

  Scalar lo = 0;
  Scalar hi = std::sqrt(Scalar(2) * gnorm / p.M);
  Scalar dphi = 0;
  int grow = 0;
  while (phi(hi, &dphi) > Scalar(0)) {
    lo = hi;
    hi *= Scalar(2);
    if (++grow > 64) {
      throw Error(ErrorCode::NonConvergence, "solve_cubic_subproblem: bracket growth failed");
    }
  }

  Scalar r = hi;
  bool converged = false;
  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it + 1;
    const Scalar f = phi(r, &dphi);
    if (f == Scalar(0)) {
      converged = true;
      break;
    }
    if (f > Scalar(0)) {
      lo = r;
    } else {
      hi = r;
    }
    Scalar next = r - f / dphi;
    if (!(next > lo && next < hi)) {
      next = Scalar(0.5) * (lo + hi);
    }
    const Scalar step = std::abs(next - r);
    r = next;
    if (step <= Scalar(opt.root_tol) * r || hi - lo <= Scalar(opt.root_tol) * r) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw Error(ErrorCode::NonConvergence, "solve_cubic_subproblem: root-find hit iteration cap");
  }

  const Vec<Scalar> shifted = (eig.lambda.array() + half_m * r).matrix();
  out.h = -(eig.Q * gt.cwiseQuotient(shifted));
  out.r = out.h.norm();
  return out;
}

/// Argmin-relevant part of psi(x) = <s, x - x0> + a ||x - x0||^2 + b ||x - x0||^3.
/// Additive constants are never stored.
template <typename Scalar>
struct EstimateSequence {
  Vec<Scalar> s;
  Scalar a = 0;
  Scalar b = 0;
  Vec<Scalar> x0;
};

template <typename Scalar>
EstimateSequence<Scalar> es_init(Scalar beta, Scalar L, const std::type_identity_t<Vec<Scalar>>& x0) {
  if (!(beta >= Scalar(0)) || !(L >= Scalar(0))) {
    throw Error(ErrorCode::InvalidParameter, "es_init: beta and L must be >= 0");
  }
  if (beta == Scalar(0) && L == Scalar(0)) {
    throw Error(ErrorCode::DegenerateEstimateSequence, "es_init: beta = L = 0");
  }
  EstimateSequence<Scalar> es;
  es.s = Vec<Scalar>::Zero(x0.size());
  es.a = Scalar(8) * beta;
  es.b = Scalar(16) * L;
  es.x0 = x0;
  return es;
}

/// psi <- psi + 4 beta ||x - x0||^2 + coef <grad, x> (constants dropped).
template <typename Scalar>
EstimateSequence<Scalar> es_update(EstimateSequence<Scalar> es, Scalar beta, Scalar coef,
                                   const std::type_identity_t<Vec<Scalar>>& grad) {
  require_dim(grad.size(), es.s.size(), "es_update: grad");
  if (!(coef > Scalar(0))) {
    throw Error(ErrorCode::InvalidParameter, "es_update: coef must be > 0");
  }
  es.a += Scalar(4) * beta;
  es.s += coef * grad;
  return es;
}

/// Radius r >= 0 solving 2 a r + 3 b r^2 = snorm.
template <typename Scalar>
Scalar es_radius(Scalar a, Scalar b, Scalar snorm) {
  if (a == Scalar(0) && b == Scalar(0)) {
    throw Error(ErrorCode::DegenerateEstimateSequence, "estimate sequence: a = b = 0");
  }
  if (b == Scalar(0)) {
    return snorm / (Scalar(2) * a);
  }
  // Rationalized root, free of cancellation when 12 b snorm << 4 a^2.
  return Scalar(2) * snorm / (Scalar(2) * a + std::sqrt(Scalar(4) * a * a + Scalar(12) * b * snorm));
}

template <typename Scalar>
Vec<Scalar> minimize_estimate_sequence(const EstimateSequence<Scalar>& es) {
  if (es.a == Scalar(0) && es.b == Scalar(0)) {
    throw Error(ErrorCode::DegenerateEstimateSequence, "minimize_estimate_sequence: a = b = 0");
  }
  const Scalar snorm = es.s.norm();
  if (snorm == Scalar(0)) {
    return es.x0;
  }
  const Scalar r = es_radius(es.a, es.b, snorm);
  return es.x0 - (r / snorm) * es.s;
}

}  // namespace acn
