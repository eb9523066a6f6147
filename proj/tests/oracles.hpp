#pragma once

// Brute-force references used by the tests.

#include <acn/cubic.hpp>
#include <acn/random.hpp>

#include <cmath>
#include <limits>

namespace oracle {

struct GridMin {
  acn::Vector h;
  double value = std::numeric_limits<double>::infinity();
};

/// Minimum of the 2-D cubic model over the grid step*[-k..k]^2 covering [-half, half]^2.
inline GridMin grid_cubic_min(const acn::CubicSubproblem<double>& p, double half = 3.0, double step = 1e-3) {
  const int k = static_cast<int>(std::lround(half / step));
  const double g0 = p.g(0), g1 = p.g(1);
  const double h00 = p.H(0, 0), h01 = p.H(0, 1), h11 = p.H(1, 1);
  const double m6 = p.M / 6.0;
  GridMin best;
  double bx = 0, by = 0;
  for (int i = -k; i <= k; ++i) {
    const double x = i * step;
    const double lin_x = g0 * x + 0.5 * h00 * x * x;
    const double cross = h01 * x;
    const double xx = x * x;
    for (int j = -k; j <= k; ++j) {
      const double y = j * step;
      const double r = std::sqrt(xx + y * y);
      const double v = lin_x + g1 * y + cross * y + 0.5 * h11 * y * y + m6 * r * r * r;
      if (v < best.value) {
        best.value = v;
        bx = x;
        by = y;
      }
    }
  }
  best.h = (acn::Vector(2) << bx, by).finished();
  return best;
}

/// Random 2-D PSD instance whose minimizer lies well inside [-3, 3]^2.
inline acn::CubicSubproblem<double> random_cubic_2d(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> gn(0.2, 1.0);
  std::uniform_real_distribution<double> mm(0.5, 3.0);
  acn::Matrix B(2, 2);
  for (int i = 0; i < 4; ++i) B.data()[i] = u(rng);
  acn::Vector g(2);
  g << u(rng), u(rng);
  g = g.normalized() * gn(rng);
  return {g, B * B.transpose(), mm(rng)};
}

/// 1-D minimum of <s, -t u> + a t^2 + b t^3 over t in [0, tmax], u = s/||s||.
inline double line_min_es(double a, double b, double snorm, double tmax, int samples) {
  double best_t = 0;
  double best = 0;
  for (int i = 0; i <= samples; ++i) {
    const double t = tmax * i / samples;
    const double v = -snorm * t + a * t * t + b * t * t * t;
    if (v < best) {
      best = v;
      best_t = t;
    }
  }
  // Golden-section polish within one grid cell.
  double lo = std::max(0.0, best_t - tmax / samples), hi = std::min(tmax, best_t + tmax / samples);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 200; ++it) {
    const double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
    const double fc = -snorm * c + a * c * c + b * c * c * c;
    const double fd = -snorm * d + a * d * d + b * d * d * d;
    if (fc < fd) hi = d; else lo = c;
  }
  return 0.5 * (lo + hi);
}

}  // namespace oracle
