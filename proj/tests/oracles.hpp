#pragma once

// Test-only oracles, independent of the library paths they validate.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "npcflow/geometry.hpp"

namespace npcflow::oracle {

/// Dense 1-D grid minimization; returns the best abscissa.
inline double grid_argmin(const std::function<double(double)>& h, double lo, double hi,
                          double spacing) {
  double best_s = lo, best_v = h(lo);
  for (double s = lo; s <= hi; s += spacing) {
    const double v = h(s);
    if (v < best_v) {
      best_v = v;
      best_s = s;
    }
  }
  return best_s;
}

/// Multiscale grid refinement of a continuous objective over a box; converges
/// to the minimizer of well-conditioned convex objectives. dim <= 3 intended.
inline Eigen::VectorXd multiscale_grid_argmin(
    const std::function<double(const Eigen::VectorXd&)>& h, Eigen::VectorXd lo,
    Eigen::VectorXd hi, int levels = 40, int per_axis = 9) {
  const Eigen::Index d = lo.size();
  Eigen::VectorXd best = 0.5 * (lo + hi);
  double best_v = h(best);
  for (int level = 0; level < levels; ++level) {
    Eigen::VectorXd step = (hi - lo) / static_cast<double>(per_axis - 1);
    std::vector<int> idx(d, 0);
    while (true) {
      Eigen::VectorXd p(d);
      for (Eigen::Index k = 0; k < d; ++k) p[k] = lo[k] + idx[k] * step[k];
      const double v = h(p);
      if (v < best_v) {
        best_v = v;
        best = p;
      }
      Eigen::Index k = 0;
      while (k < d && ++idx[k] == per_axis) idx[k++] = 0;
      if (k == d) break;
    }
    // Shrink the box around the incumbent.
    for (Eigen::Index k = 0; k < d; ++k) {
      const double w = 0.35 * (hi[k] - lo[k]);
      lo[k] = best[k] - 0.5 * w;
      hi[k] = best[k] + 0.5 * w;
    }
  }
  return best;
}

/// Central finite-difference gradient of a scalar field on R^d.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& h,
                                   const Eigen::VectorXd& x, double step = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd hi = x, lo = x;
    hi[i] += step;
    lo[i] -= step;
    g[i] = (h(hi) - h(lo)) / (2.0 * step);
  }
  return g;
}

/// Composite Simpson quadrature.
inline double simpson(const std::function<double(double)>& h, double a, double b, int n = 2048) {
  if (n % 2) ++n;
  const double dx = (b - a) / n;
  double s = h(a) + h(b);
  for (int i = 1; i < n; ++i) s += h(a + i * dx) * (i % 2 ? 4.0 : 2.0);
  return s * dx / 3.0;
}

}  // namespace npcflow::oracle
