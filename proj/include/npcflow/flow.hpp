#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "npcflow/functionals.hpp"
#include "npcflow/geometry.hpp"
#include "npcflow/proximal.hpp"
#include "npcflow/report.hpp"

namespace npcflow {

enum class Scheme { minimizing_movement, smooth_ode };

struct TrajectoryNode {
  double t = 0.0;
  long step_index = 0;  // chain index k with t = k * tau (ODE: sample index)
  SpacePoint point;
  double value = 0.0;
  std::optional<double> slope;
  /// d(x_{k-1}, x_k) of the chain step ending at this node (0 at the start;
  /// for ODE trajectories the distance from the previous recorded node).
  double step_distance = 0.0;
};

struct Trajectory {
  Scheme scheme = Scheme::minimizing_movement;
  double tau = 0.0;
  long n_per_unit = 0;
  double ode_tolerance = 0.0;
  std::uint64_t seed = 0;
  bool certified = true;  // every resolvent step certified
  std::vector<TrajectoryNode> nodes;

  const TrajectoryNode& node_at_time(double t) const;  // throws when t is off the grid
};

struct ConsistencyReport {
  std::vector<long> n_values;
  std::vector<double> sup_errors;  // sup over the sample grid, one per n
  std::vector<double> orders;      // pairwise observed orders
  std::optional<double> observed_order;  // mean; set when >= 3 n values
  bool errors_decreasing = false;
};

/// n-fold resolvent chain W_{t/n}^n(x0); returns x0 when t = 0.
SpacePoint mm_point(const ConvexFunctional& f, const GeodesicSpace& space,
                    const SpacePoint& x0, double t, long n);

/// Single chain with tau = 1/n_per_unit over [0, T], recorded at the chain
/// nodes nearest to `samples` equispaced times. Slopes are filled from the
/// exact slope when the instance has one, otherwise from the difference
/// quotient estimator, unless with_slopes is false.
Trajectory mm_trajectory(const ConvexFunctional& f, const GeodesicSpace& space,
                         const SpacePoint& x0, double T, long samples, long n_per_unit,
                         bool with_slopes = true, std::uint64_t seed = 11);

/// Reference curve dx/dt = -grad f(x) on euclidean space, adaptive
/// Dormand-Prince to the given local tolerance. QuadraticForm instances are
/// cross-checked against the spectral closed form at the final time.
Trajectory smooth_flow(const ConvexFunctional& f, const GeodesicSpace& space,
                       const SpacePoint& x0, double T, long samples, double tol = 1e-10);

/// Spectral closed form of the smooth flow for QuadraticForm instances.
SpacePoint quadratic_flow_point(const ConvexFunctional& f, const SpacePoint& x0, double t);

/// Sup-grid distance between the resolvent chain and the smooth flow for each
/// chain resolution in n_list (chain steps over [0, T]).
ConsistencyReport consistency_report(const ConvexFunctional& f, const GeodesicSpace& space,
                                     const SpacePoint& x0, double T,
                                     const std::vector<long>& n_list, long sample_count = 17);

/// d^2(x_{t+s}, w) <= d^2(x_t, w) - 2 s (f(x_{t+s}) - f(w)) + slack for every
/// witness w and (t, s) pair; both times must lie on the trajectory grid.
CheckReport evi_check(const Trajectory& traj, const ConvexFunctional& f,
                      const GeodesicSpace& space, const std::vector<SpacePoint>& witnesses,
                      const std::vector<std::pair<double, double>>& pairs);

/// Runs two chains with identical tau; d(x_k, y_k) must be nonincreasing.
CheckReport distance_nonincreasing_check(const ConvexFunctional& f, const GeodesicSpace& space,
                                         const SpacePoint& x0, const SpacePoint& y0, double T,
                                         long n_per_unit);

/// Per-step speed d(x_{k-1}, x_k)/tau against the slope at the new point,
/// relative tolerance rel_tol wherever the slope exceeds slope_floor.
CheckReport speed_slope_check(const Trajectory& traj, const ConvexFunctional& f,
                              const GeodesicSpace& space, double slope_floor = 0.1,
                              double rel_tol = 0.05);

/// d(x_s, x_t) <= sqrt(2 (t-s) (f(x_s) - f(x_t))) + slack and
/// d(x_s, x_t) <= sqrt(2 (t-s) (f(x_0) - inf f)) + slack over all grid pairs.
CheckReport half_order_distance_check(const Trajectory& traj, const ConvexFunctional& f,
                                      const GeodesicSpace& space);

/// Energy drop f(x_0) - f(x_T) against the trapezoid quadrature of slope^2.
CheckReport dissipation_check(const Trajectory& traj, const ConvexFunctional& f,
                              const GeodesicSpace& space, double rel_tol = 0.02);

struct InfimumRealizationOptions {
  long n_per_unit = 64;
  double eps_energy = 1e-4;
  double eps_slope = 1e-2;
  /// For instances without a minimizer: require |slope(x_T) - expected| <=
  /// rel tolerance * expected instead of the energy-gap test.
  std::optional<double> expected_residual_slope;
  double expected_slope_rel_tol = 0.01;
  /// Radii for the slope estimate at x_T; coarser radii keep the estimate
  /// meaningful far from the hyperboloid basepoint.
  std::vector<double> slope_radii = default_slope_radii();
};

CheckReport infimum_realization_check(const ConvexFunctional& f, const GeodesicSpace& space,
                                      const SpacePoint& x0, double T_max,
                                      const InfimumRealizationOptions& opts = {});

/// From a slope-zero start the chain must stay put: d(x0, mm_point(t, n)) <=
/// 2 n eps_prox for the given horizons and chain lengths.
CheckReport stationarity_check(const ConvexFunctional& f, const GeodesicSpace& space,
                               const SpacePoint& x0,
                               const std::vector<double>& times = {1.0, 5.0, 10.0},
                               const std::vector<long>& n_values = {1, 4, 16, 64});

}  // namespace npcflow
