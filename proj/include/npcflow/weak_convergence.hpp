#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "npcflow/functionals.hpp"
#include "npcflow/geometry.hpp"
#include "npcflow/report.hpp"

namespace npcflow {

/// Finite window of a conceptual infinite sequence. Tail statistics (the
/// limsup surrogates) use the last tail_fraction of the window.
struct PointSequence {
  std::vector<SpacePoint> points;
  double tail_fraction = 0.5;

  std::size_t tail_begin() const;
};

struct AsymptoticReport {
  SpacePoint center;
  double radius = 0.0;
  std::vector<std::size_t> windows;  // window sizes tried
  double center_drift = 0.0;         // distance between the window centers
  long iterations = 0;
};

/// Closed geodesically convex subsets used by the projection toolkit.
struct ConvexSetDescriptor {
  enum class Kind { geodesic_segment, ball, euclidean_hull, spider_subtree };
  Kind kind = Kind::geodesic_segment;
  SpacePoint a, b;        // segment endpoints; a = ball center
  double radius = 0.0;    // ball
  std::vector<SpacePoint> hull_points;
  std::vector<int> legs;            // spider_subtree: allowed legs
  std::vector<double> max_radii;    // parallel to legs

  static ConvexSetDescriptor segment(SpacePoint a, SpacePoint b);
  static ConvexSetDescriptor ball(SpacePoint center, double radius);
  static ConvexSetDescriptor euclidean_hull(std::vector<SpacePoint> points);
  static ConvexSetDescriptor spider_subtree(std::vector<int> legs, std::vector<double> max_radii);

  std::string label() const;
};

/// Tail max of d(x_n, x): the finite surrogate for limsup d(x_n, x).
double asymptotic_radius(const GeodesicSpace& space, const PointSequence& seq,
                         const SpacePoint& x);

/// Minimizer of the windowed radius. Euclidean windows use the exact smallest
/// enclosing ball; other spaces use farthest-point geodesic descent with
/// midpoint anti-stall targets and shrinking random probes. Centers are
/// computed on the policy window and on a doubled window; the drift between
/// them is reported.
AsymptoticReport asymptotic_center(const GeodesicSpace& space, const PointSequence& seq);

/// The descent engine on an explicit point set; exposed so euclidean results
/// can be cross-validated against the exact path. start_seed selects the
/// initial iterate.
SpacePoint minimax_center_descent(const GeodesicSpace& space,
                                  const std::vector<SpacePoint>& points,
                                  std::uint64_t start_seed = 0, long* iterations = nullptr);

/// Nearest point of the convex set and its distance.
std::pair<SpacePoint, double> project_to_convex(const GeodesicSpace& space,
                                                const ConvexSetDescriptor& set,
                                                const SpacePoint& x);

/// d^2(x, y) >= d^2(x, p) + d^2(p, y) - tol for p = projection of x, y in C.
CheckReport projection_obtuseness_check(const GeodesicSpace& space,
                                        const ConvexSetDescriptor& set, long trials,
                                        std::uint64_t seed, double box_radius = 10.0,
                                        double tolerance = 1e-8);

/// For each target, projects the tail onto the geodesic through x toward the
/// target (extended through x where the space allows) and requires the tail
/// max of d(x, proj(x_n)) to stay below the tolerance.
CheckReport weak_convergence_check(const GeodesicSpace& space, const PointSequence& seq,
                                   const SpacePoint& x, const std::vector<SpacePoint>& targets,
                                   double tolerance = 1e-3);

/// The asymptotic center of a sequence lying in C must lie in C.
CheckReport weak_limits_in_convex_check(const GeodesicSpace& space,
                                        const ConvexSetDescriptor& set,
                                        const PointSequence& seq, double tolerance = 1e-6);

/// f(center) <= tail min of f(x_n) + tolerance for convex f.
CheckReport weak_lsc_check(const ConvexFunctional& f, const GeodesicSpace& space,
                           const PointSequence& seq, double tolerance = 1e-6);

struct MinimizerConvergenceOptions {
  long n_per_unit = 64;
  long samples = 65;
  double value_tol = 1e-6;
  double center_tol = 1e-3;
};

/// Runs the chain, takes the asymptotic center of the sampled trajectory,
/// and requires it to minimize f; when the minimizer is unique it must also
/// be within center_tol of it. Also checks d(x_t, minimizer) nonincreasing.
CheckReport minimizer_convergence_check(const ConvexFunctional& f, const GeodesicSpace& space,
                                        const SpacePoint& x0, double T_max,
                                        const MinimizerConvergenceOptions& opts = {});

}  // namespace npcflow
