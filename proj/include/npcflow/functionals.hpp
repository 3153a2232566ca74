#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "npcflow/geometry.hpp"
#include "npcflow/report.hpp"

namespace npcflow {

/// f(x) = 0.5 * d(x, anchor)^2 on the anchor's space.
struct HalfSquaredDistance {
  SpacePoint anchor;
};

/// f(x) = scale * d(x, anchor), scale > 0.
struct ScaledDistance {
  double scale = 1.0;
  SpacePoint anchor;
};

/// f(x) = 0.5 x^T A x - b^T x on euclidean space, A symmetric PSD.
struct QuadraticForm {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd offset;
  // Cached spectral data, filled at construction.
  Eigen::MatrixXd eigvecs;
  Eigen::VectorXd eigvals;
};

/// f(x) = log(-<x,p>_M) on hyperbolic space, p lightlike with p0 = 1.
struct Busemann {
  std::vector<double> ideal;
};

struct MaxAffinePiece {
  std::vector<double> gradient;
  double offset = 0.0;
};

/// f(x) = max_i (g_i . x + c_i) on euclidean space.
struct MaxAffine {
  std::vector<MaxAffinePiece> pieces;
};

/// Directional difference-quotient estimate of the lower slope
/// max{limsup_{y->x} (f(x)-f(y))/d(x,y), 0}.
struct SlopeEstimate {
  double value = 0.0;
  std::vector<double> radii;
  std::vector<double> quotients;  // max directional quotient per radius
  bool converged = false;
  /// Absolute spread between the two smallest radii; 0 when exact.
  double error_bound = 0.0;
};

/// Geodesically convex functional on one of the model spaces. Value type;
/// instances validate their own parameters at construction.
class ConvexFunctional {
 public:
  using Instance =
      std::variant<HalfSquaredDistance, ScaledDistance, QuadraticForm, Busemann, MaxAffine>;

  static ConvexFunctional half_squared_distance(SpacePoint anchor);
  static ConvexFunctional scaled_distance(double scale, SpacePoint anchor);
  static ConvexFunctional quadratic_form(Eigen::MatrixXd A, Eigen::VectorXd b);
  static ConvexFunctional busemann(std::vector<double> ideal);
  static ConvexFunctional max_affine(std::vector<MaxAffinePiece> pieces);

  const Instance& instance() const { return instance_; }
  std::string kind_name() const;

  /// Throws std::domain_error when the functional is not defined on `space`.
  void require_space(const GeodesicSpace& space) const;

  double value(const GeodesicSpace& space, const SpacePoint& x) const;

  bool has_exact_slope() const;
  double exact_slope(const GeodesicSpace& space, const SpacePoint& x) const;

  bool has_smooth_gradient() const;
  Eigen::VectorXd gradient(const GeodesicSpace& space, const SpacePoint& x) const;

  bool has_closed_form_prox() const;

  bool is_bounded_below() const;
  /// Defined when is_bounded_below(); the exact infimum.
  double infimum() const;
  bool has_minimizer() const;
  bool has_unique_minimizer() const;
  std::optional<SpacePoint> minimizer(const GeodesicSpace& space) const;

  /// Targets whose geodesics from x are good descent probes: anchors,
  /// minimizers, gradient or subgradient steps. Used by the slope estimator
  /// and the generic resolvent search.
  std::vector<SpacePoint> descent_targets(const GeodesicSpace& space, const SpacePoint& x) const;

  /// When set, the minimizer of d^2(x,.)/(2 tau) + f lies on the geodesic ray
  /// from x through the returned target, for every tau > 0. Lets the generic
  /// resolvent certify its gap by one-dimensional bracketing.
  std::optional<SpacePoint> prox_line_target(const GeodesicSpace& space,
                                             const SpacePoint& x) const;

 private:
  explicit ConvexFunctional(Instance instance) : instance_(std::move(instance)) {}
  Instance instance_;
};

/// Lower-slope estimate by geodesic difference quotients at shrinking radii;
/// quotients are maximized over `directions` random targets plus the
/// functional's descent targets. The smallest radius supplies the estimate
/// (quotients increase as the radius shrinks for convex f); the estimate is
/// flagged non-convergent when the two smallest radii disagree by more than 1%.
SlopeEstimate lower_slope_estimate(const ConvexFunctional& f, const GeodesicSpace& space,
                                   const SpacePoint& x, int directions,
                                   const std::vector<double>& radii,
                                   std::uint64_t seed = 0x5107eULL);

std::vector<double> default_slope_radii();

/// Best available slope: exact when the instance knows it, otherwise the
/// difference-quotient estimate.
SlopeEstimate slope_of(const ConvexFunctional& f, const GeodesicSpace& space,
                       const SpacePoint& x, std::uint64_t seed = 0x5107eULL);

/// Samples (x, y, t) and certifies f(g(t)) <= (1-t) f(x) + t f(y) + tolerance.
CheckReport convexity_certify(const ConvexFunctional& f, const GeodesicSpace& space,
                              long trials, std::uint64_t seed, double box_radius = 10.0,
                              double tolerance = 1e-9);

/// Certifies the slope descent bound f(y) >= f(x) - |grad_- f|(x) d(x,y) on
/// random pairs, with per-sample tolerance 1e-8 + 2 * slope_error * d(x,y).
CheckReport slope_bound_check(const ConvexFunctional& f, const GeodesicSpace& space,
                              long trials, std::uint64_t seed, double box_radius = 10.0);

/// Smallest-norm point of the convex hull of the given vectors; exact face
/// enumeration for up to 14 vectors. Returns the point and its squared norm.
std::pair<Eigen::VectorXd, double> min_norm_in_hull(const std::vector<Eigen::VectorXd>& points);

}  // namespace npcflow
