#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "npcflow/report.hpp"

namespace npcflow {

enum class SpaceKind { euclidean, hyperbolic, spider, product };

std::string to_string(SpaceKind kind);

/// A point of one of the model spaces.
///
/// euclidean  : coords holds d cartesian coordinates.
/// hyperbolic : coords holds d+1 ambient coordinates on the upper hyperboloid
///              sheet, <x,x>_M = -1 and x0 > 0, where
///              <x,y>_M = -x0*y0 + sum_{i>=1} xi*yi.
/// spider     : (leg, radius) on k rays glued at a hub. radius 0 is
///              canonicalized to leg 0, so the hub has a unique representation.
/// product    : factors holds one point per factor space.
struct SpacePoint {
  SpaceKind kind = SpaceKind::euclidean;
  std::vector<double> coords;
  int leg = 0;
  double radius = 0.0;
  std::vector<SpacePoint> factors;

  friend bool operator==(const SpacePoint&, const SpacePoint&) = default;
};

SpacePoint euclidean_point(std::vector<double> coords);
/// Lifts spatial coordinates onto the hyperboloid sheet: x0 = sqrt(1 + |y|^2).
SpacePoint hyperbolic_point(const std::vector<double>& spatial);
/// Full ambient coordinates; validates the hyperboloid constraint.
SpacePoint hyperbolic_point_ambient(std::vector<double> coords);
SpacePoint spider_point(int leg, double radius);
SpacePoint product_point(SpacePoint first, SpacePoint second);

/// Repairs small off-sheet drift of ambient hyperboloid coordinates. Rescales
/// only when the constraint residual is resolvable and genuinely nonzero;
/// far-from-basepoint vectors at the floating-point resolution limit are
/// returned as computed.
SpacePoint hyperboloid_repair(std::vector<double> ambient);

struct GeodesicSpace {
  SpaceKind kind = SpaceKind::euclidean;
  int dim = 0;   // euclidean / hyperbolic
  int legs = 0;  // spider
  std::vector<GeodesicSpace> factors;

  static GeodesicSpace euclidean(int dim);
  static GeodesicSpace hyperbolic(int dim);
  static GeodesicSpace spider(int legs);
  static GeodesicSpace product(GeodesicSpace a, GeodesicSpace b);

  friend bool operator==(const GeodesicSpace&, const GeodesicSpace&) = default;
};

/// "euclidean(2)", "product(euclidean(2),spider(3))", ...
std::string space_label(const GeodesicSpace& space);

/// Throws std::domain_error when p is not a valid point of space.
void validate_point(const GeodesicSpace& space, const SpacePoint& p);

double minkowski_dot(const std::vector<double>& a, const std::vector<double>& b);

double distance(const GeodesicSpace& space, const SpacePoint& x, const SpacePoint& y);

/// Constant-speed geodesic with g(0)=x, g(1)=y; t must lie in [0,1].
SpacePoint geodesic_point(const GeodesicSpace& space, const SpacePoint& x,
                          const SpacePoint& y, double t);

/// Point at arc length s >= 0 from x along the geodesic ray through z.
/// Extends past z where the ray continues (always in euclidean/hyperbolic,
/// outward legs in spider); clamps where the continuation is ambiguous
/// (extension through the spider hub).
SpacePoint geodesic_ray_point(const GeodesicSpace& space, const SpacePoint& x,
                              const SpacePoint& z, double s);

/// Seeded sample; euclidean coordinates uniform in [-box_radius, box_radius],
/// hyperbolic spatial coordinates likewise before lifting to the sheet,
/// spider radius uniform in [0, box_radius].
SpacePoint random_point(const GeodesicSpace& space, std::mt19937_64& rng,
                        double box_radius = 10.0);

/// Randomized certification of the comparison inequality
///   d^2(z,g(t)) <= (1-t) d^2(z,x) + t d^2(z,y) - t(1-t) d^2(x,y)
/// on sampled quadruples (x,y,z,t). The combination is evaluated in extended
/// precision so the reported violation reflects the sampled points, not
/// double roundoff of the certifier itself.
CheckReport npc_certify(const GeodesicSpace& space, long trials, std::uint64_t seed,
                        double box_radius = 10.0, double tolerance = 1e-9);

/// Flat coordinate view used by CSV export and the python bindings:
/// euclidean -> coords, hyperbolic -> ambient coords, spider -> {leg, radius},
/// product -> concatenation of the factor views.
int flat_size(const GeodesicSpace& space);
std::vector<double> flatten(const GeodesicSpace& space, const SpacePoint& p);
SpacePoint unflatten(const GeodesicSpace& space, const std::vector<double>& data);

}  // namespace npcflow
