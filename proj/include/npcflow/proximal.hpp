#pragma once

#include <cstdint>

#include "npcflow/functionals.hpp"
#include "npcflow/geometry.hpp"
#include "npcflow/report.hpp"

namespace npcflow {

enum class ProxMethod { closed_form, geodesic_search };

/// One implicit step: the minimizer of F_{x,tau}(y) = d^2(x,y)/(2 tau) + f(y).
struct ResolventResult {
  SpacePoint point;
  double objective = 0.0;  // achieved F_{x,tau} value
  ProxMethod method = ProxMethod::closed_form;
  long iterations = 0;
  /// Upper bound on d(point, true minimizer); meaningful when certified.
  double certified_gap = 0.0;
  bool certified = true;
};

/// Target accuracy for one resolvent step.
inline double prox_epsilon(double tau) { return 1e-8 * (1.0 + tau); }

/// Uses the instance's closed form when it has one, otherwise the generic
/// geodesic line-search solver. tau must be positive.
ResolventResult resolvent(const ConvexFunctional& f, const GeodesicSpace& space,
                          const SpacePoint& x, double tau);

/// Forces the generic solver even when a closed form exists; used to
/// cross-validate the two routes. The gap certificate comes from the exact
/// objective gradient on euclidean space, or from one-dimensional bracketing
/// along the instance's prox line when it declares one; otherwise the result
/// is flagged non-certified.
ResolventResult resolvent_generic(const ConvexFunctional& f, const GeodesicSpace& space,
                                  const SpacePoint& x, double tau, std::uint64_t seed = 7);

/// inf F_{x,tau} = the achieved resolvent objective.
double moreau_yosida(const ConvexFunctional& f, const GeodesicSpace& space,
                     const SpacePoint& x, double tau);

/// d(W x, W y) <= d(x, y) + 2 eps_prox on random pairs.
CheckReport resolvent_contraction_check(const ConvexFunctional& f, const GeodesicSpace& space,
                                        long trials, double tau, std::uint64_t seed,
                                        double box_radius = 10.0);

/// slope(W x) <= slope(x) + combined tolerance on random points.
CheckReport slope_monotone_check(const ConvexFunctional& f, const GeodesicSpace& space,
                                 long trials, double tau, std::uint64_t seed,
                                 double box_radius = 10.0);

}  // namespace npcflow
