#include "npcflow/weak_convergence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "npcflow/flow.hpp"
#include "npcflow/proximal.hpp"
#include "npcflow/rng.hpp"

namespace npcflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::domain_error(msg); }

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

// ---------------------------------------------------------------------------
// Exact smallest enclosing ball (Welzl) for euclidean windows.

struct Ball {
  Eigen::VectorXd center;
  double radius = -1.0;

  bool contains(const Eigen::VectorXd& p) const {
    return radius >= 0.0 && (p - center).norm() <= radius + 1e-11 * (1.0 + radius);
  }
};

Ball ball_from_support(const std::vector<Eigen::VectorXd>& support, Eigen::Index dim) {
  Ball b;
  if (support.empty()) {
    b.center = Eigen::VectorXd::Zero(dim);
    b.radius = -1.0;
    return b;
  }
  if (support.size() == 1) {
    b.center = support[0];
    b.radius = 0.0;
    return b;
  }
  // Circumsphere of the affine hull: 2 (p_i - p_0) . c' = |p_i - p_0|^2 with
  // c = p_0 + c', solved in least squares to tolerate degenerate supports.
  const Eigen::VectorXd& p0 = support[0];
  Eigen::MatrixXd A(static_cast<Eigen::Index>(support.size() - 1), dim);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(support.size() - 1));
  for (std::size_t i = 1; i < support.size(); ++i) {
    const Eigen::VectorXd d = support[i] - p0;
    A.row(static_cast<Eigen::Index>(i - 1)) = 2.0 * d.transpose();
    rhs[static_cast<Eigen::Index>(i - 1)] = d.squaredNorm();
  }
  const Eigen::VectorXd cp = A.completeOrthogonalDecomposition().solve(rhs);
  b.center = p0 + cp;
  b.radius = 0.0;
  for (const auto& p : support) b.radius = std::max(b.radius, (p - b.center).norm());
  return b;
}

Ball welzl(std::vector<Eigen::VectorXd>& pts, std::size_t n,
           std::vector<Eigen::VectorXd>& support, Eigen::Index dim) {
  if (n == 0 || support.size() == static_cast<std::size_t>(dim) + 1)
    return ball_from_support(support, dim);
  Ball b = welzl(pts, n - 1, support, dim);
  if (b.contains(pts[n - 1])) return b;
  support.push_back(pts[n - 1]);
  b = welzl(pts, n - 1, support, dim);
  support.pop_back();
  return b;
}

SpacePoint euclidean_minimax_center(const std::vector<SpacePoint>& points) {
  const Eigen::Index dim = static_cast<Eigen::Index>(points[0].coords.size());
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(points.size());
  for (const auto& p : points) pts.push_back(to_vec(p.coords));
  auto rng = make_rng(0x3e12);
  std::shuffle(pts.begin(), pts.end(), rng);
  std::vector<Eigen::VectorXd> support;
  const Ball b = welzl(pts, pts.size(), support, dim);
  return euclidean_point(to_std(b.center));
}

// ---------------------------------------------------------------------------

double max_sq_distance(const GeodesicSpace& space, const std::vector<SpacePoint>& pts,
                       const SpacePoint& c, std::size_t* arg = nullptr) {
  double best = -1.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = distance(space, pts[i], c);
    if (d * d > best) {
      best = d * d;
      if (arg) *arg = i;
    }
  }
  return best;
}

}  // namespace

std::size_t PointSequence::tail_begin() const {
  if (points.empty()) fail("point sequence must be nonempty");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0))
    fail("tail fraction must lie in (0, 1]");
  const auto window =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(tail_fraction * points.size())));
  return points.size() - window;
}

double asymptotic_radius(const GeodesicSpace& space, const PointSequence& seq,
                         const SpacePoint& x) {
  validate_point(space, x);
  double best = 0.0;
  for (std::size_t i = seq.tail_begin(); i < seq.points.size(); ++i)
    best = std::max(best, distance(space, seq.points[i], x));
  return best;
}

SpacePoint minimax_center_descent(const GeodesicSpace& space,
                                  const std::vector<SpacePoint>& points,
                                  std::uint64_t start_seed, long* iterations) {
  if (points.empty()) fail("minimax_center_descent needs points");
  auto rng = make_rng(start_seed, 0xce);

  // Seed at the point with the smallest max squared distance.
  SpacePoint c = points[0];
  double G = max_sq_distance(space, points, c);
  for (const auto& p : points) {
    const double g = max_sq_distance(space, points, p);
    if (g < G) {
      G = g;
      c = p;
    }
  }
  if (start_seed != 0 && points.size() > 1) {
    std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
    c = points[pick(rng)];
    G = max_sq_distance(space, points, c);
  }

  // The diametral pair; its midpoint is the exact center on metric trees and
  // a strong anti-stall target elsewhere.
  std::size_t di = 0, dj = 0;
  double diam = -1.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double d = distance(space, points[i], points[j]);
      if (d > diam) {
        diam = d;
        di = i;
        dj = j;
      }
    }

  auto line_probe = [&](const SpacePoint& z) -> bool {
    const double L = distance(space, c, z);
    if (L < 1e-15) return false;
    // Golden-section on the convex map t -> max_i d^2(g(t), p_i) over [0, 1].
    const double inv_phi = 0.6180339887498949;
    double a = 0.0, b = 1.0;
    double t1 = b - inv_phi * (b - a), t2 = a + inv_phi * (b - a);
    auto g = [&](double t) {
      return max_sq_distance(space, points, geodesic_point(space, c, z, t));
    };
    double g1 = g(t1), g2 = g(t2);
    for (int it = 0; it < 120 && b - a > 1e-13; ++it) {
      if (g1 <= g2) {
        b = t2;
        t2 = t1;
        g2 = g1;
        t1 = b - inv_phi * (b - a);
        g1 = g(t1);
      } else {
        a = t1;
        t1 = t2;
        g1 = g2;
        t2 = a + inv_phi * (b - a);
        g2 = g(t2);
      }
    }
    const double tm = 0.5 * (a + b);
    const double gm = g(tm);
    if (gm < G - 1e-15 * (1.0 + G)) {
      c = geodesic_point(space, c, z, tm);
      G = gm;
      return true;
    }
    return false;
  };

  long rounds = 0;
  for (; rounds < 400; ++rounds) {
    // Distances sorted to find the top active points.
    std::vector<std::pair<double, std::size_t>> order(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
      order[i] = {distance(space, points[i], c), i};
    std::sort(order.rbegin(), order.rend());

    std::vector<SpacePoint> targets;
    targets.push_back(points[order[0].second]);
    const std::size_t top = std::min<std::size_t>(3, order.size());
    for (std::size_t i = 0; i < top; ++i)
      for (std::size_t j = i + 1; j < top; ++j)
        targets.push_back(geodesic_point(space, points[order[i].second],
                                         points[order[j].second], 0.5));
    targets.push_back(geodesic_point(space, points[di], points[dj], 0.5));

    bool improved = false;
    for (const auto& z : targets)
      if (line_probe(z)) improved = true;

    if (!improved) {
      // Shrinking random probes; strong convexity of the squared radius makes
      // a descent direction findable whenever c is off the optimum.
      bool rescued = false;
      double scale = std::sqrt(G) * 0.5 + 1e-9;
      while (scale > 1e-10 && !rescued) {
        for (int k = 0; k < 48 && !rescued; ++k) {
          const SpacePoint dir = random_point(space, rng, std::max(std::sqrt(G), 1.0));
          if (distance(space, c, dir) < 1e-15) continue;
          const SpacePoint z = geodesic_ray_point(
              space, c, dir, std::min(scale, distance(space, c, dir)));
          if (line_probe(z)) rescued = true;
        }
        scale *= 0.5;
      }
      if (!rescued) break;
    }
  }
  if (iterations) *iterations = rounds;
  return c;
}

namespace {

SpacePoint window_center(const GeodesicSpace& space, const std::vector<SpacePoint>& window,
                         long* iterations) {
  if (space.kind == SpaceKind::euclidean) {
    if (iterations) *iterations = 0;
    return euclidean_minimax_center(window);
  }
  return minimax_center_descent(space, window, 0, iterations);
}

}  // namespace

AsymptoticReport asymptotic_center(const GeodesicSpace& space, const PointSequence& seq) {
  const std::size_t begin = seq.tail_begin();
  const std::size_t w = seq.points.size() - begin;
  // Drift is measured against the deeper half window: halving the window is
  // one doubling of the tail start, so a stable limsup surrogate must move
  // little between the two.
  const std::size_t w_half = std::max<std::size_t>(1, w / 2);

  std::vector<SpacePoint> window(seq.points.begin() + static_cast<std::ptrdiff_t>(begin),
                                 seq.points.end());
  std::vector<SpacePoint> deeper(
      seq.points.begin() + static_cast<std::ptrdiff_t>(seq.points.size() - w_half),
      seq.points.end());

  AsymptoticReport rep;
  long iters = 0;
  rep.center = window_center(space, window, &iters);
  rep.iterations = iters;
  rep.radius = 0.0;
  for (const auto& p : window) rep.radius = std::max(rep.radius, distance(space, p, rep.center));
  rep.windows = {w, w_half};
  const SpacePoint c2 = w_half < w ? window_center(space, deeper, nullptr) : rep.center;
  rep.center_drift = distance(space, rep.center, c2);
  return rep;
}

// ---------------------------------------------------------------------------
// Convex sets and projections.

ConvexSetDescriptor ConvexSetDescriptor::segment(SpacePoint a, SpacePoint b) {
  ConvexSetDescriptor c;
  c.kind = Kind::geodesic_segment;
  c.a = std::move(a);
  c.b = std::move(b);
  return c;
}

ConvexSetDescriptor ConvexSetDescriptor::ball(SpacePoint center, double radius) {
  if (!(radius >= 0.0)) fail("ball radius must be >= 0");
  ConvexSetDescriptor c;
  c.kind = Kind::ball;
  c.a = std::move(center);
  c.radius = radius;
  return c;
}

ConvexSetDescriptor ConvexSetDescriptor::euclidean_hull(std::vector<SpacePoint> points) {
  if (points.empty()) fail("euclidean_hull needs points");
  for (const auto& p : points)
    if (p.kind != SpaceKind::euclidean) fail("euclidean_hull needs euclidean points");
  ConvexSetDescriptor c;
  c.kind = Kind::euclidean_hull;
  c.hull_points = std::move(points);
  return c;
}

ConvexSetDescriptor ConvexSetDescriptor::spider_subtree(std::vector<int> legs,
                                                        std::vector<double> max_radii) {
  if (legs.size() != max_radii.size()) fail("spider_subtree needs one radius per leg");
  for (double r : max_radii)
    if (!(r >= 0.0)) fail("spider_subtree radii must be >= 0");
  ConvexSetDescriptor c;
  c.kind = Kind::spider_subtree;
  c.legs = std::move(legs);
  c.max_radii = std::move(max_radii);
  return c;
}

std::string ConvexSetDescriptor::label() const {
  switch (kind) {
    case Kind::geodesic_segment: return "segment";
    case Kind::ball: return "ball";
    case Kind::euclidean_hull: return "hull";
    case Kind::spider_subtree: return "subtree";
  }
  return "?";
}

std::pair<SpacePoint, double> project_to_convex(const GeodesicSpace& space,
                                                const ConvexSetDescriptor& set,
                                                const SpacePoint& x) {
  validate_point(space, x);
  switch (set.kind) {
    case ConvexSetDescriptor::Kind::geodesic_segment: {
      validate_point(space, set.a);
      validate_point(space, set.b);
      if (space.kind == SpaceKind::euclidean) {
        // Exact: clamp the orthogonal projection parameter.
        const Eigen::VectorXd av = to_vec(set.a.coords);
        const Eigen::VectorXd dv = to_vec(set.b.coords) - av;
        const double den = dv.squaredNorm();
        const double t =
            den > 0.0 ? std::clamp((to_vec(x.coords) - av).dot(dv) / den, 0.0, 1.0) : 0.0;
        const SpacePoint p = euclidean_point(to_std(av + t * dv));
        return {p, distance(space, x, p)};
      }
      // Golden-section on the convex map t -> d^2(x, g(t)).
      const double inv_phi = 0.6180339887498949;
      double a = 0.0, b = 1.0;
      auto h = [&](double t) {
        const double d = distance(space, x, geodesic_point(space, set.a, set.b, t));
        return d * d;
      };
      double t1 = b - inv_phi, t2 = a + inv_phi;
      double h1 = h(t1), h2 = h(t2);
      for (int it = 0; it < 140 && b - a > 1e-14; ++it) {
        if (h1 <= h2) {
          b = t2;
          t2 = t1;
          h2 = h1;
          t1 = b - inv_phi * (b - a);
          h1 = h(t1);
        } else {
          a = t1;
          t1 = t2;
          h1 = h2;
          t2 = a + inv_phi * (b - a);
          h2 = h(t2);
        }
      }
      double tm = 0.5 * (a + b);
      double hm = h(tm);
      if (h(0.0) < hm) { tm = 0.0; hm = h(0.0); }
      if (h(1.0) < hm) { tm = 1.0; hm = h(1.0); }
      const SpacePoint p = geodesic_point(space, set.a, set.b, tm);
      return {p, std::sqrt(hm)};
    }
    case ConvexSetDescriptor::Kind::ball: {
      validate_point(space, set.a);
      const double D = distance(space, set.a, x);
      if (D <= set.radius) return {x, 0.0};
      const SpacePoint p = geodesic_point(space, set.a, x, set.radius / D);
      return {p, distance(space, x, p)};
    }
    case ConvexSetDescriptor::Kind::euclidean_hull: {
      if (space.kind != SpaceKind::euclidean) fail("euclidean_hull needs euclidean space");
      std::vector<Eigen::VectorXd> shifted;
      shifted.reserve(set.hull_points.size());
      const Eigen::VectorXd xv = to_vec(x.coords);
      for (const auto& p : set.hull_points) {
        validate_point(space, p);
        shifted.push_back(to_vec(p.coords) - xv);
      }
      auto [q, sq] = min_norm_in_hull(shifted);
      const SpacePoint p = euclidean_point(to_std(xv + q));
      return {p, std::sqrt(sq)};
    }
    case ConvexSetDescriptor::Kind::spider_subtree: {
      if (space.kind != SpaceKind::spider) fail("spider_subtree needs spider space");
      if (x.leg != 0) {
        for (std::size_t i = 0; i < set.legs.size(); ++i) {
          if (set.legs[i] == x.leg) {
            const double r = std::min(x.radius, set.max_radii[i]);
            return {spider_point(x.leg, r), x.radius - r};
          }
        }
      }
      if (x.leg == 0) return {x, 0.0};
      return {spider_point(0, 0.0), x.radius};  // other legs meet the subtree at the hub
    }
  }
  fail("unreachable");
}

namespace {

SpacePoint sample_in_set(const GeodesicSpace& space, const ConvexSetDescriptor& set,
                         std::mt19937_64& rng, double box_radius) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (set.kind) {
    case ConvexSetDescriptor::Kind::geodesic_segment:
      return geodesic_point(space, set.a, set.b, unit(rng));
    case ConvexSetDescriptor::Kind::ball: {
      const SpacePoint z = random_point(space, rng, box_radius);
      const double D = distance(space, set.a, z);
      if (D <= set.radius) return z;
      return geodesic_point(space, set.a, z, set.radius / D * unit(rng));
    }
    case ConvexSetDescriptor::Kind::euclidean_hull: {
      // Dirichlet(1,...,1) weights via exponentials.
      std::exponential_distribution<double> expo(1.0);
      std::vector<double> w(set.hull_points.size());
      double sum = 0.0;
      for (double& v : w) {
        v = expo(rng);
        sum += v;
      }
      Eigen::VectorXd p = Eigen::VectorXd::Zero(
          static_cast<Eigen::Index>(set.hull_points[0].coords.size()));
      for (std::size_t i = 0; i < w.size(); ++i)
        p += (w[i] / sum) * to_vec(set.hull_points[i].coords);
      return euclidean_point(to_std(p));
    }
    case ConvexSetDescriptor::Kind::spider_subtree: {
      if (set.legs.empty()) return spider_point(0, 0.0);
      std::uniform_int_distribution<std::size_t> pick(0, set.legs.size() - 1);
      const std::size_t i = pick(rng);
      return spider_point(set.legs[i], set.max_radii[i] * unit(rng));
    }
  }
  fail("unreachable");
}

}  // namespace

CheckReport projection_obtuseness_check(const GeodesicSpace& space,
                                        const ConvexSetDescriptor& set, long trials,
                                        std::uint64_t seed, double box_radius,
                                        double tolerance) {
  if (trials < 1) fail("projection_obtuseness_check needs trials >= 1");
  CheckReport report;
  report.name = "projection_obtuseness(" + set.label() + " on " + space_label(space) + ")";
  report.tolerance = tolerance;
  report.details = "worst of d^2(x,p) + d^2(p,y) - d^2(x,y) for p = proj(x), y in C";
  auto rng = make_rng(seed);
  for (long i = 0; i < trials; ++i) {
    const SpacePoint x = random_point(space, rng, box_radius);
    const SpacePoint y = sample_in_set(space, set, rng, box_radius);
    const auto [p, dxp] = project_to_convex(space, set, x);
    const double dpy = distance(space, p, y);
    const double dxy = distance(space, x, y);
    report.record(dxp * dxp + dpy * dpy - dxy * dxy);
  }
  return report.finish();
}

CheckReport weak_convergence_check(const GeodesicSpace& space, const PointSequence& seq,
                                   const SpacePoint& x, const std::vector<SpacePoint>& targets,
                                   double tolerance) {
  validate_point(space, x);
  if (targets.empty()) fail("weak_convergence_check needs at least one geodesic target");
  CheckReport report;
  report.name = "weak_convergence(" + space_label(space) + ")";
  report.tolerance = tolerance;
  report.details =
      "per geodesic through x: tail max of d(x, proj_geodesic(x_n)) minus tolerance";
  const bool extendable =
      space.kind == SpaceKind::euclidean || space.kind == SpaceKind::hyperbolic;
  for (const auto& z : targets) {
    const double L = distance(space, x, z);
    if (L < 1e-12) fail("geodesic target coincides with x");
    // Segment through x: from z to the reflection of z through x when the
    // space extends geodesics, otherwise the segment from z to x itself.
    const SpacePoint far_end =
        extendable ? geodesic_ray_point(space, z, x, 2.0 * L) : x;
    const ConvexSetDescriptor geod = ConvexSetDescriptor::segment(z, far_end);
    double tail_max = 0.0;
    for (std::size_t i = seq.tail_begin(); i < seq.points.size(); ++i) {
      const auto [p, dist_to_geod] = project_to_convex(space, geod, seq.points[i]);
      (void)dist_to_geod;
      tail_max = std::max(tail_max, distance(space, x, p));
    }
    report.record(tail_max);
  }
  return report.finish();
}

CheckReport weak_limits_in_convex_check(const GeodesicSpace& space,
                                        const ConvexSetDescriptor& set,
                                        const PointSequence& seq, double tolerance) {
  CheckReport report;
  report.name = "weak_limits_in_convex(" + set.label() + " on " + space_label(space) + ")";
  report.tolerance = tolerance;
  report.details =
      "d(center, proj_C(center)) for the tail asymptotic center; center drift reported";
  const AsymptoticReport rep = asymptotic_center(space, seq);
  const auto [p, d] = project_to_convex(space, set, rep.center);
  (void)p;
  report.record(d);
  report.record(rep.center_drift);  // drift must stabilize below tolerance too
  return report.finish();
}

CheckReport weak_lsc_check(const ConvexFunctional& f, const GeodesicSpace& space,
                           const PointSequence& seq, double tolerance) {
  f.require_space(space);
  CheckReport report;
  report.name = "weak_lsc(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = tolerance;
  report.details = "f(center) - tail min f(x_n); center drift gated at the same tolerance";
  const AsymptoticReport rep = asymptotic_center(space, seq);
  double tail_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = seq.tail_begin(); i < seq.points.size(); ++i)
    tail_min = std::min(tail_min, f.value(space, seq.points[i]));
  report.record(f.value(space, rep.center) - tail_min);
  report.record(rep.center_drift);
  return report.finish();
}

CheckReport minimizer_convergence_check(const ConvexFunctional& f, const GeodesicSpace& space,
                                        const SpacePoint& x0, double T_max,
                                        const MinimizerConvergenceOptions& opts) {
  if (!f.has_minimizer()) fail("minimizer_convergence_check needs a minimizer");
  CheckReport report;
  report.name = "minimizer_convergence(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = 0.0;
  report.details =
      "records f(center) - inf f - value_tol, d(center, minimizer) - center_tol when "
      "unique, and the worst increase of d(x_t, minimizer)";

  const Trajectory traj =
      mm_trajectory(f, space, x0, T_max, opts.samples, opts.n_per_unit, false);
  PointSequence seq;
  seq.points.reserve(traj.nodes.size());
  for (const auto& n : traj.nodes) seq.points.push_back(n.point);

  const AsymptoticReport rep = asymptotic_center(space, seq);
  report.record(f.value(space, rep.center) - f.infimum() - opts.value_tol);

  const auto minimizer = f.minimizer(space);
  if (minimizer && f.has_unique_minimizer())
    report.record(distance(space, rep.center, *minimizer) - opts.center_tol);

  if (minimizer) {
    double prev = distance(space, traj.nodes.front().point, *minimizer);
    for (std::size_t i = 1; i < traj.nodes.size(); ++i) {
      const double cur = distance(space, traj.nodes[i].point, *minimizer);
      const double steps =
          static_cast<double>(traj.nodes[i].step_index - traj.nodes[i - 1].step_index);
      report.record(cur - prev - 4.0 * prox_epsilon(traj.tau) * steps);
      prev = cur;
    }
  }
  return report.finish();
}

}  // namespace npcflow
