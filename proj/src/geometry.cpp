#include "npcflow/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include "npcflow/rng.hpp"

namespace npcflow {

namespace {

constexpr double kDegenerate = 1e-14;

[[noreturn]] void fail(const std::string& msg) { throw std::domain_error(msg); }

void check_kind(const GeodesicSpace& space, const SpacePoint& p) {
  if (space.kind != p.kind)
    fail("point kind " + to_string(p.kind) + " does not match space " + space_label(space));
}

}  // namespace

std::string to_string(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::euclidean: return "euclidean";
    case SpaceKind::hyperbolic: return "hyperbolic";
    case SpaceKind::spider: return "spider";
    case SpaceKind::product: return "product";
  }
  return "?";
}

std::string space_label(const GeodesicSpace& space) {
  switch (space.kind) {
    case SpaceKind::euclidean: return "euclidean(" + std::to_string(space.dim) + ")";
    case SpaceKind::hyperbolic: return "hyperbolic(" + std::to_string(space.dim) + ")";
    case SpaceKind::spider: return "spider(" + std::to_string(space.legs) + ")";
    case SpaceKind::product:
      return "product(" + space_label(space.factors[0]) + "," + space_label(space.factors[1]) + ")";
  }
  return "?";
}

SpacePoint euclidean_point(std::vector<double> coords) {
  SpacePoint p;
  p.kind = SpaceKind::euclidean;
  p.coords = std::move(coords);
  return p;
}

SpacePoint hyperbolic_point(const std::vector<double>& spatial) {
  SpacePoint p;
  p.kind = SpaceKind::hyperbolic;
  p.coords.resize(spatial.size() + 1);
  long double s = 1.0L;
  for (std::size_t i = 0; i < spatial.size(); ++i) {
    s += static_cast<long double>(spatial[i]) * spatial[i];
    p.coords[i + 1] = spatial[i];
  }
  p.coords[0] = static_cast<double>(sqrtl(s));
  return p;
}

SpacePoint hyperbolic_point_ambient(std::vector<double> coords) {
  if (coords.size() < 2) fail("hyperbolic point needs at least 2 ambient coordinates");
  SpacePoint p;
  p.kind = SpaceKind::hyperbolic;
  p.coords = std::move(coords);
  const double q = minkowski_dot(p.coords, p.coords);
  const double scale = 1.0 + p.coords[0] * p.coords[0];
  if (std::abs(q + 1.0) > 1e-12 * scale)
    fail("hyperbolic point violates <x,x>_M = -1");
  if (p.coords[0] <= 0.0) fail("hyperbolic point must lie on the upper sheet (x0 > 0)");
  return p;
}

SpacePoint spider_point(int leg, double radius) {
  if (leg < 0) fail("spider leg index must be >= 0");
  if (radius < 0.0) fail("spider radius must be >= 0");
  SpacePoint p;
  p.kind = SpaceKind::spider;
  if (radius == 0.0) {
    p.leg = 0;
    p.radius = 0.0;
  } else {
    if (leg == 0) fail("nonzero spider radius requires a leg index >= 1");
    p.leg = leg;
    p.radius = radius;
  }
  return p;
}

SpacePoint product_point(SpacePoint first, SpacePoint second) {
  SpacePoint p;
  p.kind = SpaceKind::product;
  p.factors.reserve(2);
  p.factors.push_back(std::move(first));
  p.factors.push_back(std::move(second));
  return p;
}

GeodesicSpace GeodesicSpace::euclidean(int dim) {
  if (dim < 1) fail("euclidean dimension must be >= 1");
  GeodesicSpace s;
  s.kind = SpaceKind::euclidean;
  s.dim = dim;
  return s;
}

GeodesicSpace GeodesicSpace::hyperbolic(int dim) {
  if (dim < 1) fail("hyperbolic dimension must be >= 1");
  GeodesicSpace s;
  s.kind = SpaceKind::hyperbolic;
  s.dim = dim;
  return s;
}

GeodesicSpace GeodesicSpace::spider(int legs) {
  if (legs < 2) fail("spider needs at least 2 legs");
  GeodesicSpace s;
  s.kind = SpaceKind::spider;
  s.legs = legs;
  return s;
}

GeodesicSpace GeodesicSpace::product(GeodesicSpace a, GeodesicSpace b) {
  GeodesicSpace s;
  s.kind = SpaceKind::product;
  s.factors.reserve(2);
  s.factors.push_back(std::move(a));
  s.factors.push_back(std::move(b));
  return s;
}

void validate_point(const GeodesicSpace& space, const SpacePoint& p) {
  check_kind(space, p);
  switch (space.kind) {
    case SpaceKind::euclidean:
      if (static_cast<int>(p.coords.size()) != space.dim)
        fail("euclidean point dimension mismatch");
      break;
    case SpaceKind::hyperbolic: {
      if (static_cast<int>(p.coords.size()) != space.dim + 1)
        fail("hyperbolic point needs dim+1 ambient coordinates");
      const double q = minkowski_dot(p.coords, p.coords);
      // Tolerance scales with x0^2: far from the basepoint the constraint
      // residual of a correctly rounded point grows like eps * x0^2.
      if (std::abs(q + 1.0) > 1e-12 * (1.0 + p.coords[0] * p.coords[0]))
        fail("hyperbolic point violates <x,x>_M = -1");
      if (p.coords[0] <= 0.0) fail("hyperbolic point must have x0 > 0");
      break;
    }
    case SpaceKind::spider:
      if (p.radius < 0.0) fail("spider radius must be >= 0");
      if (p.radius == 0.0 && p.leg != 0) fail("spider hub must be canonicalized to leg 0");
      if (p.radius > 0.0 && (p.leg < 1 || p.leg > space.legs))
        fail("spider leg index out of range");
      break;
    case SpaceKind::product:
      if (p.factors.size() != 2) fail("product point needs exactly 2 factors");
      validate_point(space.factors[0], p.factors[0]);
      validate_point(space.factors[1], p.factors[1]);
      break;
  }
}

double minkowski_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = -a[0] * b[0];
  for (std::size_t i = 1; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

namespace {

// acosh(1+s) for s >= 0 without cancellation near s = 0.
double acosh1p(double s) {
  s = std::max(s, 0.0);
  return std::log1p(s + std::sqrt(s * (s + 2.0)));
}

double hyperbolic_distance(const SpacePoint& x, const SpacePoint& y) {
  // -<x,y>_M - 1 via the Minkowski norm of the difference; stable for
  // nearby points where the direct inner product cancels badly.
  long double s = 0.0L;
  {
    long double d0 = static_cast<long double>(x.coords[0]) - y.coords[0];
    s = -d0 * d0;
    for (std::size_t i = 1; i < x.coords.size(); ++i) {
      long double di = static_cast<long double>(x.coords[i]) - y.coords[i];
      s += di * di;
    }
    s *= 0.5L;
  }
  return acosh1p(static_cast<double>(s));
}

}  // namespace

SpacePoint hyperboloid_repair(std::vector<double> v) {
  long double q = 0.0L, mag = 0.0L;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const long double c = v[i];
    q += (i == 0 ? 1.0L : -1.0L) * c * c;  // q = -<v,v>_M, ~1 on the sheet
    mag += c * c;
  }
  // Resolution of the long double residual; beyond it the constraint cannot
  // be measured and rescaling would only inject noise.
  const long double sigma = 8.0L * 1.1e-19L * mag;
  if (q > 0.0L && sigma < 0.1L) {
    if (fabsl(q - 1.0L) > sigma + 1e-14L) {
      const long double inv = 1.0L / sqrtl(q);
      for (double& c : v) c = static_cast<double>(c * inv);
    }
  } else if (!(v[0] > 1e6 || v[0] < -1e6)) {
    fail("hyperbolic repair of a vector far off the sheet");
  }
  if (v[0] < 0.0)
    for (double& c : v) c = -c;
  SpacePoint p;
  p.kind = SpaceKind::hyperbolic;
  p.coords = std::move(v);
  return p;
}

double distance(const GeodesicSpace& space, const SpacePoint& x, const SpacePoint& y) {
  check_kind(space, x);
  check_kind(space, y);
  switch (space.kind) {
    case SpaceKind::euclidean: {
      if (x.coords.size() != y.coords.size()) fail("euclidean dimension mismatch");
      double s = 0.0;
      for (std::size_t i = 0; i < x.coords.size(); ++i) {
        const double d = x.coords[i] - y.coords[i];
        s += d * d;
      }
      return std::sqrt(s);
    }
    case SpaceKind::hyperbolic:
      if (x.coords.size() != y.coords.size()) fail("hyperbolic dimension mismatch");
      return hyperbolic_distance(x, y);
    case SpaceKind::spider:
      if (x.leg == y.leg) return std::abs(x.radius - y.radius);
      return x.radius + y.radius;
    case SpaceKind::product: {
      const double d1 = distance(space.factors[0], x.factors[0], y.factors[0]);
      const double d2 = distance(space.factors[1], x.factors[1], y.factors[1]);
      return std::hypot(d1, d2);
    }
  }
  fail("unreachable");
}

namespace {

// Shared by geodesic_point (t in [0,1]) and geodesic_ray_point (t >= 0):
// the formulas below are valid for any t >= 0 where the ray is defined.
SpacePoint geodesic_impl(const GeodesicSpace& space, const SpacePoint& x,
                         const SpacePoint& y, double t) {
  switch (space.kind) {
    case SpaceKind::euclidean: {
      std::vector<double> c(x.coords.size());
      for (std::size_t i = 0; i < c.size(); ++i)
        c[i] = (1.0 - t) * x.coords[i] + t * y.coords[i];
      return euclidean_point(std::move(c));
    }
    case SpaceKind::hyperbolic: {
      const double L = hyperbolic_distance(x, y);
      if (L < kDegenerate) return x;
      const double a = std::sinh((1.0 - t) * L) / std::sinh(L);
      const double b = std::sinh(t * L) / std::sinh(L);
      std::vector<double> c(x.coords.size());
      for (std::size_t i = 0; i < c.size(); ++i)
        c[i] = a * x.coords[i] + b * y.coords[i];
      return hyperboloid_repair(std::move(c));
    }
    case SpaceKind::spider: {
      if (x.leg == y.leg || x.radius == 0.0 || y.radius == 0.0) {
        const int leg = x.radius > 0.0 ? x.leg : y.leg;
        const double r = (1.0 - t) * x.radius + t * y.radius;
        return spider_point(leg, std::max(r, 0.0));
      }
      // Legs differ: route through the hub.
      const double L = x.radius + y.radius;
      const double s = t * L;
      if (s <= x.radius) return spider_point(x.leg, x.radius - s);
      return spider_point(y.leg, s - x.radius);
    }
    case SpaceKind::product:
      return product_point(geodesic_impl(space.factors[0], x.factors[0], y.factors[0], t),
                           geodesic_impl(space.factors[1], x.factors[1], y.factors[1], t));
  }
  fail("unreachable");
}

}  // namespace

SpacePoint geodesic_point(const GeodesicSpace& space, const SpacePoint& x,
                          const SpacePoint& y, double t) {
  if (!(t >= 0.0 && t <= 1.0)) fail("geodesic parameter must lie in [0,1]");
  check_kind(space, x);
  check_kind(space, y);
  if (distance(space, x, y) < kDegenerate) return x;
  return geodesic_impl(space, x, y, t);
}

SpacePoint geodesic_ray_point(const GeodesicSpace& space, const SpacePoint& x,
                              const SpacePoint& z, double s) {
  if (s < 0.0) fail("ray arc length must be >= 0");
  check_kind(space, x);
  check_kind(space, z);
  const double L = distance(space, x, z);
  if (L < kDegenerate) return x;
  switch (space.kind) {
    case SpaceKind::euclidean:
    case SpaceKind::hyperbolic:
      return geodesic_impl(space, x, z, s / L);
    case SpaceKind::spider: {
      if (s <= L) return geodesic_impl(space, x, z, s / L);
      const double extra = s - L;
      if (z.radius == 0.0) return z;            // continuation through the hub is ambiguous
      const bool outward = (x.leg != z.leg) || (z.radius >= x.radius);
      if (outward) return spider_point(z.leg, z.radius + extra);
      const double r = z.radius - extra;
      return r > 0.0 ? spider_point(z.leg, r) : spider_point(0, 0.0);
    }
    case SpaceKind::product: {
      const double t = s / L;
      return product_point(
          geodesic_ray_point(space.factors[0], x.factors[0], z.factors[0],
                             t * distance(space.factors[0], x.factors[0], z.factors[0])),
          geodesic_ray_point(space.factors[1], x.factors[1], z.factors[1],
                             t * distance(space.factors[1], x.factors[1], z.factors[1])));
    }
  }
  fail("unreachable");
}

SpacePoint random_point(const GeodesicSpace& space, std::mt19937_64& rng, double box_radius) {
  std::uniform_real_distribution<double> box(-box_radius, box_radius);
  switch (space.kind) {
    case SpaceKind::euclidean: {
      std::vector<double> c(space.dim);
      for (double& v : c) v = box(rng);
      return euclidean_point(std::move(c));
    }
    case SpaceKind::hyperbolic: {
      std::vector<double> spatial(space.dim);
      for (double& v : spatial) v = box(rng);
      return hyperbolic_point(spatial);
    }
    case SpaceKind::spider: {
      std::uniform_int_distribution<int> leg(1, space.legs);
      std::uniform_real_distribution<double> rad(0.0, box_radius);
      return spider_point(leg(rng), rad(rng));
    }
    case SpaceKind::product: {
      auto a = random_point(space.factors[0], rng, box_radius);
      auto b = random_point(space.factors[1], rng, box_radius);
      return product_point(std::move(a), std::move(b));
    }
  }
  fail("unreachable");
}

// ---------------------------------------------------------------------------
// Extended-precision evaluation of the comparison inequality. Points are
// sampled in double; the certifier evaluates squared distances and geodesics
// in long double so certification tolerances down to 1e-12 are meaningful.

namespace {

struct LPoint {
  std::vector<long double> coords;
  int leg = 0;
  long double radius = 0.0L;
  std::vector<LPoint> factors;
};

LPoint lift(const GeodesicSpace& space, const SpacePoint& p) {
  LPoint q;
  switch (space.kind) {
    case SpaceKind::euclidean:
    case SpaceKind::hyperbolic:
      q.coords.assign(p.coords.begin(), p.coords.end());
      break;
    case SpaceKind::spider:
      q.leg = p.leg;
      q.radius = p.radius;
      break;
    case SpaceKind::product:
      q.factors.push_back(lift(space.factors[0], p.factors[0]));
      q.factors.push_back(lift(space.factors[1], p.factors[1]));
      break;
  }
  return q;
}

long double lp_sqdist(const GeodesicSpace& space, const LPoint& x, const LPoint& y) {
  switch (space.kind) {
    case SpaceKind::euclidean: {
      long double s = 0.0L;
      for (std::size_t i = 0; i < x.coords.size(); ++i) {
        const long double d = x.coords[i] - y.coords[i];
        s += d * d;
      }
      return s;
    }
    case SpaceKind::hyperbolic: {
      long double s = 0.0L;
      {
        const long double d0 = x.coords[0] - y.coords[0];
        s = -d0 * d0;
        for (std::size_t i = 1; i < x.coords.size(); ++i) {
          const long double di = x.coords[i] - y.coords[i];
          s += di * di;
        }
        s *= 0.5L;
      }
      if (s < 0.0L) s = 0.0L;
      const long double d = log1pl(s + sqrtl(s * (s + 2.0L)));
      return d * d;
    }
    case SpaceKind::spider: {
      const long double d =
          x.leg == y.leg ? fabsl(x.radius - y.radius) : x.radius + y.radius;
      return d * d;
    }
    case SpaceKind::product:
      return lp_sqdist(space.factors[0], x.factors[0], y.factors[0]) +
             lp_sqdist(space.factors[1], x.factors[1], y.factors[1]);
  }
  return 0.0L;
}

LPoint lp_geodesic(const GeodesicSpace& space, const LPoint& x, const LPoint& y,
                   long double t) {
  LPoint g;
  switch (space.kind) {
    case SpaceKind::euclidean:
      g.coords.resize(x.coords.size());
      for (std::size_t i = 0; i < g.coords.size(); ++i)
        g.coords[i] = (1.0L - t) * x.coords[i] + t * y.coords[i];
      return g;
    case SpaceKind::hyperbolic: {
      const long double L = sqrtl(lp_sqdist(space, x, y));
      if (L < 1e-17L) return x;
      const long double a = sinhl((1.0L - t) * L) / sinhl(L);
      const long double b = sinhl(t * L) / sinhl(L);
      g.coords.resize(x.coords.size());
      long double q = 0.0L;
      for (std::size_t i = 0; i < g.coords.size(); ++i) {
        g.coords[i] = a * x.coords[i] + b * y.coords[i];
        q += (i == 0 ? -1.0L : 1.0L) * g.coords[i] * g.coords[i];
      }
      const long double inv = 1.0L / sqrtl(-q);
      for (auto& c : g.coords) c *= inv;
      return g;
    }
    case SpaceKind::spider: {
      if (x.leg == y.leg || x.radius == 0.0L || y.radius == 0.0L) {
        g.leg = x.radius > 0.0L ? x.leg : y.leg;
        g.radius = (1.0L - t) * x.radius + t * y.radius;
        if (g.radius <= 0.0L) { g.leg = 0; g.radius = 0.0L; }
        return g;
      }
      const long double s = t * (x.radius + y.radius);
      if (s <= x.radius) { g.leg = x.leg; g.radius = x.radius - s; }
      else { g.leg = y.leg; g.radius = s - x.radius; }
      if (g.radius == 0.0L) g.leg = 0;
      return g;
    }
    case SpaceKind::product:
      g.factors.push_back(lp_geodesic(space.factors[0], x.factors[0], y.factors[0], t));
      g.factors.push_back(lp_geodesic(space.factors[1], x.factors[1], y.factors[1], t));
      return g;
  }
  return g;
}

}  // namespace

CheckReport npc_certify(const GeodesicSpace& space, long trials, std::uint64_t seed,
                        double box_radius, double tolerance) {
  if (trials < 1) fail("npc_certify needs trials >= 1");
  CheckReport report;
  report.name = "npc(" + space_label(space) + ")";
  report.tolerance = tolerance;
  report.details =
      "worst of d^2(z,g(t)) - [(1-t)d^2(z,x) + t d^2(z,y) - t(1-t)d^2(x,y)] over "
      "sampled quadruples";
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (long i = 0; i < trials; ++i) {
    const SpacePoint x = random_point(space, rng, box_radius);
    const SpacePoint y = random_point(space, rng, box_radius);
    const SpacePoint z = random_point(space, rng, box_radius);
    const long double t = unit(rng);
    const LPoint lx = lift(space, x), ly = lift(space, y), lz = lift(space, z);
    const LPoint g = lp_geodesic(space, lx, ly, t);
    const long double lhs = lp_sqdist(space, lz, g);
    const long double rhs = (1.0L - t) * lp_sqdist(space, lz, lx) +
                            t * lp_sqdist(space, lz, ly) -
                            t * (1.0L - t) * lp_sqdist(space, lx, ly);
    report.record(static_cast<double>(lhs - rhs));
  }
  return report.finish();
}

int flat_size(const GeodesicSpace& space) {
  switch (space.kind) {
    case SpaceKind::euclidean: return space.dim;
    case SpaceKind::hyperbolic: return space.dim + 1;
    case SpaceKind::spider: return 2;
    case SpaceKind::product:
      return flat_size(space.factors[0]) + flat_size(space.factors[1]);
  }
  return 0;
}

std::vector<double> flatten(const GeodesicSpace& space, const SpacePoint& p) {
  switch (space.kind) {
    case SpaceKind::euclidean:
    case SpaceKind::hyperbolic: return p.coords;
    case SpaceKind::spider: return {static_cast<double>(p.leg), p.radius};
    case SpaceKind::product: {
      auto a = flatten(space.factors[0], p.factors[0]);
      auto b = flatten(space.factors[1], p.factors[1]);
      a.insert(a.end(), b.begin(), b.end());
      return a;
    }
  }
  return {};
}

SpacePoint unflatten(const GeodesicSpace& space, const std::vector<double>& data) {
  if (static_cast<int>(data.size()) != flat_size(space))
    fail("flat coordinate size mismatch for " + space_label(space));
  switch (space.kind) {
    case SpaceKind::euclidean: return euclidean_point(data);
    case SpaceKind::hyperbolic: return hyperbolic_point_ambient(data);
    case SpaceKind::spider: return spider_point(static_cast<int>(data[0]), data[1]);
    case SpaceKind::product: {
      const int n0 = flat_size(space.factors[0]);
      std::vector<double> a(data.begin(), data.begin() + n0);
      std::vector<double> b(data.begin() + n0, data.end());
      return product_point(unflatten(space.factors[0], a), unflatten(space.factors[1], b));
    }
  }
  fail("unreachable");
}

}  // namespace npcflow
