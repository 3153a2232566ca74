#include "npcflow/functionals.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "npcflow/rng.hpp"

namespace npcflow {

namespace {

constexpr double kEigTol = 1e-10;

[[noreturn]] void fail(const std::string& msg) { throw std::domain_error(msg); }

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

double busemann_height(const Busemann& b, const SpacePoint& x) {
  return -minkowski_dot(x.coords, b.ideal);  // = exp(-Busemann value), > 0 on the sheet
}

// Unit-speed geodesic ray from x toward the ideal point; the value drops at
// unit rate along it.
SpacePoint busemann_ray_point(const Busemann& b, const SpacePoint& x, double s) {
  const double c = busemann_height(b, x);
  std::vector<double> v(x.coords.size());
  const double ch = std::cosh(s), sh = std::sinh(s);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = ch * x.coords[i] + sh * (b.ideal[i] / c - x.coords[i]);
  return hyperboloid_repair(std::move(v));
}

}  // namespace

ConvexFunctional ConvexFunctional::half_squared_distance(SpacePoint anchor) {
  return ConvexFunctional(HalfSquaredDistance{std::move(anchor)});
}

ConvexFunctional ConvexFunctional::scaled_distance(double scale, SpacePoint anchor) {
  if (!(scale > 0.0)) fail("scaled_distance needs scale > 0");
  return ConvexFunctional(ScaledDistance{scale, std::move(anchor)});
}

ConvexFunctional ConvexFunctional::quadratic_form(Eigen::MatrixXd A, Eigen::VectorXd b) {
  if (A.rows() != A.cols() || A.rows() < 1) fail("quadratic_form needs a square matrix");
  if (b.size() != A.rows()) fail("quadratic_form offset dimension mismatch");
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    fail("quadratic_form matrix must be symmetric");
  QuadraticForm q;
  q.matrix = 0.5 * (A + A.transpose());
  q.offset = std::move(b);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.matrix);
  if (es.info() != Eigen::Success) fail("quadratic_form eigendecomposition failed");
  if (es.eigenvalues().minCoeff() < -kEigTol * scale)
    fail("quadratic_form matrix must be positive semidefinite");
  q.eigvecs = es.eigenvectors();
  q.eigvals = es.eigenvalues().cwiseMax(0.0);
  return ConvexFunctional(std::move(q));
}

ConvexFunctional ConvexFunctional::busemann(std::vector<double> ideal) {
  if (ideal.size() < 2) fail("busemann ideal point needs at least 2 coordinates");
  if (!(ideal[0] > 0.0)) fail("busemann ideal point must have p0 > 0");
  const double norm = minkowski_dot(ideal, ideal);
  double mag = 0.0;
  for (double c : ideal) mag += c * c;
  if (std::abs(norm) > 1e-12 * std::max(1.0, mag)) fail("busemann ideal point must be lightlike");
  // Fix the additive constant: normalize p0 = 1.
  const double inv = 1.0 / ideal[0];
  for (double& c : ideal) c *= inv;
  return ConvexFunctional(Busemann{std::move(ideal)});
}

ConvexFunctional ConvexFunctional::max_affine(std::vector<MaxAffinePiece> pieces) {
  if (pieces.empty()) fail("max_affine needs at least one piece");
  const std::size_t d = pieces[0].gradient.size();
  if (d == 0) fail("max_affine gradients must be nonempty");
  for (const auto& p : pieces)
    if (p.gradient.size() != d) fail("max_affine gradient dimensions disagree");
  return ConvexFunctional(MaxAffine{std::move(pieces)});
}

std::string ConvexFunctional::kind_name() const {
  struct V {
    std::string operator()(const HalfSquaredDistance&) const { return "half_squared_distance"; }
    std::string operator()(const ScaledDistance&) const { return "scaled_distance"; }
    std::string operator()(const QuadraticForm&) const { return "quadratic_form"; }
    std::string operator()(const Busemann&) const { return "busemann"; }
    std::string operator()(const MaxAffine&) const { return "max_affine"; }
  };
  return std::visit(V{}, instance_);
}

void ConvexFunctional::require_space(const GeodesicSpace& space) const {
  if (const auto* h = std::get_if<HalfSquaredDistance>(&instance_)) {
    validate_point(space, h->anchor);
  } else if (const auto* s = std::get_if<ScaledDistance>(&instance_)) {
    validate_point(space, s->anchor);
  } else if (const auto* q = std::get_if<QuadraticForm>(&instance_)) {
    if (space.kind != SpaceKind::euclidean || space.dim != q->matrix.rows())
      fail("quadratic_form requires euclidean space of matching dimension");
  } else if (const auto* b = std::get_if<Busemann>(&instance_)) {
    if (space.kind != SpaceKind::hyperbolic ||
        space.dim + 1 != static_cast<int>(b->ideal.size()))
      fail("busemann requires hyperbolic space of matching dimension");
  } else if (const auto* m = std::get_if<MaxAffine>(&instance_)) {
    if (space.kind != SpaceKind::euclidean ||
        space.dim != static_cast<int>(m->pieces[0].gradient.size()))
      fail("max_affine requires euclidean space of matching dimension");
  }
}

double ConvexFunctional::value(const GeodesicSpace& space, const SpacePoint& x) const {
  require_space(space);
  validate_point(space, x);
  if (const auto* h = std::get_if<HalfSquaredDistance>(&instance_)) {
    const double d = distance(space, x, h->anchor);
    return 0.5 * d * d;
  }
  if (const auto* s = std::get_if<ScaledDistance>(&instance_))
    return s->scale * distance(space, x, s->anchor);
  if (const auto* q = std::get_if<QuadraticForm>(&instance_)) {
    const Eigen::VectorXd v = to_vec(x.coords);
    return 0.5 * v.dot(q->matrix * v) - q->offset.dot(v);
  }
  if (const auto* b = std::get_if<Busemann>(&instance_)) return std::log(busemann_height(*b, x));
  const auto& m = std::get<MaxAffine>(instance_);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& p : m.pieces) {
    double v = p.offset;
    for (std::size_t i = 0; i < p.gradient.size(); ++i) v += p.gradient[i] * x.coords[i];
    best = std::max(best, v);
  }
  return best;
}

bool ConvexFunctional::has_exact_slope() const { return true; }

double ConvexFunctional::exact_slope(const GeodesicSpace& space, const SpacePoint& x) const {
  require_space(space);
  if (const auto* h = std::get_if<HalfSquaredDistance>(&instance_))
    return distance(space, x, h->anchor);
  if (const auto* s = std::get_if<ScaledDistance>(&instance_))
    return distance(space, x, s->anchor) > 0.0 ? s->scale : 0.0;
  if (const auto* q = std::get_if<QuadraticForm>(&instance_))
    return (q->matrix * to_vec(x.coords) - q->offset).norm();
  if (std::holds_alternative<Busemann>(instance_)) return 1.0;
  // max_affine: smallest-norm subgradient over the active pieces.
  const auto& m = std::get<MaxAffine>(instance_);
  const double fx = value(space, x);
  std::vector<Eigen::VectorXd> active;
  for (const auto& p : m.pieces) {
    double v = p.offset;
    for (std::size_t i = 0; i < p.gradient.size(); ++i) v += p.gradient[i] * x.coords[i];
    if (v >= fx - 1e-9 * (1.0 + std::abs(fx))) active.push_back(to_vec(p.gradient));
  }
  return std::sqrt(min_norm_in_hull(active).second);
}

bool ConvexFunctional::has_smooth_gradient() const {
  return std::holds_alternative<QuadraticForm>(instance_) ||
         (std::holds_alternative<HalfSquaredDistance>(instance_) &&
          std::get<HalfSquaredDistance>(instance_).anchor.kind == SpaceKind::euclidean);
}

Eigen::VectorXd ConvexFunctional::gradient(const GeodesicSpace& space, const SpacePoint& x) const {
  require_space(space);
  if (space.kind != SpaceKind::euclidean) fail("gradient is exposed on euclidean space only");
  if (const auto* q = std::get_if<QuadraticForm>(&instance_))
    return q->matrix * to_vec(x.coords) - q->offset;
  if (const auto* h = std::get_if<HalfSquaredDistance>(&instance_))
    return to_vec(x.coords) - to_vec(h->anchor.coords);
  fail("functional has no smooth gradient");
}

bool ConvexFunctional::has_closed_form_prox() const {
  return !std::holds_alternative<MaxAffine>(instance_);
}

bool ConvexFunctional::is_bounded_below() const {
  if (std::holds_alternative<HalfSquaredDistance>(instance_) ||
      std::holds_alternative<ScaledDistance>(instance_))
    return true;
  if (const auto* q = std::get_if<QuadraticForm>(&instance_)) {
    // Bounded iff the offset has no component in the null space.
    for (Eigen::Index i = 0; i < q->eigvals.size(); ++i)
      if (q->eigvals[i] <= kEigTol && std::abs(q->eigvecs.col(i).dot(q->offset)) > 1e-10)
        return false;
    return true;
  }
  if (std::holds_alternative<Busemann>(instance_)) return false;
  // max_affine: bounded when 0 lies in the convex hull of all gradients.
  const auto& m = std::get<MaxAffine>(instance_);
  std::vector<Eigen::VectorXd> g;
  g.reserve(m.pieces.size());
  for (const auto& p : m.pieces) g.push_back(to_vec(p.gradient));
  return min_norm_in_hull(g).second <= 1e-18;
}

double ConvexFunctional::infimum() const {
  if (std::holds_alternative<HalfSquaredDistance>(instance_) ||
      std::holds_alternative<ScaledDistance>(instance_))
    return 0.0;
  if (const auto* q = std::get_if<QuadraticForm>(&instance_)) {
    if (!is_bounded_below()) fail("functional is not bounded below");
    Eigen::VectorXd y = Eigen::VectorXd::Zero(q->offset.size());
    for (Eigen::Index i = 0; i < q->eigvals.size(); ++i)
      if (q->eigvals[i] > kEigTol)
        y += (q->eigvecs.col(i).dot(q->offset) / q->eigvals[i]) * q->eigvecs.col(i);
    return -0.5 * q->offset.dot(y);
  }
  fail("infimum is not known for this functional");
}

bool ConvexFunctional::has_minimizer() const {
  if (std::holds_alternative<HalfSquaredDistance>(instance_) ||
      std::holds_alternative<ScaledDistance>(instance_))
    return true;
  if (std::holds_alternative<QuadraticForm>(instance_)) return is_bounded_below();
  return false;
}

bool ConvexFunctional::has_unique_minimizer() const {
  if (std::holds_alternative<HalfSquaredDistance>(instance_) ||
      std::holds_alternative<ScaledDistance>(instance_))
    return true;
  if (const auto* q = std::get_if<QuadraticForm>(&instance_))
    return q->eigvals.minCoeff() > kEigTol;
  return false;
}

std::optional<SpacePoint> ConvexFunctional::minimizer(const GeodesicSpace& space) const {
  require_space(space);
  if (const auto* h = std::get_if<HalfSquaredDistance>(&instance_)) return h->anchor;
  if (const auto* s = std::get_if<ScaledDistance>(&instance_)) return s->anchor;
  if (const auto* q = std::get_if<QuadraticForm>(&instance_)) {
    if (!is_bounded_below()) return std::nullopt;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(q->offset.size());
    for (Eigen::Index i = 0; i < q->eigvals.size(); ++i)
      if (q->eigvals[i] > kEigTol)
        y += (q->eigvecs.col(i).dot(q->offset) / q->eigvals[i]) * q->eigvecs.col(i);
    return euclidean_point(to_std(y));
  }
  return std::nullopt;
}

std::vector<SpacePoint> ConvexFunctional::descent_targets(const GeodesicSpace& space,
                                                          const SpacePoint& x) const {
  require_space(space);
  std::vector<SpacePoint> targets;
  if (const auto* h = std::get_if<HalfSquaredDistance>(&instance_)) {
    targets.push_back(h->anchor);
  } else if (const auto* s = std::get_if<ScaledDistance>(&instance_)) {
    targets.push_back(s->anchor);
  } else if (const auto* q = std::get_if<QuadraticForm>(&instance_)) {
    if (auto m = minimizer(space)) targets.push_back(*m);
    const Eigen::VectorXd g = q->matrix * to_vec(x.coords) - q->offset;
    if (g.norm() > 0.0) targets.push_back(euclidean_point(to_std(to_vec(x.coords) - g)));
  } else if (const auto* b = std::get_if<Busemann>(&instance_)) {
    targets.push_back(busemann_ray_point(*b, x, 1.0));
  } else {
    const auto& m = std::get<MaxAffine>(instance_);
    const double fx = value(space, x);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(x.coords.size()));
    int n_active = 0;
    for (const auto& p : m.pieces) {
      double v = p.offset;
      for (std::size_t i = 0; i < p.gradient.size(); ++i) v += p.gradient[i] * x.coords[i];
      if (v >= fx - 1e-9 * (1.0 + std::abs(fx))) {
        const Eigen::VectorXd g = to_vec(p.gradient);
        if (g.norm() > 0.0) targets.push_back(euclidean_point(to_std(to_vec(x.coords) - g)));
        mean += g;
        ++n_active;
      }
    }
    if (n_active > 1 && mean.norm() > 0.0)
      targets.push_back(euclidean_point(to_std(to_vec(x.coords) - mean / n_active)));
  }
  return targets;
}

std::optional<SpacePoint> ConvexFunctional::prox_line_target(const GeodesicSpace& space,
                                                             const SpacePoint& x) const {
  require_space(space);
  if (const auto* h = std::get_if<HalfSquaredDistance>(&instance_)) {
    if (distance(space, x, h->anchor) > 0.0) return h->anchor;
    return std::nullopt;
  }
  if (const auto* s = std::get_if<ScaledDistance>(&instance_)) {
    if (distance(space, x, s->anchor) > 0.0) return s->anchor;
    return std::nullopt;
  }
  if (const auto* b = std::get_if<Busemann>(&instance_)) return busemann_ray_point(*b, x, 1.0);
  if (space.kind == SpaceKind::euclidean && space.dim == 1) {
    // One-dimensional instances: everything lies on the axis.
    return euclidean_point({x.coords[0] - 1.0});
  }
  return std::nullopt;
}

std::vector<double> default_slope_radii() { return {1e-1, 1e-2, 1e-3, 1e-4}; }

SlopeEstimate lower_slope_estimate(const ConvexFunctional& f, const GeodesicSpace& space,
                                   const SpacePoint& x, int directions,
                                   const std::vector<double>& radii, std::uint64_t seed) {
  f.require_space(space);
  validate_point(space, x);
  if (directions < 1) fail("lower_slope_estimate needs directions >= 1");
  if (radii.empty()) fail("lower_slope_estimate needs at least one radius");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) fail("slope radii must be positive");
    if (i > 0 && !(radii[i] < radii[i - 1])) fail("slope radii must be strictly decreasing");
  }

  auto rng = make_rng(seed);
  std::vector<SpacePoint> targets = f.descent_targets(space, x);
  for (int i = 0; i < directions; ++i) targets.push_back(random_point(space, rng));

  const bool extendable =
      space.kind == SpaceKind::euclidean || space.kind == SpaceKind::hyperbolic;
  const double fx = f.value(space, x);

  SlopeEstimate est;
  est.radii = radii;
  est.quotients.assign(radii.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    const double r = radii[ri];
    for (const auto& z : targets) {
      const double L = distance(space, x, z);
      if (L < 1e-12) continue;
      SpacePoint y;
      if (extendable) {
        y = geodesic_ray_point(space, x, z, r);
      } else {
        if (L < r) continue;
        y = geodesic_point(space, x, z, r / L);
      }
      est.quotients[ri] = std::max(est.quotients[ri], (fx - f.value(space, y)) / r);
    }
    if (!std::isfinite(est.quotients[ri])) est.quotients[ri] = 0.0;
  }

  const double q_last = est.quotients.back();
  est.value = std::max(q_last, 0.0);
  if (radii.size() == 1) {
    est.converged = true;
    est.error_bound = 0.0;
  } else {
    const double q_prev = est.quotients[est.quotients.size() - 2];
    est.error_bound = std::abs(q_last - q_prev);
    if (q_last <= 0.0 && q_prev <= 0.0)
      est.converged = true;  // clipped value 0 is stable
    else
      est.converged = est.error_bound <= 0.01 * std::abs(q_last) + 1e-12;
  }
  return est;
}

SlopeEstimate slope_of(const ConvexFunctional& f, const GeodesicSpace& space,
                       const SpacePoint& x, std::uint64_t seed) {
  if (f.has_exact_slope()) {
    SlopeEstimate est;
    est.value = f.exact_slope(space, x);
    est.converged = true;
    return est;
  }
  return lower_slope_estimate(f, space, x, 64, default_slope_radii(), seed);
}

CheckReport convexity_certify(const ConvexFunctional& f, const GeodesicSpace& space,
                              long trials, std::uint64_t seed, double box_radius,
                              double tolerance) {
  if (trials < 1) fail("convexity_certify needs trials >= 1");
  f.require_space(space);
  CheckReport report;
  report.name = "convexity(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = tolerance;
  report.details = "worst of f(g(t)) - (1-t) f(x) - t f(y) over sampled (x,y,t)";
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (long i = 0; i < trials; ++i) {
    const SpacePoint x = random_point(space, rng, box_radius);
    const SpacePoint y = random_point(space, rng, box_radius);
    const double t = unit(rng);
    const SpacePoint g = geodesic_point(space, x, y, t);
    report.record(f.value(space, g) -
                  ((1.0 - t) * f.value(space, x) + t * f.value(space, y)));
  }
  return report.finish();
}

CheckReport slope_bound_check(const ConvexFunctional& f, const GeodesicSpace& space,
                              long trials, std::uint64_t seed, double box_radius) {
  if (trials < 1) fail("slope_bound_check needs trials >= 1");
  f.require_space(space);
  CheckReport report;
  report.name = "slope_bound(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = 0.0;
  report.details =
      "worst of f(x) - slope(x) d(x,y) - f(y) - (1e-8 + 2 slope_err d(x,y)); "
      "non-convergent slope estimates skipped";
  auto rng = make_rng(seed);
  for (long i = 0; i < trials; ++i) {
    const SpacePoint x = random_point(space, rng, box_radius);
    const SpacePoint y = random_point(space, rng, box_radius);
    const SlopeEstimate s = slope_of(f, space, x, mix_seed(seed + i));
    if (!s.converged) {
      report.skip();
      continue;
    }
    const double d = distance(space, x, y);
    const double tol = 1e-8 + 2.0 * s.error_bound * d;
    report.record(f.value(space, x) - s.value * d - f.value(space, y) - tol);
  }
  return report.finish();
}

std::pair<Eigen::VectorXd, double> min_norm_in_hull(const std::vector<Eigen::VectorXd>& points) {
  if (points.empty()) fail("min_norm_in_hull needs at least one point");
  const Eigen::Index d = points[0].size();
  const std::size_t m = points.size();
  if (m == 1) return {points[0], points[0].squaredNorm()};
  if (m == 2) {
    const Eigen::VectorXd diff = points[1] - points[0];
    const double den = diff.squaredNorm();
    double t = den > 0.0 ? -points[0].dot(diff) / den : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Eigen::VectorXd p = points[0] + t * diff;
    return {p, p.squaredNorm()};
  }
  if (m > 14) fail("min_norm_in_hull supports at most 14 points");
  // The minimizer lies in the relative interior of some face; enumerate
  // supports of size <= d+1 and keep the feasible affine minimizers.
  Eigen::VectorXd best = points[0];
  double best_sq = points[0].squaredNorm();
  for (std::size_t i = 1; i < m; ++i)
    if (points[i].squaredNorm() < best_sq) {
      best = points[i];
      best_sq = points[i].squaredNorm();
    }
  const std::size_t subsets = std::size_t{1} << m;
  for (std::size_t mask = 1; mask < subsets; ++mask) {
    const int k = __builtin_popcountll(mask);
    if (k < 2 || k > static_cast<int>(d) + 1) continue;
    std::vector<int> idx;
    idx.reserve(k);
    for (std::size_t j = 0; j < m; ++j)
      if (mask & (std::size_t{1} << j)) idx.push_back(static_cast<int>(j));
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) kkt(a, b) = points[idx[a]].dot(points[idx[b]]);
      kkt(a, k) = 1.0;
      kkt(k, a) = 1.0;
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
    rhs[k] = 1.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    bool feasible = true;
    for (int a = 0; a < k; ++a)
      if (sol[a] < -1e-12) feasible = false;
    if (!feasible) continue;
    Eigen::VectorXd p = Eigen::VectorXd::Zero(d);
    for (int a = 0; a < k; ++a) p += sol[a] * points[idx[a]];
    const double sq = p.squaredNorm();
    if (sq < best_sq) {
      best_sq = sq;
      best = p;
    }
  }
  return {best, best_sq};
}

}  // namespace npcflow
