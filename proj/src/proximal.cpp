#include "npcflow/proximal.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "npcflow/rng.hpp"

namespace npcflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::domain_error(msg); }

double objective(const ConvexFunctional& f, const GeodesicSpace& space, const SpacePoint& x,
                 double tau, const SpacePoint& y) {
  const double d = distance(space, x, y);
  return d * d / (2.0 * tau) + f.value(space, y);
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::optional<SpacePoint> closed_form_prox(const ConvexFunctional& f, const GeodesicSpace& space,
                                           const SpacePoint& x, double tau) {
  if (const auto* h = std::get_if<HalfSquaredDistance>(&f.instance())) {
    return geodesic_point(space, x, h->anchor, tau / (1.0 + tau));
  }
  if (const auto* s = std::get_if<ScaledDistance>(&f.instance())) {
    const double D = distance(space, x, s->anchor);
    if (D <= 0.0) return x;
    const double step = std::min(s->scale * tau, D);
    return geodesic_point(space, x, s->anchor, step / D);
  }
  if (const auto* q = std::get_if<QuadraticForm>(&f.instance())) {
    // (I + tau A) y = x + tau b, solved in the cached eigenbasis.
    const Eigen::VectorXd rhs = to_vec(x.coords) + tau * q->offset;
    const Eigen::VectorXd w = q->eigvecs.transpose() * rhs;
    Eigen::VectorXd y(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) y[i] = w[i] / (1.0 + tau * q->eigvals[i]);
    return euclidean_point(to_std(q->eigvecs * y));
  }
  if (std::get_if<Busemann>(&f.instance())) {
    // The minimizer sits arc length tau down the asymptotic ray through x.
    auto targets = f.descent_targets(space, x);  // [0] = ray point at arc length 1
    return geodesic_ray_point(space, x, targets[0], tau);
  }
  return std::nullopt;
}

// Golden-section minimization of a convex function along [0, hi]; expands the
// right end while the minimum sits on it. Returns (argmin, value).
template <class H>
std::pair<double, double> line_min(H&& h, double hi, double width_tol, bool expandable) {
  const double inv_phi = 0.6180339887498949;
  double lo = 0.0;
  double h_lo = h(lo), h_hi = h(hi);
  if (expandable) {
    int guard = 0;
    while (guard++ < 60) {
      const double probe = hi * (1.0 + inv_phi);
      const double h_probe = h(probe);
      if (h_probe < h_hi) {
        hi = probe;
        h_hi = h_probe;
      } else {
        break;
      }
    }
  }
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double h_c = h(c), h_d = h(d);
  int guard = 0;
  while (b - a > width_tol && guard++ < 300) {
    if (h_c <= h_d) {
      b = d;
      d = c;
      h_d = h_c;
      c = b - inv_phi * (b - a);
      h_c = h(c);
    } else {
      a = c;
      c = d;
      h_c = h_d;
      d = a + inv_phi * (b - a);
      h_d = h(d);
    }
  }
  const double mid = 0.5 * (a + b);
  const double h_mid = h(mid);
  // Return the best evaluated abscissa.
  double s = mid, v = h_mid;
  if (h_lo < v) { s = lo; v = h_lo; }
  if (h_c < v) { s = c; v = h_c; }
  if (h_d < v) { s = d; v = h_d; }
  return {s, v};
}

}  // namespace

ResolventResult resolvent(const ConvexFunctional& f, const GeodesicSpace& space,
                          const SpacePoint& x, double tau) {
  if (!(tau > 0.0)) fail("resolvent needs tau > 0");
  f.require_space(space);
  validate_point(space, x);
  if (auto y = closed_form_prox(f, space, x, tau)) {
    ResolventResult r;
    r.point = std::move(*y);
    r.objective = objective(f, space, x, tau, r.point);
    r.method = ProxMethod::closed_form;
    r.certified_gap = 1e-13 * (1.0 + tau + distance(space, x, r.point));
    r.certified = true;
    return r;
  }
  return resolvent_generic(f, space, x, tau);
}

ResolventResult resolvent_generic(const ConvexFunctional& f, const GeodesicSpace& space,
                                  const SpacePoint& x, double tau, std::uint64_t seed) {
  if (!(tau > 0.0)) fail("resolvent needs tau > 0");
  f.require_space(space);
  validate_point(space, x);

  const double eps = prox_epsilon(tau);
  auto rng = make_rng(seed);
  SpacePoint y = x;
  double Fy = objective(f, space, x, tau, y);
  const bool extendable =
      space.kind == SpaceKind::euclidean || space.kind == SpaceKind::hyperbolic;

  // Smallest-norm element of the objective subdifferential for euclidean
  // instances: (p-x)/tau + subgrad f(p). Resolvable to machine precision,
  // unlike value comparisons, so it drives the final polish and the
  // certificate there.
  const bool euclidean_cert =
      space.kind == SpaceKind::euclidean &&
      (f.has_smooth_gradient() || std::holds_alternative<MaxAffine>(f.instance()));
  auto objective_subgradient = [&](const SpacePoint& p) -> Eigen::VectorXd {
    const Eigen::VectorXd move = (to_vec(p.coords) - to_vec(x.coords)) / tau;
    if (f.has_smooth_gradient()) return move + f.gradient(space, p);
    const auto& m = std::get<MaxAffine>(f.instance());
    const double fp = f.value(space, p);
    std::vector<Eigen::VectorXd> active;
    for (const auto& piece : m.pieces) {
      double v = piece.offset;
      for (std::size_t i = 0; i < piece.gradient.size(); ++i)
        v += piece.gradient[i] * p.coords[i];
      if (v >= fp - 1e-9 * (1.0 + std::abs(fp)))
        active.push_back(to_vec(piece.gradient) + move);
    }
    return min_norm_in_hull(active).first;
  };

  long iterations = 0;
  double gap = std::numeric_limits<double>::infinity();
  bool certified = false;
  constexpr int kMaxRounds = 60;
  for (int round = 0; round < kMaxRounds; ++round) {
    ++iterations;
    std::vector<SpacePoint> targets = f.descent_targets(space, y);
    targets.push_back(x);
    if (euclidean_cert) {
      const Eigen::VectorXd g = objective_subgradient(y);
      if (g.norm() > 0.0) targets.push_back(euclidean_point(to_std(to_vec(y.coords) - g)));
    }
    for (int i = 0; i < 32; ++i) targets.push_back(random_point(space, rng));

    bool improved = false;
    for (const auto& z : targets) {
      const double L = distance(space, y, z);
      if (L < 1e-15) continue;
      auto h = [&](double s) {
        return objective(f, space, x, tau,
                         extendable || s <= L ? geodesic_ray_point(space, y, z, s)
                                              : geodesic_point(space, y, z, 1.0));
      };
      auto [s_best, v_best] = line_min(h, L, 1e-12 * (1.0 + L), extendable);
      if (v_best < Fy - 1e-15 * (1.0 + std::abs(Fy))) {
        y = geodesic_ray_point(space, y, z, std::min(s_best, extendable ? s_best : L));
        Fy = objective(f, space, x, tau, y);
        improved = true;
      }
    }
    if (euclidean_cert && tau * objective_subgradient(y).norm() <= eps) break;
    if (!improved) break;
  }

  // Subgradient polish on euclidean space. Value comparisons cannot localize
  // the minimizer below sqrt(eps_machine), but (sub)gradients can; secant
  // curvature along the descent ray gives the exact line step for piecewise
  // quadratic objectives.
  if (euclidean_cert) {
    Eigen::VectorXd yv = to_vec(y.coords);
    Eigen::VectorXd g = objective_subgradient(euclidean_point(to_std(yv)));
    double gn = g.norm();
    for (int it = 0; it < 200 && tau * gn > 0.25 * eps; ++it) {
      ++iterations;
      const Eigen::VectorXd dir = -g / gn;
      const double h = 1e-7 * (1.0 + yv.norm());
      const Eigen::VectorXd g_probe =
          objective_subgradient(euclidean_point(to_std(yv + h * dir)));
      double curv = (g_probe - g).dot(dir) / h;
      if (!(curv > 0.5 / tau)) curv = 1.0 / tau;
      double step = gn / curv;
      bool accepted = false;
      for (int halve = 0; halve < 40; ++halve) {
        const Eigen::VectorXd cand = yv + step * dir;
        const Eigen::VectorXd g_cand = objective_subgradient(euclidean_point(to_std(cand)));
        if (g_cand.norm() <= gn * (1.0 - 1e-3) || g_cand.norm() <= 0.25 * eps / tau) {
          yv = cand;
          g = g_cand;
          gn = g.norm();
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }
    const SpacePoint polished = euclidean_point(to_std(yv));
    const double F_polished = objective(f, space, x, tau, polished);
    if (F_polished <= Fy + 1e-12 * (1.0 + std::abs(Fy))) {
      y = polished;
      Fy = F_polished;
    }
    gap = tau * objective_subgradient(y).norm();
    certified = gap <= eps;
  }

  // Bracketing certificate along the declared prox line when the euclidean
  // route did not certify: locate the one-dimensional minimizer from x and
  // bound |s - s*| by convex difference quotients.
  if (!certified) {
    if (auto hint = f.prox_line_target(space, x)) {
      const double Lh = distance(space, x, *hint);
      if (Lh > 1e-15) {
        auto h = [&](double s) {
          return objective(f, space, x, tau, geodesic_ray_point(space, x, *hint, s));
        };
        auto [s_hat, v_hat] = line_min(h, std::max(Lh, 4.0 * tau), 1e-13 * (1.0 + Lh),
                                       extendable);
        if (v_hat <= Fy) {
          y = geodesic_ray_point(space, x, *hint, s_hat);
          Fy = objective(f, space, x, tau, y);
        }
        auto phi = [&](double s) {
          return f.value(space, geodesic_ray_point(space, x, *hint, s));
        };
        const double w = 1e-6 * (1.0 + s_hat);
        const double lo_arg = std::max(s_hat - w, 0.0);
        const double q_minus = (phi(s_hat) - phi(lo_arg)) / std::max(s_hat - lo_arg, 1e-300);
        const double q_plus = (phi(s_hat + w) - phi(s_hat)) / w;
        const double noise = 4.0 * 2.3e-16 * (1.0 + std::abs(phi(s_hat))) / w;
        const double lo = s_hat / tau + q_minus - noise;
        const double hi = s_hat / tau + q_plus + noise;
        gap = tau * std::max(std::abs(lo), std::abs(hi));
        certified = gap <= eps;
      } else {
        // x is already the functional's minimizer along a degenerate line.
        gap = tau * slope_of(f, space, x).value;
        certified = gap <= eps;
      }
    }
  }

  ResolventResult r;
  r.point = std::move(y);
  r.objective = Fy;
  r.method = ProxMethod::geodesic_search;
  r.iterations = iterations;
  r.certified_gap = gap;
  r.certified = certified;
  return r;
}

double moreau_yosida(const ConvexFunctional& f, const GeodesicSpace& space,
                     const SpacePoint& x, double tau) {
  return resolvent(f, space, x, tau).objective;
}

CheckReport resolvent_contraction_check(const ConvexFunctional& f, const GeodesicSpace& space,
                                        long trials, double tau, std::uint64_t seed,
                                        double box_radius) {
  if (trials < 1) fail("resolvent_contraction_check needs trials >= 1");
  if (!(tau > 0.0)) fail("resolvent_contraction_check needs tau > 0");
  CheckReport report;
  report.name = "resolvent_contraction(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = 2.0 * prox_epsilon(tau);
  report.details = "worst of d(W x, W y) - d(x, y); tolerance 2 eps_prox";
  auto rng = make_rng(seed);
  for (long i = 0; i < trials; ++i) {
    const SpacePoint x = random_point(space, rng, box_radius);
    const SpacePoint y = random_point(space, rng, box_radius);
    const SpacePoint wx = resolvent(f, space, x, tau).point;
    const SpacePoint wy = resolvent(f, space, y, tau).point;
    report.record(distance(space, wx, wy) - distance(space, x, y));
  }
  return report.finish();
}

CheckReport slope_monotone_check(const ConvexFunctional& f, const GeodesicSpace& space,
                                 long trials, double tau, std::uint64_t seed,
                                 double box_radius) {
  if (trials < 1) fail("slope_monotone_check needs trials >= 1");
  if (!(tau > 0.0)) fail("slope_monotone_check needs tau > 0");
  CheckReport report;
  report.name = "slope_monotone(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = 0.0;
  report.details =
      "worst of slope(W x) - slope(x) - (slope errors + 10 eps_prox); "
      "non-convergent estimates skipped";
  auto rng = make_rng(seed);
  for (long i = 0; i < trials; ++i) {
    const SpacePoint x = random_point(space, rng, box_radius);
    const SpacePoint wx = resolvent(f, space, x, tau).point;
    const SlopeEstimate sx = slope_of(f, space, x, mix_seed(seed + 2 * i));
    const SlopeEstimate swx = slope_of(f, space, wx, mix_seed(seed + 2 * i + 1));
    if (!sx.converged || !swx.converged) {
      report.skip();
      continue;
    }
    const double tol = sx.error_bound + swx.error_bound + 10.0 * prox_epsilon(tau) + 1e-12;
    report.record(swx.value - sx.value - tol);
  }
  return report.finish();
}

}  // namespace npcflow
