#include "npcflow/flow.hpp"

#include <algorithm>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <set>
#include <stdexcept>

#include "npcflow/rng.hpp"

namespace npcflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::domain_error(msg); }

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::optional<double> node_slope(const ConvexFunctional& f, const GeodesicSpace& space,
                                 const SpacePoint& p, std::uint64_t seed) {
  const SlopeEstimate s = slope_of(f, space, p, seed);
  if (!s.converged) return std::nullopt;
  return s.value;
}

}  // namespace

const TrajectoryNode& Trajectory::node_at_time(double t) const {
  const double tol = 1e-9 * (1.0 + std::abs(t));
  for (const auto& n : nodes)
    if (std::abs(n.t - t) <= tol) return n;
  fail("time " + std::to_string(t) + " is not on the trajectory grid");
}

SpacePoint mm_point(const ConvexFunctional& f, const GeodesicSpace& space,
                    const SpacePoint& x0, double t, long n) {
  if (t < 0.0) fail("mm_point needs t >= 0");
  if (n < 1) fail("mm_point needs n >= 1");
  validate_point(space, x0);
  if (t == 0.0) return x0;
  const double tau = t / static_cast<double>(n);
  SpacePoint x = x0;
  for (long k = 0; k < n; ++k) x = resolvent(f, space, x, tau).point;
  return x;
}

Trajectory mm_trajectory(const ConvexFunctional& f, const GeodesicSpace& space,
                         const SpacePoint& x0, double T, long samples, long n_per_unit,
                         bool with_slopes, std::uint64_t seed) {
  if (!(T > 0.0)) fail("mm_trajectory needs T > 0");
  if (samples < 2) fail("mm_trajectory needs samples >= 2");
  if (n_per_unit < 1) fail("mm_trajectory needs n_per_unit >= 1");
  validate_point(space, x0);

  const double tau = 1.0 / static_cast<double>(n_per_unit);
  const long steps = std::max<long>(1, std::llround(T * n_per_unit));

  std::set<long> record;
  for (long i = 0; i < samples; ++i) {
    const double t = T * static_cast<double>(i) / static_cast<double>(samples - 1);
    record.insert(std::clamp<long>(std::llround(t * n_per_unit), 0, steps));
  }
  record.insert(0);
  record.insert(steps);

  Trajectory traj;
  traj.scheme = Scheme::minimizing_movement;
  traj.tau = tau;
  traj.n_per_unit = n_per_unit;
  traj.seed = seed;

  SpacePoint x = x0;
  double last_step_distance = 0.0;
  for (long k = 0; k <= steps; ++k) {
    if (k > 0) {
      const ResolventResult r = resolvent(f, space, x, tau);
      last_step_distance = distance(space, x, r.point);
      traj.certified = traj.certified && r.certified;
      x = r.point;
    }
    if (record.count(k)) {
      TrajectoryNode node;
      node.t = tau * static_cast<double>(k);
      node.step_index = k;
      node.point = x;
      node.value = f.value(space, x);
      node.step_distance = k > 0 ? last_step_distance : 0.0;
      if (with_slopes) node.slope = node_slope(f, space, x, mix_seed(seed + k));
      traj.nodes.push_back(std::move(node));
    }
  }
  return traj;
}

SpacePoint quadratic_flow_point(const ConvexFunctional& f, const SpacePoint& x0, double t) {
  const auto* q = std::get_if<QuadraticForm>(&f.instance());
  if (!q) fail("quadratic_flow_point needs a quadratic_form instance");
  // Per eigenmode: c_i(t) = b_i/l_i + (c_i(0) - b_i/l_i) exp(-l_i t), and
  // c_i(t) = c_i(0) + t b_i on null modes.
  const Eigen::VectorXd c0 = q->eigvecs.transpose() * to_vec(x0.coords);
  const Eigen::VectorXd b = q->eigvecs.transpose() * q->offset;
  Eigen::VectorXd c(c0.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double l = q->eigvals[i];
    if (l > 1e-10)
      c[i] = b[i] / l + (c0[i] - b[i] / l) * std::exp(-l * t);
    else
      c[i] = c0[i] + t * b[i];
  }
  const Eigen::VectorXd y = q->eigvecs * c;
  return euclidean_point(std::vector<double>(y.data(), y.data() + y.size()));
}

Trajectory smooth_flow(const ConvexFunctional& f, const GeodesicSpace& space,
                       const SpacePoint& x0, double T, long samples, double tol) {
  if (!(T > 0.0)) fail("smooth_flow needs T > 0");
  if (samples < 2) fail("smooth_flow needs samples >= 2");
  if (space.kind != SpaceKind::euclidean || !f.has_smooth_gradient())
    fail("smooth_flow needs a smooth gradient on euclidean space");
  validate_point(space, x0);

  using state = std::vector<double>;
  auto rhs = [&](const state& x, state& dxdt, double) {
    const Eigen::VectorXd g = f.gradient(space, euclidean_point(x));
    dxdt.assign(g.data(), g.data() + g.size());
    for (double& v : dxdt) v = -v;
  };

  std::vector<double> times(samples);
  for (long i = 0; i < samples; ++i)
    times[i] = T * static_cast<double>(i) / static_cast<double>(samples - 1);

  Trajectory traj;
  traj.scheme = Scheme::smooth_ode;
  traj.ode_tolerance = tol;

  namespace ode = boost::numeric::odeint;
  auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<state>());
  state x = x0.coords;
  long idx = 0;
  SpacePoint prev = x0;
  ode::integrate_times(
      stepper, rhs, x, times.begin(), times.end(), T / 1024.0,
      [&](const state& xi, double ti) {
        TrajectoryNode node;
        node.t = ti;
        node.step_index = idx++;
        node.point = euclidean_point(xi);
        node.value = f.value(space, node.point);
        node.slope = f.gradient(space, node.point).norm();
        node.step_distance = idx > 1 ? distance(space, prev, node.point) : 0.0;
        prev = node.point;
        traj.nodes.push_back(std::move(node));
      });

  if (std::holds_alternative<QuadraticForm>(f.instance())) {
    const SpacePoint exact = quadratic_flow_point(f, x0, T);
    const double err = distance(space, traj.nodes.back().point, exact);
    if (err > 1e4 * tol * (1.0 + to_vec(x0.coords).norm()))
      throw std::runtime_error("smooth_flow drifted from the quadratic closed form");
  }
  return traj;
}

ConsistencyReport consistency_report(const ConvexFunctional& f, const GeodesicSpace& space,
                                     const SpacePoint& x0, double T,
                                     const std::vector<long>& n_list, long sample_count) {
  if (n_list.empty()) fail("consistency_report needs at least one n value");
  if (sample_count < 2) fail("consistency_report needs sample_count >= 2");
  std::vector<long> ns = n_list;
  std::sort(ns.begin(), ns.end());

  ConsistencyReport rep;
  rep.n_values = ns;

  namespace ode = boost::numeric::odeint;
  using state = std::vector<double>;
  auto rhs = [&](const state& x, state& dxdt, double) {
    const Eigen::VectorXd g = f.gradient(space, euclidean_point(x));
    dxdt.assign(g.data(), g.data() + g.size());
    for (double& v : dxdt) v = -v;
  };
  auto smooth_at = [&](const std::vector<double>& times) {
    std::vector<SpacePoint> out;
    auto stepper = ode::make_dense_output(1e-10, 1e-10, ode::runge_kutta_dopri5<state>());
    state x = x0.coords;
    ode::integrate_times(stepper, rhs, x, times.begin(), times.end(), T / 1024.0,
                         [&](const state& xi, double) { out.push_back(euclidean_point(xi)); });
    return out;
  };

  for (long n : ns) {
    if (n < 1) fail("consistency_report n values must be >= 1");
    const double tau = T / static_cast<double>(n);
    // Chain node indices nearest the equispaced sample times.
    std::set<long> idx_set;
    for (long i = 0; i < sample_count; ++i) {
      const double t = T * static_cast<double>(i) / static_cast<double>(sample_count - 1);
      idx_set.insert(std::clamp<long>(std::llround(t / tau), 0, n));
    }
    std::vector<long> idx(idx_set.begin(), idx_set.end());
    std::vector<double> times;
    times.reserve(idx.size());
    for (long k : idx) times.push_back(tau * static_cast<double>(k));
    const std::vector<SpacePoint> reference = smooth_at(times);

    double sup = 0.0;
    SpacePoint x = x0;
    std::size_t next = 0;
    for (long k = 0; k <= n; ++k) {
      if (k > 0) x = resolvent(f, space, x, tau).point;
      if (next < idx.size() && idx[next] == k) {
        sup = std::max(sup, distance(space, x, reference[next]));
        ++next;
      }
    }
    rep.sup_errors.push_back(sup);
  }

  rep.errors_decreasing = true;
  for (std::size_t i = 0; i + 1 < rep.sup_errors.size(); ++i) {
    if (!(rep.sup_errors[i + 1] < rep.sup_errors[i])) rep.errors_decreasing = false;
    const double ratio = rep.sup_errors[i] / std::max(rep.sup_errors[i + 1], 1e-300);
    const double scale = std::log2(static_cast<double>(ns[i + 1]) / static_cast<double>(ns[i]));
    rep.orders.push_back(std::log2(ratio) / scale);
  }
  if (rep.n_values.size() >= 3 && !rep.orders.empty()) {
    double mean = 0.0;
    for (double o : rep.orders) mean += o;
    rep.observed_order = mean / static_cast<double>(rep.orders.size());
  }
  return rep;
}

CheckReport evi_check(const Trajectory& traj, const ConvexFunctional& f,
                      const GeodesicSpace& space, const std::vector<SpacePoint>& witnesses,
                      const std::vector<std::pair<double, double>>& pairs) {
  CheckReport report;
  report.name = "evi(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = 0.0;
  report.details =
      "worst of d^2(x_{t+s},w) - d^2(x_t,w) + 2s (f(x_{t+s}) - f(w)) - slack, "
      "slack = 4 eps_prox (s/tau) (1 + max distance to w)";
  for (const auto& w : witnesses) validate_point(space, w);
  for (const auto& [t, s] : pairs) {
    if (s < 0.0) fail("evi_check needs s >= 0");
    const TrajectoryNode& a = traj.node_at_time(t);
    const TrajectoryNode& b = traj.node_at_time(t + s);
    const double steps = static_cast<double>(b.step_index - a.step_index);
    for (const auto& w : witnesses) {
      const double da = distance(space, a.point, w);
      const double db = distance(space, b.point, w);
      const double fw = f.value(space, w);
      const double slack =
          4.0 * prox_epsilon(traj.tau) * steps * (1.0 + std::max(da, db));
      report.record(db * db - da * da + 2.0 * s * (b.value - fw) - slack);
    }
  }
  return report.finish();
}

CheckReport distance_nonincreasing_check(const ConvexFunctional& f, const GeodesicSpace& space,
                                         const SpacePoint& x0, const SpacePoint& y0, double T,
                                         long n_per_unit) {
  if (!(T > 0.0)) fail("distance_nonincreasing_check needs T > 0");
  if (n_per_unit < 1) fail("distance_nonincreasing_check needs n_per_unit >= 1");
  CheckReport report;
  report.name = "distance_nonincreasing(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = 4.0 * prox_epsilon(1.0 / n_per_unit);
  report.details = "worst of d(x_k, y_k) - d(x_{k-1}, y_{k-1}); tolerance 4 eps_prox";
  const double tau = 1.0 / static_cast<double>(n_per_unit);
  const long steps = std::max<long>(1, std::llround(T * n_per_unit));
  SpacePoint x = x0, y = y0;
  double prev = distance(space, x, y);
  for (long k = 1; k <= steps; ++k) {
    x = resolvent(f, space, x, tau).point;
    y = resolvent(f, space, y, tau).point;
    const double cur = distance(space, x, y);
    report.record(cur - prev);
    prev = cur;
  }
  return report.finish();
}

CheckReport speed_slope_check(const Trajectory& traj, const ConvexFunctional& f,
                              const GeodesicSpace& space, double slope_floor, double rel_tol) {
  CheckReport report;
  report.name = "speed_slope(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = 0.0;
  report.details = "worst of |d(x_{k-1},x_k)/tau - slope(x_k)| / slope(x_k) - " +
                   std::to_string(rel_tol) + " where slope > " + std::to_string(slope_floor);
  for (const auto& node : traj.nodes) {
    if (node.step_index == 0) continue;
    std::optional<double> slope = node.slope;
    if (!slope) slope = node_slope(f, space, node.point, mix_seed(traj.seed + node.step_index));
    if (!slope) {
      report.skip();
      continue;
    }
    if (*slope <= slope_floor) continue;
    const double speed = node.step_distance / traj.tau;
    report.record(std::abs(speed - *slope) / *slope - rel_tol);
  }
  return report.finish();
}

CheckReport half_order_distance_check(const Trajectory& traj, const ConvexFunctional& f,
                                      const GeodesicSpace& space) {
  CheckReport report;
  report.name = "half_order(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = 0.0;
  report.details =
      "worst of d(x_s,x_t) - min(sqrt(2(t-s)(f(x_s)-f(x_t))), sqrt(2(t-s)(f(x_0)-inf f))) "
      "- 4 eps_prox steps over all grid pairs";
  // Fall back to the best achieved value when the infimum is unknown.
  double inf_value = traj.nodes.back().value;
  for (const auto& n : traj.nodes) inf_value = std::min(inf_value, n.value);
  if (f.is_bounded_below()) inf_value = f.infimum();
  const double f0 = traj.nodes.front().value;
  for (std::size_t i = 0; i < traj.nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < traj.nodes.size(); ++j) {
      const auto& a = traj.nodes[i];
      const auto& b = traj.nodes[j];
      const double dt = b.t - a.t;
      const double d = distance(space, a.point, b.point);
      const double slack =
          4.0 * prox_epsilon(traj.tau) * static_cast<double>(b.step_index - a.step_index);
      const double pair_bound = std::sqrt(2.0 * dt * std::max(a.value - b.value, 0.0));
      const double global_bound = std::sqrt(2.0 * dt * std::max(f0 - inf_value, 0.0));
      report.record(d - std::min(pair_bound, global_bound) - slack);
    }
  }
  return report.finish();
}

CheckReport dissipation_check(const Trajectory& traj, const ConvexFunctional& f,
                              const GeodesicSpace& space, double rel_tol) {
  CheckReport report;
  report.name = "dissipation(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = 0.0;
  report.details =
      "|f(x_0) - f(x_T) - trapezoid(slope^2)| / |f(x_0) - f(x_T)| - " + std::to_string(rel_tol);
  std::vector<double> slopes;
  slopes.reserve(traj.nodes.size());
  for (const auto& node : traj.nodes) {
    std::optional<double> s = node.slope;
    if (!s) s = node_slope(f, space, node.point, mix_seed(traj.seed + node.step_index));
    if (!s) {
      report.skip();
      return report.finish();
    }
    slopes.push_back(*s);
  }
  double quad = 0.0;
  for (std::size_t i = 0; i + 1 < traj.nodes.size(); ++i) {
    const double dt = traj.nodes[i + 1].t - traj.nodes[i].t;
    quad += 0.5 * dt * (slopes[i] * slopes[i] + slopes[i + 1] * slopes[i + 1]);
  }
  const double drop = traj.nodes.front().value - traj.nodes.back().value;
  const double denom = std::max(std::abs(drop), 1e-12);
  report.record(std::abs(drop - quad) / denom - rel_tol);
  return report.finish();
}

CheckReport infimum_realization_check(const ConvexFunctional& f, const GeodesicSpace& space,
                                      const SpacePoint& x0, double T_max,
                                      const InfimumRealizationOptions& opts) {
  if (!(T_max > 0.0)) fail("infimum_realization_check needs T_max > 0");
  CheckReport report;
  report.name = "infimum_realization(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = 0.0;
  const SpacePoint xT = mm_point(f, space, x0, T_max, std::llround(T_max * opts.n_per_unit));
  const SlopeEstimate slope =
      lower_slope_estimate(f, space, xT, 64, opts.slope_radii, mix_seed(0xf10e));
  if (opts.expected_residual_slope) {
    const double expected = *opts.expected_residual_slope;
    report.details = "at T=" + std::to_string(T_max) +
                     ": |slope - expected| - rel_tol * expected, slope estimated";
    report.record(std::abs(slope.value - expected) - opts.expected_slope_rel_tol * expected);
    return report.finish();
  }
  if (!f.is_bounded_below()) fail("infimum_realization_check needs a bounded-below instance");
  const double gap = f.value(space, xT) - f.infimum();
  report.details = "at T=" + std::to_string(T_max) + ": records gap - eps_energy and slope - eps_slope";
  report.record(gap - opts.eps_energy);
  report.record(slope.value - opts.eps_slope);
  return report.finish();
}

CheckReport stationarity_check(const ConvexFunctional& f, const GeodesicSpace& space,
                               const SpacePoint& x0, const std::vector<double>& times,
                               const std::vector<long>& n_values) {
  CheckReport report;
  report.name = "stationarity(" + f.kind_name() + " on " + space_label(space) + ")";
  report.tolerance = 0.0;
  report.details = "worst of d(x0, mm_point(t, n)) - 2 n eps_prox(t/n); start must have slope 0";
  const SlopeEstimate s0 = slope_of(f, space, x0);
  if (s0.value > 1e-10) {
    report.record(s0.value);  // not a stationary start: fail loudly
    return report.finish();
  }
  for (double t : times) {
    for (long n : n_values) {
      const SpacePoint xt = mm_point(f, space, x0, t, n);
      report.record(distance(space, x0, xt) -
                    2.0 * static_cast<double>(n) * prox_epsilon(t / static_cast<double>(n)));
    }
  }
  return report.finish();
}

}  // namespace npcflow
