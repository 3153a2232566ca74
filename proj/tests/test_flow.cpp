#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "npcflow/flow.hpp"
#include "npcflow/rng.hpp"
#include "oracles.hpp"

using namespace npcflow;

namespace {

ConvexFunctional scalar_quadratic() {
  return ConvexFunctional::quadratic_form(Eigen::MatrixXd::Constant(1, 1, 1.0),
                                          Eigen::VectorXd::Zero(1));
}

Eigen::MatrixXd seeded_spd(int d, double lambda_min, double lambda_max, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd raw(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) raw(i, j) = gauss(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  const Eigen::MatrixXd Q = qr.householderQ();
  Eigen::VectorXd evals(d);
  for (int i = 0; i < d; ++i)
    evals[i] = lambda_min * std::pow(lambda_max / lambda_min,
                                     d == 1 ? 0.0 : static_cast<double>(i) / (d - 1));
  return Q * evals.asDiagonal() * Q.transpose();
}

// Start on the asymptotic line through the basepoint so the whole flow stays
// within computable hyperboloid radius.
SpacePoint busemann_line_start(double height) {
  return hyperbolic_point_ambient({std::cosh(height), -std::sinh(height), 0.0});
}

const std::vector<double> kIdeal = {1.0, 1.0, 0.0};

}  // namespace

TEST_CASE("scalar chain closed form") {
  const auto e1 = GeodesicSpace::euclidean(1);
  const auto f = scalar_quadratic();
  const auto x0 = euclidean_point({1.0});

  const SpacePoint p64 = mm_point(f, e1, x0, 1.0, 64);
  CHECK(std::abs(p64.coords[0] - std::pow(1.0 + 1.0 / 64.0, -64.0)) <= 1e-12);

  const SpacePoint p4096 = mm_point(f, e1, x0, 1.0, 4096);
  CHECK(std::abs(p4096.coords[0] - std::exp(-1.0)) < 1e-4);

  CHECK(mm_point(f, e1, x0, 0.0, 8).coords[0] == 1.0);
  CHECK_THROWS_AS(mm_point(f, e1, x0, -1.0, 8), std::domain_error);
  CHECK_THROWS_AS(mm_point(f, e1, x0, 1.0, 0), std::domain_error);
}

TEST_CASE("chains refine monotonically in n") {
  const auto e2 = GeodesicSpace::euclidean(2);
  const auto quad = ConvexFunctional::quadratic_form(seeded_spd(2, 0.5, 3.0, 5),
                                                     Eigen::Vector2d(1, -1));
  const auto s3 = GeodesicSpace::spider(3);
  const auto shalf = ConvexFunctional::half_squared_distance(spider_point(1, 1.0));

  const auto x0e = euclidean_point({2.0, 1.0});
  const auto x0s = spider_point(2, 3.0);
  double prev_e = 1e300, prev_s = 1e300;
  for (long n : {8L, 16L, 32L, 64L}) {
    const double de = distance(e2, mm_point(quad, e2, x0e, 1.0, n),
                               mm_point(quad, e2, x0e, 1.0, 2 * n));
    CHECK(de < prev_e);
    prev_e = de;
    const double ds = distance(s3, mm_point(shalf, s3, x0s, 1.0, n),
                               mm_point(shalf, s3, x0s, 1.0, 2 * n));
    CHECK(ds <= prev_s + 1e-15);
    prev_s = ds;
  }
}

TEST_CASE("trajectory reaches the minimum and keeps its invariants") {
  const auto e5 = GeodesicSpace::euclidean(5);
  const auto A = seeded_spd(5, 3.0, 10.0, 17);
  Eigen::VectorXd b(5);
  b << 1, 0, -1, 0.5, 2;
  const auto quad = ConvexFunctional::quadratic_form(A, b);
  const auto x0 = euclidean_point({1, -1, 2, 0, 1});

  const Trajectory traj = mm_trajectory(quad, e5, x0, 5.0, 65, 128);
  CHECK(traj.certified);
  CHECK(traj.nodes.front().t == 0.0);
  CHECK(traj.nodes.back().t == doctest::Approx(5.0));

  // Closed-form chain oracle at the final node: (I + tau A)^{-k} applied in
  // the eigenbasis.
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const Eigen::VectorXd xstar = A.ldlt().solve(b);
    Eigen::VectorXd c =
        es.eigenvectors().transpose() *
        (Eigen::Map<const Eigen::VectorXd>(x0.coords.data(), 5) - xstar);
    const long k = traj.nodes.back().step_index;
    for (int i = 0; i < 5; ++i)
      c[i] *= std::pow(1.0 + es.eigenvalues()[i] / 128.0, static_cast<double>(-k));
    const Eigen::VectorXd expected = xstar + es.eigenvectors() * c;
    const Eigen::VectorXd got =
        Eigen::Map<const Eigen::VectorXd>(traj.nodes.back().point.coords.data(), 5);
    CHECK((expected - got).norm() <= 1e-9);
  }

  CHECK(traj.nodes.back().value - quad.infimum() <= 1e-10);

  double prev_value = 1e300, prev_slope = 1e300;
  for (const auto& node : traj.nodes) {
    CHECK(node.value <= prev_value + 2.0 * prox_epsilon(traj.tau));
    prev_value = node.value;
    REQUIRE(node.slope.has_value());
    CHECK(*node.slope <= prev_slope + 1e-9);
    prev_slope = *node.slope;
  }
}

TEST_CASE("per step telescoping bound along a dense chain") {
  const auto s3 = GeodesicSpace::spider(3);
  const auto f = ConvexFunctional::half_squared_distance(spider_point(1, 1.0));
  const Trajectory traj = mm_trajectory(f, s3, spider_point(2, 4.0), 2.0, 257, 128, false);
  for (std::size_t i = 1; i < traj.nodes.size(); ++i) {
    const auto& a = traj.nodes[i - 1];
    const auto& b = traj.nodes[i];
    if (b.step_index != a.step_index + 1) continue;
    CHECK(b.step_distance * b.step_distance <=
          2.0 * traj.tau * (a.value - b.value) + 1e-8);
  }
}

TEST_CASE("constant functional trajectory stays at the start") {
  const auto e2 = GeodesicSpace::euclidean(2);
  const auto constant = ConvexFunctional::max_affine({{{0.0, 0.0}, 1.5}});
  const auto x0 = euclidean_point({3.0, -2.0});
  const Trajectory traj = mm_trajectory(constant, e2, x0, 3.0, 17, 32, false);
  for (const auto& node : traj.nodes) CHECK(distance(e2, node.point, x0) <= 1e-9);
}

TEST_CASE("busemann trajectory drops at unit rate with unit speed") {
  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto buse = ConvexFunctional::busemann(kIdeal);
  const auto x0 = busemann_line_start(5.0);
  const Trajectory traj = mm_trajectory(buse, h2, x0, 10.0, 65, 64);
  const double drop = traj.nodes.front().value - traj.nodes.back().value;
  CHECK(std::abs(drop - 10.0) <= 0.05);
  CHECK(std::abs(drop - 10.0) <= 1e-6);  // the discrete chain drops exactly tau per step
  for (const auto& node : traj.nodes) {
    if (node.step_index == 0) continue;
    CHECK(node.step_distance / traj.tau == doctest::Approx(1.0).epsilon(1e-6));
  }
  // Oracle: the chain must track the explicit geodesic line through the
  // basepoint at arc length t.
  const auto expected_end = hyperbolic_point_ambient({std::cosh(5.0), std::sinh(5.0), 0.0});
  CHECK(distance(h2, traj.nodes.back().point, expected_end) <= 1e-7);
}

TEST_CASE("smooth flow matches closed forms") {
  const auto e1 = GeodesicSpace::euclidean(1);
  const auto f1 = scalar_quadratic();
  const Trajectory t1 = smooth_flow(f1, e1, euclidean_point({1.0}), 1.0, 9);
  CHECK(std::abs(t1.nodes.back().point.coords[0] - std::exp(-1.0)) <= 1e-9);

  // Nonzero offset: the stationary point is reached asymptotically.
  const auto e2 = GeodesicSpace::euclidean(2);
  Eigen::MatrixXd A(2, 2);
  A << 1.5, 0.2, 0.2, 0.8;
  const auto f2 = ConvexFunctional::quadratic_form(A, Eigen::Vector2d(1, 1));
  const Trajectory t2 = smooth_flow(f2, e2, euclidean_point({4.0, -3.0}), 30.0, 9);
  const auto xstar = f2.minimizer(e2);
  REQUIRE(xstar.has_value());
  CHECK(distance(e2, t2.nodes.back().point, *xstar) < 1e-9);

  // Stiff eigenvalue ratio.
  Eigen::MatrixXd S(2, 2);
  S << 1, 0, 0, 100;
  const auto f3 = ConvexFunctional::quadratic_form(S, Eigen::Vector2d::Zero());
  const auto x0 = euclidean_point({1.0, 1.0});
  const Trajectory t3 = smooth_flow(f3, e2, x0, 1.0, 9, 1e-10);
  const SpacePoint exact = quadratic_flow_point(f3, x0, 1.0);
  CHECK(distance(e2, t3.nodes.back().point, exact) < 1e-8);

  const auto s3 = GeodesicSpace::spider(3);
  const auto shalf = ConvexFunctional::half_squared_distance(spider_point(1, 1.0));
  CHECK_THROWS_AS(smooth_flow(shalf, s3, spider_point(2, 1.0), 1.0, 9), std::domain_error);
}

TEST_CASE("consistency of the chain with the smooth flow, scalar") {
  const auto e1 = GeodesicSpace::euclidean(1);
  const auto f = scalar_quadratic();
  const auto x0 = euclidean_point({1.0});
  const ConsistencyReport rep = consistency_report(f, e1, x0, 1.0, {16, 32, 64});
  REQUIRE(rep.sup_errors.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const double n = static_cast<double>(rep.n_values[i]);
    const double expected = std::abs(std::pow(1.0 + 1.0 / n, -n) - std::exp(-1.0));
    CHECK(std::abs(rep.sup_errors[i] - expected) <= 2e-4);
  }
  CHECK(rep.errors_decreasing);
  REQUIRE(rep.observed_order.has_value());
  CHECK(*rep.observed_order == doctest::Approx(1.0).epsilon(0.1));

  // From the minimizer every error vanishes.
  const ConsistencyReport at_min =
      consistency_report(f, e1, euclidean_point({0.0}), 1.0, {16, 32});
  for (double e : at_min.sup_errors) CHECK(e <= 1e-12);
}

TEST_CASE("consistency for a seeded SPD system") {
  const auto e3 = GeodesicSpace::euclidean(3);
  const auto quad = ConvexFunctional::quadratic_form(seeded_spd(3, 0.2, 4.0, 23),
                                                     Eigen::Vector3d(0.5, -1, 1));
  const auto x0 = euclidean_point({1.0, 2.0, -1.0});
  const ConsistencyReport rep = consistency_report(quad, e3, x0, 1.0, {64, 128, 256, 512});
  CHECK(rep.errors_decreasing);
  REQUIRE(rep.observed_order.has_value());
  CHECK(*rep.observed_order >= 0.85);
  CHECK(*rep.observed_order <= 1.15);
}

TEST_CASE("evi along the chain") {
  // Scalar case with the minimizer as witness: exact inequality of the
  // closed-form chain.
  const auto e1 = GeodesicSpace::euclidean(1);
  const auto f = scalar_quadratic();
  const Trajectory traj = mm_trajectory(f, e1, euclidean_point({1.0}), 1.0, 33, 256, false);
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t i = 0; i + 1 < traj.nodes.size(); i += 4)
    pairs.push_back({traj.nodes[i].t, traj.nodes[i + 1].t - traj.nodes[i].t});
  pairs.push_back({traj.nodes[3].t, 0.0});  // s = 0 degenerates to equality
  const CheckReport rep =
      evi_check(traj, f, e1, {euclidean_point({0.0}), euclidean_point({0.7})}, pairs);
  CHECK(rep.passed);

  // Hyperbolic half squared distance with random witnesses and pairs.
  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto hhalf = ConvexFunctional::half_squared_distance(hyperbolic_point({0.5, -0.5}));
  const Trajectory htraj =
      mm_trajectory(hhalf, h2, hyperbolic_point({1.5, 1.0}), 2.0, 65, 1024, false);
  auto rng = make_rng(91);
  std::vector<SpacePoint> witnesses;
  for (int i = 0; i < 10; ++i) witnesses.push_back(random_point(h2, rng, 2.0));
  std::vector<std::pair<double, double>> hpairs;
  std::uniform_int_distribution<std::size_t> pick(0, htraj.nodes.size() - 1);
  for (int i = 0; i < 10; ++i) {
    auto a = pick(rng), b = pick(rng);
    if (a > b) std::swap(a, b);
    hpairs.push_back({htraj.nodes[a].t, htraj.nodes[b].t - htraj.nodes[a].t});
  }
  CHECK(evi_check(htraj, hhalf, h2, witnesses, hpairs).passed);

  CHECK_THROWS_AS(evi_check(htraj, hhalf, h2, witnesses, {{0.123456, 0.1}}),
                  std::domain_error);
}

TEST_CASE("distance between chains is nonincreasing") {
  const auto e2 = GeodesicSpace::euclidean(2);
  const auto quad = ConvexFunctional::quadratic_form(Eigen::Matrix2d::Identity(),
                                                     Eigen::Vector2d::Zero());
  CHECK(distance_nonincreasing_check(quad, e2, euclidean_point({1, 2}),
                                     euclidean_point({-1, 0}), 1.0, 64)
            .passed);
  // Identical starts stay identical.
  const CheckReport same = distance_nonincreasing_check(
      quad, e2, euclidean_point({1, 1}), euclidean_point({1, 1}), 1.0, 32);
  CHECK(same.passed);
  CHECK(same.worst_violation <= 0.0);

  const auto s3 = GeodesicSpace::spider(3);
  const auto shalf = ConvexFunctional::half_squared_distance(spider_point(0, 0));
  const CheckReport rep = distance_nonincreasing_check(shalf, s3, spider_point(1, 2.0),
                                                       spider_point(2, 3.0), 1.0, 64);
  CHECK(rep.passed);
  CHECK(rep.worst_violation < 0.0);  // strict decrease toward the hub
}

TEST_CASE("analytic contraction factor for the identity quadratic") {
  const auto e2 = GeodesicSpace::euclidean(2);
  const auto quad = ConvexFunctional::quadratic_form(Eigen::Matrix2d::Identity(),
                                                     Eigen::Vector2d(0.3, -0.2));
  const double tau = 1.0 / 64.0;
  SpacePoint x = euclidean_point({2, 1}), y = euclidean_point({-1, 1});
  const double d0 = distance(e2, x, y);
  for (int k = 1; k <= 64; ++k) {
    x = resolvent(quad, e2, x, tau).point;
    y = resolvent(quad, e2, y, tau).point;
    CHECK(std::abs(distance(e2, x, y) - d0 * std::pow(1.0 + tau, -k)) <= 1e-9);
  }
}

TEST_CASE("speed equals slope at the new point") {
  const auto e1 = GeodesicSpace::euclidean(1);
  const auto f = scalar_quadratic();
  const Trajectory traj = mm_trajectory(f, e1, euclidean_point({5.0}), 2.0, 33, 64);
  const CheckReport rep = speed_slope_check(traj, f, e1);
  CHECK(rep.passed);
  CHECK(rep.worst_violation <= -0.049);  // the scalar identity is exact

  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto buse = ConvexFunctional::busemann(kIdeal);
  const Trajectory btraj = mm_trajectory(buse, h2, busemann_line_start(2.5), 5.0, 33, 64);
  CHECK(speed_slope_check(btraj, buse, h2).passed);

  const auto hhalf = ConvexFunctional::half_squared_distance(hyperbolic_point({0.8, 0.3}));
  const Trajectory htraj = mm_trajectory(hhalf, h2, hyperbolic_point({-1.2, 1.0}), 2.0, 33, 64);
  CHECK(speed_slope_check(htraj, hhalf, h2).passed);

  // Stationary trajectory: nothing above the slope floor, nothing violated.
  const Trajectory stat = mm_trajectory(f, e1, euclidean_point({0.0}), 1.0, 9, 16);
  const CheckReport srep = speed_slope_check(stat, f, e1);
  CHECK(srep.passed);
  CHECK(srep.trials == 0);
}

TEST_CASE("half order distance bound") {
  const auto e1 = GeodesicSpace::euclidean(1);
  const auto f = scalar_quadratic();
  const Trajectory traj = mm_trajectory(f, e1, euclidean_point({1.0}), 3.0, 49, 128, false);
  CHECK(half_order_distance_check(traj, f, e1).passed);
  // Direct form of the scalar bound: 1 - (1+tau)^{-k} <= sqrt(t).
  for (const auto& node : traj.nodes)
    if (node.t > 0)
      CHECK(1.0 - node.point.coords[0] <= std::sqrt(node.t) + 1e-12);

  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto hhalf = ConvexFunctional::half_squared_distance(hyperbolic_point({0.2, 0.9}));
  auto rng = make_rng(93);
  const Trajectory htraj = mm_trajectory(hhalf, h2, random_point(h2, rng, 3.0), 2.0, 33, 128, false);
  CHECK(half_order_distance_check(htraj, hhalf, h2).passed);

  const Trajectory stat = mm_trajectory(f, e1, euclidean_point({0.0}), 1.0, 9, 16, false);
  CHECK(half_order_distance_check(stat, f, e1).passed);
}

TEST_CASE("dissipation identity") {
  const auto e1 = GeodesicSpace::euclidean(1);
  const auto f = scalar_quadratic();
  const Trajectory traj = mm_trajectory(f, e1, euclidean_point({1.0}), 1.0, 257, 256);
  const CheckReport rep = dissipation_check(traj, f, e1);
  CHECK(rep.passed);
  // Oracle: drop = (1 - e^{-2})/2 for the smooth flow; the chain at n=256
  // stays within the 2% budget of it.
  const double drop = traj.nodes.front().value - traj.nodes.back().value;
  CHECK(std::abs(drop - 0.5 * (1.0 - std::exp(-2.0))) <= 0.01);

  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto buse = ConvexFunctional::busemann(kIdeal);
  const Trajectory btraj = mm_trajectory(buse, h2, busemann_line_start(2.5), 5.0, 257, 256);
  const CheckReport brep = dissipation_check(btraj, buse, h2, 0.01);
  CHECK(brep.passed);
  const double bdrop = btraj.nodes.front().value - btraj.nodes.back().value;
  CHECK(bdrop == doctest::Approx(5.0).epsilon(1e-9));

  const Trajectory stat = mm_trajectory(f, e1, euclidean_point({0.0}), 1.0, 9, 16);
  CHECK(dissipation_check(stat, f, e1).passed);
}

TEST_CASE("infimum realization") {
  const auto e3 = GeodesicSpace::euclidean(3);
  const auto quad = ConvexFunctional::quadratic_form(seeded_spd(3, 0.5, 4.0, 31),
                                                     Eigen::Vector3d(1, 1, 0));
  const auto x0 = euclidean_point({2.0, -1.0, 3.0});
  CHECK(infimum_realization_check(quad, e3, x0, 50.0).passed);
  // Closed-form decay leaves a vanishing gap by T = 50.
  const SpacePoint xT = mm_point(quad, e3, x0, 50.0, 50 * 64);
  CHECK(quad.value(e3, xT) - quad.infimum() < 1e-10);

  // Start at the minimizer: zero gap at T = 0+.
  const auto xstar = quad.minimizer(e3);
  REQUIRE(xstar.has_value());
  CHECK(infimum_realization_check(quad, e3, *xstar, 1.0).passed);

  // No minimizer: the residual slope settles at 1.
  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto buse = ConvexFunctional::busemann(kIdeal);
  InfimumRealizationOptions opts;
  opts.expected_residual_slope = 1.0;
  opts.slope_radii = {0.1, 0.05, 0.02, 0.01};
  CHECK(infimum_realization_check(buse, h2, busemann_line_start(10.0), 20.0, opts).passed);
}

TEST_CASE("stationarity from slope-zero starts") {
  const auto e2 = GeodesicSpace::euclidean(2);
  const auto quad = ConvexFunctional::quadratic_form(seeded_spd(2, 0.5, 2.0, 37),
                                                     Eigen::Vector2d(1, 2));
  const auto xstar = quad.minimizer(e2);
  REQUIRE(xstar.has_value());
  CHECK(stationarity_check(quad, e2, *xstar).passed);

  const auto s3 = GeodesicSpace::spider(3);
  const auto shalf = ConvexFunctional::half_squared_distance(spider_point(0, 0));
  CHECK(stationarity_check(shalf, s3, spider_point(0, 0)).passed);

  const auto e1 = GeodesicSpace::euclidean(1);
  const auto abs1 = ConvexFunctional::max_affine({{{1.0}, 0.0}, {{-1.0}, 0.0}});
  CHECK(stationarity_check(abs1, e1, euclidean_point({0.0})).passed);

  // A start with positive slope is rejected by the report.
  const CheckReport bad = stationarity_check(quad, e2, euclidean_point({5.0, 5.0}));
  CHECK(!bad.passed);
}
