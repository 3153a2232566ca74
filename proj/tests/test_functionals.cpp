#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "npcflow/functionals.hpp"
#include "npcflow/rng.hpp"
#include "oracles.hpp"

using namespace npcflow;

namespace {

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

std::vector<double> unit_ideal(double ux, double uy) {
  const double n = std::hypot(ux, uy);
  return {1.0, ux / n, uy / n};
}

}  // namespace

TEST_CASE("values match the stated formulas") {
  const auto e1 = GeodesicSpace::euclidean(1);
  const auto half = ConvexFunctional::half_squared_distance(euclidean_point({0}));
  CHECK(half.value(e1, euclidean_point({3})) == doctest::Approx(4.5));

  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto buse = ConvexFunctional::busemann(unit_ideal(1, 0));
  CHECK(buse.value(h2, hyperbolic_point_ambient({1, 0, 0})) == doctest::Approx(0.0));

  const auto abs1 = ConvexFunctional::max_affine({{{1.0}, 0.0}, {{-1.0}, 0.0}});
  CHECK(abs1.value(e1, euclidean_point({2})) == doctest::Approx(2.0));
  CHECK(abs1.value(e1, euclidean_point({-2})) == doctest::Approx(2.0));

  const auto e2 = GeodesicSpace::euclidean(2);
  Eigen::MatrixXd A(2, 2);
  A << 2, 0, 0, 1;
  const auto quad = ConvexFunctional::quadratic_form(A, Eigen::Vector2d(1, 0));
  CHECK(quad.value(e2, euclidean_point({1, 1})) == doctest::Approx(2.0 / 2 + 0.5 - 1.0));

  const auto scaled = ConvexFunctional::scaled_distance(2.0, euclidean_point({1, 0}));
  CHECK(scaled.value(e2, euclidean_point({4, 4})) == doctest::Approx(10.0));
}

TEST_CASE("constructors reject invalid parameters") {
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 0, 0, -1;
  CHECK_THROWS_AS(ConvexFunctional::quadratic_form(bad, Eigen::Vector2d::Zero()),
                  std::domain_error);
  Eigen::MatrixXd asym(2, 2);
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(ConvexFunctional::quadratic_form(asym, Eigen::Vector2d::Zero()),
                  std::domain_error);
  CHECK_THROWS_AS(ConvexFunctional::busemann({1.0, 0.5, 0.0}), std::domain_error);
  CHECK_THROWS_AS(ConvexFunctional::busemann({-1.0, 1.0, 0.0}), std::domain_error);
  CHECK_THROWS_AS(ConvexFunctional::scaled_distance(0.0, euclidean_point({0})),
                  std::domain_error);
  CHECK_THROWS_AS(ConvexFunctional::max_affine({}), std::domain_error);
}

TEST_CASE("functional and space kinds must match") {
  const auto e2 = GeodesicSpace::euclidean(2);
  const auto s3 = GeodesicSpace::spider(3);
  const auto half_spider = ConvexFunctional::half_squared_distance(spider_point(1, 1));
  CHECK_THROWS_AS(half_spider.value(e2, euclidean_point({0, 0})), std::domain_error);
  const auto buse = ConvexFunctional::busemann(unit_ideal(1, 0));
  CHECK_THROWS_AS(buse.value(s3, spider_point(1, 1)), std::domain_error);
}

TEST_CASE("busemann normalization fixes the additive constant") {
  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto a = ConvexFunctional::busemann(unit_ideal(0, 1));
  auto scaled_ideal = unit_ideal(0, 1);
  for (double& c : scaled_ideal) c *= 7.5;
  const auto b = ConvexFunctional::busemann(scaled_ideal);
  auto rng = make_rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_point(h2, rng, 2.0);
    CHECK(a.value(h2, x) == doctest::Approx(b.value(h2, x)).epsilon(1e-12));
  }
}

TEST_CASE("slope estimator matches analytic slopes at smooth points") {
  auto rng = make_rng(4);

  const auto e3 = GeodesicSpace::euclidean(3);
  const auto anchor = euclidean_point({1, -2, 0.5});
  const auto half = ConvexFunctional::half_squared_distance(anchor);
  const auto scaled = ConvexFunctional::scaled_distance(2.0, anchor);
  const auto quad = ConvexFunctional::quadratic_form(seeded_spd(3, 0.5, 4.0, 11),
                                                     Eigen::Vector3d(1, 0, -1));
  for (int i = 0; i < 25; ++i) {
    const auto x = random_point(e3, rng, 3.0);
    const double dxa = distance(e3, x, anchor);
    if (dxa < 0.2) continue;

    const auto est_half = lower_slope_estimate(half, e3, x, 64, default_slope_radii(), 100 + i);
    CHECK(est_half.converged);
    CHECK(std::abs(est_half.value - dxa) <= 0.01 * dxa);

    const auto est_scaled =
        lower_slope_estimate(scaled, e3, x, 64, default_slope_radii(), 200 + i);
    CHECK(est_scaled.converged);
    CHECK(std::abs(est_scaled.value - 2.0) <= 0.02);

    const double grad_norm = quad.gradient(e3, x).norm();
    if (grad_norm < 0.2) continue;
    const auto est_quad = lower_slope_estimate(quad, e3, x, 64, default_slope_radii(), 300 + i);
    CHECK(est_quad.converged);
    CHECK(std::abs(est_quad.value - grad_norm) <= 0.01 * grad_norm);
  }

  // Hyperbolic smooth instance: gradient norm of half squared distance is the
  // distance to the anchor.
  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto ha = hyperbolic_point({0.3, -0.4});
  const auto hhalf = ConvexFunctional::half_squared_distance(ha);
  for (int i = 0; i < 10; ++i) {
    const auto x = random_point(h2, rng, 2.0);
    const double dxa = distance(h2, x, ha);
    if (dxa < 0.2) continue;
    const auto est = lower_slope_estimate(hhalf, h2, x, 64, default_slope_radii(), 400 + i);
    CHECK(est.converged);
    CHECK(std::abs(est.value - dxa) <= 0.01 * dxa);
  }
}

TEST_CASE("slope is zero at minimizers") {
  const auto e1 = GeodesicSpace::euclidean(1);
  const auto half = ConvexFunctional::half_squared_distance(euclidean_point({2}));
  const auto est = lower_slope_estimate(half, e1, euclidean_point({2}), 32,
                                        default_slope_radii(), 7);
  CHECK(est.value == 0.0);
  CHECK(est.converged);

  // Kink of |x|: every quotient is negative, so the clipped slope is 0.
  const auto abs1 = ConvexFunctional::max_affine({{{1.0}, 0.0}, {{-1.0}, 0.0}});
  CHECK(abs1.exact_slope(e1, euclidean_point({0})) == doctest::Approx(0.0));
  CHECK(abs1.exact_slope(e1, euclidean_point({0.5})) == doctest::Approx(1.0));
  const auto est_kink =
      lower_slope_estimate(abs1, e1, euclidean_point({0}), 32, default_slope_radii(), 8);
  CHECK(est_kink.value == 0.0);
}

TEST_CASE("busemann slope is one and the estimator sees it") {
  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto buse = ConvexFunctional::busemann(unit_ideal(1, 1));
  auto rng = make_rng(9);
  for (int i = 0; i < 10; ++i) {
    const auto x = random_point(h2, rng, 2.0);
    CHECK(buse.exact_slope(h2, x) == 1.0);
    const auto est = lower_slope_estimate(buse, h2, x, 32, default_slope_radii(), 500 + i);
    CHECK(est.converged);
    CHECK(est.value == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("slope estimator validates the radii") {
  const auto e1 = GeodesicSpace::euclidean(1);
  const auto half = ConvexFunctional::half_squared_distance(euclidean_point({0}));
  CHECK_THROWS_AS(
      lower_slope_estimate(half, e1, euclidean_point({1}), 8, {1e-2, 1e-1}, 0),
      std::domain_error);
  CHECK_THROWS_AS(
      lower_slope_estimate(half, e1, euclidean_point({1}), 8, {1e-2, -1e-3}, 0),
      std::domain_error);
  CHECK_THROWS_AS(lower_slope_estimate(half, e1, euclidean_point({1}), 0, {1e-2}, 0),
                  std::domain_error);
}

TEST_CASE("convexity certification passes on every instance") {
  const auto e3 = GeodesicSpace::euclidean(3);
  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto s3 = GeodesicSpace::spider(3);

  CHECK(convexity_certify(ConvexFunctional::quadratic_form(Eigen::Matrix3d::Identity(),
                                                           Eigen::Vector3d::Zero()),
                          e3, 1000, 41)
            .passed);
  CHECK(convexity_certify(ConvexFunctional::busemann(unit_ideal(0.6, 0.8)), h2, 1000, 42)
            .passed);
  CHECK(convexity_certify(ConvexFunctional::half_squared_distance(spider_point(2, 1)), s3,
                          1000, 43)
            .passed);
  CHECK(convexity_certify(ConvexFunctional::scaled_distance(1.5, hyperbolic_point({1, 1})),
                          h2, 1000, 44)
            .passed);
  CHECK(convexity_certify(
            ConvexFunctional::max_affine({{{1.0, 0.0}, 0.0}, {{-1.0, 0.5}, 0.3}, {{0.0, -1.0}, -0.2}}),
            GeodesicSpace::euclidean(2), 1000, 45)
            .passed);

  const auto prod = GeodesicSpace::product(GeodesicSpace::euclidean(2), GeodesicSpace::spider(3));
  auto rng = make_rng(46);
  CHECK(convexity_certify(ConvexFunctional::half_squared_distance(random_point(prod, rng)),
                          prod, 1000, 47)
            .passed);
}

TEST_CASE("slope bound holds on random pairs for every instance") {
  const auto e1 = GeodesicSpace::euclidean(1);
  const auto e3 = GeodesicSpace::euclidean(3);
  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto s3 = GeodesicSpace::spider(3);

  CHECK(slope_bound_check(ConvexFunctional::half_squared_distance(euclidean_point({1, 1, 1})),
                          e3, 500, 51)
            .passed);
  CHECK(slope_bound_check(ConvexFunctional::scaled_distance(2.0, spider_point(1, 2)), s3, 500, 52)
            .passed);
  CHECK(slope_bound_check(ConvexFunctional::busemann(unit_ideal(1, 0)), h2, 500, 53).passed);
  CHECK(slope_bound_check(ConvexFunctional::max_affine({{{1.0}, 0.0}, {{-1.0}, 0.0}}), e1,
                          500, 54)
            .passed);
  CHECK(slope_bound_check(ConvexFunctional::quadratic_form(seeded_spd(3, 0.3, 3.0, 55),
                                                           Eigen::Vector3d(0, 1, 0)),
                          e3, 500, 56)
            .passed);
}

TEST_CASE("slope bound arithmetic example") {
  // half squared distance on the line: x=3, y=0, slope(x)=3: 0 >= 4.5 - 9.
  const auto e1 = GeodesicSpace::euclidean(1);
  const auto half = ConvexFunctional::half_squared_distance(euclidean_point({0}));
  const double fx = half.value(e1, euclidean_point({3}));
  const double fy = half.value(e1, euclidean_point({0}));
  const double slope = half.exact_slope(e1, euclidean_point({3}));
  CHECK(fy >= fx - slope * 3.0 - 1e-12);
}

TEST_CASE("quadratic minimizer, infimum, and boundedness") {
  const auto e2 = GeodesicSpace::euclidean(2);
  Eigen::MatrixXd A(2, 2);
  A << 2, 0, 0, 0.5;
  const auto quad = ConvexFunctional::quadratic_form(A, Eigen::Vector2d(2, 1));
  CHECK(quad.is_bounded_below());
  CHECK(quad.has_unique_minimizer());
  const auto m = quad.minimizer(e2);
  REQUIRE(m.has_value());
  CHECK(m->coords[0] == doctest::Approx(1.0));
  CHECK(m->coords[1] == doctest::Approx(2.0));
  CHECK(quad.infimum() == doctest::Approx(quad.value(e2, *m)));

  // Singular direction with an offset component: unbounded below.
  Eigen::MatrixXd S(2, 2);
  S << 1, 0, 0, 0;
  const auto sing = ConvexFunctional::quadratic_form(S, Eigen::Vector2d(0, 1));
  CHECK(!sing.is_bounded_below());
  const auto flat = ConvexFunctional::quadratic_form(S, Eigen::Vector2d(1, 0));
  CHECK(flat.is_bounded_below());
  CHECK(!flat.has_unique_minimizer());
}

TEST_CASE("max affine boundedness flag") {
  const auto abs1 = ConvexFunctional::max_affine({{{1.0}, 0.0}, {{-1.0}, 0.0}});
  CHECK(abs1.is_bounded_below());
  const auto ramp = ConvexFunctional::max_affine({{{1.0}, 0.0}, {{2.0}, 1.0}});
  CHECK(!ramp.is_bounded_below());
}

TEST_CASE("min norm in hull oracle comparison") {
  // 1-D segment [ -1, 1 ] contains 0.
  {
    std::vector<Eigen::VectorXd> pts;
    pts.push_back(Eigen::VectorXd::Constant(1, -1.0));
    pts.push_back(Eigen::VectorXd::Constant(1, 1.0));
    CHECK(min_norm_in_hull(pts).second == doctest::Approx(0.0));
  }
  // Triangle away from the origin; verify against a dense grid over weights.
  {
    std::vector<Eigen::VectorXd> pts;
    pts.push_back(Eigen::Vector2d(1.0, 1.0));
    pts.push_back(Eigen::Vector2d(2.0, -0.5));
    pts.push_back(Eigen::Vector2d(1.5, 2.0));
    const auto [p, sq] = min_norm_in_hull(pts);
    double best = 1e300;
    const int n = 200;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j + i <= n; ++j) {
        const double w0 = static_cast<double>(i) / n;
        const double w1 = static_cast<double>(j) / n;
        const double w2 = 1.0 - w0 - w1;
        best = std::min(best, (w0 * pts[0] + w1 * pts[1] + w2 * pts[2]).squaredNorm());
      }
    CHECK(sq <= best + 1e-9);
    CHECK(sq >= best - 1e-4);
    CHECK(p.squaredNorm() == doctest::Approx(sq));
  }
}

TEST_CASE("busemann is unbounded below along its ray") {
  const auto h2 = GeodesicSpace::hyperbolic(2);
  const auto buse = ConvexFunctional::busemann(unit_ideal(1, 0));
  CHECK(!buse.is_bounded_below());
  CHECK(!buse.has_minimizer());
  const auto x0 = hyperbolic_point_ambient({1, 0, 0});
  const auto targets = buse.descent_targets(h2, x0);
  REQUIRE(!targets.empty());
  const auto mid = geodesic_ray_point(h2, x0, targets[0], 10.0);
  CHECK(buse.value(h2, mid) == doctest::Approx(-10.0).epsilon(1e-6));
  // Beyond radius ~15 the height underflows against the coordinate
  // magnitude, so only the sign of the drop is asserted.
  const auto far = geodesic_ray_point(h2, x0, targets[0], 20.0);
  CHECK(buse.value(h2, far) < -10.0);
}

TEST_CASE("gradient matches finite differences") {
  const auto e3 = GeodesicSpace::euclidean(3);
  const auto quad = ConvexFunctional::quadratic_form(seeded_spd(3, 0.2, 2.0, 77),
                                                     Eigen::Vector3d(1, 2, 3));
  auto rng = make_rng(78);
  for (int i = 0; i < 10; ++i) {
    const auto x = random_point(e3, rng, 3.0);
    auto h = [&](const Eigen::VectorXd& p) {
      std::vector<double> c(p.data(), p.data() + p.size());
      return quad.value(e3, euclidean_point(c));
    };
    const Eigen::VectorXd fd = oracle::fd_gradient(
        h, Eigen::Map<const Eigen::Vector3d>(x.coords.data()), 1e-6);
    CHECK((quad.gradient(e3, x) - fd).norm() <= 1e-6 * (1.0 + fd.norm()));
  }
}
