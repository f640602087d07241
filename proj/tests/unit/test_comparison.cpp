#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "degsde/comparison.hpp"

using namespace degsde;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ComparisonSetup cir_setup(double z0) {
  const Model m = make_multicir(2, constant_drift({3, 3}), identity_diffusion(2));
  const auto grid = geometric_grid(1e-3, 10.0, 32);
  return make_setup(envelope(m, 0, grid, EnvelopeOptions{10.0, 64, 1, 1}), z0);
}

std::vector<double> uniform_grid(std::size_t m, double dt) {
  std::vector<double> t(m);
  for (std::size_t k = 0; k < m; ++k) t[k] = static_cast<double>(k) * dt;
  return t;
}

}  // namespace

TEST_CASE("time change with a constant ratio") {
  const auto t = uniform_grid(101, 0.01);
  const auto half = time_change(t, std::vector<double>(101, 0.5));
  for (std::size_t k = 0; k < t.size(); ++k) CHECK_THAT(half.phi[k], WithinAbs(0.5 * t[k], 1e-15));
  CHECK(half.max_ratio == 0.5);
  CHECK_THAT(half.psi(0.25), WithinAbs(0.5, 1e-14));

  const auto id = time_change(t, std::vector<double>(101, 1.0));
  for (std::size_t k = 0; k < t.size(); ++k) CHECK_THAT(id.phi[k], WithinAbs(t[k], 1e-14));

  std::vector<double> bad(101, 1.0);
  bad[50] = 0.0;
  try {
    time_change(t, bad);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonMonotone);
  }
}

TEST_CASE("time change of a linear ratio matches the trapezoid integral") {
  const auto t = uniform_grid(11, 0.1);
  std::vector<double> ratio(11);
  for (std::size_t k = 0; k < 11; ++k) ratio[k] = 1.0 + t[k];
  const auto tc = time_change(t, ratio);
  for (std::size_t k = 0; k < 11; ++k) CHECK_THAT(tc.phi[k], WithinAbs(t[k] + 0.5 * t[k] * t[k], 1e-14));
}

TEST_CASE("noise reconstruction") {
  const double dt = 0.01;
  const std::vector<double> drift(100, 2.0);
  std::vector<double> p(101);
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = 1.0 + 2.0 * dt * static_cast<double>(k);
  const auto zero = reconstruct_noise(p, drift, [](double) { return 1.0; }, dt);
  REQUIRE(zero.dW.size() == 100);
  for (double w : zero.dW) CHECK_THAT(w, WithinAbs(0.0, 1e-14));
  CHECK_THAT(zero.elapsed, WithinAbs(1.0, 1e-14));

  std::vector<double> q(101, 1.0);
  for (std::size_t k = 1; k < q.size(); ++k) q[k] = q[k - 1] + (k % 2 ? 0.1 : -0.05);
  const std::vector<double> none(100, 0.0);
  const auto a = reconstruct_noise(q, none, [](double) { return 1.0; }, dt);
  const auto b = reconstruct_noise(q, none, [](double) { return 2.0; }, dt);
  for (std::size_t k = 0; k < a.dW.size(); ++k) CHECK_THAT(b.dW[k], WithinRel(a.dW[k] / std::sqrt(2.0), 1e-14));
  CHECK_THAT(b.quadratic_variation, WithinRel(a.quadratic_variation / 2.0, 1e-14));

  try {
    reconstruct_noise(q, none, [](double) { return 0.0; }, dt);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroDiffusion);
  }
}

TEST_CASE("orthant setup from the multicir envelope") {
  const auto s = cir_setup(1.0);
  CHECK_THAT(s.order_margin, WithinAbs(2.0, 1e-12));
  CHECK_THAT(s.a_plus(0.7), WithinRel(0.7, 1e-12));
  const double r = s.envelope->r_grid[20];
  CHECK_THAT(s.b1(r), WithinRel(3.0, 1e-12));
  CHECK_THAT(s.b2(r), WithinRel(1.0, 1e-12));
  CHECK(s.b1(0.7) > s.b2(0.7));

  const Model weak = make_multicir(2, constant_drift({0.5, 0.5}), identity_diffusion(2));
  const auto grid = geometric_grid(1e-3, 10.0, 8);
  CHECK_THROWS_AS(make_setup(envelope(weak, 0, grid), 1.0), Error);
}

TEST_CASE("dominating process without noise") {
  const double dt = 1e-3;
  const std::vector<double> dW(1000, 0.0);
  const auto s = cir_setup(1.0);
  // Direct form: dZ = a+(Z)/Z dt = dt.
  const auto direct = dominate(s, dW, dt, DominatingForm::Direct);
  REQUIRE(direct.size() == 1001);
  for (std::size_t k = 0; k < direct.size(); ++k)
    CHECK_THAT(direct[k], WithinAbs(1.0 + dt * static_cast<double>(k), 1e-12));
  // Squared form without the noise loses the Ito term: Z1' = 3 sqrt(Z1), Z = 1 + 1.5 t.
  const auto sq = dominate(s, dW, dt);
  CHECK_THAT(sq.back(), WithinAbs(2.5, 1e-3));

  const auto ball = make_ball_setup(2, 2.0, 0.5);
  for (double z : dominate(ball, dW, dt)) CHECK(z == 0.5);
  const auto ball3 = make_ball_setup(3, 5.0, 0.1);
  const auto up = dominate(ball3, dW, dt);
  CHECK(up.back() > 0.1);
  CHECK(up.back() < 3.0 / 8.0);

  ComparisonSetup bad = s;
  bad.z0 = 0.0;
  CHECK_THROWS_AS(dominate(bad, dW, dt), Error);
}

TEST_CASE("squared and direct forms agree pathwise as dt shrinks") {
  const auto s = cir_setup(1.0);
  double prev = 1e300;
  for (double dt : {1e-2, 1e-3, 1e-4}) {
    const BrownianPath path(1, 1.0, step_count(1.0, dt), 0, 17, 0);
    const auto dW = path.increments(0);
    const auto a = dominate(s, dW, dt);
    const auto b = dominate(s, dW, dt, DominatingForm::Direct);
    double diff = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) diff = std::max(diff, std::fabs(a[k] - b[k]));
    INFO("dt = " << dt);
    CHECK(diff < 5.0 * std::sqrt(dt));
    CHECK(diff < prev);
    prev = diff;
  }
}

TEST_CASE("Z1 and Z forms agree within 10 dt on the multicir reference run") {
  const Model m = make_multicir(2, constant_drift({3, 3}), identity_diffusion(2));
  const auto s = cir_setup(1.0);
  for (double dt : {1e-3, 1e-4}) {
    const auto r = couple(m, 0, std::vector<double>{1.0, 1.0}, 1.0, dt, 20261018);
    const auto a = dominate(s, r.dW, dt);
    const auto b = dominate(s, r.dW, dt, DominatingForm::Direct);
    double gap = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) gap = std::max(gap, std::fabs(a[k] - b[k]));
    INFO("dt = " << dt << ", max gap = " << gap);
    CHECK(gap < 10.0 * dt);
  }
}

TEST_CASE("coupling summary counts violations beyond tolerance") {
  CouplingReport r;
  r.tol = 0.1;
  r.lower = true;
  r.p = {1.0, 1.0, 1.0, 1.0};
  r.z = {0.5, 1.05, 1.2, 0.9};
  auto s = summarize_coupling(r);
  CHECK(s.violations == 1);
  CHECK(s.violation_fraction == 0.25);
  CHECK_THAT(s.margin_min, WithinAbs(-0.2, 1e-15));
  CHECK(s.verdict == CouplingVerdict::Violated);

  r.lower = false;
  s = summarize_coupling(r);
  CHECK(s.violations == 1);
  CHECK_THAT(s.margin_min, WithinAbs(-0.5, 1e-15));

  r.z = {1.5, 1.5, 1.5, 1.5};
  CHECK(summarize_coupling(r).verdict == CouplingVerdict::Ordered);
  r.p = {1.0};
  r.z = {1.0};
  CHECK(summarize_coupling(r).verdict == CouplingVerdict::Inconclusive);
}

TEST_CASE("multicir coupling keeps the dominating process below") {
  const Model m = make_multicir(2, constant_drift({3, 3}), identity_diffusion(2));
  const std::vector<double> x0{1.0, 1.0};
  const auto r = couple(m, 0, x0, 1.0, 1e-3, 42);
  CHECK(r.lower);
  CHECK(r.verdict == CouplingVerdict::Ordered);
  CHECK(r.violations == 0);
  CHECK(r.z.front() == 1.0);
  CHECK(r.p.front() == 1.0);
  CHECK_THAT(r.tol, WithinRel(5.0 * std::sqrt(1e-3), 1e-15));
  CHECK(std::fabs(r.quadratic_variation / r.elapsed - 1.0) < 0.1);
  // a_1 = x_1 = a+(x_1): the clock is not changed.
  CHECK_THAT(r.phi_end, WithinRel(1.0, 1e-12));
}

TEST_CASE("unit ball coupling keeps |Y|^2 below the dominating process") {
  const Model m = make_unit_ball(2, 4.0, 0.0);
  const std::vector<double> x0{0.1, 0.0};
  const auto r = couple(m, 0, x0, 1.0, 1e-3, 42);
  CHECK_FALSE(r.lower);
  CHECK_THAT(r.p.front(), WithinAbs(0.01, 1e-15));
  CHECK(r.violation_fraction < 0.005);
  CHECK(std::fabs(r.quadratic_variation / r.elapsed - 1.0) < 0.1);
  for (double z : r.z) {
    REQUIRE(z > 0.0);
    REQUIRE(z < 1.0);
  }
}

TEST_CASE("coupling is reproducible") {
  const Model m = make_unit_ball(2, 4.0, 0.0);
  const std::vector<double> x0{0.1, 0.0};
  const auto a = couple(m, 0, x0, 0.5, 1e-3, 7);
  const auto b = couple(m, 0, x0, 0.5, 1e-3, 7);
  CHECK(a.z == b.z);
  CHECK(a.dW == b.dW);
}

TEST_CASE("comparison kernel") {
  const ScalarSde fast{[](double) { return 2.0; }, [](double) { return 1.0; }};
  const ScalarSde slow{[](double) { return 1.0; }, [](double) { return 1.0; }};
  const auto ok = comparison_kernel(fast, slow, 0.0, 0.0, 1.0, 1e-3, 3);
  CHECK(ok.points == 1001);
  CHECK(ok.violations == 0);
  CHECK_THAT(ok.margin_min, WithinAbs(0.0, 1e-12));

  // Reversed drifts: U - V = -t, beyond tolerance once t > 5 sqrt(dt).
  const auto bad = comparison_kernel(slow, fast, 0.0, 0.0, 1.0, 1e-3, 3);
  CHECK_THAT(bad.margin_min, WithinAbs(-1.0, 1e-9));
  const double tol = 5.0 * std::sqrt(1e-3);
  const auto expected = static_cast<std::size_t>(1000 - std::floor(tol / 1e-3));
  CHECK(bad.violations >= expected - 1);
  CHECK(bad.violations <= expected + 1);

  // Square-root diffusion, b1 > b2, started ordered.
  const ScalarSde cir_up{[](double u) { return 3.0 + 0.0 * u; }, [](double u) { return std::sqrt(std::max(u, 0.0)); }};
  const ScalarSde cir_lo{[](double) { return 1.0; }, [](double v) { return std::sqrt(std::max(v, 0.0)); }};
  for (std::uint64_t p = 0; p < 20; ++p) CHECK(comparison_kernel(cir_up, cir_lo, 1.0, 1.0, 1.0, 1e-3, 5, p).violations == 0);
}
