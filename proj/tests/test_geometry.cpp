#include "doctest.h"
#include "neckwave/geometry.hpp"

#include <cmath>

using namespace neckwave;

namespace {

SurfaceModel default_model() { return build_model(BumpSpec::gaussian(), 4.0); }

// independent quadrature oracle for the end offset: c = 1 - J/I with
// I = int_0^r2 g, J = int_0^r2 s g(s) ds, by composite Simpson
double end_offset_oracle(double r2) {
  auto g = [](double s) { return std::exp(-kPi * s * s / 4.0); };
  const int n = 20000;
  double I = 0, J = 0;
  const double h = r2 / n;
  for (int i = 0; i < n; ++i) {
    const double a = i * h, m = a + h / 2, b = a + h;
    I += h / 6 * (g(a) + 4 * g(m) + g(b));
    J += h / 6 * (a * g(a) + 4 * m * g(m) + b * g(b));
  }
  return 1.0 - J / I;
}

}  // namespace

TEST_CASE("profile normalisation and golden end offset") {
  const SurfaceModel m = default_model();
  CHECK(m.f(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.fp(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m.fpp(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(m.end_slope() == doctest::Approx(1.0).epsilon(1e-12));

  // golden value frozen from the quadrature oracle
  const double c_golden = 0.36338210704811613;
  CHECK(end_offset_oracle(4.0) == doctest::Approx(c_golden).epsilon(1e-10));
  CHECK(m.end_offset() == doctest::Approx(c_golden).epsilon(1e-8));
  CHECK(m.end_offset() > 0);
}

TEST_CASE("curvature values and finite-difference oracle") {
  const SurfaceModel m = default_model();
  CHECK(m.curvature(0) == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(m.curvature(10) == 0.0);
  const double K1 = m.curvature(1.0);
  CHECK(K1 > -1.0);
  CHECK(K1 < 0.0);

  // Richardson-extrapolated central second difference of f
  auto fd = [&](double r, double h) {
    return (m.f(r + h) - 2 * m.f(r) + m.f(r - h)) / (h * h);
  };
  for (double r : {0.3, 1.0, 2.0, 3.5}) {
    const double d1 = fd(r, 1e-3), d2 = fd(r, 5e-4);
    const double fpp_fd = (4 * d2 - d1) / 3;
    CHECK(std::abs(m.curvature(r) + fpp_fd / m.f(r)) < 1e-8);
  }

  // coarse grid sweep at the looser tolerance
  for (double r = -6; r <= 6; r += 1e-2) {
    const double fpp_fd = fd(r, 1e-3);
    CHECK(std::abs(m.curvature(r) + fpp_fd / m.f(r)) < 1e-6);
    CHECK(m.curvature(r) <= 1e-12);
  }
}

TEST_CASE("boundary defining function") {
  const SurfaceModel m = default_model();
  CHECK(m.boundary_b(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.boundary_b(4) == doctest::Approx(1.0 / (4.0 + 0.36338210704811613)).epsilon(1e-8));
  double prev = m.boundary_b(0);
  for (double r = 0.25; r < 30; r += 0.25) {
    CHECK(m.boundary_b(r) < prev);
    prev = m.boundary_b(r);
  }
  CHECK(prev < 1e-1);
}

TEST_CASE("profile lower bounds") {
  const SurfaceModel m = default_model();
  for (double r = -12; r <= 12; r += 7e-3) {
    CHECK(m.f(r) >= 1.0 - 1e-12);
    if (std::abs(r) >= m.r2())
      CHECK(m.f(r) >= std::abs(r) + m.end_offset() - 1e-12);
  }
  CHECK(m.injectivity_radius() == doctest::Approx(kPi));
}

TEST_CASE("convexity hypothesis near infinity") {
  const SurfaceModel m = default_model();
  // {b < eps0} must sit in the flat ends
  const double r_eps0 = 1.0 / m.eps0() - m.end_offset();
  CHECK(r_eps0 > m.r2());

  // analytic sign at a purely angular point in the flat end
  const double bdd = b_ddot(m, 5.0, 0.0, m.f(5.0));
  CHECK(bdd < 0);
  CHECK(bdd == doctest::Approx(-1.0 / std::pow(m.f(5.0), 3)).epsilon(1e-6));
  // radial direction has bdot != 0 there
  CHECK(std::abs(b_dot(m, 5.0, 1.0, 0.0)) > 1e-3);

  const ConvexityReport rep = check_convexity_hypothesis(m, 10000, 7);
  CHECK(rep.pass);
  CHECK(rep.tested > 1000);
  CHECK(rep.worst_margin < 0);
}

TEST_CASE("build_model rejects bad input") {
  CHECK_THROWS(build_model(BumpSpec::gaussian(), 2.0));  // visible truncation jump
  BumpSpec odd = BumpSpec::gaussian();
  auto base = odd.shape;
  odd.shape = [base](double r) { return base(r) * (1.0 + 0.5 * r / 4.0); };
  CHECK_THROWS(build_model(odd, 4.0));
  BumpSpec neg = BumpSpec::gaussian();
  neg.shape = [base](double r) { return base(r) - 0.1; };
  CHECK_THROWS(build_model(neg, 4.0));
}

TEST_CASE("amplitude scaling") {
  const SurfaceModel m2 = build_model(BumpSpec::gaussian(2.0), 4.0);
  CHECK(m2.fpp(0) == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(m2.curvature(0) == doctest::Approx(-2.0).epsilon(1e-5));
  CHECK(m2.b0() == doctest::Approx(2.0).epsilon(1e-5));
}
