#include "doctest.h"
#include "neckwave/dynamics.hpp"

#include <cmath>

using namespace neckwave;

namespace {
const SurfaceModel& model() {
  static SurfaceModel m = build_model(BumpSpec::gaussian(), 4.0);
  return m;
}

// closed-form transverse period map on the neck orbit (K = -1 there):
// Jacobi equation J'' = J
Eigen::Matrix2d jacobi_oracle(double t) {
  Eigen::Matrix2d B;
  B << std::cosh(t), std::sinh(t), std::sinh(t), std::cosh(t);
  return B;
}
}  // namespace

TEST_CASE("neck orbit is a fixed circle") {
  const PhasePoint out = flow(model(), {0, 0, 0, 1}, kPi);
  CHECK(std::abs(out.r) < 1e-9);
  CHECK(out.theta == doctest::Approx(kPi).epsilon(1e-9));
  CHECK(std::abs(out.pr) < 1e-9);
  CHECK(out.ptheta == doctest::Approx(1.0));
}

TEST_CASE("flat radial ray is exact") {
  const PhasePoint out = flow(model(), {5, 0, 1, 0}, 2.0);
  CHECK(out.r == doctest::Approx(7.0).epsilon(1e-10));
  CHECK(std::abs(out.theta) < 1e-12);
  CHECK(out.pr == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("reversibility oracle") {
  const PhasePoint rho{1, 0, -0.6, 0.8 * model().f(1.0)};
  const PhasePoint fwd = flow(model(), rho, 10.0);
  const PhasePoint back = flow(model(), fwd, -10.0);
  CHECK(std::abs(back.r - rho.r) < 1e-8);
  CHECK(std::abs(back.theta - rho.theta) < 1e-8);
  CHECK(std::abs(back.pr - rho.pr) < 1e-8);
  CHECK(std::abs(back.ptheta - rho.ptheta) < 1e-12);
}

TEST_CASE("conservation over long trajectories") {
  const PhasePoint rho = on_shell_point(model(), -2.0, 0.3, 0.9);
  double worst_H = 0, worst_L = 0;
  flow_sampled(model(), rho, 1000.0, [&](double, const PhasePoint& p) {
    worst_H = std::max(worst_H, shell_error(model(), p));
    worst_L = std::max(worst_L, std::abs(p.ptheta - rho.ptheta));
  });
  CHECK(worst_H < 1e-9);
  CHECK(worst_L < 1e-9);
}

TEST_CASE("flow composition") {
  SplitMix64 rng(11);
  for (int i = 0; i < 5; ++i) {
    const PhasePoint rho =
        on_shell_point(model(), rng.uniform(-3, 3), rng.uniform(0, kTwoPi), rng.uniform(0, kTwoPi));
    const double s = rng.uniform(-10, 10), t = rng.uniform(-10, 10);
    const PhasePoint a = flow(model(), flow(model(), rho, s), t);
    const PhasePoint b = flow(model(), rho, s + t);
    CHECK(std::abs(a.r - b.r) < 1e-8);
    CHECK(std::abs(a.theta - b.theta) < 1e-8);
    CHECK(std::abs(a.pr - b.pr) < 1e-8);
  }
}

TEST_CASE("tangent flow: identity, flat growth, symplecticity") {
  const TangentFrame id = tangent_flow(model(), on_shell_point(model(), 1, 0, 1.0), 0.0);
  CHECK((id.M - Eigen::Matrix4d::Identity()).norm() < 1e-12);

  const TangentFrame flat = tangent_flow(model(), {5, 0, 1, 0}, 3.0);
  CHECK(flat.M.cwiseAbs().maxCoeff() < 1.0 + 3.0 + 1e-6);

  SplitMix64 rng(3);
  for (int i = 0; i < 8; ++i) {
    const PhasePoint rho =
        on_shell_point(model(), rng.uniform(-4, 4), rng.uniform(0, kTwoPi), rng.uniform(0, kTwoPi));
    const TangentFrame fr = tangent_flow(model(), rho, rng.uniform(0, 5));
    CHECK(std::abs(fr.M.determinant() - 1.0) < 1e-8);
  }
}

TEST_CASE("neck period map matches the Jacobi oracle") {
  const TangentFrame fr = tangent_flow(model(), {0, 0, 0, 1}, kTwoPi);
  Eigen::Matrix2d B;
  B << fr.M(0, 0), fr.M(0, 2), fr.M(2, 0), fr.M(2, 2);
  const Eigen::Matrix2d O = jacobi_oracle(kTwoPi);
  CHECK((B - O).norm() / O.norm() < 1e-3);
  const Eigen::Vector2cd ev = B.eigenvalues();
  const double big = std::max(std::abs(ev(0)), std::abs(ev(1)));
  const double small = std::min(std::abs(ev(0)), std::abs(ev(1)));
  CHECK(big == doctest::Approx(std::exp(kTwoPi)).epsilon(1e-3));
  CHECK(small == doctest::Approx(std::exp(-kTwoPi)).epsilon(1e-3));
}

TEST_CASE("escape classification") {
  CHECK(classify(model(), {6, 0, 1, 0}).tag == EscapeTag::DEPlus);
  CHECK(classify(model(), {6, 0, -1, 0}).tag == EscapeTag::DEMinus);
  const EscapeClass neck = classify(model(), {0, 0, 0, 1}, 1000.0);
  CHECK(neck.tag == EscapeTag::Interaction);
  CHECK(!neck.escape_time.has_value());
  // a transversal interaction point escapes
  const EscapeClass gen = classify(model(), on_shell_point(model(), 1, 0, 0.2), 200.0);
  CHECK(gen.tag == EscapeTag::Interaction);
  CHECK(gen.escape_time.has_value());
}

TEST_CASE("unstable and stable directions") {
  const PhasePoint neck{0, 0.4, 0, 1};
  const Eigen::Vector4d vu = unstable_direction(model(), neck);
  const TangentFrame fr = tangent_flow(model(), neck, kTwoPi);
  const double growth = (fr.M * vu).norm() / vu.norm();
  CHECK(growth == doctest::Approx(std::exp(kTwoPi)).epsilon(1e-3));

  const Eigen::Vector4d vs = stable_direction(model(), neck);
  const double shrink = (fr.M * vs).norm() / vs.norm();
  CHECK(shrink == doctest::Approx(std::exp(-kTwoPi)).epsilon(1e-3));

  // transversality: closed-form directions are (1, +-1) in (r, p_r)
  const double cosang = std::abs(vu.dot(vs)) / (vu.norm() * vs.norm());
  CHECK(std::acos(cosang) * 180.0 / kPi > 30.0);
}

TEST_CASE("cover distance") {
  // along the neck circle
  CHECK(cover_distance(model(), {0, 0}, {0, 1.3}) == doctest::Approx(1.3).epsilon(1e-8));
  // flat-end radial separation
  CHECK(cover_distance(model(), {5, 0.2}, {7, 0.2}) == doctest::Approx(2.0).epsilon(1e-8));
  // flat-end chord in end-chart Euclidean coordinates
  const double c = model().end_offset();
  const double rho1 = 6 + c, rho2 = 8 + c, dth = 0.3;
  const double chord =
      std::sqrt(rho1 * rho1 + rho2 * rho2 - 2 * rho1 * rho2 * std::cos(dth));
  CHECK(cover_distance(model(), {6, 0}, {8, dth}) == doctest::Approx(chord).epsilon(1e-7));
}

TEST_CASE("pair convexity") {
  // same radial line, offset start: constant separation
  const PairConvexityReport flat =
      geodesic_pair_convexity(model(), {5, 0, 1, 0}, {6, 0, 1, 0}, 5.0, 20);
  CHECK(flat.applicable);
  CHECK(flat.pass);
  CHECK(std::abs(flat.min_second_diff) < 1e-8);

  // neck-grazing nearby pair
  const PhasePoint a = on_shell_point(model(), -3, 0, 0.16);
  PhasePoint b = a;
  b.theta += 5e-4;
  const PairConvexityReport graze = geodesic_pair_convexity(model(), a, b, 20.0, 40);
  CHECK(graze.applicable);
  CHECK(graze.pass);
}

TEST_CASE("expansion constants") {
  const ExpansionEstimate est = expansion_constants(model(), 300, 6.0, 5);
  CHECK(est.lambda == doctest::Approx(1.0).epsilon(0.1));
  CHECK(est.mu <= std::sqrt(model().b0()) + 0.1);

  // flat-end parallel pair: no exponential growth
  std::vector<double> ts, logd;
  PhasePoint p1{5, 0, 1, 0}, p2{5.0001, 0, 1, 0};
  for (int k = 0; k <= 10; ++k) {
    if (k > 0) {
      p1 = flow(model(), p1, 0.5);
      p2 = flow(model(), p2, 0.5);
    }
    ts.push_back(0.5 * k);
    logd.push_back(std::log(adapted_distance(model(), p1, p2, true)));
  }
  CHECK(std::abs(fit_line(ts, logd).slope) < 0.02);
}

TEST_CASE("trapped set sweep") {
  SplitMix64 rng(17);
  int stuck = 0;
  for (int i = 0; i < 400; ++i) {
    const PhasePoint rho = on_shell_point(model(), rng.uniform(-6, 6), rng.uniform(0, kTwoPi),
                                          rng.uniform(0, kTwoPi));
    const EscapeClass cls = classify(model(), rho, 60.0);
    if (cls.tag == EscapeTag::Interaction && !cls.escape_time.has_value()) {
      ++stuck;
      // anything that survives this long must hug the neck orbit
      CHECK(std::abs(rho.ptheta) / model().f(rho.r) > 0.9);
    }
  }
  CHECK(stuck < 5);
}
