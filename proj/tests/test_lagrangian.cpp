#include "doctest.h"
#include "neckwave/lagrangian.hpp"

#include <cmath>
#include <set>

using namespace neckwave;

namespace {

const SurfaceModel& model() {
  static SurfaceModel m = build_model(BumpSpec::gaussian(), 4.0);
  return m;
}

// the full propagation is the expensive part; share it across cases
const Inventory& inventory() {
  static Inventory inv = [] {
    Inventory i = propagate_all(model(), IncomingWaveSpec{}, ChartWindow{}, 40, 1e-6, 400000);
    attach_sheets(model(), IncomingWaveSpec{}, i, 0.02);
    return i;
  }();
  return inv;
}

const BranchClass* find_class(const Inventory& inv, int m) {
  for (const BranchClass& c : inv.classes)
    if (c.m == m) return &c;
  return nullptr;
}

}  // namespace

TEST_CASE("phase-space cover") {
  const PhaseCover cov = build_phase_cover(model());
  const double R = model().interaction_radius();
  CHECK(cov.worst_contraction < std::exp(-std::sqrt(model().b0())) * model().injectivity_radius());

  // coverage sweep: every on-shell interaction point lands in a box that
  // actually contains it
  SplitMix64 rng(7);
  for (int k = 0; k < 10000; ++k) {
    const double r = rng.uniform(-R, R);
    const double th = rng.uniform(0, kTwoPi);
    const double psi = rng.uniform(0, kTwoPi);
    const PhasePoint rho = on_shell_point(model(), r, th, psi);
    const int id = locate_box(cov, model(), rho);
    REQUIRE(id >= 0);
    REQUIRE(id < static_cast<int>(cov.boxes.size()));
    const CoverBox& box = cov.boxes[id];
    CHECK(box.kind != BoxKind::Infinity);
    CHECK(rho.r >= box.r_lo - 1e-12);
    CHECK(rho.r <= box.r_hi + 1e-12);
  }

  // neck orbit points sit in the near-trapped ring, far points in V0
  for (double th : {0.3, 2.0, 5.1}) {
    const int id = locate_box(cov, model(), {0, th, 0, 1});
    CHECK(cov.boxes[id].kind == BoxKind::NearTrapped);
  }
  CHECK(locate_box(cov, model(), {R + 2, 1.0, 1, 0}) == 0);
  CHECK(locate_box(cov, model(), {-R - 5, 0.0, -1, 0}) == 0);

  CHECK_THROWS(build_phase_cover(model(), 0.0));
  CHECK_THROWS(build_phase_cover(model(), 0.3));
}

TEST_CASE("itinerary words and tau") {
  CHECK(Word{{0, 5, 7}}.tau() == 1);
  CHECK(Word{{0, 5, 0, 7, 8}}.tau() == 3);
  CHECK(Word{{4, 5, 7}}.tau() == 0);
  CHECK(Word{}.n() == 0);
}

TEST_CASE("incoming plane wave in the flat end") {
  const IncomingWaveSpec spec;
  // while the ray is in the flat part, phase and momentum match the plane wave
  // phi = <x, xi_dir> = (|r| + c) cos(theta) for direction 0 in the minus end
  SplitMix64 rng(3);
  for (int k = 0; k < 200; ++k) {
    const double s = rng.uniform(-3, 3);
    const double t = rng.uniform(0, 4.0);
    const RayState st = trace_ray(model(), spec, s, t);
    const double rho = std::abs(st.rho.r) + model().end_offset();
    REQUIRE(std::abs(st.rho.r) > model().r2());  // still flat
    CHECK(st.phi == doctest::Approx(rho * std::cos(st.rho.theta)).epsilon(1e-9));
    CHECK(st.rho.ptheta == doctest::Approx(rho * std::sin(-st.rho.theta)).epsilon(1e-9));
    CHECK(st.Y == 1.0);
    CHECK(shell_error(model(), st.rho) < 1e-12);
  }

  // plane-wave phase at end-chart coordinate u = -6 along the ray
  const RayState st = trace_ray(model(), spec, 2.0, 4.0);
  CHECK(st.phi == doctest::Approx(-6.0));

  // parallel rays keep their distance under backward flow (flat chord)
  RayState a = trace_ray(model(), spec, 1.0, 2.0);
  RayState b = trace_ray(model(), spec, 1.5, 2.0);
  auto chord = [](const RayState& x, const RayState& y, double c) {
    const double r1 = std::abs(x.rho.r) + c, r2 = std::abs(y.rho.r) + c;
    return std::sqrt(r1 * r1 + r2 * r2 - 2 * r1 * r2 * std::cos(y.rho.theta - x.rho.theta));
  };
  const double d0 = chord(a, b, model().end_offset());
  a = advance_ray(model(), a, -5.0);
  b = advance_ray(model(), b, -5.0);
  CHECK(chord(a, b, model().end_offset()) / d0 == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS(launch_ray(model(), {-1, 0.0, 2.0}, 0.0));
}

TEST_CASE("incoming hypothesis checks pass") {
  const IncomingReport rep = check_incoming(model(), IncomingWaveSpec{}, 1000, 1);
  CHECK(rep.pass);
  CHECK(rep.worst_momentum_err < 1e-8);
  CHECK(rep.worst_expansion < 1e-6);
}

TEST_CASE("critical ray hugs the neck and grows at the orbit rate") {
  const IncomingWaveSpec spec;
  // impact parameter exactly critical: p_theta = 1, asymptotic to the neck
  RayState st = trace_ray(model(), spec, -1.0, 20.0);
  CHECK(std::abs(st.rho.r) < 0.01);
  CHECK(st.rho.ptheta == -(-1.0));
  const double y0 = st.Y;
  st = advance_ray(model(), st, kTwoPi);
  CHECK(st.Y / y0 == doctest::Approx(std::exp(kTwoPi)).epsilon(0.01));
}

TEST_CASE("flat-end step produces a single child") {
  IncomingWaveSpec deep;
  deep.front_u = 20.0;
  const PhaseCover cov = build_phase_cover(model());
  const BranchFront f0 = incoming_front(model(), deep, -1.0, 1.0, 50);
  const auto kids = propagate_step(model(), deep, f0, cov, 1e-6);
  REQUIRE(kids.size() == 1);
  CHECK(kids[0].word.letters == std::vector<int>{0});
  for (const RayState& st : kids[0].samples) {
    CHECK(st.phi == doctest::Approx(-19.0).epsilon(1e-9));
    CHECK(st.Y == 1.0);
    CHECK(st.t == doctest::Approx(1.0));
  }
}

TEST_CASE("neck-tube step splits into near-trapped boxes") {
  const IncomingWaveSpec spec;
  const PhaseCover cov = build_phase_cover(model());
  // near-critical sliver, advanced until it is winding around the neck
  BranchFront f;
  for (int i = 0; i <= 100; ++i)
    f.samples.push_back(trace_ray(model(), spec, -1.01 + 0.02 * i / 100, 14.0));
  const auto kids = propagate_step(model(), spec, f, cov, 1e-6);
  REQUIRE(kids.size() >= 2);
  size_t total = 0;
  bool saw_tube = false;
  for (const auto& kid : kids) {
    REQUIRE(kid.word.n() == 1);
    const int id = kid.word.letters[0];
    if (cov.boxes[id].kind == BoxKind::NearTrapped) saw_tube = true;
    // all samples (the leading overlap sample aside) belong to the letter box
    for (size_t i = 1; i < kid.samples.size(); ++i)
      CHECK(locate_box(cov, model(), kid.samples[i].rho) == id);
    total += kid.samples.size();
  }
  CHECK(saw_tube);
  CHECK(total >= f.samples.size());  // refinement only adds samples
}

TEST_CASE("branch inventory structure") {
  const Inventory& inv = inventory();
  REQUIRE(inv.classes.size() == 9);  // m in -4..4 above the 1e-6 floor

  // winding symmetry of the head-on wave
  for (int m = 0; m <= 4; ++m) {
    const BranchClass* plus = find_class(inv, m);
    const BranchClass* minus = find_class(inv, -m);
    REQUIRE(plus);
    REQUIRE(minus);
    CHECK(plus->n_first == minus->n_first);
    CHECK(plus->sup_amp == doctest::Approx(minus->sup_amp).epsilon(1e-3));
  }

  // minimal word lengths: direct arrival, then one neck period per winding
  CHECK(find_class(inv, 0)->n_first == 9);
  for (int m = 0; m < 4; ++m) {
    const int dn = find_class(inv, m + 1)->n_first - find_class(inv, m)->n_first;
    CHECK(dn >= 5);
    CHECK(dn <= 8);
  }

  // one extra winding costs about e^{-pi} in amplitude
  for (int m = 0; m < 4; ++m) {
    const double ratio = find_class(inv, m + 1)->sup_amp / find_class(inv, m)->sup_amp;
    CHECK(ratio >= 0.02);
    CHECK(ratio <= 0.10);
  }

  // symbol decay: log sup-amp vs minimal length fits slope about -1/2
  std::vector<double> xs, ys;
  for (const BranchClass& c : inv.classes) {
    xs.push_back(c.n_first);
    ys.push_back(std::log(c.sup_amp));
  }
  const LinearFit fit = fit_line(xs, ys);
  CHECK(fit.slope == doctest::Approx(-0.5).epsilon(0.3));

  // class count grows at most linearly in N
  CHECK(static_cast<int>(inv.classes.size()) <= inv.steps);
  CHECK(inv.n_K <= 3);
  CHECK(inv.peak_samples < 400000);
}

TEST_CASE("branch invariants: caustic-free, cone, transversality, merges") {
  const Inventory& inv = inventory();
  CHECK(inv.c_det >= 0.99);                  // forward Jacobian never collapses
  CHECK(inv.n_uns <= 10);                    // cone condition holds early
  CHECK(inv.cone_worst <= 0.05);             // within gamma_uns of the unstable slope
  CHECK(inv.transversality_min_deg >= 5.0);  // stable direction stays transverse
  CHECK(inv.merge_dxi_worst <= 1e-8);        // same-class fronts agree on d(phi)
  for (const BranchClass& c : inv.classes) CHECK(c.min_Y >= 0.99);
}

TEST_CASE("short wave misses the winding classes") {
  IncomingWaveSpec near;
  near.front_u = 5.0;
  const Inventory inv = propagate_all(model(), near, ChartWindow{}, 5, 1e-6, 400000);
  REQUIRE(inv.classes.size() == 1);
  CHECK(inv.classes[0].m == 0);
}

TEST_CASE("lifted graph reproduces the plane wave on a flat window") {
  const LiftedGraph g = solve_lifted_graph(model(), IncomingWaveSpec{}, -8.0, -7.5,
                                           kPi - 0.3, kPi + 0.3, 0.05);
  const double c = model().end_offset();
  for (int i = 0; i < g.nr; ++i)
    for (int j = 0; j < g.nth; ++j) {
      const double rho = std::abs(g.r0 + i * g.dr) + c;
      const double th = g.th0 + j * g.dth;
      const GraphNode& n = g.at(i, j);
      CHECK(n.phi == doctest::Approx(rho * std::cos(th)).epsilon(1e-9));
      CHECK(n.amp == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(n.xi_th == doctest::Approx(rho * std::sin(-th)).epsilon(1e-9));
    }
  CHECK_THROWS(solve_lifted_graph(model(), IncomingWaveSpec{}, -1, -2, 0, 1, 0.05));
}

TEST_CASE("window sheets verify: eikonal, curl-free, C^l bounds") {
  const Inventory& inv = inventory();
  int sheets = 0;
  for (const BranchClass& c : inv.classes) {
    if (std::abs(c.m) > 3) {
      CHECK(c.sheet.nr == 0);  // below double-precision sheet resolution
      continue;
    }
    REQUIRE(c.sheet.nr > 0);
    ++sheets;
    const SheetChecks sc = verify_sheet(model(), c.sheet);
    CHECK(sc.max_shell_err <= 1e-8);
    CHECK(sc.max_curl <= 1e-8);
    CHECK(sc.max_phase_err <= 1e-3);  // second-order FD at 0.02 spacing
    CHECK(sc.min_Y >= 1.0);
    // chart-level constants, independent of the class
    CHECK(sc.c1_norm <= 5.0);
    CHECK(sc.c2_norm <= 2.0);
  }
  CHECK(sheets == 7);
}

TEST_CASE("gradient separation between classes") {
  const SeparationReport rep = gradient_separation(inventory());
  REQUIRE(rep.classes.size() == 7);
  CHECK(rep.all_positive);
  CHECK(rep.C1 > 0);
  CHECK(rep.exponent <= 1.0);

  auto idx = [&](int m) {
    for (size_t i = 0; i < rep.classes.size(); ++i)
      if (rep.classes[i] == m) return static_cast<int>(i);
    REQUIRE(false);
    return -1;
  };
  // identical class: zero; direct vs first winding: order-one angle
  CHECK(rep.minima(idx(0), idx(0)) == 0.0);
  CHECK(rep.minima(idx(0), idx(1)) >= 0.1);
  CHECK(rep.minima(idx(0), idx(-1)) >= 0.1);
  // one more winding contracts the adjacent-pair separation by about e^{-2pi}
  const double r21 = rep.minima(idx(2), idx(3)) / rep.minima(idx(1), idx(2));
  CHECK(r21 == doctest::Approx(std::exp(-kTwoPi)).epsilon(0.25));
}

TEST_CASE("branch completeness at a point") {
  const IncomingWaveSpec spec;
  // far flat end: at least the direct branch
  CHECK(branch_completeness(model(), spec, {-8.0, kPi}, 1e-2) >= 1);
  // neck circle: all windings |m| <= 3 present at the matching floor
  const int n3 = branch_completeness(model(), spec, {0.0, kPi}, 1e-4);
  CHECK(n3 >= 7);
  // count is nondecreasing as the floor drops
  const int n4 = branch_completeness(model(), spec, {0.0, kPi}, 1e-6);
  CHECK(n4 >= n3);
  CHECK(n4 >= 9);
}

TEST_CASE("input validation and budget") {
  const IncomingWaveSpec spec;
  CHECK_THROWS(propagate_all(model(), spec, ChartWindow{}, 0, 1e-6, 1000));
  CHECK_THROWS(propagate_all(model(), spec, ChartWindow{}, 61, 1e-6, 1000));
  CHECK_THROWS(propagate_all(model(), spec, ChartWindow{}, 10, 0.0, 1000));
  CHECK_THROWS_WITH_AS(propagate_all(model(), spec, ChartWindow{}, 10, 1e-6, 10),
                       doctest::Contains("explosion"), std::runtime_error);
  CHECK_THROWS(incoming_front(model(), spec, 1.0, -1.0, 10));
  CHECK_THROWS(incoming_front(model(), spec, -1.0, 1.0, 1));
}
