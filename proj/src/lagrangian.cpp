#include "neckwave/lagrangian.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "neckwave/integrator.hpp"

namespace neckwave {

// ---------------------------------------------------------------------------
// phase-space cover
// ---------------------------------------------------------------------------

namespace {

double chart_base_distance(const SurfaceModel& m, const PhasePoint& a, const PhasePoint& b) {
  double dth = reduce_angle(b.theta) - reduce_angle(a.theta);
  if (dth > kPi) dth -= kTwoPi;
  if (dth < -kPi) dth += kTwoPi;
  const double fmid = m.f(0.5 * (a.r + b.r));
  const double dr = b.r - a.r;
  return std::sqrt(dr * dr + fmid * fmid * dth * dth);
}

double momentum_angle(const SurfaceModel& m, const PhasePoint& rho) {
  return reduce_angle(std::atan2(rho.ptheta / m.f(rho.r), rho.pr));
}

}  // namespace

PhaseCover build_phase_cover(const SurfaceModel& model, double gamma_uns) {
  if (gamma_uns <= 0 || gamma_uns > 0.2)
    throw std::invalid_argument("build_phase_cover: gamma_uns out of (0, 0.2]");
  const double R = model.interaction_radius();
  if (!std::isfinite(R)) throw std::invalid_argument("build_phase_cover: no interaction region");
  const double r_i = model.injectivity_radius();
  const double mu = std::sqrt(model.b0());
  const double threshold = std::exp(-mu) * r_i;

  double side = 0.3 / std::sqrt(3.0);
  SplitMix64 rng(12345);
  for (int attempt = 0; attempt < 5; ++attempt) {
    PhaseCover cov;
    cov.gamma_uns = gamma_uns;
    cov.eps_max = side * std::sqrt(3.0);
    cov.retries = attempt;
    cov.n_psi = 16;

    // V0
    cov.boxes.push_back({0, BoxKind::Infinity, R, 1e300, 0, kTwoPi, 0, kTwoPi});

    // B1 ring, both orientations
    cov.n_b1_th = static_cast<int>(std::ceil(kTwoPi / side));
    const double dpsi_tube = std::asin(std::min(1.0, gamma_uns)) * 1.05;
    for (int sgn = 0; sgn < 2; ++sgn)
      for (int j = 0; j < cov.n_b1_th; ++j) {
        const double psi_c = sgn == 0 ? kPi / 2 : 3 * kPi / 2;
        cov.boxes.push_back({static_cast<int>(cov.boxes.size()), BoxKind::NearTrapped,
                             -gamma_uns, gamma_uns, kTwoPi * j / cov.n_b1_th,
                             kTwoPi * (j + 1) / cov.n_b1_th, psi_c - dpsi_tube,
                             psi_c + dpsi_tube});
      }

    // B2 shells: fine boxes where curvature acts, coarser in the flat part
    const double r_fine = model.r2() / 2;
    const double side_out = 0.4;
    std::vector<double> edges{-R};
    while (edges.back() < R - 1e-9) {
      const double w = std::abs(edges.back()) < r_fine ? side : side_out;
      edges.push_back(std::min(R, edges.back() + w));
    }
    cov.shell_r = edges;
    const int nshell = static_cast<int>(edges.size()) - 1;
    int offset = static_cast<int>(cov.boxes.size());
    for (int i = 0; i < nshell; ++i) {
      const double w = edges[i + 1] - edges[i];
      const double fmax = std::max(model.f(edges[i]), model.f(edges[i + 1]));
      const int nth = static_cast<int>(std::ceil(kTwoPi * fmax / std::max(w, side)));
      cov.shell_nth.push_back(nth);
      cov.shell_offset.push_back(offset);
      for (int jt = 0; jt < nth; ++jt)
        for (int jp = 0; jp < cov.n_psi; ++jp)
          cov.boxes.push_back({offset + jt * cov.n_psi + jp, BoxKind::Interaction, edges[i],
                               edges[i + 1], kTwoPi * jt / nth, kTwoPi * (jt + 1) / nth,
                               kTwoPi * jp / cov.n_psi, kTwoPi * (jp + 1) / cov.n_psi});
      offset += nth * cov.n_psi;
    }

    // contraction check: all B1 boxes and a spread of B2 boxes
    double worst = 0;
    auto check_box = [&](const CoverBox& box, int pairs) {
      for (int k = 0; k < pairs; ++k) {
        auto draw = [&]() {
          const double r = rng.uniform(std::max(box.r_lo, -R), std::min(box.r_hi, R));
          const double th = rng.uniform(box.th_lo, box.th_hi);
          const double psi = rng.uniform(box.psi_lo, box.psi_hi);
          return on_shell_point(model, r, th, psi);
        };
        const PhasePoint a = draw(), b = draw();
        const double d1 =
            chart_base_distance(model, flow(model, a, 1.0), flow(model, b, 1.0));
        worst = std::max(worst, d1);
      }
    };
    for (const CoverBox& box : cov.boxes)
      if (box.kind == BoxKind::NearTrapped) check_box(box, 50);
    const size_t n_b2 = cov.boxes.size() - 1 - 2 * cov.n_b1_th;
    const size_t stride = std::max<size_t>(1, n_b2 / 200);
    for (size_t i = 1 + 2 * cov.n_b1_th; i < cov.boxes.size(); i += stride)
      check_box(cov.boxes[i], 25);
    cov.worst_contraction = worst;
    if (worst < threshold) return cov;
    side *= 0.7;
  }
  throw std::runtime_error("build_phase_cover: contraction condition failed after 5 retries");
}

int locate_box(const PhaseCover& cov, const SurfaceModel& model, const PhasePoint& rho) {
  const double R = model.interaction_radius();
  if (std::abs(rho.r) > R) return 0;
  if (std::abs(rho.r) <= cov.gamma_uns && std::abs(rho.pr) <= cov.gamma_uns) {
    const int j = std::min(cov.n_b1_th - 1,
                           static_cast<int>(reduce_angle(rho.theta) / kTwoPi * cov.n_b1_th));
    return 1 + (rho.ptheta >= 0 ? 0 : cov.n_b1_th) + j;
  }
  const int nshell = static_cast<int>(cov.shell_r.size()) - 1;
  int i = static_cast<int>(std::upper_bound(cov.shell_r.begin(), cov.shell_r.end(), rho.r) -
                           cov.shell_r.begin()) -
          1;
  i = std::clamp(i, 0, nshell - 1);
  const int nth = cov.shell_nth[i];
  const int jt = std::min(nth - 1, static_cast<int>(reduce_angle(rho.theta) / kTwoPi * nth));
  const int jp = std::min(cov.n_psi - 1,
                          static_cast<int>(momentum_angle(model, rho) / kTwoPi * cov.n_psi));
  return cov.shell_offset[i] + jt * cov.n_psi + jp;
}

// ---------------------------------------------------------------------------
// ray family of the incoming plane wave
// ---------------------------------------------------------------------------

RayState launch_ray(const SurfaceModel& model, const IncomingWaveSpec& spec, double s) {
  const double u0 = spec.front_u;
  const double rho0 = std::hypot(u0, s);
  if (rho0 - model.end_offset() < model.r2() + 0.5)
    throw std::invalid_argument("launch_ray: front line not inside the flat end");
  RayState st;
  const double r_abs = rho0 - model.end_offset();
  st.rho.theta = kPi - std::atan2(s, u0) + spec.direction;
  st.rho.ptheta = -s;
  if (spec.end < 0) {
    st.rho.r = -r_abs;
    st.rho.pr = u0 / rho0;
  } else {
    st.rho.r = r_abs;
    st.rho.pr = -u0 / rho0;
  }
  st.phi = -u0;
  st.Y = 1;
  st.Yp = 0;
  st.t = 0;
  st.s = s;
  return st;
}

namespace {

// (r, theta, p_r, p_theta, Y, Y') with the transverse Jacobi equation
void ray_rhs(const SurfaceModel& m, const double* y, double* dy) {
  const double f = m.f(y[0]), fp = m.fp(y[0]);
  const double w = y[3] / (f * f);
  dy[0] = y[2];
  dy[1] = w;
  dy[2] = y[3] * w * fp / f;
  dy[3] = 0.0;
  dy[4] = y[5];
  dy[5] = -m.curvature(y[0]) * y[4];
}

}  // namespace

RayState advance_ray(const SurfaceModel& model, RayState st, double dt) {
  if (dt == 0) return st;
  using Stepper = DormandPrince<6>;
  Stepper::State y{st.rho.r, st.rho.theta, st.rho.pr, st.rho.ptheta, st.Y, st.Yp};
  Stepper stepper(
      [&model](const Stepper::State& s, Stepper::State& ds) {
        ray_rhs(model, s.data(), ds.data());
      },
      1e-12);
  stepper.set_post_step([&model](Stepper::State& s) {
    const double w = s[3] / model.f(s[0]);
    const double mag2 = 1.0 - w * w;
    s[2] = mag2 > 0 ? std::copysign(std::sqrt(mag2), s[2]) : 0.0;
  });
  stepper.integrate(y, st.t, st.t + dt);
  st.rho = {y[0], y[1], y[2], y[3]};
  st.Y = y[4];
  st.Yp = y[5];
  st.t += dt;
  st.phi += dt;
  return st;
}

RayState trace_ray(const SurfaceModel& model, const IncomingWaveSpec& spec, double s, double t) {
  return advance_ray(model, launch_ray(model, spec, s), t);
}

IncomingReport check_incoming(const SurfaceModel& model, const IncomingWaveSpec& spec, int pairs,
                              uint64_t seed) {
  IncomingReport rep;
  SplitMix64 rng(seed);
  const double d = spec.direction;

  // flow invariance in the end: momentum must match the plane-wave covector
  for (int k = 0; k < pairs; ++k) {
    const double s = rng.uniform(-4, 4);
    const double t = rng.uniform(-2, 0.2 * spec.front_u);
    const RayState st = trace_ray(model, spec, s, t);
    const double rho = std::abs(st.rho.r) + model.end_offset();
    if (std::abs(st.rho.r) < model.r2() + 0.5) continue;  // left the end chart
    const double pth_exp = rho * std::sin(d - st.rho.theta);
    const double pr_exp = -static_cast<double>(spec.end < 0 ? 1 : -1) *
                          std::cos(st.rho.theta - d);
    rep.worst_momentum_err = std::max(rep.worst_momentum_err,
                                      std::max(std::abs(st.rho.ptheta - pth_exp),
                                               std::abs(st.rho.pr - pr_exp)));
  }

  // non-expansion in the past along ray pairs
  for (int k = 0; k < pairs; ++k) {
    const double s1 = rng.uniform(-2, 2);
    const double s2 = s1 + rng.uniform(0.01, 0.3);
    const double t = rng.uniform(0.0, 22.0);
    RayState a = trace_ray(model, spec, s1, t);
    RayState b = trace_ray(model, spec, s2, t);
    double prev = 1e300;
    bool prev_exact = false;
    const int nb = 8;
    for (int j = 0; j <= nb; ++j) {
      if (j > 0) {
        a = advance_ray(model, a, -t / nb);
        b = advance_ray(model, b, -t / nb);
      }
      double dist;
      bool exact = true;
      try {
        dist = cover_distance(model, a.rho.base(), b.rho.base());
      } catch (const std::runtime_error&) {
        const double fmid = model.f(0.5 * (a.rho.r + b.rho.r));
        const double dth = b.rho.theta - a.rho.theta;  // cover lift, not reduced
        dist = std::hypot(b.rho.r - a.rho.r, fmid * dth);
        exact = false;
      }
      // only compare consecutive distances from the same estimator
      if (exact && prev_exact && dist > prev * (1 + 1e-6))
        rep.worst_expansion = std::max(rep.worst_expansion, dist / prev - 1);
      prev = dist;
      prev_exact = exact;
    }
  }
  rep.pass = rep.worst_momentum_err < 1e-8 && rep.worst_expansion < 1e-6;
  return rep;
}

// ---------------------------------------------------------------------------
// lifted graph
// ---------------------------------------------------------------------------

namespace {

// trace for the shooting solver: exact straight-line segment through the flat
// end (Y stays 1 there), then fixed-step integration.  Unlike the adaptive
// trace this is smooth in (s, t), so Newton can converge below the step-size
// jitter that an adaptive controller would leave behind.
RayState trace_ray_smooth(const SurfaceModel& model, const IncomingWaveSpec& spec, double s,
                          double t) {
  const double u0 = spec.front_u;
  const double c = model.end_offset();
  const double rho_e = model.r2() + c;

  RayState st;
  st.s = s;
  st.t = t;
  st.phi = t - u0;

  // time at which the straight ray reaches the curved region
  const bool misses = std::abs(s) >= rho_e;
  const double t_e = misses ? t : u0 - std::sqrt(rho_e * rho_e - s * s);
  const double tau = std::min(t, t_e);
  const double u = tau - u0;
  const double rho = std::hypot(u, s);
  const double r_abs = rho - c;
  st.rho.theta = (s == 0 ? kPi : kPi - std::atan2(s, -u)) + spec.direction;
  st.rho.ptheta = -s;
  if (spec.end < 0) {
    st.rho.r = -r_abs;
    st.rho.pr = -u / rho;
  } else {
    st.rho.r = r_abs;
    st.rho.pr = u / rho;
  }
  if (t <= t_e) return st;

  using Stepper = DormandPrince<6>;
  Stepper::State y{st.rho.r, st.rho.theta, st.rho.pr, st.rho.ptheta, 1.0, 0.0};
  Stepper stepper(
      [&model](const Stepper::State& q, Stepper::State& dq) {
        ray_rhs(model, q.data(), dq.data());
      },
      1e-12);
  // no per-step shell projection here: near a turning point the sqrt amplifies
  // rounding noise in p_theta/f and breaks the smoothness Newton relies on.
  // One projection at the end restores the shell without the jitter.
  stepper.integrate_fixed(y, t_e, t, 0.01);
  {
    const double w = y[3] / model.f(y[0]);
    const double mag2 = 1.0 - w * w;
    y[2] = mag2 > 0 ? std::copysign(std::sqrt(mag2), y[2]) : 0.0;
  }
  st.rho = {y[0], y[1], y[2], y[3]};
  st.Y = y[4];
  st.Yp = y[5];
  return st;
}

// one Newton solve for the ray through cover point (r_t, th_t); (s, t) are the
// warm-started unknowns, updated in place
RayState solve_node(const SurfaceModel& model, const IncomingWaveSpec& spec, double r_t,
                    double th_t, double& s, double& t) {
  for (int it = 0; it < 60; ++it) {
    const RayState st = trace_ray_smooth(model, spec, s, t);
    const double f = model.f(st.rho.r);
    const double rdot = st.rho.pr, thdot = st.rho.ptheta / (f * f);
    const double Fr = st.rho.r - r_t;
    const double Fth = st.rho.theta - th_t;
    const double err = std::hypot(Fr, f * Fth);
    const double tol = std::max(1e-10, st.Y * 4e-15);
    if (err < tol) return st;
    // d x / d t = velocity, d x / d s = Y times the unit normal
    const double J11 = rdot, J12 = st.Y * f * thdot;
    const double J21 = thdot, J22 = -st.Y * rdot / f;
    const double det = J11 * J22 - J12 * J21;  // = -Y/f on the unit shell
    double dt_ = (J22 * Fr - J12 * Fth) / det;
    double ds_ = (-J21 * Fr + J11 * Fth) / det;
    const double step_norm = std::hypot(dt_, st.Y * ds_);
    if (step_norm > 0.5) {
      dt_ *= 0.5 / step_norm;
      ds_ *= 0.5 / step_norm;
    }
    t -= dt_;
    s -= ds_;
    if (t < 0.05) t = 0.05;
    if (t > 500) throw std::runtime_error("lifted graph: node time out of range");
  }
  throw std::runtime_error("lifted graph: node solve failed to converge");
}

GraphNode to_node(const RayState& st) {
  return {st.phi, st.amp(), st.rho.pr, st.rho.ptheta, st.s, st.t, st.Y};
}

// seed the solve at (r_c, th_c) by walking along theta from the head-on ray
void walk_seed(const SurfaceModel& model, const IncomingWaveSpec& spec, double r_c, double th_c,
               double& s, double& t) {
  s = 0;
  // bisect the head-on ray onto r = r_c
  const double th_direct = kPi + spec.direction;
  double lo = 0, hi = 2 * spec.front_u + 10;
  const double r_launch = launch_ray(model, spec, 0).rho.r;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r_mid = trace_ray(model, spec, 0, mid).rho.r;
    const bool passed = spec.end < 0 ? r_mid > r_c : r_mid < r_c;
    (passed ? hi : lo) = mid;
  }
  (void)r_launch;
  t = 0.5 * (lo + hi);
  const double dth = 0.05;
  const int nsteps = static_cast<int>(std::ceil(std::abs(th_c - th_direct) / dth));
  for (int k = 1; k <= nsteps; ++k) {
    const double th_k = th_direct + (th_c - th_direct) * k / nsteps;
    solve_node(model, spec, r_c, th_k, s, t);
  }
}

}  // namespace

LiftedGraph solve_lifted_graph(const SurfaceModel& model, const IncomingWaveSpec& spec,
                               double r_lo, double r_hi, double th_lo, double th_hi,
                               double spacing, int threads) {
  if (spacing <= 0 || r_hi <= r_lo || th_hi <= th_lo)
    throw std::invalid_argument("solve_lifted_graph: bad window");
  LiftedGraph g;
  g.nr = static_cast<int>(std::round((r_hi - r_lo) / spacing)) + 1;
  g.nth = static_cast<int>(std::round((th_hi - th_lo) / spacing)) + 1;
  g.r0 = r_lo;
  g.th0 = th_lo;
  g.dr = (r_hi - r_lo) / (g.nr - 1);
  g.dth = (th_hi - th_lo) / (g.nth - 1);
  g.nodes.resize(static_cast<size_t>(g.nr) * g.nth);

  const int ic = g.nr / 2;
  const double r_c = g.r0 + ic * g.dr;
  double s = 0, t = 0;
  walk_seed(model, spec, r_c, g.th0, s, t);

  // the ray sits within the node tolerance of the grid point; putting xi back
  // on the shell at the grid coordinate keeps the stored graph exactly eikonal
  auto node_at = [&model](double r_grid, const RayState& st) {
    GraphNode n = to_node(st);
    const double w = n.xi_th / model.f(r_grid);
    n.xi_r = std::copysign(std::sqrt(std::max(0.0, 1.0 - w * w)), n.xi_r);
    return n;
  };

  // centre row first, then every column in parallel from its centre entry
  std::vector<double> row_s(g.nth), row_t(g.nth);
  for (int j = 0; j < g.nth; ++j) {
    g.at(ic, j) = node_at(r_c, solve_node(model, spec, r_c, g.th0 + j * g.dth, s, t));
    row_s[j] = s;
    row_t[j] = t;
  }
  parallel_for(static_cast<size_t>(g.nth), [&](size_t j) {
    const double th = g.th0 + j * g.dth;
    double sj = row_s[j], tj = row_t[j];
    for (int i = ic + 1; i < g.nr; ++i)
      g.at(i, static_cast<int>(j)) =
          node_at(g.r0 + i * g.dr, solve_node(model, spec, g.r0 + i * g.dr, th, sj, tj));
    sj = row_s[j];
    tj = row_t[j];
    for (int i = ic - 1; i >= 0; --i)
      g.at(i, static_cast<int>(j)) =
          node_at(g.r0 + i * g.dr, solve_node(model, spec, g.r0 + i * g.dr, th, sj, tj));
  }, threads);
  return g;
}

SheetChecks verify_sheet(const SurfaceModel& model, const LiftedGraph& g) {
  SheetChecks out;
  out.min_Y = 1e300;
  for (int i = 0; i < g.nr; ++i)
    for (int j = 0; j < g.nth; ++j) {
      const GraphNode& n = g.at(i, j);
      const double r = g.r0 + i * g.dr;
      out.max_shell_err = std::max(
          out.max_shell_err, shell_error(model, {r, g.th0 + j * g.dth, n.xi_r, n.xi_th}));
      out.min_Y = std::min(out.min_Y, n.Y);
      if (i + 1 < g.nr && j + 1 < g.nth) {
        const GraphNode &a = g.at(i, j), &b = g.at(i + 1, j), &c = g.at(i + 1, j + 1),
                        &d = g.at(i, j + 1);
        const double loop = 0.5 * (a.xi_r + b.xi_r) * g.dr + 0.5 * (b.xi_th + c.xi_th) * g.dth -
                            0.5 * (d.xi_r + c.xi_r) * g.dr - 0.5 * (a.xi_th + d.xi_th) * g.dth;
        out.max_curl = std::max(out.max_curl, std::abs(loop));
      }
      if (i > 0 && i + 1 < g.nr) {
        const double dphidr = (g.at(i + 1, j).phi - g.at(i - 1, j).phi) / (2 * g.dr);
        out.max_phase_err = std::max(out.max_phase_err, std::abs(dphidr - n.xi_r));
        out.c2_norm = std::max(out.c2_norm,
                               std::abs(g.at(i + 1, j).xi_r - 2 * n.xi_r + g.at(i - 1, j).xi_r) /
                                   (g.dr * g.dr));
      }
      if (j > 0 && j + 1 < g.nth) {
        const double dphidth = (g.at(i, j + 1).phi - g.at(i, j - 1).phi) / (2 * g.dth);
        out.max_phase_err = std::max(out.max_phase_err, std::abs(dphidth - n.xi_th));
      }
      if (i + 1 < g.nr)
        out.c1_norm = std::max(out.c1_norm, std::abs(g.at(i + 1, j).xi_r - n.xi_r) / g.dr);
      if (j + 1 < g.nth)
        out.c1_norm = std::max(out.c1_norm, std::abs(g.at(i, j + 1).xi_th - n.xi_th) / g.dth);
    }
  return out;
}

// ---------------------------------------------------------------------------
// word-indexed front propagation
// ---------------------------------------------------------------------------

BranchFront incoming_front(const SurfaceModel& model, const IncomingWaveSpec& spec, double s_lo,
                           double s_hi, int n_samples) {
  if (n_samples < 2 || s_hi <= s_lo) throw std::invalid_argument("incoming_front: bad range");
  BranchFront f;
  f.samples.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i)
    f.samples.push_back(launch_ray(model, spec, s_lo + (s_hi - s_lo) * i / (n_samples - 1)));
  return f;
}

namespace {

constexpr double kGapBudget = 0.12;

double sample_gap(const SurfaceModel& m, const RayState& a, const RayState& b) {
  // theta difference on the cover, not reduced: a stretched near-critical
  // segment spans several windings and must not alias to a short gap
  const double dth = b.rho.theta - a.rho.theta;
  const double fmid = m.f(0.5 * (a.rho.r + b.rho.r));
  const double base = std::hypot(b.rho.r - a.rho.r, fmid * dth);
  const double dpr = b.rho.pr - a.rho.pr;
  const double dpt = b.rho.ptheta / m.f(b.rho.r) - a.rho.ptheta / m.f(a.rho.r);
  return std::sqrt(base * base + dpr * dpr + dpt * dpt);
}

// refinement: keep neighbour gaps below the budget by inserting fresh rays
void refine_front(const SurfaceModel& model, const IncomingWaveSpec& spec,
                  std::vector<RayState>& samples, double amp_floor) {
  if (samples.size() < 2) return;
  std::vector<RayState> out;
  out.reserve(samples.size());
  out.push_back(samples.front());
  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    std::vector<RayState> stack{samples[i + 1]};
    int depth = 0;
    while (!stack.empty()) {
      const RayState& left = out.back();
      const RayState& right = stack.back();
      const bool interesting = left.amp() > amp_floor || right.amp() > amp_floor;
      if (depth < 4096 && interesting && sample_gap(model, left, right) > kGapBudget &&
          std::abs(right.s - left.s) > 1e-13) {
        stack.push_back(trace_ray(model, spec, 0.5 * (left.s + right.s), right.t));
        ++depth;
      } else {
        out.push_back(right);
        stack.pop_back();
      }
    }
  }
  samples.swap(out);
}

}  // namespace

std::vector<BranchFront> propagate_step(const SurfaceModel& model, const IncomingWaveSpec& spec,
                                        const BranchFront& front, const PhaseCover& cover,
                                        double amp_floor) {
  std::vector<RayState> moved(front.samples.size());
  parallel_for(front.samples.size(),
               [&](size_t i) { moved[i] = advance_ray(model, front.samples[i], 1.0); });
  // density precondition: refill gaps that opened during the step
  refine_front(model, spec, moved, amp_floor);

  std::vector<BranchFront> children;
  size_t i = 0;
  while (i < moved.size()) {
    const int id = locate_box(cover, model, moved[i].rho);
    size_t j = i;
    while (j + 1 < moved.size() && locate_box(cover, model, moved[j + 1].rho) == id &&
           std::abs(moved[j + 1].rho.theta - moved[j].rho.theta) < kPi)
      ++j;
    BranchFront child;
    child.word = front.word;
    child.word.letters.push_back(id);
    // one-sample overlap with the previous child: the s-interval across a
    // split boundary must stay refinable at later steps (the winding family
    // lives inside such a gap)
    const size_t lo = i > 0 ? i - 1 : i;
    child.samples.assign(moved.begin() + lo, moved.begin() + j + 1);
    // graph-fit check: same base point with conflicting momentum is a caustic
    for (size_t a = 0; a + 1 < child.samples.size(); ++a) {
      const double base = chart_base_distance(model, child.samples[a].rho,
                                              child.samples[a + 1].rho);
      const double dxi = std::abs(child.samples[a + 1].rho.pr - child.samples[a].rho.pr);
      if (base < 1e-6 && dxi > 1e-3)
        throw std::runtime_error("propagate_step: caustic violation");
    }
    children.push_back(std::move(child));
    i = j + 1;
  }
  return children;
}

namespace {

struct ClassRecord {
  int m = 0, n_first = 0, n_last = 0;
  Word word;
  double sup_amp = 0, min_Y = 1e300;
};

struct ConeSample {
  int offset = 0;
  double mismatch = 0;
};

}  // namespace

Inventory propagate_all(const SurfaceModel& model, const IncomingWaveSpec& spec,
                        const ChartWindow& window, int N, double amp_floor, long budget,
                        int threads) {
  if (N < 1 || N > 60) throw std::invalid_argument("propagate_all: N out of [1, 60]");
  if (amp_floor <= 0) throw std::invalid_argument("propagate_all: amp_floor must be positive");
  (void)threads;

  const PhaseCover cover = build_phase_cover(model);
  const double R = model.interaction_radius();
  const double slope_uns = std::sqrt(model.b0());
  const Eigen::Vector2d v_stab = Eigen::Vector2d(1, -slope_uns).normalized();

  Inventory inv;
  inv.window = window;
  inv.amp_floor = amp_floor;
  inv.steps = N;
  inv.c_det = 1e300;
  inv.transversality_min_deg = 180;

  std::vector<BranchFront> active{incoming_front(model, spec, -4.5, 4.5, 600)};
  std::map<int, ClassRecord> records;
  std::vector<ConeSample> cone;

  for (int n = 1; n <= N; ++n) {
    std::vector<BranchFront> next;
    long samples_now = 0;
    for (const BranchFront& front : active) {
      for (BranchFront& kid : propagate_step(model, spec, front, cover, amp_floor)) {
        double sup = 0;
        bool all_escaping = true;
        for (const RayState& st : kid.samples) {
          sup = std::max(sup, st.amp());
          inv.c_det = std::min(inv.c_det, st.Y);
          if (!(std::abs(st.rho.r) > R && st.rho.r * st.rho.pr > 0)) all_escaping = false;
        }
        if (sup < amp_floor || all_escaping) continue;
        samples_now += static_cast<long>(kid.samples.size());
        next.push_back(std::move(kid));
      }
    }
    if (samples_now > budget)
      throw std::runtime_error("propagate_all: inventory explosion, budget " +
                               std::to_string(budget) + " exceeded at step " + std::to_string(n));
    inv.peak_samples = std::max(inv.peak_samples, samples_now);
    inv.peak_fronts = std::max<long>(inv.peak_fronts, static_cast<long>(next.size()));

    // window bookkeeping and tube diagnostics
    std::vector<std::pair<int, const RayState*>> hits;  // (class, sample)
    for (const BranchFront& front : next) {
      const int tau = front.word.tau();
      for (size_t i = 0; i < front.samples.size(); ++i) {
        const RayState& st = front.samples[i];
        const double th_red = reduce_angle(st.rho.theta);
        if (window.contains(st.rho.r, th_red)) {
          const int m = static_cast<int>(std::llround((st.rho.theta - th_red) / kTwoPi));
          ClassRecord& rec = records[m];
          if (rec.sup_amp == 0 && rec.n_first == 0) {
            rec.m = m;
            rec.n_first = n;
            rec.word = front.word;
          }
          rec.n_last = n;
          rec.sup_amp = std::max(rec.sup_amp, st.amp());
          rec.min_Y = std::min(rec.min_Y, st.Y);
          hits.push_back({m, &st});
        }
        // cone condition and transversality inside the neck tube
        if (i + 1 < front.samples.size() && std::abs(st.rho.r) <= cover.gamma_uns &&
            std::abs(st.rho.pr) <= cover.gamma_uns) {
          const RayState& nx = front.samples[i + 1];
          if (std::abs(nx.rho.r) <= cover.gamma_uns && std::abs(nx.rho.pr) <= cover.gamma_uns) {
            const double dr = nx.rho.r - st.rho.r, dpr = nx.rho.pr - st.rho.pr;
            if (std::abs(dr) > 1e-12) {
              cone.push_back({n - tau, std::abs(dpr / dr - slope_uns)});
              const Eigen::Vector2d tang = Eigen::Vector2d(dr, dpr).normalized();
              const double ang =
                  std::acos(std::min(1.0, std::abs(tang.dot(v_stab)))) * 180.0 / kPi;
              inv.transversality_min_deg = std::min(inv.transversality_min_deg, ang);
            }
          }
        }
      }
    }
    // grad-phi agreement between distinct fronts of one class (merge criterion)
    std::sort(hits.begin(), hits.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (size_t a = 0; a < hits.size(); ++a)
      for (size_t b = a + 1; b < hits.size() && hits[b].first == hits[a].first; ++b) {
        const double d = chart_base_distance(model, hits[a].second->rho, hits[b].second->rho);
        if (d < 0.05) {
          const double dxi = std::abs(hits[a].second->rho.pr - hits[b].second->rho.pr) +
                             std::abs(hits[a].second->rho.ptheta - hits[b].second->rho.ptheta);
          inv.merge_dxi_worst = std::max(inv.merge_dxi_worst, dxi - 5.0 * d);
        }
      }
    active.swap(next);
  }

  for (const auto& [m, rec] : records) {
    BranchClass cls;
    cls.m = rec.m;
    cls.word = rec.word;
    cls.n_first = rec.n_first;
    cls.n_last = rec.n_last;
    cls.sup_amp = rec.sup_amp;
    cls.min_Y = rec.min_Y;
    inv.classes.push_back(std::move(cls));
    inv.n_K = std::max(inv.n_K, rec.n_last - rec.n_first);
  }
  std::sort(inv.classes.begin(), inv.classes.end(), [](const BranchClass& a, const BranchClass& b) {
    return a.n_first != b.n_first ? a.n_first < b.n_first : a.m < b.m;
  });

  // empirical N_uns: smallest offset past which every tube-resident front obeys
  // the cone condition
  const double gamma = cover.gamma_uns;
  int n_uns = N + 1;
  for (int k = 0; k <= N; ++k) {
    bool ok = true;
    double worst = 0;
    for (const ConeSample& cs : cone)
      if (cs.offset >= k) {
        worst = std::max(worst, cs.mismatch);
        if (cs.mismatch > gamma) ok = false;
      }
    if (ok) {
      n_uns = k;
      inv.cone_worst = worst;
      break;
    }
  }
  inv.n_uns = n_uns;
  return inv;
}

void attach_sheets(const SurfaceModel& model, const IncomingWaveSpec& spec, Inventory& inv,
                   double spacing, double margin, double min_amp, int threads) {
  for (BranchClass& cls : inv.classes) {
    if (cls.sup_amp < min_amp) continue;
    const double shift = kTwoPi * cls.m;
    cls.sheet = solve_lifted_graph(model, spec, inv.window.r_lo - margin,
                                   inv.window.r_hi + margin, inv.window.th_lo - margin + shift,
                                   inv.window.th_hi + margin + shift, spacing, threads);
  }
}

SeparationReport gradient_separation(const Inventory& inv) {
  SeparationReport rep;
  std::vector<const BranchClass*> cls;
  for (const BranchClass& c : inv.classes)
    if (c.sheet.nr > 0) cls.push_back(&c);
  const int k = static_cast<int>(cls.size());
  if (k < 2) throw std::invalid_argument("gradient_separation: need >= 2 classes with sheets");
  for (const BranchClass* c : cls) rep.classes.push_back(c->m);
  rep.minima = Eigen::MatrixXd::Zero(k, k);

  std::vector<double> xs, ys;
  rep.all_positive = true;
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      const LiftedGraph &ga = cls[a]->sheet, &gb = cls[b]->sheet;
      double mn = 1e300;
      for (int i = 0; i < std::min(ga.nr, gb.nr); ++i)
        for (int j = 0; j < std::min(ga.nth, gb.nth); ++j) {
          const GraphNode &na = ga.at(i, j), &nb = gb.at(i, j);
          const double dpr = na.xi_r - nb.xi_r;
          const double dpt = na.xi_th - nb.xi_th;
          mn = std::min(mn, std::hypot(dpr, dpt));
        }
      rep.minima(a, b) = rep.minima(b, a) = mn;
      if (mn <= 0) rep.all_positive = false;
      xs.push_back(std::max(cls[a]->n_first, cls[b]->n_first));
      ys.push_back(std::log(std::max(mn, 1e-300)));
    }
  const LinearFit fit = fit_line(xs, ys);
  rep.exponent = -fit.slope;
  rep.fit_residual = fit.residual;
  // true lower-bound constant at the fitted exponent
  double c1 = 1e300;
  for (size_t i = 0; i < xs.size(); ++i)
    c1 = std::min(c1, std::exp(ys[i] + rep.exponent * xs[i]));
  rep.C1 = c1;
  return rep;
}

int branch_completeness(const SurfaceModel& model, const IncomingWaveSpec& spec,
                        const BasePoint& x, double amp_floor) {
  int count = 0;
  const double th_red = reduce_angle(x.theta_lift);
  for (int dir = 0; dir < 2; ++dir) {
    for (int k = 0; k < 64; ++k) {
      const int m = dir == 0 ? k : -1 - k;
      const double th = th_red + kTwoPi * m;
      double s, t;
      walk_seed(model, spec, x.r, th, s, t);
      const RayState st = solve_node(model, spec, x.r, th, s, t);
      if (st.amp() < amp_floor) break;
      ++count;
    }
  }
  return count;
}

}  // namespace neckwave
