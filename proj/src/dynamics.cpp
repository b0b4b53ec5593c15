#include "neckwave/dynamics.hpp"

#include <cmath>

#include "neckwave/integrator.hpp"

namespace neckwave {

double shell_error(const SurfaceModel& model, const PhasePoint& rho) {
  const double w = rho.ptheta / model.f(rho.r);
  return std::abs(rho.pr * rho.pr + w * w - 1.0);
}

PhasePoint on_shell_point(const SurfaceModel& model, double r, double theta, double psi) {
  return {r, theta, std::cos(psi), model.f(r) * std::sin(psi)};
}

namespace {

// H = (p_r^2 + p_theta^2 / f^2) / 2 restricted to the unit shell; unit speed.
inline void hamilton_rhs(const SurfaceModel& m, const double* y, double* dy) {
  const double f = m.f(y[0]), fp = m.fp(y[0]);
  const double w = y[3] / (f * f);
  dy[0] = y[2];
  dy[1] = w;
  dy[2] = y[3] * w * fp / f;
  dy[3] = 0.0;
}

// renormalise p_r so the point sits exactly on the unit shell; p_theta is a
// first integral and is never touched
inline void shell_project(const SurfaceModel& m, double* y) {
  const double w = y[3] / m.f(y[0]);
  const double mag2 = 1.0 - w * w;
  y[2] = mag2 > 0 ? std::copysign(std::sqrt(mag2), y[2]) : 0.0;
}

}  // namespace

PhasePoint flow(const SurfaceModel& model, const PhasePoint& rho, double t,
                const FlowOptions& opt) {
  return flow_sampled(model, rho, t, nullptr, opt);
}

PhasePoint flow_sampled(const SurfaceModel& model, const PhasePoint& rho, double t,
                        const std::function<void(double, const PhasePoint&)>& cb,
                        const FlowOptions& opt) {
  if (opt.tol < 1e-13 || opt.tol > 1e-6)
    throw std::invalid_argument("flow: tol out of range");
  using Stepper = DormandPrince<4>;
  Stepper::State y{rho.r, rho.theta, rho.pr, rho.ptheta};
  // track elapsed time through the extra callback bookkeeping
  double elapsed = 0;
  (void)elapsed;
  Stepper stepper(
      [&model](const Stepper::State& s, Stepper::State& ds) {
        hamilton_rhs(model, s.data(), ds.data());
      },
      opt.tol);
  if (cb) {
    // integrate in fixed sub-intervals so the callback sees a time axis
    const double dt = std::copysign(std::min(0.25, std::abs(t)), t);
    double done = 0;
    while (std::abs(done - t) > 1e-14) {
      double step = dt;
      if (std::abs(t - done) < std::abs(dt)) step = t - done;
      Stepper st2(
          [&model](const Stepper::State& s, Stepper::State& ds) {
            hamilton_rhs(model, s.data(), ds.data());
          },
          opt.tol);
      st2.set_post_step([&model](Stepper::State& s) { shell_project(model, s.data()); });
      st2.integrate(y, done, done + step);
      done += step;
      cb(done, PhasePoint{y[0], y[1], y[2], y[3]});
    }
    return {y[0], y[1], y[2], y[3]};
  }
  stepper.set_post_step([&model](Stepper::State& s) { shell_project(model, s.data()); });
  stepper.integrate(y, 0.0, t);
  return {y[0], y[1], y[2], y[3]};
}

TangentFrame tangent_flow(const SurfaceModel& model, const PhasePoint& rho, double t,
                          const FlowOptions& opt) {
  using Stepper = DormandPrince<20>;
  Stepper::State y{};
  y[0] = rho.r; y[1] = rho.theta; y[2] = rho.pr; y[3] = rho.ptheta;
  for (int i = 0; i < 4; ++i) y[4 + 5 * i] = 1.0;  // identity, column-major blocks of 4

  Stepper stepper(
      [&model](const Stepper::State& s, Stepper::State& ds) {
        hamilton_rhs(model, s.data(), ds.data());
        const double r = s[0], ptheta = s[3];
        const double f = model.f(r), fp = model.fp(r), fpp = model.fpp(r);
        const double f2 = f * f, f3 = f2 * f, f4 = f2 * f2;
        // variational matrix in (r, theta, p_r, p_theta)
        const double a_tr = -2.0 * fp * ptheta / f3;
        const double a_tp = 1.0 / f2;
        const double a_pr = ptheta * ptheta * (fpp / f3 - 3.0 * fp * fp / f4);
        const double a_pp = 2.0 * fp * ptheta / f3;
        for (int col = 0; col < 4; ++col) {
          const double vr = s[4 + 4 * col], vp = s[6 + 4 * col], vq = s[7 + 4 * col];
          ds[4 + 4 * col] = vp;
          ds[5 + 4 * col] = a_tr * vr + a_tp * vq;
          ds[6 + 4 * col] = a_pr * vr + a_pp * vq;
          ds[7 + 4 * col] = 0.0;
        }
      },
      opt.tol);
  stepper.integrate(y, 0.0, t);
  TangentFrame out;
  out.base = {y[0], y[1], y[2], y[3]};
  for (int col = 0; col < 4; ++col)
    for (int row = 0; row < 4; ++row) out.M(row, col) = y[4 + 4 * col + row];
  return out;
}

EscapeClass classify(const SurfaceModel& model, const PhasePoint& rho, double t_max) {
  EscapeClass out;
  const double b = model.boundary_b(rho.r);
  const double bd = b_dot(model, rho.r, rho.pr, rho.ptheta);
  if (b < model.eps0()) {
    out.tie = std::abs(bd) < 1e-12;
    out.tag = (bd <= 0 || out.tie) ? EscapeTag::DEPlus : EscapeTag::DEMinus;
    return out;
  }
  out.tag = EscapeTag::Interaction;
  // forward integration until b drops below eps0
  PhasePoint cur = rho;
  double prev_t = 0;
  double found = -1;
  const double dt = 0.25;
  for (double t = dt; t <= t_max + 1e-9; t += dt) {
    PhasePoint nxt = flow(model, cur, dt);
    if (model.boundary_b(nxt.r) < model.eps0()) {
      // linear interpolation on b over the last interval
      const double b0 = model.boundary_b(cur.r), b1 = model.boundary_b(nxt.r);
      const double frac = (b0 - model.eps0()) / std::max(b0 - b1, 1e-300);
      found = prev_t + dt * std::clamp(frac, 0.0, 1.0);
      break;
    }
    cur = nxt;
    prev_t = t;
  }
  if (found >= 0) out.escape_time = found;
  return out;
}

Eigen::Vector4d unstable_direction(const SurfaceModel& model, const PhasePoint& rho_on_K) {
  if (std::abs(rho_on_K.r) > 1e-10 || std::abs(rho_on_K.pr) > 1e-10)
    throw std::invalid_argument("unstable_direction: point not on the trapped orbit");
  const TangentFrame frame = tangent_flow(model, rho_on_K, kTwoPi);
  Eigen::Matrix2d B;  // transverse (r, p_r) block
  B << frame.M(0, 0), frame.M(0, 2), frame.M(2, 0), frame.M(2, 2);

  Eigen::Vector2d v(1.0, 0.3);
  v.normalize();
  double growth = 0;
  for (int it = 0; it < 200; ++it) {
    Eigen::Vector2d w = B * v;
    growth = w.norm();
    w /= growth;
    if ((w - v).norm() < 1e-14) { v = w; break; }
    v = w;
  }
  // hyperbolicity: the period map must have a genuinely dominant eigenvalue
  const double other = std::abs(B.determinant()) / growth;
  if (growth / std::max(other, 1e-300) < 10.0)
    throw std::runtime_error("unstable_direction: period map not hyperbolic");
  const Eigen::Vector2d bv = B * v;
  if ((bv - growth * v).norm() > 1e-6 * growth)
    throw std::runtime_error("unstable_direction: power iteration did not converge");
  Eigen::Vector4d out = Eigen::Vector4d::Zero();
  out(0) = v(0);
  out(2) = v(1);
  if (out(0) < 0) out = -out;
  return out;
}

Eigen::Vector4d stable_direction(const SurfaceModel& model, const PhasePoint& rho_on_K) {
  PhasePoint rev = rho_on_K;
  rev.pr = -rev.pr;
  rev.ptheta = -rev.ptheta;
  Eigen::Vector4d v = unstable_direction(model, rev);
  v(2) = -v(2);  // momentum components flip back under time reversal
  v(3) = -v(3);
  if (v(0) < 0) v = -v;
  return v;
}

double cover_distance(const SurfaceModel& model, const BasePoint& a, const BasePoint& b) {
  const double dth = b.theta_lift - a.theta_lift;
  const double dr = b.r - a.r;
  const double fmid = model.f(0.5 * (a.r + b.r));
  double guess = std::sqrt(dr * dr + fmid * fmid * dth * dth);
  if (guess < 1e-14) return 0.0;

  // shoot a geodesic from a; unknowns are the launch angle and the time
  double psi = std::atan2(fmid * dth, dr);
  double T = guess;
  for (int it = 0; it < 60; ++it) {
    using Stepper = DormandPrince<6>;
    Stepper::State y{a.r, a.theta_lift, std::cos(psi), model.f(a.r) * std::sin(psi), 0.0, 1.0};
    Stepper stepper(
        [&model](const Stepper::State& s, Stepper::State& ds) {
          hamilton_rhs(model, s.data(), ds.data());
          const double K = model.curvature(s[0]);
          ds[4] = s[5];
          ds[5] = -K * s[4];
        },
        1e-12);
    stepper.integrate(y, 0.0, T);
    const double f = model.f(y[0]);
    const double rdot = y[2], thdot = y[3] / (f * f);
    const double res_r = y[0] - b.r;
    const double res_t = y[1] - b.theta_lift;
    if (std::sqrt(res_r * res_r + f * f * res_t * res_t) < 1e-11 * std::max(1.0, T))
      return T;
    // Jacobian columns: d/dT = velocity, d/dpsi = Y * unit normal
    Eigen::Matrix2d J;
    J << rdot, -y[4] * f * thdot, thdot, y[4] * rdot / f;
    Eigen::Vector2d rhs(res_r, res_t);
    if (std::abs(J.determinant()) < 1e-14) break;
    Eigen::Vector2d delta = J.colPivHouseholderQr().solve(rhs);
    // damped update
    const double damp = std::min(1.0, 0.5 * T / (std::abs(delta(0)) + 1e-30));
    T -= damp * delta(0);
    psi -= damp * delta(1);
    if (T < 1e-14) T = 1e-14;
  }
  throw std::runtime_error("cover_distance: shooting failed to converge");
}

double adapted_distance(const SurfaceModel& model, const PhasePoint& a, const PhasePoint& b,
                        bool chart_only) {
  double dx;
  const double dth = b.theta - a.theta;
  const double dr = b.r - a.r;
  const double fmid = model.f(0.5 * (a.r + b.r));
  const double chart = std::sqrt(dr * dr + fmid * fmid * dth * dth);
  dx = (chart_only || chart < 1e-3) ? chart : cover_distance(model, a.base(), b.base());
  const double dpr = b.pr - a.pr;
  const double dpt = b.ptheta / model.f(b.r) - a.ptheta / model.f(a.r);
  return std::sqrt(dx * dx + dpr * dpr + dpt * dpt);
}

PairConvexityReport geodesic_pair_convexity(const SurfaceModel& model, const PhasePoint& rho1,
                                            const PhasePoint& rho2, double T, int steps) {
  PairConvexityReport rep;
  if (steps < 3) throw std::invalid_argument("geodesic_pair_convexity: steps >= 3");
  std::vector<double> d2(steps + 1);
  PhasePoint p1 = rho1, p2 = rho2;
  const double dt = T / steps;
  for (int i = 0; i <= steps; ++i) {
    if (i > 0) {
      p1 = flow(model, p1, dt);
      p2 = flow(model, p2, dt);
    }
    double d;
    try {
      d = cover_distance(model, p1.base(), p2.base());
    } catch (const std::runtime_error&) {
      return rep;  // not applicable
    }
    const double ri_local = kPi * std::min(model.f(p1.r), model.f(p2.r));
    if (d >= ri_local) return rep;  // precondition breach: not applicable
    d2[i] = d * d;
    rep.max_d2 = std::max(rep.max_d2, d2[i]);
  }
  rep.applicable = true;
  rep.min_second_diff = 1e300;
  for (int i = 1; i < steps; ++i)
    rep.min_second_diff = std::min(rep.min_second_diff, d2[i + 1] - 2 * d2[i] + d2[i - 1]);
  rep.pass = rep.min_second_diff >= -1e-6 * std::max(rep.max_d2, 1e-30);
  return rep;
}

ExpansionEstimate expansion_constants(const SurfaceModel& model, int samples, double T,
                                      uint64_t seed) {
  ExpansionEstimate out;
  SplitMix64 rng(seed);

  // contraction rate along the stable manifold of the neck orbit
  {
    const PhasePoint base{0, 0, 0, 1};
    // stable-manifold companion: p_theta = 1 exactly, incoming radial momentum
    const double delta = 1e-4;
    const double bf = model.boundary_b(delta);
    PhasePoint pert{delta, 0, -std::sqrt(std::max(0.0, 1.0 - bf * bf)), 1};
    std::vector<double> ts, logd;
    PhasePoint a = base, b = pert;
    const int n = 20;
    for (int i = 0; i <= n; ++i) {
      if (i > 0) {
        a = flow(model, a, T / n);
        b = flow(model, b, T / n);
      }
      ts.push_back(i * T / n);
      logd.push_back(std::log(adapted_distance(model, a, b, true)));
    }
    out.lambda = -fit_line(ts, logd).slope;
  }

  // worst-case separation growth inside the interaction region
  {
    double mu = 0;
    const double rmax = model.interaction_radius();
    for (int i = 0; i < samples; ++i) {
      const double r = rng.uniform(-rmax, rmax);
      const double psi = rng.uniform(0, kTwoPi);
      PhasePoint a = on_shell_point(model, r, rng.uniform(0, kTwoPi), psi);
      PhasePoint b = a;
      const double phi = rng.uniform(0, kTwoPi);
      b.r += 1e-4 * std::cos(phi);
      b.theta += 1e-4 * std::sin(phi) / model.f(a.r);
      b.ptheta = model.f(b.r) * (a.ptheta >= 0 ? 1 : -1) * std::sqrt(1 - b.pr * b.pr);
      std::vector<double> ts, logd;
      PhasePoint pa = a, pb = b;
      const int n = 10;
      for (int k = 0; k <= n; ++k) {
        if (k > 0) {
          pa = flow(model, pa, T / n);
          pb = flow(model, pb, T / n);
        }
        if (std::abs(pa.r) > rmax || std::abs(pb.r) > rmax) break;
        ts.push_back(k * T / n);
        logd.push_back(std::log(adapted_distance(model, pa, pb, true)));
      }
      if (ts.size() >= 3) mu = std::max(mu, fit_line(ts, logd).slope);
    }
    out.mu = mu;
  }
  return out;
}

}  // namespace neckwave
