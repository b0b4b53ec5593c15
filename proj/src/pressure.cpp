#include "neckwave/pressure.hpp"

#include <cmath>
#include <stdexcept>

#include "neckwave/integrator.hpp"

namespace neckwave {

namespace {

double wedge_area(const Eigen::Vector4d& u, const Eigen::Vector4d& v) {
  const double uu = u.squaredNorm(), vv = v.squaredNorm(), uv = u.dot(v);
  return std::sqrt(std::max(uu * vv - uv * uv, 0.0));
}

Eigen::Vector4d flow_vector(const SurfaceModel& model, const PhasePoint& rho) {
  const double f = model.f(rho.r);
  Eigen::Vector4d v;
  v << rho.pr, rho.ptheta / (f * f), model.fp(rho.r) * rho.ptheta * rho.ptheta / (f * f * f), 0.0;
  return v;
}

PhasePoint nearest_trapped(const PhasePoint& rho) {
  return {0.0, rho.theta, 0.0, rho.ptheta >= 0 ? 1.0 : -1.0};
}

}  // namespace

double unstable_jacobian(const SurfaceModel& model, const PhasePoint& rho_on_K, double t) {
  if (std::abs(rho_on_K.r) > 1e-6 || std::abs(rho_on_K.pr) > 1e-6)
    throw std::invalid_argument("unstable_jacobian: point not within 1e-6 of the trapped orbit");
  const PhasePoint rho = nearest_trapped(rho_on_K);
  const Eigen::Vector4d u = flow_vector(model, rho);
  const Eigen::Vector4d v = unstable_direction(model, rho);
  const TangentFrame frame = tangent_flow(model, rho, t);
  const double a0 = wedge_area(u, v);
  const double a1 = wedge_area(frame.M * u, frame.M * v);
  return std::log(a1 / a0);
}

std::vector<PhasePoint> neck_orbit_cloud(double spacing) {
  std::vector<PhasePoint> cloud;
  const int n = std::max(8, static_cast<int>(std::ceil(kTwoPi / spacing)));
  for (int sign = 0; sign < 2; ++sign)
    for (int i = 0; i < n; ++i)
      cloud.push_back({0.0, kTwoPi * i / n, 0.0, sign == 0 ? 1.0 : -1.0});
  return cloud;
}

PressureEstimate pressure_from_cloud(const SurfaceModel& model,
                                     const std::vector<PhasePoint>& cloud, double s, double eps,
                                     const std::vector<double>& t_list, int threads) {
  if (cloud.empty()) throw std::invalid_argument("pressure: empty trapped set");
  if (eps < 1e-3 || eps > 1e-1) throw std::invalid_argument("pressure: eps out of [1e-3, 1e-1]");
  if (t_list.size() < 2 || t_list.back() < 50.0)
    throw std::invalid_argument("pressure: t_list must be increasing with max >= 50");

  PressureEstimate est;
  est.s = s;
  est.eps = eps;
  est.t_list = t_list;
  const double t_max = t_list.back();

  // per-point unstable-Jacobian samples at every t in t_list, one tangent-flow
  // continuation per point
  std::vector<std::vector<double>> lambda(cloud.size(), std::vector<double>(t_list.size()));
  parallel_for(cloud.size(), [&](size_t i) {
    const PhasePoint rho = nearest_trapped(cloud[i]);
    const Eigen::Vector4d u0 = flow_vector(model, rho);
    const Eigen::Vector4d v0 = unstable_direction(model, rho);
    const double a0 = wedge_area(u0, v0);
    Eigen::Matrix4d M = Eigen::Matrix4d::Identity();
    PhasePoint cur = rho;
    double t_done = 0;
    for (size_t k = 0; k < t_list.size(); ++k) {
      const TangentFrame seg = tangent_flow(model, cur, t_list[k] - t_done);
      M = seg.M * M;
      cur = seg.base;
      t_done = t_list[k];
      lambda[i][k] = std::log(wedge_area(M * u0, M * v0) / a0);
    }
  }, threads);

  // trajectories sampled for the dynamical separation distance
  const int n_time = 12;
  std::vector<std::vector<PhasePoint>> traj(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    traj[i].reserve(n_time + 1);
    PhasePoint cur = cloud[i];
    traj[i].push_back(cur);
    for (int k = 1; k <= n_time; ++k) {
      cur = flow(model, cur, t_max / n_time);
      traj[i].push_back(cur);
    }
  }

  est.logZ.resize(t_list.size());
  for (size_t kt = 0; kt < t_list.size(); ++kt) {
    const double t = t_list[kt];
    // greedy maximal (eps, t)-separated packing
    std::vector<size_t> kept;
    for (size_t i = 0; i < cloud.size(); ++i) {
      bool separated = true;
      for (size_t j : kept) {
        double dyn = 0;
        for (int k = 0; k <= n_time; ++k) {
          if (t_max * k / n_time > t + 1e-9) break;
          dyn = std::max(dyn, adapted_distance(model, traj[i][k], traj[j][k], true));
          if (dyn >= eps) break;
        }
        if (dyn < eps) { separated = false; break; }
      }
      if (separated) kept.push_back(i);
    }
    double Z = 0;
    for (size_t i : kept) Z += std::exp(-s * lambda[i][kt]);
    est.logZ[kt] = std::log(Z);
  }

  // limsup realised as a linear fit over the top half of t_list
  const size_t half = t_list.size() / 2;
  std::vector<double> ts(t_list.begin() + half, t_list.end());
  std::vector<double> zs(est.logZ.begin() + half, est.logZ.end());
  const LinearFit fit = fit_line(ts, zs);
  est.P = fit.slope;
  est.residual = fit.residual;
  return est;
}

PressureEstimate pressure(const SurfaceModel& model, double s, double eps,
                          const std::vector<double>& t_list) {
  return pressure_from_cloud(model, neck_orbit_cloud(eps / 4.0), s, eps, t_list);
}

GateResult hypothesis_gate(const SurfaceModel& model) {
  GateResult out;
  try {
    const PressureEstimate est =
        pressure(model, 0.5, 0.03, {10, 20, 30, 40, 50, 60});
    out.P_half = est.P;
    out.residual = est.residual;
    out.pass = est.P + est.residual < -0.1;
    out.margin = std::abs(est.P);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string("pressure gate: trapped set not hyperbolic (") +
                             e.what() + ")");
  }
  return out;
}

}  // namespace neckwave
