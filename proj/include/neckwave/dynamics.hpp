#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>

#include "neckwave/geometry.hpp"

namespace neckwave {

// Point of S*X in (r, theta, p_r, p_theta) coordinates.  theta is carried
// unreduced (universal-cover lift).  On-shell: p_r^2 + (p_theta/f)^2 = 1.
struct PhasePoint {
  double r = 0, theta = 0, pr = 0, ptheta = 0;

  BasePoint base() const { return {r, theta}; }
};

double shell_error(const SurfaceModel& model, const PhasePoint& rho);

// on-shell point at (r, theta) with momentum at angle psi from the radial
// direction in the orthonormal frame (psi = pi/2 is purely angular)
PhasePoint on_shell_point(const SurfaceModel& model, double r, double theta, double psi);

struct TangentFrame {
  PhasePoint base;
  Eigen::Matrix4d M;  // d Phi^t in (r, theta, p_r, p_theta)
};

enum class EscapeTag { DEPlus, DEMinus, Interaction };

struct EscapeClass {
  EscapeTag tag = EscapeTag::Interaction;
  std::optional<double> escape_time;  // for Interaction points
  bool tie = false;                   // bdot == 0: both escape directions apply
};

struct FlowOptions {
  double tol = 1e-12;
};

PhasePoint flow(const SurfaceModel& model, const PhasePoint& rho, double t,
                const FlowOptions& opt = {});

// flow with a callback after each accepted integrator step
PhasePoint flow_sampled(const SurfaceModel& model, const PhasePoint& rho, double t,
                        const std::function<void(double, const PhasePoint&)>& cb,
                        const FlowOptions& opt = {});

TangentFrame tangent_flow(const SurfaceModel& model, const PhasePoint& rho, double t,
                          const FlowOptions& opt = {});

EscapeClass classify(const SurfaceModel& model, const PhasePoint& rho, double t_max = 200.0);

// Unstable direction of the period map at a point of the trapped orbit,
// by power iteration of the transverse block of d Phi^{2 pi}.
Eigen::Vector4d unstable_direction(const SurfaceModel& model, const PhasePoint& rho_on_K);
Eigen::Vector4d stable_direction(const SurfaceModel& model, const PhasePoint& rho_on_K);

// Geodesic distance between base points on the universal cover (theta
// unreduced), by shooting.  Intended for separations below the injectivity
// radius; throws if the solve does not converge.
double cover_distance(const SurfaceModel& model, const BasePoint& a, const BasePoint& b);

// Sasaki-type adapted distance on S*X: base distance plus momentum mismatch
// in orthonormal components.  chart_only uses the chart-metric base estimate
// (adequate for small separations).
double adapted_distance(const SurfaceModel& model, const PhasePoint& a, const PhasePoint& b,
                        bool chart_only = false);

struct PairConvexityReport {
  bool applicable = false;
  double min_second_diff = 0;  // min centred second difference of d^2(t)
  double max_d2 = 0;
  bool pass = false;
};

PairConvexityReport geodesic_pair_convexity(const SurfaceModel& model, const PhasePoint& rho1,
                                            const PhasePoint& rho2, double T, int steps);

struct ExpansionEstimate {
  double mu = 0;      // worst fitted pair-growth exponent in the interaction region
  double lambda = 0;  // stable-manifold contraction rate at the neck
};

ExpansionEstimate expansion_constants(const SurfaceModel& model, int samples, double T,
                                      uint64_t seed = 1);

}  // namespace neckwave
