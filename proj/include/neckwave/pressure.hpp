#pragma once

#include <vector>

#include "neckwave/dynamics.hpp"

namespace neckwave {

struct PressureEstimate {
  double s = 0, eps = 0;
  std::vector<double> t_list, logZ;
  double P = 0;         // fitted slope of logZ over the top half of t_list
  double residual = 0;  // rms residual of that fit
};

// log det of d Phi^t restricted to the weak-unstable subspace at a point of
// the trapped orbit
double unstable_jacobian(const SurfaceModel& model, const PhasePoint& rho_on_K, double t);

// Topological pressure from (eps, t)-separated subsets of a trapped-set
// sample cloud.  The default cloud is the neck circle in both orientations.
PressureEstimate pressure(const SurfaceModel& model, double s, double eps,
                          const std::vector<double>& t_list);

PressureEstimate pressure_from_cloud(const SurfaceModel& model,
                                     const std::vector<PhasePoint>& cloud, double s, double eps,
                                     const std::vector<double>& t_list, int threads = 0);

std::vector<PhasePoint> neck_orbit_cloud(double spacing);

struct GateResult {
  bool pass = false;
  double margin = 0;
  double P_half = 0;
  double residual = 0;
};

// Hypothesis gate: pressure at s = 1/2 must be estimated below -0.1 with room
// for the fit residual.  Throws if the trapped set is not hyperbolic.
GateResult hypothesis_gate(const SurfaceModel& model);

}  // namespace neckwave
