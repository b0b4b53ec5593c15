#pragma once

#include <functional>
#include <vector>

#include "neckwave/wkb.hpp"

namespace neckwave {

// ---------------------------------------------------------------------------
// Sup-norm scaling across an h-list on a common chart.
// ---------------------------------------------------------------------------

struct SupnormRow {
  double h = 0;
  double norm = 0;        // finite-difference C^ell sup norm
  double normalized = 0;  // norm * h^ell
};

struct SupnormTable {
  int ell = 0;
  std::vector<SupnormRow> rows;
  double band = 0;  // max/min of the normalized column
};

SupnormTable supnorm_scan(const SurfaceModel& model,
                          const std::vector<const WaveField*>& fields, int ell);

// ---------------------------------------------------------------------------
// Small-scale mass in metric balls (metric-scaled ellipses in the chart,
// second-order accurate at radius << 1).
// ---------------------------------------------------------------------------

struct BallMassReport {
  BasePoint center;
  std::vector<double> radii;
  std::vector<double> masses;   // integral of |field|^2 (or |Re field|^2)
  std::vector<double> ratios;   // mass / (pi r^2)
  std::vector<bool> inside;     // ball fit in the grid with margin
};

// radii are c * h for each c in c_list; c below c_min is rejected
BallMassReport ball_mass(const SurfaceModel& model, const WaveField& field,
                         const BasePoint& center, const std::vector<double>& c_list,
                         bool use_real_part, double c_min = 10.0);

// ---------------------------------------------------------------------------
// Backward pairing: the set where one branch momentum is the reverse of
// another must be a thin union of curves.
// ---------------------------------------------------------------------------

struct PairingCensus {
  int pairs = 0;
  double worst_fraction = 0;  // near-backward set measure / chart measure
  int worst_components = 0;   // lattice components of the worst pair's set
  double tol = 0;
};

PairingCensus backward_pairing_census(const SurfaceModel& model, const Inventory& inv,
                                      double tol = 1e-3);

// ---------------------------------------------------------------------------
// Nodal set of Re(field) by marching squares with linear sub-cell crossings.
// ---------------------------------------------------------------------------

struct NodalReport {
  double h = 0;
  double length = 0;  // metric arclength of {Re = 0} inside the grid window
  long segments = 0;
};

NodalReport nodal_extract(const SurfaceModel& model, const WaveField& field);

// ---------------------------------------------------------------------------
// Integrated identity relating |Re E| in the bulk to |grad Re E| on the nodal
// set, in the factor-2 form coming from Lap|g| = sign(g) Lap g + 2|grad g| dS.
// ---------------------------------------------------------------------------

struct DszResult {
  double lhs = 0;  // integral of ((h^2 Lap_g + 1) f) |Re E|
  double rhs = 0;  // 2 h^2 * integral over the nodal set of f |grad Re E| dS
  double ratio = 0;
};

// f(r, theta) must be smooth and supported strictly inside the field window
DszResult dsz_check(const SurfaceModel& model, const WaveField& field,
                    const std::function<double(double, double)>& f);

// ---------------------------------------------------------------------------
// Non-stationary phase: I_h = integral of a e^{i phi / h} for sampled smooth
// 1-D data on a uniform grid.
// ---------------------------------------------------------------------------

struct DecayReport {
  std::vector<double> h_list;
  std::vector<double> magnitudes;  // |I_h|
  double slope = 0;                // log|I_h| vs log(1/h) slope, -p for decay h^p
  double C3 = 0;                   // fitted constant in |I_h| <= C3 h^3
};

// throws if the sampled phase has a stationary point inside the support of a
DecayReport oscillatory_decay(const std::vector<double>& a, const std::vector<double>& phi,
                              double x0, double dx, const std::vector<double>& h_list);

}  // namespace neckwave
