#pragma once

#include <complex>
#include <vector>

#include "neckwave/lagrangian.hpp"

namespace neckwave {

// Assembly grid in (r, theta), theta reduced.  Node spacing must resolve the
// oscillation: metric cell size <= h/10 in both directions.
struct GridSpec {
  double r_lo = 0, r_hi = 0;
  double th_lo = 0, th_hi = 0;
  int nr = 0, nth = 0;
};

struct WaveField {
  double h = 0;
  double r0 = 0, dr = 0, th0 = 0, dth = 0;
  int nr = 0, nth = 0;
  std::vector<std::complex<double>> values;  // row-major, index i*nth + j
  std::vector<int> class_m;                  // classes summed, assembly order
  std::vector<double> class_sup_amp;         // sup of each interpolated symbol
  const std::complex<double>& at(int i, int j) const { return values[i * nth + j]; }
};

// Sums a_m(x) exp(i phi_m(x)/h) over the sheeted classes of the inventory
// (optionally restricted to the winding numbers in class_filter).  Phases and
// amplitudes are interpolated from the sheets by separable cubic splines;
// complex exponentials are only formed at grid points.
WaveField assemble(const SurfaceModel& model, const Inventory& inv, double h,
                   const GridSpec& grid, const std::vector<int>* class_filter = nullptr);

// max over interior sheet nodes of |2<d phi, d a>_g + (Lap_g phi) a| / max|a|;
// the half-density amplitudes carried by the sheets must satisfy the transport
// equation up to finite-difference error
double transport_residual(const SurfaceModel& model, const LiftedGraph& sheet);

// ||(-h^2 Lap_g - 1) E||_inf / ||E||_inf on the interior (margin 5 cells),
// with a fourth-order metric Laplacian stencil so the discretization floor
// (cell/h)^4 stays below the h^2 physics term
double eigen_residual(const SurfaceModel& model, const WaveField& field);

// per-grid-point sum of squared class symbols, the position density of the
// semiclassical measure; same grid layout as the field values
std::vector<double> symbol_density(const SurfaceModel& model, const Inventory& inv,
                                   const GridSpec& grid);

}  // namespace neckwave
