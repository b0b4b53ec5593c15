#include "neckwave/wkb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "neckwave/util.hpp"

namespace neckwave {

namespace {

struct GridAxes {
  std::vector<double> r, th;
};

GridAxes grid_axes(const GridSpec& grid) {
  GridAxes ax;
  ax.r.resize(grid.nr);
  ax.th.resize(grid.nth);
  const double dr = (grid.r_hi - grid.r_lo) / (grid.nr - 1);
  const double dth = (grid.th_hi - grid.th_lo) / (grid.nth - 1);
  for (int i = 0; i < grid.nr; ++i) ax.r[i] = grid.r_lo + i * dr;
  for (int j = 0; j < grid.nth; ++j) ax.th[j] = grid.th_lo + j * dth;
  return ax;
}

void check_coverage(const LiftedGraph& g, const GridSpec& grid, int m) {
  const double shift = kTwoPi * m;
  const double eps = 1e-9;
  const bool ok = grid.r_lo >= g.r0 - eps && grid.r_hi <= g.r0 + (g.nr - 1) * g.dr + eps &&
                  grid.th_lo + shift >= g.th0 - eps &&
                  grid.th_hi + shift <= g.th0 + (g.nth - 1) * g.dth + eps;
  if (!ok) throw std::invalid_argument("assemble: grid leaves the attached sheet of a class");
}

// separable cubic interpolation of one node field from the sheet to the grid;
// grid theta is shifted to the sheet's cover strip by the caller
template <class Pick>
std::vector<double> interp_field(const LiftedGraph& g, const std::vector<double>& rg,
                                 const std::vector<double>& thg, double th_shift, Pick pick,
                                 int threads) {
  const int nrg = static_cast<int>(rg.size());
  const int nthg = static_cast<int>(thg.size());
  std::vector<double> tmp(static_cast<size_t>(g.nr) * nthg);
  parallel_for(
      g.nr,
      [&](size_t i) {
        std::vector<double> row(g.nth);
        for (int j = 0; j < g.nth; ++j) row[j] = pick(g.at(static_cast<int>(i), j));
        const Spline1D s(g.th0, g.dth, std::move(row));
        for (int j = 0; j < nthg; ++j) tmp[i * nthg + j] = s(thg[j] + th_shift);
      },
      threads);
  std::vector<double> out(static_cast<size_t>(nrg) * nthg);
  parallel_for(
      nthg,
      [&](size_t j) {
        std::vector<double> col(g.nr);
        for (int i = 0; i < g.nr; ++i) col[i] = tmp[static_cast<size_t>(i) * nthg + j];
        const Spline1D s(g.r0, g.dr, std::move(col));
        for (int i = 0; i < nrg; ++i) out[static_cast<size_t>(i) * nthg + j] = s(rg[i]);
      },
      threads);
  return out;
}

double window_f_max(const SurfaceModel& model, double r_lo, double r_hi) {
  // f is even and increasing in |r|, so the max sits at an endpoint
  return std::max(model.f(r_lo), model.f(r_hi));
}

void validate_grid(const SurfaceModel& model, double h, const GridSpec& grid) {
  if (grid.nr < 4 || grid.nth < 4) throw std::invalid_argument("assemble: grid too small");
  if (!(h > 0)) throw std::invalid_argument("assemble: h must be positive");
  if (!(grid.r_hi > grid.r_lo) || !(grid.th_hi > grid.th_lo))
    throw std::invalid_argument("assemble: empty grid rectangle");
  const double dr = (grid.r_hi - grid.r_lo) / (grid.nr - 1);
  const double dth = (grid.th_hi - grid.th_lo) / (grid.nth - 1);
  const double fmax = window_f_max(model, grid.r_lo, grid.r_hi);
  const double cell = std::max(dr, fmax * dth);
  if (cell > h / 10 * (1 + 1e-12))
    throw std::invalid_argument(
        "assemble: grid does not resolve the oscillation (metric cell size must be <= h/10)");
}

}  // namespace

WaveField assemble(const SurfaceModel& model, const Inventory& inv, double h,
                   const GridSpec& grid, const std::vector<int>* class_filter) {
  validate_grid(model, h, grid);

  WaveField fld;
  fld.h = h;
  fld.r0 = grid.r_lo;
  fld.th0 = grid.th_lo;
  fld.nr = grid.nr;
  fld.nth = grid.nth;
  fld.dr = (grid.r_hi - grid.r_lo) / (grid.nr - 1);
  fld.dth = (grid.th_hi - grid.th_lo) / (grid.nth - 1);
  fld.values.assign(static_cast<size_t>(grid.nr) * grid.nth, {0.0, 0.0});

  const GridAxes ax = grid_axes(grid);
  const double inv_h = 1.0 / h;

  // inventory classes are already in deterministic (n_first, m) order; the
  // per-point summation below follows that order exactly
  for (const BranchClass& cls : inv.classes) {
    if (cls.sheet.nr == 0) continue;
    if (class_filter &&
        std::find(class_filter->begin(), class_filter->end(), cls.m) == class_filter->end())
      continue;
    check_coverage(cls.sheet, grid, cls.m);
    const double shift = kTwoPi * cls.m;
    const auto phi = interp_field(cls.sheet, ax.r, ax.th, shift,
                                  [](const GraphNode& n) { return n.phi; }, 0);
    const auto amp = interp_field(cls.sheet, ax.r, ax.th, shift,
                                  [](const GraphNode& n) { return n.amp; }, 0);
    double sup = 0;
    for (size_t k = 0; k < fld.values.size(); ++k) {
      fld.values[k] += std::polar(amp[k], phi[k] * inv_h);
      sup = std::max(sup, std::abs(amp[k]));
    }
    fld.class_m.push_back(cls.m);
    fld.class_sup_amp.push_back(sup);
  }
  return fld;
}

std::vector<double> symbol_density(const SurfaceModel& model, const Inventory& inv,
                                   const GridSpec& grid) {
  if (grid.nr < 4 || grid.nth < 4)
    throw std::invalid_argument("symbol_density: grid too small");
  const GridAxes ax = grid_axes(grid);
  std::vector<double> dens(static_cast<size_t>(grid.nr) * grid.nth, 0.0);
  for (const BranchClass& cls : inv.classes) {
    if (cls.sheet.nr == 0) continue;
    check_coverage(cls.sheet, grid, cls.m);
    const auto amp = interp_field(cls.sheet, ax.r, ax.th, kTwoPi * cls.m,
                                  [](const GraphNode& n) { return n.amp; }, 0);
    for (size_t k = 0; k < dens.size(); ++k) dens[k] += amp[k] * amp[k];
  }
  (void)model;
  return dens;
}

double transport_residual(const SurfaceModel& model, const LiftedGraph& sheet) {
  if (sheet.nr < 3 || sheet.nth < 3)
    throw std::invalid_argument("transport_residual: sheet too small");
  double worst = 0, amp_max = 0;
  for (int i = 0; i < sheet.nr; ++i)
    for (int j = 0; j < sheet.nth; ++j) amp_max = std::max(amp_max, sheet.at(i, j).amp);
  for (int i = 1; i + 1 < sheet.nr; ++i) {
    const double r = sheet.r0 + i * sheet.dr;
    const double f = model.f(r);
    const double fp = model.fp(r);
    for (int j = 1; j + 1 < sheet.nth; ++j) {
      const GraphNode& c = sheet.at(i, j);
      const double a_r = (sheet.at(i + 1, j).amp - sheet.at(i - 1, j).amp) / (2 * sheet.dr);
      const double a_th = (sheet.at(i, j + 1).amp - sheet.at(i, j - 1).amp) / (2 * sheet.dth);
      const double xi_r_r =
          (sheet.at(i + 1, j).xi_r - sheet.at(i - 1, j).xi_r) / (2 * sheet.dr);
      const double xi_th_th =
          (sheet.at(i, j + 1).xi_th - sheet.at(i, j - 1).xi_th) / (2 * sheet.dth);
      const double lap_phi = xi_r_r + fp / f * c.xi_r + xi_th_th / (f * f);
      const double res =
          std::abs(2 * (c.xi_r * a_r + c.xi_th * a_th / (f * f)) + lap_phi * c.amp);
      worst = std::max(worst, res);
    }
  }
  return worst / amp_max;
}

double eigen_residual(const SurfaceModel& model, const WaveField& field) {
  const int margin = 5;
  if (field.nr < 2 * margin + 3 || field.nth < 2 * margin + 3)
    throw std::invalid_argument("eigen_residual: interior margin of 5 cells does not fit");
  const auto u = [&](int i, int j) { return field.at(i, j); };
  const double h2 = field.h * field.h;
  const double wr2 = 1.0 / (12 * field.dr * field.dr);
  const double wr1 = 1.0 / (12 * field.dr);
  const double wt2 = 1.0 / (12 * field.dth * field.dth);
  double worst = 0, umax = 0;
  for (int i = margin; i < field.nr - margin; ++i) {
    const double r = field.r0 + i * field.dr;
    const double f = model.f(r);
    const double g = model.fp(r) / f;
    const double inv_f2 = 1.0 / (f * f);
    for (int j = margin; j < field.nth - margin; ++j) {
      const std::complex<double> u_rr =
          (-u(i - 2, j) + 16.0 * u(i - 1, j) - 30.0 * u(i, j) + 16.0 * u(i + 1, j) -
           u(i + 2, j)) *
          wr2;
      const std::complex<double> u_r =
          (u(i - 2, j) - 8.0 * u(i - 1, j) + 8.0 * u(i + 1, j) - u(i + 2, j)) * wr1;
      const std::complex<double> u_tt =
          (-u(i, j - 2) + 16.0 * u(i, j - 1) - 30.0 * u(i, j) + 16.0 * u(i, j + 1) -
           u(i, j + 2)) *
          wt2;
      const std::complex<double> lap = u_rr + g * u_r + inv_f2 * u_tt;
      worst = std::max(worst, std::abs(-h2 * lap - u(i, j)));
      umax = std::max(umax, std::abs(u(i, j)));
    }
  }
  return worst / umax;
}

}  // namespace neckwave
