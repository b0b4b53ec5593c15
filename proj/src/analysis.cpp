#include "neckwave/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <queue>
#include <stdexcept>

#include "neckwave/util.hpp"

namespace neckwave {

namespace {

double cell_metric(const SurfaceModel& model, const WaveField& f) {
  const double fmax =
      std::max(model.f(f.r0), model.f(f.r0 + (f.nr - 1) * f.dr));
  return std::max(f.dr, fmax * f.dth);
}

// visits every marching-squares nodal segment of Re(field); segments carry
// chart endpoints (r, theta) with linear sub-cell crossings
template <class Visit>
void for_nodal_segments(const WaveField& fld, Visit visit) {
  const auto re = [&](int i, int j) { return fld.at(i, j).real(); };
  struct Pt {
    double r, th;
  };
  for (int i = 0; i + 1 < fld.nr; ++i) {
    const double r0 = fld.r0 + i * fld.dr, r1 = r0 + fld.dr;
    for (int j = 0; j + 1 < fld.nth; ++j) {
      const double t0 = fld.th0 + j * fld.dth, t1 = t0 + fld.dth;
      const double v00 = re(i, j), v10 = re(i + 1, j);
      const double v01 = re(i, j + 1), v11 = re(i + 1, j + 1);
      const bool s00 = v00 >= 0, s10 = v10 >= 0, s01 = v01 >= 0, s11 = v11 >= 0;
      if (s00 == s10 && s10 == s01 && s01 == s11) continue;

      // crossing points on the four edges, when present
      Pt px[4];
      int edge_of[4];
      int n = 0;
      const auto cross = [&](double va, double vb, int edge) {
        if ((va >= 0) == (vb >= 0)) return;
        const double t = va / (va - vb);
        switch (edge) {
          case 0: px[n] = {r0 + t * fld.dr, t0}; break;  // bottom, along r
          case 1: px[n] = {r0, t0 + t * fld.dth}; break; // left, along theta
          case 2: px[n] = {r1, t0 + t * fld.dth}; break; // right, along theta
          case 3: px[n] = {r0 + t * fld.dr, t1}; break;  // top, along r
        }
        edge_of[n++] = edge;
      };
      cross(v00, v10, 0);
      cross(v00, v01, 1);
      cross(v10, v11, 2);
      cross(v01, v11, 3);
      if (n == 2) {
        visit(px[0].r, px[0].th, px[1].r, px[1].th, i, j);
      } else if (n == 4) {
        // saddle: resolve by the sign of the cell centre
        const bool centre = (v00 + v10 + v01 + v11) >= 0;
        // edges listed in order 0,1,2,3; pair around the corners whose sign
        // differs from the connected diagonal
        if (centre == s00) {
          // segments isolate v10 (edges 0,2) and v01 (edges 1,3)
          visit(px[0].r, px[0].th, px[2].r, px[2].th, i, j);
          visit(px[1].r, px[1].th, px[3].r, px[3].th, i, j);
        } else {
          // segments isolate v00 (edges 0,1) and v11 (edges 2,3)
          visit(px[0].r, px[0].th, px[1].r, px[1].th, i, j);
          visit(px[2].r, px[2].th, px[3].r, px[3].th, i, j);
        }
      }
      (void)edge_of;
    }
  }
}

}  // namespace

SupnormTable supnorm_scan(const SurfaceModel& model,
                          const std::vector<const WaveField*>& fields, int ell) {
  if (ell < 0 || ell > 2) throw std::invalid_argument("supnorm_scan: ell must be 0, 1 or 2");
  if (fields.empty()) throw std::invalid_argument("supnorm_scan: no fields");
  SupnormTable tab;
  tab.ell = ell;
  for (const WaveField* fp : fields) {
    const WaveField& f = *fp;
    double norm = 0;
    if (ell == 0) {
      for (const auto& v : f.values) norm = std::max(norm, std::abs(v));
    } else {
      for (int i = 1; i + 1 < f.nr; ++i) {
        const double fr = model.f(f.r0 + i * f.dr);
        for (int j = 1; j + 1 < f.nth; ++j) {
          const auto u = [&](int a, int b) { return f.at(a, b); };
          if (ell == 1) {
            const std::complex<double> ur = (u(i + 1, j) - u(i - 1, j)) / (2 * f.dr);
            const std::complex<double> ut = (u(i, j + 1) - u(i, j - 1)) / (2 * f.dth);
            norm = std::max(norm, std::sqrt(std::norm(ur) + std::norm(ut) / (fr * fr)));
          } else {
            const std::complex<double> urr =
                (u(i + 1, j) - 2.0 * u(i, j) + u(i - 1, j)) / (f.dr * f.dr);
            const std::complex<double> utt =
                (u(i, j + 1) - 2.0 * u(i, j) + u(i, j - 1)) / (f.dth * f.dth);
            const std::complex<double> urt =
                (u(i + 1, j + 1) - u(i + 1, j - 1) - u(i - 1, j + 1) + u(i - 1, j - 1)) /
                (4 * f.dr * f.dth);
            const double f2 = fr * fr;
            norm = std::max(norm, std::sqrt(std::norm(urr) + 2 * std::norm(urt) / f2 +
                                            std::norm(utt) / (f2 * f2)));
          }
        }
      }
    }
    tab.rows.push_back({f.h, norm, norm * std::pow(f.h, ell)});
  }
  double lo = tab.rows[0].normalized, hi = lo;
  for (const auto& r : tab.rows) {
    lo = std::min(lo, r.normalized);
    hi = std::max(hi, r.normalized);
  }
  tab.band = hi / lo;
  return tab;
}

BallMassReport ball_mass(const SurfaceModel& model, const WaveField& field,
                         const BasePoint& center, const std::vector<double>& c_list,
                         bool use_real_part, double c_min) {
  BallMassReport rep;
  rep.center = center;
  const double fc = model.f(center.r);
  const double cell = cell_metric(model, field);
  const double r_lo = field.r0, r_hi = field.r0 + (field.nr - 1) * field.dr;
  const double t_lo = field.th0, t_hi = field.th0 + (field.nth - 1) * field.dth;
  for (double c : c_list) {
    if (c < c_min) throw std::invalid_argument("ball_mass: radius below C_min * h");
    const double rh = c * field.h;
    rep.radii.push_back(rh);
    const bool fits = center.r - rh >= r_lo + field.dr && center.r + rh <= r_hi - field.dr &&
                      center.theta_lift - rh / fc >= t_lo + field.dth &&
                      center.theta_lift + rh / fc <= t_hi - field.dth;
    rep.inside.push_back(fits);
    if (!fits) {
      rep.masses.push_back(0);
      rep.ratios.push_back(0);
      continue;
    }
    const int i0 = std::max(0, static_cast<int>((center.r - rh - field.r0) / field.dr));
    const int i1 = std::min(field.nr - 1,
                            static_cast<int>((center.r + rh - field.r0) / field.dr) + 1);
    double mass = 0;
    for (int i = i0; i <= i1; ++i) {
      const double r = field.r0 + i * field.dr;
      const double fr = model.f(r);
      for (int j = 0; j < field.nth; ++j) {
        const double th = field.th0 + j * field.dth;
        const double d = std::hypot(r - center.r, fc * (th - center.theta_lift));
        // fractional weight across the ball edge keeps the quadrature second
        // order in the cell size
        const double w = std::clamp(0.5 + (rh - d) / cell, 0.0, 1.0);
        if (w == 0) continue;
        const std::complex<double> v = field.at(i, j);
        const double dens = use_real_part ? v.real() * v.real() : std::norm(v);
        mass += w * dens * fr;
      }
    }
    mass *= field.dr * field.dth;
    rep.masses.push_back(mass);
    rep.ratios.push_back(mass / (kPi * rh * rh));
  }
  return rep;
}

PairingCensus backward_pairing_census(const SurfaceModel& model, const Inventory& inv,
                                      double tol) {
  std::vector<const BranchClass*> cls;
  for (const BranchClass& c : inv.classes)
    if (c.sheet.nr > 0) cls.push_back(&c);
  if (cls.size() < 2)
    throw std::invalid_argument("backward_pairing_census: need >= 2 classes with sheets");
  PairingCensus rep;
  rep.tol = tol;
  for (size_t a = 0; a < cls.size(); ++a)
    for (size_t b = a; b < cls.size(); ++b) {
      const LiftedGraph &ga = cls[a]->sheet, &gb = cls[b]->sheet;
      const int nr = std::min(ga.nr, gb.nr), nth = std::min(ga.nth, gb.nth);
      std::vector<char> hit(static_cast<size_t>(nr) * nth, 0);
      long count = 0;
      for (int i = 0; i < nr; ++i) {
        const double f = model.f(ga.r0 + i * ga.dr);
        for (int j = 0; j < nth; ++j) {
          const GraphNode &na = ga.at(i, j), &nb = gb.at(i, j);
          const double sr = na.xi_r + nb.xi_r;
          const double st = (na.xi_th + nb.xi_th) / f;
          if (std::hypot(sr, st) < tol) {
            hit[static_cast<size_t>(i) * nth + j] = 1;
            ++count;
          }
        }
      }
      ++rep.pairs;
      const double frac = static_cast<double>(count) / (static_cast<double>(nr) * nth);
      if (frac >= rep.worst_fraction) {
        rep.worst_fraction = frac;
        // count lattice components of the near-backward set
        int comps = 0;
        std::vector<char> seen(hit.size(), 0);
        for (size_t k = 0; k < hit.size(); ++k) {
          if (!hit[k] || seen[k]) continue;
          ++comps;
          std::queue<size_t> q;
          q.push(k);
          seen[k] = 1;
          while (!q.empty()) {
            const size_t cur = q.front();
            q.pop();
            const int i = static_cast<int>(cur / nth), j = static_cast<int>(cur % nth);
            const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
            for (int d = 0; d < 4; ++d) {
              const int ni = i + di[d], nj = j + dj[d];
              if (ni < 0 || ni >= nr || nj < 0 || nj >= nth) continue;
              const size_t nk = static_cast<size_t>(ni) * nth + nj;
              if (hit[nk] && !seen[nk]) {
                seen[nk] = 1;
                q.push(nk);
              }
            }
          }
        }
        rep.worst_components = comps;
      }
    }
  return rep;
}

NodalReport nodal_extract(const SurfaceModel& model, const WaveField& field) {
  NodalReport rep;
  rep.h = field.h;
  for_nodal_segments(field, [&](double r1, double t1, double r2, double t2, int, int) {
    const double fm = model.f(0.5 * (r1 + r2));
    rep.length += std::hypot(r2 - r1, fm * (t2 - t1));
    ++rep.segments;
  });
  return rep;
}

DszResult dsz_check(const SurfaceModel& model, const WaveField& field,
                    const std::function<double(double, double)>& f) {
  // sample the test function and insist it vanishes near the window boundary
  std::vector<double> fv(field.values.size());
  double fmax = 0;
  for (int i = 0; i < field.nr; ++i)
    for (int j = 0; j < field.nth; ++j) {
      fv[static_cast<size_t>(i) * field.nth + j] =
          f(field.r0 + i * field.dr, field.th0 + j * field.dth);
      fmax = std::max(fmax, std::abs(fv[static_cast<size_t>(i) * field.nth + j]));
    }
  for (int i = 0; i < field.nr; ++i)
    for (int j = 0; j < field.nth; ++j)
      if (i < 2 || i >= field.nr - 2 || j < 2 || j >= field.nth - 2)
        if (std::abs(fv[static_cast<size_t>(i) * field.nth + j]) > 1e-9 * fmax)
          throw std::invalid_argument("dsz_check: test function not supported inside the window");

  DszResult res;
  const double h2 = field.h * field.h;
  const auto F = [&](int i, int j) { return fv[static_cast<size_t>(i) * field.nth + j]; };
  for (int i = 1; i + 1 < field.nr; ++i) {
    const double r = field.r0 + i * field.dr;
    const double fr = model.f(r);
    const double g1 = model.fp(r) / fr;
    for (int j = 1; j + 1 < field.nth; ++j) {
      const double frr = (F(i + 1, j) - 2 * F(i, j) + F(i - 1, j)) / (field.dr * field.dr);
      const double fr1 = (F(i + 1, j) - F(i - 1, j)) / (2 * field.dr);
      const double ftt = (F(i, j + 1) - 2 * F(i, j) + F(i, j - 1)) / (field.dth * field.dth);
      const double lap = frr + g1 * fr1 + ftt / (fr * fr);
      res.lhs += (h2 * lap + F(i, j)) * std::abs(field.at(i, j).real()) * fr;
    }
  }
  res.lhs *= field.dr * field.dth;

  for_nodal_segments(field, [&](double r1, double t1, double r2, double t2, int i, int j) {
    const double rm = 0.5 * (r1 + r2), tm = 0.5 * (t1 + t2);
    const double fm = model.f(rm);
    const double ds = std::hypot(r2 - r1, fm * (t2 - t1));
    // cell-centre metric gradient of Re(field)
    const auto re = [&](int a, int b) { return field.at(a, b).real(); };
    const double gr =
        (re(i + 1, j) + re(i + 1, j + 1) - re(i, j) - re(i, j + 1)) / (2 * field.dr);
    const double gt =
        (re(i, j + 1) + re(i + 1, j + 1) - re(i, j) - re(i + 1, j)) / (2 * field.dth);
    res.rhs += f(rm, tm) * std::hypot(gr, gt / fm) * ds;
  });
  res.rhs *= 2 * h2;
  res.ratio = res.lhs / res.rhs;
  return res;
}

DecayReport oscillatory_decay(const std::vector<double>& a, const std::vector<double>& phi,
                              double x0, double dx, const std::vector<double>& h_list) {
  (void)x0;
  const size_t n = a.size();
  if (n < 4 || phi.size() != n)
    throw std::invalid_argument("oscillatory_decay: need matching sampled a and phi");

  // locate the support of a and refuse stationary phases inside it
  double amax = 0;
  for (double v : a) amax = std::max(amax, std::abs(v));
  size_t lo = n, hi = 0;
  for (size_t k = 0; k < n; ++k)
    if (std::abs(a[k]) > 1e-12 * amax) {
      lo = std::min(lo, k);
      hi = std::max(hi, k);
    }
  if (lo >= hi) throw std::invalid_argument("oscillatory_decay: amplitude vanishes");
  double dphi_min = 1e300;
  for (size_t k = std::max<size_t>(lo, 1); k <= std::min(hi, n - 2); ++k)
    dphi_min = std::min(dphi_min, std::abs((phi[k + 1] - phi[k - 1]) / (2 * dx)));
  if (dphi_min < 1e-3)
    throw std::domain_error("oscillatory_decay: stationary point inside the support");

  DecayReport rep;
  rep.h_list = h_list;
  std::vector<double> xs, ys;
  for (double h : h_list) {
    std::complex<double> I = 0;
    for (size_t k = 0; k < n; ++k) {
      const double w = (k == 0 || k == n - 1) ? 0.5 : 1.0;
      I += w * a[k] * std::polar(1.0, phi[k] / h);
    }
    const double mag = std::abs(I) * dx;
    rep.magnitudes.push_back(mag);
    rep.C3 = std::max(rep.C3, mag / (h * h * h));
    // slope is against log(1/h): a decay |I| ~ h^p reports -p
    xs.push_back(std::log(1.0 / h));
    ys.push_back(std::log(std::max(mag, 1e-300)));
  }
  rep.slope = h_list.size() >= 2 ? fit_line(xs, ys).slope : 0;
  return rep;
}

}  // namespace neckwave
