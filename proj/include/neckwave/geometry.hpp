#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "neckwave/util.hpp"

namespace neckwave {

// Curvature bump defining f'' on the neck.  shape must be smooth, even,
// nonnegative, with shape(0) = 1 and numerically negligible beyond the
// truncation radius r2 passed to build_model.
struct BumpSpec {
  std::function<double(double)> shape;
  double amplitude = 1.0;  // f''(0) after renormalisation

  static BumpSpec gaussian(double amplitude = 1.0, double width = 1.0);
};

// Point on the base surface.  theta_lift is the unreduced angle on the
// universal cover; reduce with reduced_theta() when a chart angle is needed.
struct BasePoint {
  double r = 0;
  double theta_lift = 0;
  double reduced_theta() const { return reduce_angle(theta_lift); }
};

// Warped product  ds^2 = dr^2 + f(r)^2 dtheta^2  with f even, f(0) = 1,
// f'' >= 0 supported in |r| <= r2, and f exactly affine outside.
class SurfaceModel {
 public:
  double f(double r) const;
  double fp(double r) const;   // f'
  double fpp(double r) const;  // f''

  double curvature(double r) const { return -fpp(r) / f(r); }
  double boundary_b(double r) const { return 1.0 / f(r); }

  double r2() const { return r2_; }
  double end_offset() const { return c_; }        // f(r) = slope*|r| + c outside
  double end_slope() const { return slope_; }     // 1 for Euclidean ends
  double b0() const { return b0_; }               // sup |K| = f''(0)
  double eps0() const { return eps0_; }
  double injectivity_radius() const { return kPi; }  // pi * f(0)

  // radius beyond which b < eps0/2 (boundary of the interaction region)
  double interaction_radius() const { return interaction_radius_; }

  friend SurfaceModel build_model(const BumpSpec& bump, double r2);

 private:
  double r2_ = 0, c_ = 0, slope_ = 1, b0_ = 0, eps0_ = 0, interaction_radius_ = 0;
  double dx_ = 0;
  std::vector<double> fpp_tab_, fp_tab_, f_tab_;  // on [0, r2]

  double hermite(const std::vector<double>& val, const std::vector<double>& der,
                 double r) const;
};

SurfaceModel build_model(const BumpSpec& bump, double r2);

struct ConvexityReport {
  bool pass = false;
  double worst_margin = 0;  // most positive b-double-dot among tested points
  int tested = 0;
  int skipped = 0;
};

// Hypothesis check: on sampled on-shell points with b <= eps0 and bdot ~ 0,
// the second flow derivative of b must be strictly negative.
ConvexityReport check_convexity_hypothesis(const SurfaceModel& model, int samples,
                                           uint64_t seed = 1);

// Flow derivatives of b along the geodesic flow at (r, p_r, p_theta), on-shell.
double b_dot(const SurfaceModel& model, double r, double pr, double ptheta);
double b_ddot(const SurfaceModel& model, double r, double pr, double ptheta);

}  // namespace neckwave
