#include "neckwave/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace neckwave {

BumpSpec BumpSpec::gaussian(double amplitude, double width) {
  BumpSpec spec;
  const double w2 = width * width;
  spec.shape = [w2](double r) { return std::exp(-kPi * r * r / (4.0 * w2)); };
  spec.amplitude = amplitude;
  return spec;
}

namespace {
constexpr int kTabIntervals = 8192;
}

double SurfaceModel::hermite(const std::vector<double>& val, const std::vector<double>& der,
                             double r) const {
  const double u = r / dx_;
  long i = static_cast<long>(std::floor(u));
  i = std::clamp<long>(i, 0, kTabIntervals - 1);
  const double t = u - i;
  const double y0 = val[i], y1 = val[i + 1];
  const double d0 = der[i] * dx_, d1 = der[i + 1] * dx_;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * d0 +
         (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * d1;
}

double SurfaceModel::fpp(double r) const {
  r = std::abs(r);
  if (r >= r2_) return 0.0;
  const double u = r / dx_;
  long i = static_cast<long>(std::floor(u));
  i = std::clamp<long>(i, 0, kTabIntervals - 1);
  const double t = u - i;
  // f'' varies slowly; cubic through tabulated values via Hermite with
  // finite-difference slopes
  const double d0 = (i > 0 ? (fpp_tab_[i + 1] - fpp_tab_[i - 1]) / 2 : fpp_tab_[1] - fpp_tab_[0]);
  const double d1 = (i + 2 <= kTabIntervals ? (fpp_tab_[std::min<long>(i + 2, kTabIntervals)] - fpp_tab_[i]) / 2
                                            : fpp_tab_[i + 1] - fpp_tab_[i]);
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * fpp_tab_[i] + (t3 - 2 * t2 + t) * d0 +
         (-2 * t3 + 3 * t2) * fpp_tab_[i + 1] + (t3 - t2) * d1;
}

double SurfaceModel::fp(double r) const {
  const double a = std::abs(r);
  const double sign = (r < 0 ? -1.0 : 1.0);
  if (a >= r2_) return sign * slope_;
  return sign * hermite(fp_tab_, fpp_tab_, a);
}

double SurfaceModel::f(double r) const {
  const double a = std::abs(r);
  if (a >= r2_) return slope_ * a + c_;
  return hermite(f_tab_, fp_tab_, a);
}

SurfaceModel build_model(const BumpSpec& bump, double r2) {
  if (!bump.shape) throw std::invalid_argument("build_model: bump shape not set");
  if (r2 <= 0) throw std::invalid_argument("build_model: r2 must be positive");
  if (bump.amplitude < 0) throw std::invalid_argument("build_model: amplitude must be nonnegative");
  if (std::abs(bump.shape(0.0) - 1.0) > 1e-10)
    throw std::invalid_argument("build_model: bump shape must equal 1 at r = 0");

  // evenness / nonnegativity sampled over the support
  for (int i = 0; i <= 256; ++i) {
    const double r = r2 * i / 256.0;
    const double sp = bump.shape(r), sm = bump.shape(-r);
    if (sp < 0 || sm < 0) throw std::invalid_argument("build_model: bump shape must be nonnegative");
    if (std::abs(sp - sm) > 1e-12) throw std::invalid_argument("build_model: bump shape must be even");
  }

  SurfaceModel m;
  m.r2_ = r2;
  m.dx_ = r2 / kTabIntervals;

  // renormalise so that the truncated integral of f'' equals the amplitude
  // (slope of f at r2); amplitude 1 makes the ends exactly Euclidean
  double integral = 0;  // composite Simpson over the table cells
  {
    double acc = 0;
    for (int i = 0; i < kTabIntervals; ++i) {
      const double a = i * m.dx_, b = a + m.dx_;
      acc += m.dx_ / 6.0 * (bump.shape(a) + 4.0 * bump.shape(0.5 * (a + b)) + bump.shape(b));
    }
    integral = acc;
  }
  if (integral <= 0) throw std::invalid_argument("build_model: bump integrates to zero");
  const double scale = bump.amplitude / integral;
  if (scale * bump.shape(r2) > 1e-5)
    throw std::invalid_argument("build_model: truncation discontinuity in f'' exceeds 1e-5");

  m.fpp_tab_.resize(kTabIntervals + 1);
  m.fp_tab_.resize(kTabIntervals + 1);
  m.f_tab_.resize(kTabIntervals + 1);
  for (int i = 0; i <= kTabIntervals; ++i) m.fpp_tab_[i] = scale * bump.shape(i * m.dx_);

  m.fp_tab_[0] = 0;
  for (int i = 0; i < kTabIntervals; ++i) {
    const double a = i * m.dx_, b = a + m.dx_;
    m.fp_tab_[i + 1] = m.fp_tab_[i] +
        scale * m.dx_ / 6.0 * (bump.shape(a) + 4.0 * bump.shape(0.5 * (a + b)) + bump.shape(b));
  }
  m.f_tab_[0] = 1.0;
  for (int i = 0; i < kTabIntervals; ++i) {
    const double a = i * m.dx_, b = a + m.dx_;
    // Simpson on f' needs the midpoint of f'; integrate the half cell
    const double half = scale * 0.5 * m.dx_ / 6.0 *
        (bump.shape(a) + 4.0 * bump.shape(a + 0.25 * m.dx_) + bump.shape(a + 0.5 * m.dx_));
    const double fp_mid = m.fp_tab_[i] + half;
    m.f_tab_[i + 1] = m.f_tab_[i] + m.dx_ / 6.0 * (m.fp_tab_[i] + 4.0 * fp_mid + m.fp_tab_[i + 1]);
  }

  m.slope_ = m.fp_tab_[kTabIntervals];
  m.c_ = m.f_tab_[kTabIntervals] - m.slope_ * r2;
  m.b0_ = 0;
  for (int i = 0; i <= kTabIntervals; ++i)
    m.b0_ = std::max(m.b0_, m.fpp_tab_[i] / m.f_tab_[i]);
  m.eps0_ = 0.9 / m.f_tab_[kTabIntervals];
  // f(r) = 2/eps0 marks the edge of the interaction region (a flat-neck
  // cylinder never reaches it)
  m.interaction_radius_ =
      m.slope_ > 0 ? (2.0 / m.eps0_ - m.c_) / m.slope_ : std::numeric_limits<double>::infinity();
  return m;
}

double b_dot(const SurfaceModel& model, double r, double pr, double /*ptheta*/) {
  const double f = model.f(r);
  return -model.fp(r) * pr / (f * f);
}

double b_ddot(const SurfaceModel& model, double r, double pr, double ptheta) {
  const double f = model.f(r), fp = model.fp(r), fpp = model.fpp(r);
  const double pr_dot = fp * ptheta * ptheta / (f * f * f);
  return -(fpp * pr * pr + fp * pr_dot) / (f * f) + 2.0 * fp * fp * pr * pr / (f * f * f);
}

ConvexityReport check_convexity_hypothesis(const SurfaceModel& model, int samples,
                                           uint64_t seed) {
  if (samples < 100) throw std::invalid_argument("check_convexity_hypothesis: samples >= 100");
  ConvexityReport rep;
  rep.worst_margin = -1e300;
  SplitMix64 rng(seed);

  // b <= eps0  <=>  f(r) >= 1/eps0
  const double r_lo = (1.0 / model.eps0() - model.end_offset()) / model.end_slope();
  for (int i = 0; i < samples; ++i) {
    const double r = (rng.uniform() < 0.5 ? 1 : -1) * rng.uniform(r_lo, r_lo + 10.0);
    // half the samples are forced to the purely angular direction, where
    // bdot vanishes identically; the rest will mostly be skipped
    double psi = (i % 2 == 0) ? kPi / 2 : rng.uniform(0, kTwoPi);
    const double pr = std::cos(psi);
    const double ptheta = model.f(r) * std::sin(psi);
    if (std::abs(b_dot(model, r, pr, ptheta)) >= 1e-8) {
      ++rep.skipped;
      continue;
    }
    const double dd = b_ddot(model, r, pr, ptheta);
    rep.worst_margin = std::max(rep.worst_margin, dd);
    ++rep.tested;
  }
  rep.pass = rep.tested > 0 && rep.worst_margin < 0;
  if (!rep.pass)
    throw std::runtime_error("check_convexity_hypothesis: convexity violated (bad eps0?)");
  return rep;
}

}  // namespace neckwave
