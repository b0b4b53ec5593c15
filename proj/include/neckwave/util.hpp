#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace neckwave {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

inline double reduce_angle(double theta) {
  double t = std::fmod(theta, kTwoPi);
  if (t < 0) t += kTwoPi;
  return t;
}

// Least-squares fit y = a + b x.  Returns {a, b, rms residual}.
struct LinearFit {
  double intercept = 0, slope = 0, residual = 0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_line: need >= 2 points");
  const size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i]; sy += y[i]; sxx += x[i] * x[i]; sxy += x[i] * y[i];
  }
  const double det = n * sxx - sx * sx;
  if (std::abs(det) < 1e-300) throw std::invalid_argument("fit_line: degenerate abscissae");
  LinearFit out;
  out.slope = (n * sxy - sx * sy) / det;
  out.intercept = (sy - out.slope * sx) / n;
  double ss = 0;
  for (size_t i = 0; i < n; ++i) {
    const double e = y[i] - out.intercept - out.slope * x[i];
    ss += e * e;
  }
  out.residual = std::sqrt(ss / n);
  return out;
}

// Deterministic parallel map: out[i] = fn(i).  Results are written by index,
// so the output is independent of the thread schedule.
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn, int threads = 0) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads <= 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

// xoshiro-style splitmix for reproducible cross-platform sampling
struct SplitMix64 {
  uint64_t state;
  explicit SplitMix64(uint64_t seed) : state(seed) {}
  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return (next() >> 11) * 0x1.0p-53; }  // [0,1)
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
};

// Natural cubic spline with not-a-knot boundary, uniform abscissae.
class Spline1D {
 public:
  Spline1D() = default;
  Spline1D(double x0, double dx, std::vector<double> y) : x0_(x0), dx_(dx), y_(std::move(y)) {
    const size_t n = y_.size();
    if (n < 4) throw std::invalid_argument("Spline1D: need >= 4 nodes");
    m_.assign(n, 0.0);
    const double h2 = dx_ * dx_;
    // not-a-knot collapses the first and last interior rows to explicit values
    m_[1] = (y_[0] - 2 * y_[1] + y_[2]) / h2;
    m_[n - 2] = (y_[n - 3] - 2 * y_[n - 2] + y_[n - 1]) / h2;
    if (n > 4) {
      const size_t k = n - 4;  // unknowns m_2 .. m_{n-3}
      std::vector<double> diag(k, 4.0), rhs(k);
      for (size_t i = 0; i < k; ++i)
        rhs[i] = 6.0 * (y_[i + 1] - 2 * y_[i + 2] + y_[i + 3]) / h2;
      rhs[0] -= m_[1];
      rhs[k - 1] -= m_[n - 2];
      for (size_t i = 1; i < k; ++i) {  // Thomas, unit off-diagonals
        const double w = 1.0 / diag[i - 1];
        diag[i] -= w;
        rhs[i] -= w * rhs[i - 1];
      }
      m_[k + 1] = rhs[k - 1] / diag[k - 1];
      for (size_t i = k - 1; i-- > 0;)
        m_[i + 2] = (rhs[i] - m_[i + 3]) / diag[i];
    }
    m_[0] = 2 * m_[1] - m_[2];
    m_[n - 1] = 2 * m_[n - 2] - m_[n - 3];
  }

  double operator()(double x) const {
    const size_t n = y_.size();
    double u = (x - x0_) / dx_;
    long i = static_cast<long>(std::floor(u));
    i = std::clamp<long>(i, 0, static_cast<long>(n) - 2);
    const double t = u - i;
    const double a = y_[i], b = y_[i + 1], ma = m_[i], mb = m_[i + 1];
    const double h2 = dx_ * dx_;
    return a * (1 - t) + b * t +
           h2 / 6.0 * ((std::pow(1 - t, 3) - (1 - t)) * ma + (t * t * t - t) * mb);
  }

 private:
  double x0_ = 0, dx_ = 1;
  std::vector<double> y_, m_;  // values and second derivatives at nodes
};

}  // namespace neckwave
