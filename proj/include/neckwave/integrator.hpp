#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace neckwave {

// Adaptive Dormand-Prince 5(4).  RHS signature: void(const State&, State&).
// Optional post-step hook runs after each accepted step (shell projection).
template <size_t N>
class DormandPrince {
 public:
  using State = std::array<double, N>;
  using Rhs = std::function<void(const State&, State&)>;
  using PostStep = std::function<void(State&)>;

  DormandPrince(Rhs rhs, double tol) : rhs_(std::move(rhs)), tol_(tol) {}

  void set_post_step(PostStep p) { post_ = std::move(p); }

  // fixed-step integration: smooth in the initial data, for shooting solvers
  // where adaptive step-size jitter would put a noise floor under Newton
  void integrate_fixed(State& y, double t0, double t1, double h_target) const {
    const double T = t1 - t0;
    if (T == 0) return;
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(T) / h_target)));
    const double h = T / n;
    State out, err;
    for (int i = 0; i < n; ++i) {
      step(y, h, out, err);
      y = out;
      if (post_) post_(y);
    }
  }

  // integrates y from t0 to t1 (either direction), hitting t1 exactly
  void integrate(State& y, double t0, double t1) const {
    const double dir = (t1 >= t0) ? 1.0 : -1.0;
    double t = t0;
    double h = dir * std::min(0.1, std::abs(t1 - t0));
    if (h == 0) return;
    int rejects_in_a_row = 0;
    while (dir * (t1 - t) > 1e-14) {
      if (dir * (t + h - t1) > 0) h = t1 - t;
      State y_new, err;
      step(y, h, y_new, err);
      double err_norm = 0;
      for (size_t i = 0; i < N; ++i) {
        const double sc = tol_ * (1.0 + std::max(std::abs(y[i]), std::abs(y_new[i])));
        err_norm = std::max(err_norm, std::abs(err[i]) / sc);
      }
      if (err_norm <= 1.0) {
        t += h;
        y = y_new;
        if (post_) post_(y);
        rejects_in_a_row = 0;
        const double grow = 0.9 * std::pow(std::max(err_norm, 1e-10), -0.2);
        h *= std::min(5.0, grow);
      } else {
        h *= std::max(0.2, 0.9 * std::pow(err_norm, -0.2));
        if (++rejects_in_a_row > 60 || std::abs(h) < 1e-14)
          throw std::runtime_error("DormandPrince: step size underflow");
      }
    }
  }

 private:
  void step(const State& y, double h, State& out, State& err) const {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    (void)c2; (void)c3; (void)c4; (void)c5;

    State k1{}, k2{}, k3{}, k4{}, k5{}, k6{}, k7{}, tmp{};
    rhs_(y, k1);
    axpy(tmp, y, h, {{a21, 0, 0, 0, 0, 0}}, k1, k2, k3, k4, k5, k6);
    rhs_(tmp, k2);
    axpy(tmp, y, h, {{a31, a32, 0, 0, 0, 0}}, k1, k2, k3, k4, k5, k6);
    rhs_(tmp, k3);
    axpy(tmp, y, h, {{a41, a42, a43, 0, 0, 0}}, k1, k2, k3, k4, k5, k6);
    rhs_(tmp, k4);
    axpy(tmp, y, h, {{a51, a52, a53, a54, 0, 0}}, k1, k2, k3, k4, k5, k6);
    rhs_(tmp, k5);
    axpy(tmp, y, h, {{a61, a62, a63, a64, a65, 0}}, k1, k2, k3, k4, k5, k6);
    rhs_(tmp, k6);
    for (size_t i = 0; i < N; ++i)
      out[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    rhs_(out, k7);
    for (size_t i = 0; i < N; ++i)
      err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
  }

  static void axpy(State& out, const State& y, double h, const std::array<double, 6>& a,
                   const State& k1, const State& k2, const State& k3, const State& k4,
                   const State& k5, const State& k6) {
    for (size_t i = 0; i < N; ++i)
      out[i] = y[i] + h * (a[0] * k1[i] + a[1] * k2[i] + a[2] * k3[i] + a[3] * k4[i] +
                           a[4] * k5[i] + a[5] * k6[i]);
  }

  Rhs rhs_;
  double tol_;
  PostStep post_;
};

}  // namespace neckwave
