#pragma once

#include <Eigen/Dense>

#include <array>

namespace rspread {

/// Quintic polynomial in t with prescribed position, velocity and
/// acceleration at both segment boundaries. Evaluation is valid for any
/// t, not just [t0, t1]: outside the segment the polynomial simply
/// continues, which is exactly the extension semantics the references
/// need.
class Quintic {
 public:
  Quintic() { coef_.fill(0.0); }

  Quintic(double t0, double t1, double x0, double v0, double a0, double x1,
          double v1, double a1)
      : t0_(t0) {
    const double T = t1 - t0;
    coef_[0] = x0;
    coef_[1] = v0;
    coef_[2] = 0.5 * a0;
    // remaining coefficients from the boundary conditions at t1
    Eigen::Matrix3d A;
    const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
    A << T3, T4, T5,
        3 * T2, 4 * T3, 5 * T4,
        6 * T, 12 * T2, 20 * T3;
    Eigen::Vector3d b(x1 - coef_[0] - coef_[1] * T - coef_[2] * T2,
                      v1 - coef_[1] - 2 * coef_[2] * T,
                      a1 - 2 * coef_[2]);
    Eigen::Vector3d c = A.partialPivLu().solve(b);
    coef_[3] = c[0];
    coef_[4] = c[1];
    coef_[5] = c[2];
  }

  double value(double t) const {
    const double s = t - t0_;
    double acc = 0.0;
    for (int k = 5; k >= 0; --k) acc = acc * s + coef_[k];
    return acc;
  }

  double velocity(double t) const {
    const double s = t - t0_;
    double acc = 0.0;
    for (int k = 5; k >= 1; --k) acc = acc * s + k * coef_[k];
    return acc;
  }

  double acceleration(double t) const {
    const double s = t - t0_;
    double acc = 0.0;
    for (int k = 5; k >= 2; --k) acc = acc * s + k * (k - 1) * coef_[k];
    return acc;
  }

 private:
  double t0_ = 0.0;
  std::array<double, 6> coef_;
};

}  // namespace rspread
