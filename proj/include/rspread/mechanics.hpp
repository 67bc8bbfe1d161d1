#pragma once

#include <cmath>

#include "rspread/model.hpp"

namespace rspread {

/// End-effector pose, task Jacobians and their time derivatives.
///
/// The end-effector frame sits at the midpoint of the contact face, at
/// distance L3 from joint 3; its orientation is the absolute face angle
/// theta = q1 + q2 + q3. The fourth column of every task Jacobian is
/// zero: the end-effector pose does not depend on the plank angle.
struct TaskKinematics {
  Vec2 p = Vec2::Zero();
  double theta = 0.0;
  Mat24 Jp = Mat24::Zero();
  RowVec4 Jtheta = RowVec4::Zero();
  Mat24 Jp_dot = Mat24::Zero();
  RowVec4 Jtheta_dot = RowVec4::Zero();

  Eigen::Matrix<double, 2, 3> Jp_rob() const { return Jp.leftCols<3>(); }
  Vec3 Jtheta_rob() const { return Jtheta.head<3>().transpose(); }
};

namespace detail {

struct ChainFrames {
  // cumulative link angles a_i = q1 + ... + qi and their trig values
  double a[3];
  Vec2 u[3];  // link direction (cos a_i, sin a_i)
  Vec2 n[3];  // link normal (-sin a_i, cos a_i)

  explicit ChainFrames(const Vec4& q) {
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) {
      acc += q[i];
      a[i] = acc;
      u[i] = Vec2(std::cos(acc), std::sin(acc));
      n[i] = Vec2(-std::sin(acc), std::cos(acc));
    }
  }
};

// cumulative angle rates adot_i = qdot1 + ... + qdoti
inline Vec3 cumulative_rates(const Vec4& qdot) {
  return Vec3(qdot[0], qdot[0] + qdot[1], qdot[0] + qdot[1] + qdot[2]);
}

// Position Jacobian (w.r.t. q1..q3) of a point rigidly attached to link
// `body` at arc position c_local along the chain: the point is
// sum_{j<body} L_j u_j + rho u_body. Column k collects rho_j n_j over
// all segments j >= k.
inline Eigen::Matrix<double, 2, 3> point_jacobian(const ChainFrames& f,
                                                  const Vec3& lengths,
                                                  int body, double rho) {
  Eigen::Matrix<double, 2, 3> J = Eigen::Matrix<double, 2, 3>::Zero();
  for (int j = 0; j < body; ++j)
    for (int k = 0; k <= j; ++k) J.col(k) += lengths[j] * f.n[j];
  for (int k = 0; k <= body; ++k) J.col(k) += rho * f.n[body];
  return J;
}

// d/dt (point_jacobian) contracted with qdot: the centripetal part of
// the point acceleration, -sum_j rho_j adot_j^2 u_j.
inline Vec2 point_jacobian_dot_qdot(const ChainFrames& f, const Vec3& adot,
                                    const Vec3& lengths, int body,
                                    double rho) {
  Vec2 v = Vec2::Zero();
  for (int j = 0; j < body; ++j)
    v -= lengths[j] * adot[j] * adot[j] * f.u[j];
  v -= rho * adot[body] * adot[body] * f.u[body];
  return v;
}

}  // namespace detail

inline TaskKinematics forward_kinematics(const ModelParams& params,
                                         const Vec4& q) {
  detail::ChainFrames f(q);
  const Vec3& L = params.link_lengths;
  TaskKinematics kin;
  kin.p = L[0] * f.u[0] + L[1] * f.u[1] + L[2] * f.u[2];
  kin.theta = f.a[2];
  return kin;
}

inline TaskKinematics task_jacobians(const ModelParams& params, const Vec4& q,
                                     const Vec4& qdot) {
  detail::ChainFrames f(q);
  const Vec3& L = params.link_lengths;
  const Vec3 adot = detail::cumulative_rates(qdot);

  TaskKinematics kin = forward_kinematics(params, q);
  for (int k = 0; k < 3; ++k) {
    for (int i = k; i < 3; ++i) {
      kin.Jp.col(k) += L[i] * f.n[i];
      kin.Jp_dot.col(k) -= L[i] * adot[i] * f.u[i];
    }
    kin.Jtheta[k] = 1.0;
  }
  return kin;
}

/// Symmetric positive definite inertia matrix. The plank couples to the
/// arm only through contact forces, so rows/columns mixing the two are
/// identically zero and M(4,4) = I_o4.
inline Mat4 mass_matrix(const ModelParams& params, const Vec4& q) {
  detail::ChainFrames f(q);
  const Vec3& L = params.link_lengths;

  Mat3 Mrob = Mat3::Zero();
  for (int i = 0; i < 3; ++i) {
    auto Jc = detail::point_jacobian(f, L, i, 0.5 * L[i]);
    Mrob += params.link_masses[i] * Jc.transpose() * Jc;
    // planar angular Jacobian of body i is [1 .. 1 0 ..] (i+1 ones)
    for (int r = 0; r <= i; ++r)
      for (int c = 0; c <= i; ++c) Mrob(r, c) += params.link_inertias[i];
  }

  Mat4 M = Mat4::Zero();
  M.topLeftCorner<3, 3>() = Mrob;
  M(3, 3) = params.plank_inertia_hinge;
  return M;
}

/// Gravity, centrifugal and Coriolis vector h(q, qdot), including the
/// plank hinge spring-damper in row 4, such that M qddot + h = S tau +
/// J_N^T lambda. The hinge spring is measured from the unloaded angle.
inline Vec4 bias_vector(const ModelParams& params, const State& state) {
  detail::ChainFrames f(state.q);
  const Vec3& L = params.link_lengths;
  const Vec3 adot = detail::cumulative_rates(state.qdot);

  Vec3 h_rob = Vec3::Zero();
  for (int i = 0; i < 3; ++i) {
    auto Jc = detail::point_jacobian(f, L, i, 0.5 * L[i]);
    Vec2 cc = detail::point_jacobian_dot_qdot(f, adot, L, i, 0.5 * L[i]);
    h_rob += params.link_masses[i] *
             (Jc.transpose() * (cc + Vec2(0.0, params.gravity)));
  }

  Vec4 h;
  h.head<3>() = h_rob;
  h[3] = params.hinge_stiffness * (state.q[3] - params.plank_rest_angle) +
         params.hinge_damping * state.qdot[3];
  return h;
}

/// Constant selection matrix S = [I3; 0]: torques act on the three
/// robot joints, the plank is unactuated.
inline Mat43 actuation_matrix() {
  Mat43 S = Mat43::Zero();
  S.topRows<3>() = Mat3::Identity();
  return S;
}

inline double kinetic_energy(const ModelParams& params, const State& state) {
  return 0.5 * state.qdot.dot(mass_matrix(params, state.q) * state.qdot);
}

/// Gravitational plus hinge-spring potential, used by the energy audits.
inline double potential_energy(const ModelParams& params, const Vec4& q) {
  detail::ChainFrames f(q);
  const Vec3& L = params.link_lengths;
  double y_prev = 0.0, V = 0.0;
  for (int i = 0; i < 3; ++i) {
    double y_com = y_prev + 0.5 * L[i] * f.u[i][1];
    V += params.link_masses[i] * params.gravity * y_com;
    y_prev += L[i] * f.u[i][1];
  }
  double dq4 = q[3] - params.plank_rest_angle;
  return V + 0.5 * params.hinge_stiffness * dq4 * dq4;
}

}  // namespace rspread
