#pragma once

#include <cmath>
#include <vector>

#include "rspread/mechanics.hpp"
#include "rspread/model.hpp"

namespace rspread {

/// Gap functions, contact Jacobian rows and contact corner positions of
/// the two end-effector face corners against the plank top surface.
///
/// Corner i sits at p + s_i (w3/2) (cos theta, sin theta) with s_1 = -1,
/// s_2 = +1. The plank top surface passes at distance w4/2 from the
/// hinge along the surface normal n4(q4) = (-sin q4, cos q4), so
/// gamma_i = n4 . (p_ci - hinge) - w4/2; negative values mean
/// penetration.
struct ContactGeometry {
  Vec2 gaps = Vec2::Zero();
  Mat24 JN = Mat24::Zero();
  Mat24 JN_dot = Mat24::Zero();
  Vec2 contact_points[2] = {Vec2::Zero(), Vec2::Zero()};
};

inline ContactGeometry contact_geometry(const ModelParams& params,
                                        const State& state) {
  const TaskKinematics kin =
      task_jacobians(params, state.q, state.qdot);
  const double q4 = state.q[3], q4dot = state.qdot[3];
  const Vec2 u4(std::cos(q4), std::sin(q4));
  const Vec2 n4(-std::sin(q4), std::cos(q4));
  const Vec2 u4_dot = q4dot * n4;
  const Vec2 n4_dot = -q4dot * u4;

  const Vec2 face_dir(std::cos(kin.theta), std::sin(kin.theta));
  const Vec2 face_normal(-std::sin(kin.theta), std::cos(kin.theta));
  const double thetadot = kin.Jtheta * state.qdot;
  const double half_face = 0.5 * params.ee_face_width;

  ContactGeometry geo;
  for (int i = 0; i < 2; ++i) {
    const double s = (i == 0) ? -1.0 : 1.0;
    const Vec2 corner = kin.p + s * half_face * face_dir;
    const Vec2 rel = corner - params.hinge_offset;
    geo.contact_points[i] = corner;
    geo.gaps[i] = n4.dot(rel) - 0.5 * params.plank_thickness;

    // corner velocity Jacobian w.r.t. the robot joints and its rate
    Eigen::Matrix<double, 2, 3> C =
        kin.Jp_rob() +
        s * half_face * face_normal * kin.Jtheta_rob().transpose();
    Eigen::Matrix<double, 2, 3> C_dot =
        kin.Jp_dot.leftCols<3>() -
        s * half_face * thetadot * face_dir * kin.Jtheta_rob().transpose();
    const Vec2 corner_vel = C * state.qdot.head<3>();

    geo.JN.row(i).head<3>() = n4.transpose() * C;
    geo.JN(i, 3) = -u4.dot(rel);
    geo.JN_dot.row(i).head<3>() =
        n4_dot.transpose() * C + n4.transpose() * C_dot;
    geo.JN_dot(i, 3) = -u4_dot.dot(rel) - u4.dot(corner_vel);
  }
  return geo;
}

/// Outcome of the inelastic impact map applied to a set of closing
/// contacts: post-impact generalized velocity, contact impulses, and the
/// (non-negative) kinetic energy dissipated.
struct ImpactResult {
  Vec4 qdot_post = Vec4::Zero();
  Eigen::VectorXd impulse;   // one entry per active contact, N s
  double energy_loss = 0.0;  // J
};

/// Inelastic impact map restricted to the contacts in `active`
/// (indices 0/1). Solves M (qdot+ - qdot-) = J_act^T Lambda with
/// J_act qdot+ = 0.
inline ImpactResult impact_map(const ModelParams& params, const State& state,
                               const std::vector<int>& active) {
  if (active.empty()) throw Error("impact_map: empty active set");
  const Mat4 M = mass_matrix(params, state.q);
  const ContactGeometry geo = contact_geometry(params, state);

  const int k = static_cast<int>(active.size());
  Eigen::MatrixXd Jact(k, 4);
  for (int r = 0; r < k; ++r) Jact.row(r) = geo.JN.row(active[r]);

  const Eigen::LLT<Mat4> Mllt(M);
  const Eigen::MatrixXd MinvJt = Mllt.solve(Jact.transpose());
  const Eigen::MatrixXd delassus = Jact * MinvJt;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(delassus);
  const double cond =
      svd.singularValues()(0) / svd.singularValues()(k - 1);
  if (!std::isfinite(cond) || cond > 1e12)
    throw SingularImpactGeometry("impact_map: Delassus matrix singular");

  ImpactResult result;
  result.impulse = -delassus.ldlt().solve(Jact * state.qdot);
  result.qdot_post = state.qdot + MinvJt * result.impulse;
  const double t_pre = 0.5 * state.qdot.dot(M * state.qdot);
  const double t_post = 0.5 * result.qdot_post.dot(M * result.qdot_post);
  result.energy_loss = t_pre - t_post;
  return result;
}

/// Compliant normal contact force with rate-dependent stiffness.
/// Open gaps carry no force; for closed gaps the magnitude is
/// K(gap_rate) |gap|^c with a linear branch on one side of gap_rate = 0
/// and an exponential (always positive) branch on the other, selected by
/// params.contact_pairing. Both branches meet at K(0) = k_env, and the
/// result is clamped at zero.
inline double hunt_crossley_force(const ModelParams& params, double gap,
                                  double gap_rate) {
  if (gap > 0.0) return 0.0;
  const double k = params.contact_stiffness;
  const double d = params.contact_damping;
  const double rate = params.contact_pairing == HuntCrossleyPairing::GapRate
                          ? gap_rate
                          : -gap_rate;
  const double stiffness =
      rate >= 0.0 ? k + d * rate : k * std::exp((d / k) * rate);
  const double force =
      stiffness * std::pow(std::abs(gap), params.contact_exponent);
  return force > 0.0 ? force : 0.0;
}

}  // namespace rspread
