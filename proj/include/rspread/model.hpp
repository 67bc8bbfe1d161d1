#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace rspread {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat24 = Eigen::Matrix<double, 2, 4>;
using RowVec4 = Eigen::Matrix<double, 1, 4>;
using Mat43 = Eigen::Matrix<double, 4, 3>;

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct SingularImpactGeometry : Error { using Error::Error; };
struct Unreachable : Error { using Error::Error; };
struct NearSingular : Error { using Error::Error; };
struct SingularTaskJacobian : Error { using Error::Error; };
struct SingularConstraintSystem : Error { using Error::Error; };
struct NonFiniteState : Error { using Error::Error; };
struct QpInfeasible : Error { using Error::Error; };
struct QpUnbounded : Error { using Error::Error; };
struct QpMaxIterations : Error { using Error::Error; };
struct SchemaMismatch : Error { using Error::Error; };

/// Branch pairing for the rate-dependent stiffness of the compliant
/// contact law. `GapRate` applies the linear branch for opening gaps
/// (gap_rate >= 0), `PenetrationRate` applies it while penetration
/// deepens (gap_rate <= 0), which is the usual dissipative convention.
enum class HuntCrossleyPairing { GapRate, PenetrationRate };

/// Physical, controller, and contact constants of the planar 3-link arm
/// plus hinged plank, together with geometry and gravity.
///
/// Coordinates: q = [q1 q2 q3 q4], the three actuated joint angles and
/// the plank hinge angle. The base frame has gravity along -y.
struct ModelParams {
  Vec3 link_masses{8.0, 8.0, 4.0};               // kg
  Vec3 link_inertias{0.03, 0.03, 0.005};         // kg m^2, centroidal
  double plank_inertia_hinge = 4.5;              // kg m^2, about hinge
  Vec3 link_lengths{0.3, 0.3, 0.15};             // m
  double ee_face_width = 0.15;                   // m, contact corners at +/- w3/2
  double plank_thickness = 0.04;                 // m
  Vec2 hinge_offset{0.1, 0.35};                  // m, hinge relative to base
  double hinge_stiffness = 40.0;                 // N m / rad
  double hinge_damping = 40.0;                   // N m s / rad
  double plank_rest_angle = 0.0;                 // rad, unloaded hinge angle
  double gravity = 9.81;                         // m/s^2, along -y

  double task_gain_pos = 20.0;                   // k_p, 1/s
  double task_gain_orient = 20.0;                // k_theta, 1/s
  double weight_pos = 1.0;                       // w_p
  double weight_orient = 1.0;                    // w_theta
  double weight_force = 1.0;                     // w_lambda

  Vec3 joint_stiffness{30e3, 30e3, 15e3};        // K diagonal, N m / rad
  Vec3 joint_damping{10.0, 10.0, 5.0};           // D diagonal
  Vec3 motor_inertia{0.24, 0.24, 0.08};          // B diagonal, kg m^2
  Vec3 desired_motor_inertia{0.012, 0.012, 0.004};  // B_theta = 0.05 B

  double contact_exponent = 1.5;                 // c
  double contact_stiffness = 3.2e8;              // k_env
  double contact_damping = 3.2e11;               // d_env
  HuntCrossleyPairing contact_pairing = HuntCrossleyPairing::GapRate;

  void validate() const {
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    bool ok = positive(plank_inertia_hinge) && positive(ee_face_width) &&
              positive(plank_thickness) && positive(hinge_stiffness) &&
              positive(hinge_damping) && positive(task_gain_pos) &&
              positive(task_gain_orient) && positive(weight_pos) &&
              positive(weight_orient) && positive(weight_force) &&
              positive(contact_exponent) && positive(contact_stiffness) &&
              positive(contact_damping) && gravity >= 0.0;
    for (int i = 0; i < 3; ++i) {
      ok = ok && positive(link_masses[i]) && positive(link_inertias[i]) &&
           positive(link_lengths[i]) && positive(joint_stiffness[i]) &&
           positive(joint_damping[i]) && positive(motor_inertia[i]) &&
           positive(desired_motor_inertia[i]);
    }
    if (!ok) throw Error("ModelParams: non-positive or non-finite constant");
  }
};

/// Generalized positions and velocities of the 4-DOF system.
struct State {
  Vec4 q = Vec4::Zero();      // [q1 q2 q3 q4], rad
  Vec4 qdot = Vec4::Zero();   // rad/s

  Vec3 q_rob() const { return q.head<3>(); }
  Vec3 qdot_rob() const { return qdot.head<3>(); }
  bool finite() const { return q.allFinite() && qdot.allFinite(); }
};

/// State extended with motor-side positions/velocities of the flexible
/// joint model. The transmission torque K (theta_rob - q_rob) is always
/// derived, never stored.
struct FlexState {
  Vec4 q = Vec4::Zero();
  Vec4 qdot = Vec4::Zero();
  Vec3 theta_rob = Vec3::Zero();      // motor-side joint positions, rad
  Vec3 thetadot_rob = Vec3::Zero();   // rad/s

  State link_state() const { return State{q, qdot}; }
  bool finite() const {
    return q.allFinite() && qdot.allFinite() && theta_rob.allFinite() &&
           thetadot_rob.allFinite();
  }
};

}  // namespace rspread
