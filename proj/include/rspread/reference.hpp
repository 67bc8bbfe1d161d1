#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <utility>

#include "rspread/contact.hpp"
#include "rspread/mechanics.hpp"
#include "rspread/model.hpp"
#include "rspread/quintic.hpp"

namespace rspread {

struct FacePose {
  Vec2 p = Vec2::Zero();
  double theta = 0.0;
};

struct PlankNominal {
  double angle = 0.0;  // rad
  double rate = 0.0;   // rad/s
};

/// Scenario description for the nominal motion: approach the plank,
/// impact flush at t_imp with the requested normal speed, then settle to
/// a rest pose on the plank.
struct ReferenceSpec {
  double t_imp = 1.0;
  double t_end = 2.0;
  double approach_speed = 0.5;      // m/s along the inward plank normal
  double approach_accel = 1.0;      // m/s^2 into the surface at t_imp; the
                                    // extended reference keeps pressing, which
                                    // holds the first contact closed until the
                                    // second one lands
  double contact_offset = 0.15;     // m from hinge to face midpoint, along the plank
  PlankNominal plank_nominal;
  double post_plank_delta = -0.05;  // rad, plank rotation from impact to rest pose
  double post_tangent_delta = 0.0;  // m, tangential slide from impact to rest pose
  std::optional<FacePose> start_pose;  // default: backed off along the plank normal
};

/// Closed-form inverse kinematics of the 3-link chain for a face pose.
/// The elbow-up branch takes q2 <= 0 (elbow on the counter-clockwise
/// side of the base-to-wrist ray for the poses used here).
inline Vec3 inverse_kinematics(const ModelParams& params, const Vec2& p,
                               double theta, bool elbow_up = true) {
  const Vec3& L = params.link_lengths;
  const Vec2 wrist = p - L[2] * Vec2(std::cos(theta), std::sin(theta));
  const double r2 = wrist.squaredNorm();
  const double c2 = (r2 - L[0] * L[0] - L[1] * L[1]) / (2.0 * L[0] * L[1]);
  if (std::abs(c2) > 1.0)
    throw Unreachable("inverse_kinematics: target outside workspace");
  const double q2 = elbow_up ? -std::acos(c2) : std::acos(c2);
  const double q1 = std::atan2(wrist[1], wrist[0]) -
                    std::atan2(L[1] * std::sin(q2), L[0] + L[1] * std::cos(q2));
  return Vec3(q1, q2, theta - q1 - q2);
}

namespace detail {

inline Mat3 stacked_task_jacobian(const TaskKinematics& kin) {
  Mat3 J;
  J.topRows<2>() = kin.Jp_rob();
  J.bottomRows<1>() = kin.Jtheta_rob().transpose();
  return J;
}

inline double condition_number(const Mat3& J) {
  Eigen::JacobiSVD<Mat3> svd(J);
  return svd.singularValues()(0) / svd.singularValues()(2);
}

}  // namespace detail

/// Unique impact configuration for a flush face-contact pose, with the
/// plank at its nominal ante-impact angle.
inline Vec4 nominal_impact_configuration(const ModelParams& params,
                                         const FacePose& target,
                                         const PlankNominal& plank) {
  const Vec3 q_rob = inverse_kinematics(params, target.p, target.theta, true);
  Vec4 q;
  q << q_rob, plank.angle;
  const TaskKinematics kin = task_jacobians(params, q, Vec4::Zero());
  if (detail::condition_number(detail::stacked_task_jacobian(kin)) > 1e8)
    throw NearSingular("nominal_impact_configuration: near-singular arm");
  return q;
}

/// Ante- and post-impact generalized velocities consistent with the
/// impact map: the ante velocity realizes the requested task velocity
/// through inverse velocity kinematics, the post velocity follows from
/// the simultaneous inelastic impact at both contacts.
inline std::pair<Vec4, Vec4> nominal_post_velocity(const ModelParams& params,
                                                   const Vec4& q_minus,
                                                   const Vec2& pdot,
                                                   double thetadot,
                                                   double plank_rate) {
  const TaskKinematics kin = task_jacobians(params, q_minus, Vec4::Zero());
  const Mat3 J = detail::stacked_task_jacobian(kin);
  if (detail::condition_number(J) > 1e8)
    throw SingularTaskJacobian("nominal_post_velocity: task Jacobian singular");
  Vec3 task;
  task << pdot, thetadot;
  Vec4 qdot_minus;
  qdot_minus << J.partialPivLu().solve(task), plank_rate;

  const ImpactResult impact =
      impact_map(params, State{q_minus, qdot_minus}, {0, 1});
  return {qdot_minus, impact.qdot_post};
}

/// Extended ante-impact (position + orientation) and post-impact
/// (position) references. Both sides are quintic polynomials, so the
/// extension beyond/before t_imp is plain polynomial continuation and
/// every signal is C^2 on the whole horizon.
struct ReferenceBundle {
  double t_imp = 0.0;
  double t_end = 0.0;
  Quintic ante_x, ante_y, ante_theta;
  Quintic post_x, post_y;
  Vec4 q_minus = Vec4::Zero();
  Vec4 qdot_minus = Vec4::Zero();
  Vec4 qdot_plus = Vec4::Zero();
  PlankNominal plank_nominal;

  struct Sample2 {
    Vec2 value, velocity, acceleration;
  };
  struct Sample1 {
    double value, velocity, acceleration;
  };

  Sample2 ante_pos(double t) const {
    return {Vec2(ante_x.value(t), ante_y.value(t)),
            Vec2(ante_x.velocity(t), ante_y.velocity(t)),
            Vec2(ante_x.acceleration(t), ante_y.acceleration(t))};
  }
  Sample1 ante_orient(double t) const {
    return {ante_theta.value(t), ante_theta.velocity(t),
            ante_theta.acceleration(t)};
  }
  Sample2 post_pos(double t) const {
    return {Vec2(post_x.value(t), post_y.value(t)),
            Vec2(post_x.velocity(t), post_y.velocity(t)),
            Vec2(post_x.acceleration(t), post_y.acceleration(t))};
  }
};

inline ReferenceBundle build_reference(const ModelParams& params,
                                       const ReferenceSpec& spec) {
  if (!(spec.t_imp > 0.0 && spec.t_imp < spec.t_end))
    throw Error("build_reference: t_imp must lie inside (0, t_end)");

  const double q4 = spec.plank_nominal.angle;
  const Vec2 u4(std::cos(q4), std::sin(q4));
  const Vec2 n4(-std::sin(q4), std::cos(q4));

  FacePose impact;
  impact.p = params.hinge_offset + spec.contact_offset * u4 +
             0.5 * params.plank_thickness * n4;
  impact.theta = q4;

  // Default start pose retracts along the plank normal just far enough
  // that the approach-velocity profile stays monotone (no reversal).
  const double retreat = std::max(
      0.05, spec.t_imp *
                (8.0 * spec.approach_speed -
                 spec.approach_accel * spec.t_imp) /
                20.0);
  FacePose start = spec.start_pose.value_or(
      FacePose{impact.p + retreat * n4, impact.theta});

  ReferenceBundle bundle;
  bundle.t_imp = spec.t_imp;
  bundle.t_end = spec.t_end;
  bundle.plank_nominal = spec.plank_nominal;

  const Vec2 v_imp = -spec.approach_speed * n4;
  const Vec2 a_imp = -spec.approach_accel * n4;
  bundle.ante_x = Quintic(0.0, spec.t_imp, start.p[0], 0.0, 0.0, impact.p[0],
                          v_imp[0], a_imp[0]);
  bundle.ante_y = Quintic(0.0, spec.t_imp, start.p[1], 0.0, 0.0, impact.p[1],
                          v_imp[1], a_imp[1]);
  bundle.ante_theta = Quintic(0.0, spec.t_imp, start.theta, 0.0, 0.0,
                              impact.theta, spec.plank_nominal.rate, 0.0);

  bundle.q_minus = nominal_impact_configuration(params, impact,
                                                spec.plank_nominal);
  const auto ante_end = bundle.ante_pos(spec.t_imp);
  const auto ante_orient_end = bundle.ante_orient(spec.t_imp);
  std::tie(bundle.qdot_minus, bundle.qdot_plus) =
      nominal_post_velocity(params, bundle.q_minus, ante_end.velocity,
                            ante_orient_end.velocity,
                            spec.plank_nominal.rate);

  // sanity: the nominal impact configuration must be flush and closing
  {
    const ContactGeometry geo =
        contact_geometry(params, State{bundle.q_minus, bundle.qdot_minus});
    if (geo.gaps.cwiseAbs().maxCoeff() > 1e-10)
      throw Error("build_reference: impact configuration not flush");
    if ((geo.JN * bundle.qdot_minus).maxCoeff() >= 0.0)
      throw Error("build_reference: nominal approach not closing");
  }

  const TaskKinematics kin_imp =
      task_jacobians(params, bundle.q_minus, bundle.qdot_plus);
  const Vec2 v_post = kin_imp.Jp * bundle.qdot_plus;

  const double q4_rest = q4 + spec.post_plank_delta;
  const Vec2 u4r(std::cos(q4_rest), std::sin(q4_rest));
  const Vec2 n4r(-std::sin(q4_rest), std::cos(q4_rest));
  const Vec2 p_rest = params.hinge_offset +
                      (spec.contact_offset + spec.post_tangent_delta) * u4r +
                      0.5 * params.plank_thickness * n4r;

  bundle.post_x = Quintic(spec.t_imp, spec.t_end, impact.p[0], v_post[0], 0.0,
                          p_rest[0], 0.0, 0.0);
  bundle.post_y = Quintic(spec.t_imp, spec.t_end, impact.p[1], v_post[1], 0.0,
                          p_rest[1], 0.0, 0.0);
  return bundle;
}

/// Reference export: sampled values and first/second derivatives of both
/// segments, for plotting and external tools.
inline void export_reference_csv(const ReferenceBundle& bundle,
                                 const std::string& path, double dt = 1e-3) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("export_reference_csv: cannot open " + path);
  std::fputs(
      "t,ante_px,ante_py,ante_theta,ante_vx,ante_vy,ante_vtheta,"
      "ante_ax,ante_ay,ante_atheta,post_px,post_py,post_vx,post_vy,"
      "post_ax,post_ay\n",
      f);
  const int n = static_cast<int>(std::llround(bundle.t_end / dt));
  for (int k = 0; k <= n; ++k) {
    const double t = k * dt;
    const auto a = bundle.ante_pos(t);
    const auto o = bundle.ante_orient(t);
    const auto p = bundle.post_pos(t);
    const double row[16] = {t,
                            a.value[0], a.value[1], o.value,
                            a.velocity[0], a.velocity[1], o.velocity,
                            a.acceleration[0], a.acceleration[1],
                            o.acceleration,
                            p.value[0], p.value[1],
                            p.velocity[0], p.velocity[1],
                            p.acceleration[0], p.acceleration[1]};
    for (int c = 0; c < 16; ++c)
      std::fprintf(f, c == 0 ? "%.12e" : ",%.12e", row[c]);
    std::fputc('\n', f);
  }
  std::fclose(f);
}

}  // namespace rspread
