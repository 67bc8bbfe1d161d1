#pragma once

#include <cmath>

#include "rspread/contact.hpp"
#include "rspread/control.hpp"
#include "rspread/mechanics.hpp"
#include "rspread/model.hpp"
#include "rspread/sim_rigid.hpp"
#include "rspread/simlog.hpp"

namespace rspread {

struct FlexDerivative {
  Vec4 qdot = Vec4::Zero();
  Vec4 qddot = Vec4::Zero();
  Vec3 thetadot = Vec3::Zero();
  Vec3 thetaddot = Vec3::Zero();
};

/// Internal transmission torque tau_flex = K (theta_rob - q_rob).
inline Vec3 transmission_torque(const ModelParams& params,
                                const FlexState& fs) {
  return params.joint_stiffness.cwiseProduct(fs.theta_rob - fs.q.head<3>());
}

/// Transmission torque plus its damped rate contribution
/// D K^-1 taudot_flex = D (thetadot_rob - qdot_rob); this is what the
/// link side actually receives.
inline Vec3 transmission_wrench(const ModelParams& params,
                                const FlexState& fs) {
  return transmission_torque(params, fs) +
         params.joint_damping.cwiseProduct(fs.thetadot_rob -
                                           fs.qdot.head<3>());
}

/// Low-level torque law shaping the motor input so the transmission
/// torque tracks the reference tau_star with reduced apparent motor
/// inertia B_theta: tau = B B_theta^-1 tau_star
///                      + (I - B B_theta^-1)(tau_flex + D K^-1 taudot_flex).
inline Vec3 low_level_torque(const ModelParams& params, const FlexState& fs,
                             const Vec3& tau_star) {
  const Vec3 ratio =
      params.motor_inertia.cwiseQuotient(params.desired_motor_inertia);
  const Vec3 wrench = transmission_wrench(params, fs);
  return ratio.cwiseProduct(tau_star) +
         (Vec3::Ones() - ratio).cwiseProduct(wrench);
}

/// Flexible-joint dynamics: link side driven by the transmission wrench
/// and the contact forces, motor side by the commanded torque.
inline FlexDerivative flex_dynamics(const ModelParams& params,
                                    const FlexState& fs,
                                    const Vec3& tau_command,
                                    const Vec2& contact_forces) {
  const State link = fs.link_state();
  const Vec3 wrench = transmission_wrench(params, fs);
  const ContactGeometry geo = contact_geometry(params, link);

  const Mat4 M = mass_matrix(params, fs.q);
  Vec4 rhs = actuation_matrix() * wrench - bias_vector(params, link);
  rhs += geo.JN.transpose() * contact_forces;

  FlexDerivative d;
  d.qdot = fs.qdot;
  d.qddot = M.llt().solve(rhs);
  d.thetadot = fs.thetadot_rob;
  d.thetaddot =
      (tau_command - wrench).cwiseQuotient(params.motor_inertia);
  if (!d.qddot.allFinite() || !d.thetaddot.allFinite())
    throw NonFiniteState("flex_dynamics: derivative diverged");
  return d;
}

namespace detail {

inline Vec2 compliant_forces(const ModelParams& params, const FlexState& fs) {
  const ContactGeometry geo = contact_geometry(params, fs.link_state());
  const Vec2 rates = geo.JN * fs.qdot;
  return Vec2(hunt_crossley_force(params, geo.gaps[0], rates[0]),
              hunt_crossley_force(params, geo.gaps[1], rates[1]));
}

struct FlexAudit {
  double energy = 0.0;
  double work = 0.0;
};

inline double flex_energy(const ModelParams& params, const FlexState& fs) {
  const Vec3 twist = fs.theta_rob - fs.q.head<3>();
  return kinetic_energy(params, fs.link_state()) +
         potential_energy(params, fs.q) +
         0.5 * fs.thetadot_rob.dot(
                   params.motor_inertia.cwiseProduct(fs.thetadot_rob)) +
         0.5 * twist.dot(params.joint_stiffness.cwiseProduct(twist));
}

// power flowing into the conservative store: motor input minus the
// transmission and hinge dissipation, plus (sign-indefinite) contact work
inline double flex_power(const ModelParams& params, const FlexState& fs,
                         const Vec3& tau_command) {
  const Vec3 slip = fs.thetadot_rob - fs.qdot.head<3>();
  const ContactGeometry geo = contact_geometry(params, fs.link_state());
  const Vec2 rates = geo.JN * fs.qdot;
  const Vec2 lambda = compliant_forces(params, fs);
  return tau_command.dot(fs.thetadot_rob) -
         slip.dot(params.joint_damping.cwiseProduct(slip)) -
         params.hinge_damping * fs.qdot[3] * fs.qdot[3] +
         lambda.dot(rates);
}

inline FlexState flex_axpy(const FlexState& s, double a,
                           const FlexDerivative& d) {
  FlexState out;
  out.q = s.q + a * d.qdot;
  out.qdot = s.qdot + a * d.qddot;
  out.theta_rob = s.theta_rob + a * d.thetadot;
  out.thetadot_rob = s.thetadot_rob + a * d.thetaddot;
  return out;
}

inline FlexState rk4_flex(const ModelParams& params, const FlexState& fs,
                          const Vec3& tau_star, double h, double* work) {
  auto deriv = [&](const FlexState& s) {
    const Vec3 tau = low_level_torque(params, s, tau_star);
    return flex_dynamics(params, s, tau, compliant_forces(params, s));
  };
  auto power = [&](const FlexState& s) {
    return flex_power(params, s, low_level_torque(params, s, tau_star));
  };

  const FlexDerivative k1 = deriv(fs);
  const FlexState s2 = flex_axpy(fs, 0.5 * h, k1);
  const FlexDerivative k2 = deriv(s2);
  const FlexState s3 = flex_axpy(fs, 0.5 * h, k2);
  const FlexDerivative k3 = deriv(s3);
  const FlexState s4 = flex_axpy(fs, h, k3);
  const FlexDerivative k4 = deriv(s4);

  FlexState out;
  out.q = fs.q + (h / 6.0) * (k1.qdot + 2 * k2.qdot + 2 * k3.qdot + k4.qdot);
  out.qdot = fs.qdot + (h / 6.0) * (k1.qddot + 2 * k2.qddot + 2 * k3.qddot +
                                    k4.qddot);
  out.theta_rob = fs.theta_rob + (h / 6.0) * (k1.thetadot + 2 * k2.thetadot +
                                              2 * k3.thetadot + k4.thetadot);
  out.thetadot_rob =
      fs.thetadot_rob + (h / 6.0) * (k1.thetaddot + 2 * k2.thetaddot +
                                     2 * k3.thetaddot + k4.thetaddot);
  if (!out.finite()) throw NonFiniteState("rk4_flex: state diverged");
  if (work) {
    *work += (h / 6.0) *
             (power(fs) + 2 * power(s2) + 2 * power(s3) + power(s4));
  }
  return out;
}

}  // namespace detail

/// Simulation of the flexible-joint model with compliant contact. The
/// substep drops from config.step to config.step_contact whenever a gap
/// is within config.contact_margin of closing, since the contact
/// stiffness sets a much faster timescale than the free dynamics.
inline void run_flex(const ModelParams& params, const SimConfig& config,
                     const ReferenceBundle& refs, Controller& controller,
                     SimLog& log) {
  config.validate();
  log = SimLog{};
  log.model = "flexible";
  log.strategy = to_string(controller.config().strategy);

  FlexState fs;
  {
    const auto p0 = refs.ante_pos(0.0);
    const auto o0 = refs.ante_orient(0.0);
    fs.q << inverse_kinematics(params, p0.value, o0.value, true),
        params.plank_rest_angle;
    fs.qdot.setZero();
    // motor positions wound up against gravity so the start is an
    // equilibrium of the transmission
    const Vec3 grav =
        bias_vector(params, State{fs.q, Vec4::Zero()}).head<3>();
    fs.theta_rob =
        fs.q.head<3>() + grav.cwiseQuotient(params.joint_stiffness);
    fs.thetadot_rob.setZero();
  }

  const double dt = controller.config().dt;
  const int n_periods = static_cast<int>(std::llround(config.t_end / dt));
  ControlOutput out;

  auto observation = [&]() {
    const ContactGeometry geo = contact_geometry(params, fs.link_state());
    return ContactObservation{geo.gaps, geo.JN * fs.qdot};
  };
  auto notify = [&](double t_now) {
    const ControlMode before = controller.mode();
    if (controller.observe(t_now, observation())) {
      log.mode_switches.push_back({t_now, before, controller.mode()});
      out = controller.compute(t_now, fs.link_state());
    }
  };

  for (int k = 0; k < n_periods; ++k) {
    const double t_k = k * dt;
    if (!fs.finite())
      throw NonFiniteState("run_flex: non-finite state at t=" +
                           std::to_string(t_k));

    {
      const ControlMode before = controller.mode();
      if (controller.observe(t_k, observation()))
        log.mode_switches.push_back({t_k, before, controller.mode()});
    }
    out = controller.compute(t_k, fs.link_state());

    const ContactGeometry geo = contact_geometry(params, fs.link_state());
    const double h_sub =
        geo.gaps.minCoeff() <= config.contact_margin ? config.step_contact
                                                     : config.step;
    {
      const TaskKinematics kin = task_jacobians(params, fs.q, fs.qdot);
      log.t.push_back(t_k);
      log.q.push_back(fs.q);
      log.qdot.push_back(fs.qdot);
      log.p.push_back(kin.p);
      log.pdot.push_back(kin.Jp * fs.qdot);
      log.theta.push_back(kin.theta);
      log.thetadot.push_back(kin.Jtheta * fs.qdot);
      log.gaps.push_back(geo.gaps);
      log.lambda.push_back(detail::compliant_forces(params, fs));
      log.tau_star.push_back(out.tau_star);
      log.mode.push_back(static_cast<int>(controller.mode()));
      log.qp_cost.push_back(out.qp.cost);
      log.qp_kkt.push_back(out.qp.kkt_residual);
      log.theta_rob.push_back(fs.theta_rob);
      log.tau_flex.push_back(transmission_torque(params, fs));
      log.step_size.push_back(h_sub);
    }

    double t = t_k;
    const double t_next = (k + 1) * dt;
    while (t < t_next - 1e-15) {
      double span_end = t_next;
      bool scheduled = false;
      if (auto sw = controller.scheduled_switch();
          sw && *sw > t + 1e-15 && *sw < t_next - 1e-15) {
        span_end = *sw;
        scheduled = true;
      }
      while (t < span_end - 1e-15) {
        const double h = std::min(h_sub, span_end - t);
        if (config.energy_audit) {
          const double e0 = detail::flex_energy(params, fs);
          double dW = 0.0;
          fs = detail::rk4_flex(params, fs, out.tau_star, h, &dW);
          const double e1 = detail::flex_energy(params, fs);
          log.energy_residual_max =
              std::max(log.energy_residual_max,
                       std::abs(e1 - e0 - dW) / std::max(1.0, std::abs(e0)));
        } else {
          fs = detail::rk4_flex(params, fs, out.tau_star, h, nullptr);
        }
        t += h;
      }
      t = span_end;
      if (scheduled) notify(t);
    }
  }
}

}  // namespace rspread
