#pragma once

#include <optional>
#include <string>

#include "rspread/contact.hpp"
#include "rspread/mechanics.hpp"
#include "rspread/model.hpp"
#include "rspread/qp.hpp"
#include "rspread/reference.hpp"

namespace rspread {

enum class ControlMode { Ante = 0, Intermediate = 1, Post = 2 };

/// The three compared strategies: reference spreading with the
/// intermediate mode, reference spreading switching straight to the
/// post-impact controller on first impact, and time-based switching at
/// the nominal impact time without reference spreading.
enum class Strategy { RsWithIntermediate, RsNoIntermediate, NoRs };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::RsWithIntermediate: return "rs_intermediate";
    case Strategy::RsNoIntermediate: return "rs_no_intermediate";
    case Strategy::NoRs: return "no_rs";
  }
  return "?";
}

inline std::optional<Strategy> strategy_from_string(const std::string& s) {
  if (s == "rs_intermediate") return Strategy::RsWithIntermediate;
  if (s == "rs_no_intermediate") return Strategy::RsNoIntermediate;
  if (s == "no_rs") return Strategy::NoRs;
  return std::nullopt;
}

struct ControllerConfig {
  Strategy strategy = Strategy::RsWithIntermediate;
  double dt = 1e-3;             // control period, zero-order hold on tau*
  double epsilon = 0.01;        // m/s, contact-settling threshold
  double gap_closed_tol = 1e-9; // m, a gap at or below this counts as closed

  void validate() const {
    if (!(dt > 0.0) || !(epsilon > 0.0))
      throw Error("ControllerConfig: dt and epsilon must be positive");
  }
};

struct QpDiagnostics {
  double cost = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool regularized = false;
};

struct ControlOutput {
  Vec3 tau_star = Vec3::Zero();
  Vec4 qddot_star = Vec4::Zero();
  Vec2 lambda_star = Vec2::Zero();  // meaningful in Post mode only
  ControlMode mode = ControlMode::Ante;
  QpDiagnostics qp;
};

struct ContactObservation {
  Vec2 gaps = Vec2::Zero();
  Vec2 gap_rates = Vec2::Zero();
};

/// Mode supervisor: enter the intermediate phase as soon as the first
/// contact is closed, and the post-impact phase once sustained contact
/// holds at both contact points (all gaps closed with |gap rate| below
/// epsilon). Advances at most one stage per call and never goes back.
inline ControlMode supervise(const ControllerConfig& config,
                             ControlMode previous,
                             const ContactObservation& obs) {
  const auto closed = [&](int i) {
    return obs.gaps[i] <= config.gap_closed_tol;
  };
  switch (previous) {
    case ControlMode::Ante:
      if (closed(0) || closed(1)) return ControlMode::Intermediate;
      return ControlMode::Ante;
    case ControlMode::Intermediate:
      if (closed(0) && closed(1) &&
          std::abs(obs.gap_rates[0]) <= config.epsilon &&
          std::abs(obs.gap_rates[1]) <= config.epsilon)
        return ControlMode::Post;
      return ControlMode::Intermediate;
    case ControlMode::Post:
      return ControlMode::Post;
  }
  return previous;
}

namespace detail {

inline ControlOutput solve_motion_qp(const ModelParams& params, const Vec4& q,
                                     const Vec4& qdot_model,
                                     const Vec2& eta_p, double eta_theta,
                                     const TaskKinematics& kin,
                                     ControlMode mode, QpSolver& solver) {
  // variables x = [qddot(4); tau(3)], single EOM equality constraint
  QpProblem qp;
  qp.H = Eigen::MatrixXd::Zero(7, 7);
  qp.f = Eigen::VectorXd::Zero(7);
  const Mat24& Jp = kin.Jp;
  const RowVec4& Jt = kin.Jtheta;
  qp.H.topLeftCorner<4, 4>() =
      2.0 * (params.weight_pos * Jp.transpose() * Jp +
             params.weight_orient * Jt.transpose() * Jt);
  qp.f.head<4>() = 2.0 * (params.weight_pos * Jp.transpose() * eta_p +
                          params.weight_orient * Jt.transpose() * eta_theta);

  qp.Aeq = Eigen::MatrixXd::Zero(4, 7);
  qp.Aeq.leftCols<4>() = mass_matrix(params, q);
  qp.Aeq.rightCols<3>() = -actuation_matrix();
  qp.beq = -bias_vector(params, State{q, qdot_model});
  qp.Aineq.resize(0, 7);
  qp.bineq.resize(0);

  const QpSolution sol = solver.solve(qp);
  ControlOutput out;
  out.qddot_star = sol.x.head<4>();
  out.tau_star = sol.x.segment<3>(4);
  out.mode = mode;
  out.qp = {sol.objective(qp), sol.kkt_residual, sol.iterations,
            sol.regularized};
  return out;
}

}  // namespace detail

/// Ante-impact QP: track the extended ante-impact position and
/// orientation references with critically damped PD target
/// accelerations, subject to the free-motion equations of motion.
inline ControlOutput ante_qp(const ModelParams& params, const State& state,
                             const ReferenceBundle& refs, double t,
                             QpSolver& solver) {
  const TaskKinematics kin = task_jacobians(params, state.q, state.qdot);
  const auto rp = refs.ante_pos(t);
  const auto ro = refs.ante_orient(t);
  const double kp = params.task_gain_pos, kt = params.task_gain_orient;

  const Vec2 eta_p = kin.Jp_dot * state.qdot - rp.acceleration -
                     2.0 * kp * (rp.velocity - kin.Jp * state.qdot) -
                     kp * kp * (rp.value - kin.p);
  const double eta_t = kin.Jtheta_dot * state.qdot - ro.acceleration -
                       2.0 * kt * (ro.velocity - kin.Jtheta * state.qdot) -
                       kt * kt * (ro.value - kin.theta);
  return detail::solve_motion_qp(params, state.q, state.qdot, eta_p, eta_t,
                                 kin, ControlMode::Ante, solver);
}

/// Intermediate QP: same structure as the ante-impact QP, but every use
/// of measured joint velocities is replaced by the joint velocities
/// consistent with the ante-impact reference (robot part from inverse
/// velocity kinematics, plank part from the nominal plank rate). The
/// velocity feedback term drops out, leaving feedforward plus position
/// feedback, and measured velocities are never read.
inline ControlOutput intermediate_qp(const ModelParams& params, const Vec4& q,
                                     const ReferenceBundle& refs, double t,
                                     QpSolver& solver) {
  const auto rp = refs.ante_pos(t);
  const auto ro = refs.ante_orient(t);

  const TaskKinematics kin0 = task_jacobians(params, q, Vec4::Zero());
  const Mat3 J = detail::stacked_task_jacobian(kin0);
  if (detail::condition_number(J) > 1e8)
    throw SingularTaskJacobian("intermediate_qp: task Jacobian singular");
  Vec3 task_vel;
  task_vel << rp.velocity, ro.velocity;
  Vec4 qdot_itmd;
  qdot_itmd << J.partialPivLu().solve(task_vel), refs.plank_nominal.rate;

  const TaskKinematics kin = task_jacobians(params, q, qdot_itmd);
  const double kp = params.task_gain_pos, kt = params.task_gain_orient;
  const Vec2 eta_p = kin.Jp_dot * qdot_itmd - rp.acceleration -
                     kp * kp * (rp.value - kin.p);
  const double eta_t = kin.Jtheta_dot * qdot_itmd - ro.acceleration -
                       kt * kt * (ro.value - kin.theta);
  return detail::solve_motion_qp(params, q, qdot_itmd, eta_p, eta_t, kin,
                                 ControlMode::Intermediate, solver);
}

/// Post-impact QP: track the extended post-impact position reference
/// under closed-contact dynamics. Decision variables are (qddot, tau,
/// lambda); both contacts are constrained to stay closed, contact forces
/// stay non-negative, and an equal force distribution between the two
/// contact points replaces the orientation task.
inline ControlOutput post_qp(const ModelParams& params, const State& state,
                             const ReferenceBundle& refs, double t,
                             QpSolver& solver) {
  const TaskKinematics kin = task_jacobians(params, state.q, state.qdot);
  const ContactGeometry geo = contact_geometry(params, state);
  const auto rp = refs.post_pos(t);
  const double kp = params.task_gain_pos;

  const Vec2 eta_p = kin.Jp_dot * state.qdot - rp.acceleration -
                     2.0 * kp * (rp.velocity - kin.Jp * state.qdot) -
                     kp * kp * (rp.value - kin.p);

  QpProblem qp;
  qp.H = Eigen::MatrixXd::Zero(9, 9);
  qp.f = Eigen::VectorXd::Zero(9);
  qp.H.topLeftCorner<4, 4>() =
      2.0 * params.weight_pos * kin.Jp.transpose() * kin.Jp;
  qp.H(7, 7) = qp.H(8, 8) = 2.0 * params.weight_force;
  qp.H(7, 8) = qp.H(8, 7) = -2.0 * params.weight_force;
  qp.f.head<4>() = 2.0 * params.weight_pos * kin.Jp.transpose() * eta_p;

  qp.Aeq = Eigen::MatrixXd::Zero(6, 9);
  qp.beq = Eigen::VectorXd::Zero(6);
  qp.Aeq.topLeftCorner<4, 4>() = mass_matrix(params, state.q);
  qp.Aeq.block<4, 3>(0, 4) = -actuation_matrix();
  qp.Aeq.block<4, 2>(0, 7) = -geo.JN.transpose();
  qp.beq.head<4>() = -bias_vector(params, state);
  qp.Aeq.block<2, 4>(4, 0) = geo.JN;
  qp.beq.tail<2>() = -geo.JN_dot * state.qdot;

  qp.Aineq = Eigen::MatrixXd::Zero(2, 9);
  qp.Aineq(0, 7) = qp.Aineq(1, 8) = 1.0;
  qp.bineq = Eigen::VectorXd::Zero(2);

  const QpSolution sol = solver.solve(qp);
  ControlOutput out;
  out.qddot_star = sol.x.head<4>();
  out.tau_star = sol.x.segment<3>(4);
  out.lambda_star = sol.x.tail<2>();
  out.mode = ControlMode::Post;
  out.qp = {sol.objective(qp), sol.kkt_residual, sol.iterations,
            sol.regularized};
  return out;
}

/// Unconstrained tracking of the post-impact position reference, used by
/// the baseline strategies when the closed-contact QP is infeasible
/// because contact has not actually been established. A small
/// regularizer keeps the minimizer unique without the orientation task.
inline ControlOutput post_tracking_fallback(const ModelParams& params,
                                            const State& state,
                                            const ReferenceBundle& refs,
                                            double t, QpSolver& solver) {
  const TaskKinematics kin = task_jacobians(params, state.q, state.qdot);
  const auto rp = refs.post_pos(t);
  const double kp = params.task_gain_pos;
  const Vec2 eta_p = kin.Jp_dot * state.qdot - rp.acceleration -
                     2.0 * kp * (rp.velocity - kin.Jp * state.qdot) -
                     kp * kp * (rp.value - kin.p);

  QpProblem qp;
  qp.H = 2e-8 * Eigen::MatrixXd::Identity(7, 7);
  qp.f = Eigen::VectorXd::Zero(7);
  qp.H.topLeftCorner<4, 4>() +=
      2.0 * params.weight_pos * kin.Jp.transpose() * kin.Jp;
  qp.f.head<4>() = 2.0 * params.weight_pos * kin.Jp.transpose() * eta_p;
  qp.Aeq = Eigen::MatrixXd::Zero(4, 7);
  qp.Aeq.leftCols<4>() = mass_matrix(params, state.q);
  qp.Aeq.rightCols<3>() = -actuation_matrix();
  qp.beq = -bias_vector(params, state);
  qp.Aineq.resize(0, 7);
  qp.bineq.resize(0);

  const QpSolution sol = solver.solve(qp);
  ControlOutput out;
  out.qddot_star = sol.x.head<4>();
  out.tau_star = sol.x.segment<3>(4);
  out.mode = ControlMode::Post;
  out.qp = {sol.objective(qp), sol.kkt_residual, sol.iterations,
            sol.regularized};
  return out;
}

/// Per-simulation control state machine: dispatches to the mode QPs and
/// advances the mode according to the selected strategy. One instance
/// drives one simulation loop.
class Controller {
 public:
  Controller(const ModelParams& params, const ControllerConfig& config,
             const ReferenceBundle& refs)
      : params_(params), config_(config), refs_(refs) {
    config_.validate();
  }

  const ControllerConfig& config() const { return config_; }
  const ReferenceBundle& refs() const { return refs_; }
  ControlMode mode() const { return mode_; }

  /// Time-based switch of the NoRs strategy; the simulation splits its
  /// control period there so the switch happens at exactly t_imp.
  std::optional<double> scheduled_switch() const {
    if (config_.strategy == Strategy::NoRs && mode_ != ControlMode::Post)
      return refs_.t_imp;
    return std::nullopt;
  }

  /// Feed a contact observation; returns true if the mode advanced.
  bool observe(double t, const ContactObservation& obs) {
    ControlMode next = mode_;
    switch (config_.strategy) {
      case Strategy::RsWithIntermediate:
        for (;;) {
          const ControlMode advanced = supervise(config_, next, obs);
          if (advanced == next) break;
          next = advanced;
        }
        break;
      case Strategy::RsNoIntermediate:
        if (next == ControlMode::Ante &&
            (obs.gaps[0] <= config_.gap_closed_tol ||
             obs.gaps[1] <= config_.gap_closed_tol))
          next = ControlMode::Post;
        break;
      case Strategy::NoRs:
        if (t >= refs_.t_imp) next = ControlMode::Post;
        break;
    }
    const bool changed = next != mode_;
    mode_ = next;
    return changed;
  }

  ControlOutput compute(double t, const State& measured) {
    if (config_.strategy == Strategy::NoRs && t >= refs_.t_imp)
      mode_ = ControlMode::Post;
    switch (mode_) {
      case ControlMode::Ante:
        return ante_qp(params_, measured, refs_, t, solver_);
      case ControlMode::Intermediate:
        return intermediate_qp(params_, measured.q, refs_, t, solver_);
      case ControlMode::Post:
        try {
          return post_qp(params_, measured, refs_, t, solver_);
        } catch (const QpInfeasible&) {
          if (config_.strategy == Strategy::RsWithIntermediate) throw;
          return post_tracking_fallback(params_, measured, refs_, t, solver_);
        }
    }
    throw Error("Controller: invalid mode");
  }

 private:
  ModelParams params_;
  ControllerConfig config_;
  ReferenceBundle refs_;
  ControlMode mode_ = ControlMode::Ante;
  QpSolver solver_;
};

}  // namespace rspread
