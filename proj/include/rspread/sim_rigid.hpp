#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "rspread/contact.hpp"
#include "rspread/control.hpp"
#include "rspread/mechanics.hpp"
#include "rspread/model.hpp"
#include "rspread/simlog.hpp"

namespace rspread {

struct SimConfig {
  double t_end = 2.0;
  double step = 1e-4;           // rigid-model integrator substep, s
  double step_contact = 1e-6;   // flexible-model substep near contact, s
  double contact_margin = 2e-3; // m, gap below which the fine step engages
  double event_tol = 1e-9;      // m, impact localization tolerance
  double plank_offset = 0.05;   // rad, true plank angle minus estimated
  unsigned seed = 0;            // reserved for randomized batch studies
  Strategy strategy = Strategy::RsWithIntermediate;
  bool energy_audit = true;     // per-step balance bookkeeping (observation only)

  void validate() const {
    if (!(t_end > 0.0) || !(step > 0.0) || !(step_contact > 0.0) ||
        !(event_tol > 0.0) || !(contact_margin > 0.0))
      throw Error("SimConfig: steps, tolerances and t_end must be positive");
  }
};

/// One fixed-step RK4 integration of the free dynamics M qddot = S tau - h.
inline State step_free(const ModelParams& params, const State& state,
                       const Vec3& tau, double dt) {
  auto accel = [&](const State& s) -> Vec4 {
    const Mat4 M = mass_matrix(params, s.q);
    const Vec4 rhs = actuation_matrix() * tau - bias_vector(params, s);
    return M.llt().solve(rhs);
  };
  const Vec4 k1q = state.qdot, k1v = accel(state);
  State s2{state.q + 0.5 * dt * k1q, state.qdot + 0.5 * dt * k1v};
  const Vec4 k2q = s2.qdot, k2v = accel(s2);
  State s3{state.q + 0.5 * dt * k2q, state.qdot + 0.5 * dt * k2v};
  const Vec4 k3q = s3.qdot, k3v = accel(s3);
  State s4{state.q + dt * k3q, state.qdot + dt * k3v};
  const Vec4 k4q = s4.qdot, k4v = accel(s4);

  State out;
  out.q = state.q + (dt / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
  out.qdot = state.qdot + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  if (!out.finite()) throw NonFiniteState("step_free: state diverged");
  return out;
}

namespace detail {

struct ContactSolve {
  Vec4 qddot = Vec4::Zero();
  Eigen::VectorXd lambda;
};

// Mixed accel/force solve of the index-1 constrained dynamics:
// [M -J^T; J 0] [qddot; lambda] = [S tau - h; -Jdot qdot].
inline ContactSolve solve_contact(const ModelParams& params,
                                  const State& state, const Vec3& tau,
                                  const std::vector<int>& active) {
  const int k = static_cast<int>(active.size());
  const Mat4 M = mass_matrix(params, state.q);
  const ContactGeometry geo = contact_geometry(params, state);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4 + k, 4 + k);
  Eigen::VectorXd rhs(4 + k);
  A.topLeftCorner<4, 4>() = M;
  rhs.head<4>() = actuation_matrix() * tau - bias_vector(params, state);
  for (int r = 0; r < k; ++r) {
    A.block<4, 1>(0, 4 + r) = -geo.JN.row(active[r]).transpose();
    A.block<1, 4>(4 + r, 0) = geo.JN.row(active[r]);
    rhs[4 + r] = -geo.JN_dot.row(active[r]) * state.qdot;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible())
    throw SingularConstraintSystem("solve_contact: singular KKT system");
  const Eigen::VectorXd sol = lu.solve(rhs);
  ContactSolve out;
  out.qddot = sol.head<4>();
  out.lambda = sol.tail(k);
  return out;
}

// Removes contacts whose constraint force is negative (release), lowest
// index first, recomputing until all remaining forces are admissible.
inline ContactSolve release_filter(const ModelParams& params,
                                   const State& state, const Vec3& tau,
                                   std::vector<int>& active) {
  ContactSolve cs;
  while (!active.empty()) {
    cs = solve_contact(params, state, tau, active);
    int drop = -1;
    double most_negative = -1e-10;
    for (int r = 0; r < cs.lambda.size(); ++r) {
      if (cs.lambda[r] < most_negative) {
        most_negative = cs.lambda[r];
        drop = r;
      }
    }
    if (drop < 0) return cs;
    active.erase(active.begin() + drop);
  }
  cs.qddot.setZero();
  cs.lambda.resize(0);
  return cs;
}

inline State rk4_constrained(const ModelParams& params, const State& state,
                             const Vec3& tau, const std::vector<int>& active,
                             double dt) {
  auto accel = [&](const State& s) -> Vec4 {
    return solve_contact(params, s, tau, active).qddot;
  };
  const Vec4 k1q = state.qdot, k1v = accel(state);
  State s2{state.q + 0.5 * dt * k1q, state.qdot + 0.5 * dt * k1v};
  const Vec4 k2q = s2.qdot, k2v = accel(s2);
  State s3{state.q + 0.5 * dt * k2q, state.qdot + 0.5 * dt * k2v};
  const Vec4 k3q = s3.qdot, k3v = accel(s3);
  State s4{state.q + dt * k3q, state.qdot + dt * k3v};
  const Vec4 k4q = s4.qdot, k4v = accel(s4);
  State out;
  out.q = state.q + (dt / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
  out.qdot = state.qdot + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  if (!out.finite())
    throw NonFiniteState("rk4_constrained: state diverged");
  return out;
}

// Mass-metric projection of active gaps and gap rates back to zero,
// keeping constraint drift at roundoff level.
inline void project_active(const ModelParams& params, State& state,
                           const std::vector<int>& active) {
  if (active.empty()) return;
  const int k = static_cast<int>(active.size());
  for (int pass = 0; pass < 5; ++pass) {
    const ContactGeometry geo = contact_geometry(params, state);
    Eigen::VectorXd g(k);
    Eigen::MatrixXd J(k, 4);
    for (int r = 0; r < k; ++r) {
      g[r] = geo.gaps[active[r]];
      J.row(r) = geo.JN.row(active[r]);
    }
    if (g.cwiseAbs().maxCoeff() <= 1e-13 && pass > 0) break;
    const Mat4 M = mass_matrix(params, state.q);
    const Eigen::MatrixXd MinvJt = M.llt().solve(J.transpose());
    const Eigen::MatrixXd G = J * MinvJt;
    state.q -= MinvJt * G.ldlt().solve(g);
  }
  const ContactGeometry geo = contact_geometry(params, state);
  Eigen::MatrixXd J(k, 4);
  for (int r = 0; r < k; ++r) J.row(r) = geo.JN.row(active[r]);
  const Mat4 M = mass_matrix(params, state.q);
  const Eigen::MatrixXd MinvJt = M.llt().solve(J.transpose());
  const Eigen::MatrixXd G = J * MinvJt;
  state.qdot -= MinvJt * G.ldlt().solve(J * state.qdot);
}

inline State hermite_state(const State& a, const State& b, double dt,
                           double s) {
  // cubic Hermite interpolation of q on [0,1]; velocity from its slope
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  const double d00 = 6 * s2 - 6 * s, d10 = 3 * s2 - 4 * s + 1;
  const double d01 = -6 * s2 + 6 * s, d11 = 3 * s2 - 2 * s;
  State out;
  out.q = h00 * a.q + h10 * dt * a.qdot + h01 * b.q + h11 * dt * b.qdot;
  out.qdot = (d00 * a.q + d10 * dt * a.qdot + d01 * b.q + d11 * dt * b.qdot) /
             dt;
  return out;
}

}  // namespace detail

struct EventHit {
  std::vector<int> contacts;  // gaps crossing zero, together if simultaneous
  double time_fraction = 0.0; // in (0, 1] of the substep
  State state;                // interpolated state at the crossing
};

/// Locates the earliest gap crossing between two integration endpoints by
/// bisection on the interpolated trajectory. `watch` lists the contact
/// indices whose gap was open before the step.
inline std::optional<EventHit> detect_event(const ModelParams& params,
                                            const State& before,
                                            const State& after, double dt,
                                            double event_tol,
                                            const std::vector<int>& watch) {
  if (watch.empty()) return std::nullopt;
  auto min_gap = [&](const State& s) {
    const ContactGeometry geo = contact_geometry(params, s);
    double m = std::numeric_limits<double>::infinity();
    for (int i : watch) m = std::min(m, geo.gaps[i]);
    return m;
  };
  if (min_gap(after) > 0.0) return std::nullopt;

  double lo = 0.0, hi = 1.0;
  State s_hi = after;
  for (int it = 0; it < 128; ++it) {
    const double g_hi = min_gap(s_hi);
    if (g_hi <= 0.0 && g_hi >= -event_tol) break;
    const double mid = 0.5 * (lo + hi);
    const State s_mid = detail::hermite_state(before, after, dt, mid);
    if (min_gap(s_mid) <= 0.0) {
      hi = mid;
      s_hi = s_mid;
    } else {
      lo = mid;
    }
    if (hi - lo < 1e-15) break;
  }

  EventHit hit;
  hit.time_fraction = hi;
  hit.state = s_hi;
  const ContactGeometry geo = contact_geometry(params, s_hi);
  for (int i : watch)
    if (geo.gaps[i] <= event_tol) hit.contacts.push_back(i);
  if (hit.contacts.empty()) return std::nullopt;
  return hit;
}

namespace detail {

// Inelastic impact resolution over the union of closing and already
// closed contacts: enumerate active subsets, require non-negative
// impulses inside and non-penetrating post-impact rates outside.
inline ImpactEvent resolve_impact(const ModelParams& params, State& state,
                                  std::vector<int> candidates, double t) {
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  std::vector<std::vector<int>> subsets;
  if (candidates.size() == 2)
    subsets = {{candidates[0], candidates[1]}, {candidates[0]},
               {candidates[1]}};
  else
    subsets = {candidates};

  const ContactGeometry geo = contact_geometry(params, state);
  ImpactEvent ev;
  ev.t = t;
  ev.kinetic_pre = kinetic_energy(params, state);
  for (const auto& subset : subsets) {
    const ImpactResult res = impact_map(params, state, subset);
    if (res.impulse.minCoeff() < -1e-10) continue;
    bool admissible = true;
    for (int i : candidates) {
      if (std::find(subset.begin(), subset.end(), i) != subset.end())
        continue;
      if (geo.JN.row(i) * res.qdot_post < -1e-10) admissible = false;
    }
    if (!admissible) continue;
    state.qdot = res.qdot_post;
    ev.active = subset;
    for (size_t r = 0; r < subset.size(); ++r)
      ev.impulse[subset[r]] = res.impulse[static_cast<int>(r)];
    ev.kinetic_post = kinetic_energy(params, state);
    return ev;
  }
  // fall back to the full candidate set
  const ImpactResult res = impact_map(params, state, candidates);
  state.qdot = res.qdot_post;
  ev.active = candidates;
  for (size_t r = 0; r < candidates.size(); ++r)
    ev.impulse[candidates[r]] = res.impulse[static_cast<int>(r)];
  ev.kinetic_post = kinetic_energy(params, state);
  return ev;
}

}  // namespace detail

/// One substep of the constrained dynamics with the given active set:
/// releases contacts whose force turns negative, integrates, and
/// projects the surviving constraints back to zero drift. Returns the
/// contact forces at the step start (after release filtering).
inline std::pair<State, Eigen::VectorXd> step_constrained(
    const ModelParams& params, const State& state, const Vec3& tau,
    std::vector<int>& active, double dt) {
  State work = state;
  const detail::ContactSolve cs =
      detail::release_filter(params, work, tau, active);
  if (active.empty()) return {step_free(params, work, tau, dt), cs.lambda};
  work = detail::rk4_constrained(params, work, tau, active, dt);
  detail::project_active(params, work, active);
  return {work, cs.lambda};
}

/// Event-driven simulation of the rigid model: smooth integration with
/// gap-crossing detection, inelastic impact maps, and complementarity
/// based contact release. `log` is filled incrementally so partial
/// results survive a propagated error.
inline void run_rigid(const ModelParams& params, const SimConfig& config,
                      const ReferenceBundle& refs, Controller& controller,
                      SimLog& log) {
  config.validate();
  log = SimLog{};
  log.model = "rigid";
  log.strategy = to_string(controller.config().strategy);

  State state;
  {
    const auto p0 = refs.ante_pos(0.0);
    const auto o0 = refs.ante_orient(0.0);
    state.q << inverse_kinematics(params, p0.value, o0.value, true),
        params.plank_rest_angle;
    state.qdot.setZero();
  }

  std::vector<int> active;
  const double dt = controller.config().dt;
  const int n_periods = static_cast<int>(std::llround(config.t_end / dt));
  ControlOutput out;

  auto observation = [&]() {
    const ContactGeometry geo = contact_geometry(params, state);
    return ContactObservation{geo.gaps, geo.JN * state.qdot};
  };
  auto notify = [&](double t_now) {
    const ControlMode before = controller.mode();
    if (controller.observe(t_now, observation())) {
      log.mode_switches.push_back({t_now, before, controller.mode()});
      out = controller.compute(t_now, state);
    }
  };
  auto handle_impact = [&](double t_ev) -> bool {
    // detect_event already advanced `state` to the crossing
    std::vector<int> candidates = active;
    const ContactGeometry geo = contact_geometry(params, state);
    bool closing = false;
    for (int i = 0; i < 2; ++i) {
      if (std::find(active.begin(), active.end(), i) != active.end()) continue;
      if (geo.gaps[i] <= config.event_tol &&
          geo.JN.row(i) * state.qdot < 1e-12) {
        candidates.push_back(i);
        closing = true;
      }
    }
    if (!closing) return false;
    ImpactEvent ev = detail::resolve_impact(params, state, candidates, t_ev);
    log.events.push_back(ev);
    active = ev.active;
    detail::project_active(params, state, active);
    notify(t_ev);
    return true;
  };

  for (int k = 0; k < n_periods; ++k) {
    const double t_k = k * dt;
    if (!state.finite())
      throw NonFiniteState("run_rigid: non-finite state at t=" +
                           std::to_string(t_k));

    {
      const ControlMode before = controller.mode();
      if (controller.observe(t_k, observation()))
        log.mode_switches.push_back({t_k, before, controller.mode()});
    }
    out = controller.compute(t_k, state);
    const detail::ContactSolve sample_cs =
        detail::release_filter(params, state, out.tau_star, active);

    {
      const ContactGeometry geo = contact_geometry(params, state);
      const TaskKinematics kin =
          task_jacobians(params, state.q, state.qdot);
      Vec2 lam = Vec2::Zero();
      for (size_t r = 0; r < active.size(); ++r)
        lam[active[r]] = sample_cs.lambda[static_cast<int>(r)];
      log.t.push_back(t_k);
      log.q.push_back(state.q);
      log.qdot.push_back(state.qdot);
      log.p.push_back(kin.p);
      log.pdot.push_back(kin.Jp * state.qdot);
      log.theta.push_back(kin.theta);
      log.thetadot.push_back(kin.Jtheta * state.qdot);
      log.gaps.push_back(geo.gaps);
      log.lambda.push_back(lam);
      log.tau_star.push_back(out.tau_star);
      log.mode.push_back(static_cast<int>(controller.mode()));
      log.qp_cost.push_back(out.qp.cost);
      log.qp_kkt.push_back(out.qp.kkt_residual);
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
        const double h = std::min(config.step, span_end - t);
        std::vector<int> watch;
        {
          const ContactGeometry geo = contact_geometry(params, state);
          for (int i = 0; i < 2; ++i) {
            if (std::find(active.begin(), active.end(), i) == active.end() &&
                geo.gaps[i] > 0.0)
              watch.push_back(i);
          }
        }

        if (active.empty()) {
          const State before = state;
          const State trial = step_free(params, state, out.tau_star, h);
          if (auto hit = detect_event(params, before, trial, h,
                                      config.event_tol, watch)) {
            state = hit->state;
            t += hit->time_fraction * h;
            handle_impact(t);
            continue;
          }
          if (config.energy_audit) {
            // free-motion energy balance audit alongside the step
            const double e0 = kinetic_energy(params, before) +
                              potential_energy(params, before.q);
            const double e1 = kinetic_energy(params, trial) +
                              potential_energy(params, trial.q);
            auto power = [&](const State& s) {
              return s.qdot.head<3>().dot(out.tau_star) -
                     params.hinge_damping * s.qdot[3] * s.qdot[3];
            };
            const State mid = detail::hermite_state(before, trial, h, 0.5);
            const double dW =
                (h / 6.0) * (power(before) + 4.0 * power(mid) + power(trial));
            log.energy_residual_max =
                std::max(log.energy_residual_max,
                         std::abs(e1 - e0 - dW) / std::max(1.0, std::abs(e0)));
          }
          state = trial;
          t += h;
        } else {
          const State before = state;
          auto [trial, lambda] =
              step_constrained(params, state, out.tau_star, active, h);
          (void)lambda;
          if (auto hit = detect_event(params, before, trial, h,
                                      config.event_tol, watch)) {
            state = hit->state;
            t += hit->time_fraction * h;
            detail::project_active(params, state, active);
            handle_impact(t);
            continue;
          }
          state = trial;
          t += h;
        }
      }
      t = span_end;
      if (scheduled) notify(t);
    }
  }
}

}  // namespace rspread
