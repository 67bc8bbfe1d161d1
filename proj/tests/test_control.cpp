#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "rspread/control.hpp"
#include "test_support.hpp"

using namespace rspread;

namespace {

// bundle whose ante and post references hold one fixed pose
ReferenceBundle hold_bundle(const Vec2& p, double theta) {
  ReferenceBundle b;
  b.t_imp = 1.0;
  b.t_end = 2.0;
  b.ante_x = Quintic(0, 1, p[0], 0, 0, p[0], 0, 0);
  b.ante_y = Quintic(0, 1, p[1], 0, 0, p[1], 0, 0);
  b.ante_theta = Quintic(0, 1, theta, 0, 0, theta, 0, 0);
  b.post_x = b.ante_x;
  b.post_y = b.ante_y;
  return b;
}

State flush_state(const ModelParams& params, double q4, double tangent) {
  const Vec2 u4(std::cos(q4), std::sin(q4));
  const Vec2 n4(-std::sin(q4), std::cos(q4));
  const Vec2 p =
      params.hinge_offset + tangent * u4 + 0.5 * params.plank_thickness * n4;
  State s;
  s.q << inverse_kinematics(params, p, q4, true), q4;
  return s;
}

void check_eom(const ModelParams& params, const State& s,
               const ControlOutput& out, const Vec2& lambda = Vec2::Zero(),
               const Vec4& qdot_model = Vec4::Constant(
                   std::numeric_limits<double>::quiet_NaN())) {
  const Vec4 qd = qdot_model.allFinite() ? qdot_model : s.qdot;
  const Mat4 M = mass_matrix(params, s.q);
  const Vec4 h = bias_vector(params, State{s.q, qd});
  Vec4 residual = M * out.qddot_star + h - actuation_matrix() * out.tau_star;
  if (lambda.norm() > 0.0) {
    const ContactGeometry geo = contact_geometry(params, s);
    residual -= geo.JN.transpose() * lambda;
  }
  CHECK(residual.cwiseAbs().maxCoeff() < 1e-9);
}

}  // namespace

TEST_CASE("ante QP achieves the PD target acceleration") {
  ModelParams params;
  QpSolver solver;
  State s;
  s.q << 1.2, -1.1, 0.4, 0.0;
  s.qdot.setZero();
  const TaskKinematics kin = forward_kinematics(params, s.q);

  // pure x-offset of 1 cm, reference at rest: target accel kp^2 * delta
  ReferenceBundle refs = hold_bundle(kin.p + Vec2(0.01, 0.0), kin.theta);
  const ControlOutput out = ante_qp(params, s, refs, 0.5, solver);
  const TaskKinematics kin_full = task_jacobians(params, s.q, s.qdot);
  const Vec2 task_acc = kin_full.Jp * out.qddot_star;
  CHECK(task_acc[0] == Catch::Approx(4.0).margin(1e-7));
  CHECK(task_acc[1] == Catch::Approx(0.0).margin(1e-7));
  check_eom(params, s, out);
  CHECK(out.qp.kkt_residual <= 1e-8);
  CHECK(out.mode == ControlMode::Ante);
}

TEST_CASE("ante QP has zero residual cost on the reference") {
  ModelParams params;
  params.gravity = 0.0;
  QpSolver solver;
  State s;
  s.q << 1.0, -0.9, 0.3, 0.0;
  s.qdot.setZero();
  const TaskKinematics kin = forward_kinematics(params, s.q);
  ReferenceBundle refs = hold_bundle(kin.p, kin.theta);

  const ControlOutput out = ante_qp(params, s, refs, 0.2, solver);
  // on-reference at rest with no gravity: nothing to do
  CHECK(out.tau_star.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(out.qddot_star.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(out.qp.cost == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("ante QP satisfies the EOM constraint for random states") {
  ModelParams params;
  QpSolver solver;
  test::StateSampler sampler(41);
  ReferenceBundle refs = hold_bundle(Vec2(0.25, 0.4), 0.1);
  for (int trial = 0; trial < 50; ++trial) {
    const State s = sampler.state();
    const ControlOutput out = ante_qp(params, s, refs, 0.3, solver);
    check_eom(params, s, out);
    CHECK(out.qp.kkt_residual <= 1e-8);
  }
}

TEST_CASE("intermediate QP ignores measured velocities") {
  ModelParams params;
  ControllerConfig config;
  ReferenceBundle refs = hold_bundle(Vec2(0.25, 0.4), 0.05);
  refs.plank_nominal.rate = 0.0;

  Controller ctl(params, config, refs);
  ctl.observe(0.2, {Vec2(-1e-4, 0.01), Vec2(-0.3, -0.3)});
  REQUIRE(ctl.mode() == ControlMode::Intermediate);

  State a = flush_state(params, 0.0, 0.15);
  a.q[3] = 0.02;
  State b = a;
  a.qdot << 0.7, -0.3, 2.1, -0.9;
  b.qdot << -4.0, 0.0, 13.7, 0.4;
  const ControlOutput oa = ctl.compute(0.2, a);
  const ControlOutput ob = ctl.compute(0.2, b);
  CHECK(std::memcmp(oa.tau_star.data(), ob.tau_star.data(),
                    3 * sizeof(double)) == 0);
  CHECK(std::memcmp(oa.qddot_star.data(), ob.qddot_star.data(),
                    4 * sizeof(double)) == 0);
}

TEST_CASE("intermediate QP is continuous with the ante QP on-reference") {
  ModelParams params;
  QpSolver solver;

  ReferenceSpec spec;
  const ReferenceBundle refs = build_reference(params, spec);
  const double t = 0.8;
  const auto rp = refs.ante_pos(t);
  const auto ro = refs.ante_orient(t);

  State s;
  s.q << inverse_kinematics(params, rp.value, ro.value),
      refs.plank_nominal.angle;
  // measured velocity exactly the reference joint velocity
  const TaskKinematics kin = task_jacobians(params, s.q, Vec4::Zero());
  Mat3 J;
  J.topRows<2>() = kin.Jp_rob();
  J.bottomRows<1>() = kin.Jtheta_rob().transpose();
  Vec3 task;
  task << rp.velocity, ro.velocity;
  s.qdot << J.partialPivLu().solve(task), refs.plank_nominal.rate;

  const ControlOutput ante = ante_qp(params, s, refs, t, solver);
  const ControlOutput itmd = intermediate_qp(params, s.q, refs, t, solver);
  CHECK((ante.tau_star - itmd.tau_star).cwiseAbs().maxCoeff() < 1e-8);
  check_eom(params, s, itmd, Vec2::Zero(), s.qdot);
}

TEST_CASE("post QP balances the contact forces at a static rest") {
  ModelParams params;
  QpSolver solver;
  const State s = flush_state(params, 0.0, 0.15);
  const TaskKinematics kin = forward_kinematics(params, s.q);
  ReferenceBundle refs = hold_bundle(kin.p, kin.theta);

  const ControlOutput out = post_qp(params, s, refs, 1.5, solver);
  CHECK(out.mode == ControlMode::Post);
  CHECK(out.lambda_star[0] ==
        Catch::Approx(out.lambda_star[1]).margin(1e-7));
  CHECK(out.lambda_star.minCoeff() >= -1e-12);
  check_eom(params, s, out, out.lambda_star);

  const ContactGeometry geo = contact_geometry(params, s);
  const Vec2 gap_acc = geo.JN * out.qddot_star + geo.JN_dot * s.qdot;
  CHECK(gap_acc.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("post QP keeps gap accelerations at zero while moving") {
  ModelParams params;
  QpSolver solver;
  State s = flush_state(params, -0.03, 0.16);
  // velocity consistent with closed contacts (nullspace of JN)
  const ContactGeometry geo = contact_geometry(params, s);
  Eigen::FullPivLU<Mat24> lu(geo.JN);
  s.qdot = lu.kernel().col(0).normalized() * 0.3;

  ReferenceBundle refs = hold_bundle(Vec2(0.24, 0.36), -0.03);
  const ControlOutput out = post_qp(params, s, refs, 1.2, solver);
  const ContactGeometry geo2 = contact_geometry(params, s);
  const Vec2 gap_acc = geo2.JN * out.qddot_star + geo2.JN_dot * s.qdot;
  CHECK(gap_acc.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(out.lambda_star.minCoeff() >= -1e-12);
  check_eom(params, s, out, out.lambda_star);
}

TEST_CASE("supervisor follows the two switching rules") {
  ControllerConfig config;
  config.epsilon = 0.01;

  // open gaps keep the ante mode
  CHECK(supervise(config, ControlMode::Ante,
                  {Vec2(0.01, 0.02), Vec2(-0.5, -0.5)}) == ControlMode::Ante);
  // one closed gap enters the intermediate mode
  CHECK(supervise(config, ControlMode::Ante,
                  {Vec2(-1e-6, 0.005), Vec2(-0.5, -0.5)}) ==
        ControlMode::Intermediate);
  // both closed but still lively: stay intermediate
  CHECK(supervise(config, ControlMode::Intermediate,
                  {Vec2(-1e-6, -1e-6), Vec2(0.2, -0.1)}) ==
        ControlMode::Intermediate);
  // both closed and settled: post
  CHECK(supervise(config, ControlMode::Intermediate,
                  {Vec2(-1e-5, -2e-5), Vec2(0.001, -0.002)}) ==
        ControlMode::Post);
  // post never leaves
  CHECK(supervise(config, ControlMode::Post,
                  {Vec2(0.5, 0.5), Vec2(0, 0)}) == ControlMode::Post);
  // no skipping in a single call
  CHECK(supervise(config, ControlMode::Ante,
                  {Vec2(-1e-5, -2e-5), Vec2(0.0, 0.0)}) ==
        ControlMode::Intermediate);
}

TEST_CASE("strategies map observations to modes") {
  ModelParams params;
  ReferenceBundle refs = hold_bundle(Vec2(0.25, 0.4), 0.0);
  refs.t_imp = 1.0;

  ControllerConfig config;
  config.strategy = Strategy::RsNoIntermediate;
  Controller rs_ni(params, config, refs);
  rs_ni.observe(0.5, {Vec2(0.01, 0.01), Vec2(-0.5, -0.5)});
  CHECK(rs_ni.mode() == ControlMode::Ante);
  rs_ni.observe(0.6, {Vec2(-1e-9, 0.01), Vec2(-0.5, -0.5)});
  CHECK(rs_ni.mode() == ControlMode::Post);

  config.strategy = Strategy::NoRs;
  Controller no_rs(params, config, refs);
  no_rs.observe(0.99, {Vec2(-0.01, -0.01), Vec2(0, 0)});
  CHECK(no_rs.mode() == ControlMode::Ante);  // contacts ignored
  CHECK(no_rs.scheduled_switch().has_value());
  CHECK(*no_rs.scheduled_switch() == 1.0);
  no_rs.observe(1.0, {Vec2(0.1, 0.1), Vec2(0, 0)});
  CHECK(no_rs.mode() == ControlMode::Post);
  CHECK(!no_rs.scheduled_switch().has_value());
}

TEST_CASE("baselines equal the ante QP before any impact") {
  ModelParams params;
  ReferenceSpec spec;
  const ReferenceBundle refs = build_reference(params, spec);
  QpSolver solver;

  State s;
  s.q << inverse_kinematics(params, refs.ante_pos(0.4).value,
                            refs.ante_orient(0.4).value),
      0.0;
  s.qdot << 0.1, -0.2, 0.05, 0.0;
  const ControlOutput direct = ante_qp(params, s, refs, 0.4, solver);

  for (Strategy strategy :
       {Strategy::RsNoIntermediate, Strategy::NoRs}) {
    ControllerConfig config;
    config.strategy = strategy;
    Controller ctl(params, config, refs);
    ctl.observe(0.4, {Vec2(0.05, 0.04), Vec2(-0.4, -0.4)});
    const ControlOutput out = ctl.compute(0.4, s);
    CHECK(out.mode == ControlMode::Ante);
    CHECK((out.tau_star - direct.tau_star).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("mode transitions are monotone under arbitrary observations") {
  ModelParams params;
  ReferenceBundle refs = hold_bundle(Vec2(0.25, 0.4), 0.0);
  ControllerConfig config;
  Controller ctl(params, config, refs);
  test::StateSampler sampler(42);
  int last = static_cast<int>(ctl.mode());
  for (int k = 0; k < 500; ++k) {
    ContactObservation obs;
    obs.gaps =
        Vec2(sampler.uniform(-0.01, 0.01), sampler.uniform(-0.01, 0.01));
    obs.gap_rates =
        Vec2(sampler.uniform(-0.1, 0.1), sampler.uniform(-0.1, 0.1));
    ctl.observe(k * 1e-3, obs);
    const int now = static_cast<int>(ctl.mode());
    CHECK(now >= last);
    last = now;
  }
}
