#include <catch2/catch_amalgamated.hpp>

#include "rspread/mechanics.hpp"
#include "test_support.hpp"

using namespace rspread;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("forward kinematics of the straight arm") {
  ModelParams params;
  TaskKinematics kin = forward_kinematics(params, Vec4(0, 0, 0, 0.3));
  CHECK(kin.p[0] == Catch::Approx(0.75).margin(1e-15));
  CHECK(kin.p[1] == Catch::Approx(0.0).margin(1e-15));
  CHECK(kin.theta == Catch::Approx(0.0).margin(1e-15));

  kin = forward_kinematics(params, Vec4(kPi / 2, 0, 0, -0.2));
  CHECK(kin.p[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(kin.p[1] == Catch::Approx(0.75).margin(1e-12));
  CHECK(kin.theta == Catch::Approx(kPi / 2));
}

TEST_CASE("position Jacobian matches finite differences") {
  ModelParams params;
  test::StateSampler sampler(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec4 q = sampler.position();
    const TaskKinematics kin = task_jacobians(params, q, Vec4::Zero());
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
      Vec4 qp = q, qm = q;
      qp[i] += h;
      qm[i] -= h;
      const Vec2 col = (forward_kinematics(params, qp).p -
                        forward_kinematics(params, qm).p) /
                       (2 * h);
      const double dth = (forward_kinematics(params, qp).theta -
                          forward_kinematics(params, qm).theta) /
                         (2 * h);
      CHECK((kin.Jp.col(i) - col).norm() < 1e-6);
      CHECK(std::abs(kin.Jtheta[i] - dth) < 1e-6);
    }
  }
}

TEST_CASE("Jacobian structure: orientation row and plank column") {
  ModelParams params;
  test::StateSampler sampler(12);
  for (int trial = 0; trial < 20; ++trial) {
    const TaskKinematics kin =
        task_jacobians(params, sampler.position(), sampler.velocity());
    CHECK(kin.Jtheta[0] == 1.0);
    CHECK(kin.Jtheta[1] == 1.0);
    CHECK(kin.Jtheta[2] == 1.0);
    CHECK(kin.Jtheta[3] == 0.0);
    CHECK(kin.Jp.col(3).norm() == 0.0);
    CHECK(kin.Jp_dot.col(3).norm() == 0.0);
    CHECK(kin.Jtheta_dot.norm() == 0.0);
  }
}

TEST_CASE("Jacobian time derivative matches directional differences") {
  ModelParams params;
  test::StateSampler sampler(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec4 q = sampler.position();
    const Vec4 qdot = sampler.velocity();
    const TaskKinematics kin = task_jacobians(params, q, qdot);
    const double h = 1e-6;
    const Mat24 Jp_fd = (task_jacobians(params, q + h * qdot, qdot).Jp -
                         task_jacobians(params, q - h * qdot, qdot).Jp) /
                        (2 * h);
    CHECK((kin.Jp_dot - Jp_fd).cwiseAbs().maxCoeff() < 1e-6);
  }
  const TaskKinematics still =
      task_jacobians(params, sampler.position(), Vec4::Zero());
  CHECK(still.Jp_dot.norm() == 0.0);
}

TEST_CASE("mass matrix structure and positivity") {
  ModelParams params;
  test::StateSampler sampler(14);
  for (int trial = 0; trial < 1000; ++trial) {
    const Mat4 M = mass_matrix(params, sampler.position());
    CHECK(M(3, 3) == 4.5);
    CHECK(M.row(3).head<3>().norm() == 0.0);
    CHECK(M.col(3).head<3>().norm() == 0.0);
    CHECK((M - M.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    const Eigen::SelfAdjointEigenSolver<Mat4> eig(M);
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("kinetic energy agrees with the per-body oracle") {
  ModelParams params;
  test::StateSampler sampler(15);
  for (int trial = 0; trial < 100; ++trial) {
    const State s = sampler.state();
    const double T = kinetic_energy(params, s);
    const double T_oracle = test::kinetic_energy_bodywise(params, s);
    CHECK(T == Catch::Approx(T_oracle).epsilon(1e-6));
  }
}

TEST_CASE("bias vector vanishes at rest without gravity or deflection") {
  ModelParams params;
  params.gravity = 0.0;
  const Vec4 h =
      bias_vector(params, State{Vec4(0.4, -0.8, 0.2, 0.0), Vec4::Zero()});
  CHECK(h.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("gravity part of the bias equals the potential gradient") {
  ModelParams params;
  test::StateSampler sampler(16);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec4 q = sampler.position();
    const Vec4 h_vec = bias_vector(params, State{q, Vec4::Zero()});
    const double step = 1e-6;
    for (int i = 0; i < 4; ++i) {
      Vec4 qp = q, qm = q;
      qp[i] += step;
      qm[i] -= step;
      const double dV = (potential_energy(params, qp) -
                         potential_energy(params, qm)) /
                        (2 * step);
      CHECK(h_vec[i] == Catch::Approx(dV).margin(1e-6));
    }
  }
}

TEST_CASE("plank hinge spring-damper sits in the last bias row") {
  ModelParams params;
  State s;
  s.q << 0.3, -0.5, 0.1, 0.07;
  s.qdot << 0, 0, 0, -0.4;
  params.gravity = 0.0;
  const Vec4 h = bias_vector(params, s);
  CHECK(h[3] == Catch::Approx(40.0 * 0.07 + 40.0 * (-0.4)));
  CHECK(h.head<3>().norm() < 1e-14);  // plank motion cannot load the arm

  params.plank_rest_angle = 0.07;
  s.qdot.setZero();
  CHECK(bias_vector(params, s)[3] == 0.0);
}

TEST_CASE("actuation matrix selects the robot joints") {
  const Mat43 S = actuation_matrix();
  const Vec4 v(1.0, -2.0, 3.0, 4.0);
  const Vec3 picked = S.transpose() * v;
  CHECK(picked[0] == 1.0);
  CHECK(picked[1] == -2.0);
  CHECK(picked[2] == 3.0);
  const Vec3 tau(0.3, 0.2, 0.1);
  CHECK((S * tau)[3] == 0.0);
  CHECK(S.fullPivLu().rank() == 3);
}
