#include <catch2/catch_amalgamated.hpp>

#include "rspread/contact.hpp"
#include "rspread/reference.hpp"
#include "test_support.hpp"

using namespace rspread;

namespace {

// flush face-on-plank configuration used by several tests
State flush_state(const ModelParams& params, double q4,
                  double tangent = 0.15) {
  const Vec2 u4(std::cos(q4), std::sin(q4));
  const Vec2 n4(-std::sin(q4), std::cos(q4));
  const Vec2 p =
      params.hinge_offset + tangent * u4 + 0.5 * params.plank_thickness * n4;
  State s;
  s.q << inverse_kinematics(params, p, q4, true), q4;
  return s;
}

}  // namespace

TEST_CASE("flush configuration closes both gaps") {
  ModelParams params;
  const State s = flush_state(params, 0.0);
  const ContactGeometry geo = contact_geometry(params, s);
  CHECK(std::abs(geo.gaps[0]) < 1e-12);
  CHECK(std::abs(geo.gaps[1]) < 1e-12);

  // rotating the plank away from the fixed corners opens both gaps
  State away = s;
  away.q[3] -= 0.05;
  const ContactGeometry opened = contact_geometry(params, away);
  CHECK(opened.gaps[0] > 0.0);
  CHECK(opened.gaps[1] > 0.0);
}

TEST_CASE("contact Jacobian rows match finite differences of the gaps") {
  ModelParams params;
  test::StateSampler sampler(21);
  for (int trial = 0; trial < 100; ++trial) {
    const State s = sampler.state();
    const ContactGeometry geo = contact_geometry(params, s);
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
      State sp = s, sm = s;
      sp.q[i] += h;
      sm.q[i] -= h;
      const Vec2 dg = (contact_geometry(params, sp).gaps -
                       contact_geometry(params, sm).gaps) /
                      (2 * h);
      CHECK(std::abs(geo.JN(0, i) - dg[0]) < 1e-6);
      CHECK(std::abs(geo.JN(1, i) - dg[1]) < 1e-6);
    }
    // JN_dot along the actual motion
    State sp = s, sm = s;
    sp.q += h * s.qdot;
    sm.q -= h * s.qdot;
    const Mat24 dJ = (contact_geometry(params, sp).JN -
                      contact_geometry(params, sm).JN) /
                     (2 * h);
    CHECK((geo.JN_dot - dJ).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("contact Jacobian has rank 2 in a flush configuration") {
  ModelParams params;
  const State s = flush_state(params, 0.1);
  const ContactGeometry geo = contact_geometry(params, s);
  Eigen::JacobiSVD<Mat24> svd(geo.JN);
  CHECK(svd.singularValues()(1) > 1e-3);
}

TEST_CASE("impact map leaves a consistent velocity untouched") {
  ModelParams params;
  const State flush = flush_state(params, 0.0);
  const ContactGeometry geo = contact_geometry(params, flush);
  // build a velocity in the nullspace of JN
  Eigen::FullPivLU<Mat24> lu(geo.JN);
  const Eigen::MatrixXd null_basis = lu.kernel();
  State s = flush;
  s.qdot = null_basis.col(0).normalized();
  const ImpactResult res = impact_map(params, s, {0, 1});
  CHECK((res.qdot_post - s.qdot).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(res.impulse.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(std::abs(res.energy_loss) < 1e-10);
}

TEST_CASE("impact map projects, is idempotent, and dissipates") {
  ModelParams params;
  test::StateSampler sampler(22);
  const std::vector<std::vector<int>> active_sets = {{0}, {1}, {0, 1}};
  for (int trial = 0; trial < 200; ++trial) {
    const State s = sampler.state();
    for (const auto& active : active_sets) {
      const ImpactResult res = impact_map(params, s, active);
      const ContactGeometry geo = contact_geometry(params, s);
      for (size_t r = 0; r < active.size(); ++r)
        CHECK(std::abs(geo.JN.row(active[r]) * res.qdot_post) < 1e-10);

      State post = s;
      post.qdot = res.qdot_post;
      const ImpactResult twice = impact_map(params, post, active);
      CHECK((twice.qdot_post - res.qdot_post).cwiseAbs().maxCoeff() < 1e-10);

      const double t_pre = kinetic_energy(params, s);
      CHECK(res.energy_loss >= -1e-10 * t_pre);
    }
  }
}

TEST_CASE("impact map agrees with the direct linear-system oracle") {
  ModelParams params;
  test::StateSampler sampler(23);
  for (int trial = 0; trial < 200; ++trial) {
    const State s = sampler.state();
    const ContactGeometry geo = contact_geometry(params, s);
    const Mat4 M = mass_matrix(params, s.q);

    // stack M (qdot_post - qdot_pre) = JN^T Lambda with JN qdot_post = 0
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(6, 6);
    A.topLeftCorner<4, 4>() = M;
    A.topRightCorner<4, 2>() = -geo.JN.transpose();
    A.bottomLeftCorner<2, 4>() = geo.JN;
    Eigen::VectorXd rhs(6);
    rhs.head<4>() = M * s.qdot;
    rhs.tail<2>().setZero();
    const Eigen::VectorXd sol = A.fullPivLu().solve(rhs);

    const ImpactResult res = impact_map(params, s, {0, 1});
    const double scale = std::max(1.0, s.qdot.cwiseAbs().maxCoeff());
    CHECK((res.qdot_post - sol.head<4>()).cwiseAbs().maxCoeff() <
          1e-10 * scale);
    CHECK((res.impulse - sol.tail<2>()).cwiseAbs().maxCoeff() <
          1e-10 * std::max(1.0, sol.tail<2>().cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("impact map rejects singular contact geometry") {
  ModelParams params;
  // straight arm pointing along x with the plank normal orthogonal to
  // every feasible corner motion produces a rank-deficient Delassus
  State s;
  s.q << 0.0, 0.0, 0.0, 0.0;
  s.qdot.setZero();
  // both rows of JN become nearly parallel when the corners coincide
  ModelParams degenerate = params;
  degenerate.ee_face_width = 1e-15;
  CHECK_THROWS_AS(impact_map(degenerate, s, std::vector<int>{0, 1}),
                  SingularImpactGeometry);
}

TEST_CASE("compliant force law branches") {
  ModelParams params;  // gap-rate pairing, Table-like constants
  CHECK(hunt_crossley_force(params, 1e-3, -5.0) == 0.0);
  CHECK(hunt_crossley_force(params, -1e-6, 0.0) ==
        Catch::Approx(0.32).epsilon(1e-12));
  // deep in the exponential branch the force underflows to ~0 but never
  // turns negative
  const double fast = hunt_crossley_force(params, -1e-6, -1.0);
  CHECK(fast >= 0.0);
  CHECK(fast < 1e-100);

  // continuity across the rate branches
  const double below = hunt_crossley_force(params, -1e-5, -1e-12);
  const double above = hunt_crossley_force(params, -1e-5, 1e-12);
  CHECK(below == Catch::Approx(above).epsilon(1e-6));

  // penetration-rate pairing flips which side dissipates
  ModelParams conventional = params;
  conventional.contact_pairing = HuntCrossleyPairing::PenetrationRate;
  const double compressing = hunt_crossley_force(conventional, -1e-6, -1.0);
  CHECK(compressing ==
        Catch::Approx((3.2e8 + 3.2e11) * 1e-9).epsilon(1e-12));
  CHECK(hunt_crossley_force(conventional, -1e-6, 1.0) >= 0.0);
}
