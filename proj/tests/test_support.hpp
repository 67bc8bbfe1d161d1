#pragma once

#include <random>

#include "rspread/mechanics.hpp"
#include "rspread/model.hpp"

namespace rspread::test {

// Deterministic random states away from arm singularities, used by the
// finite-difference and impact-map oracles.
class StateSampler {
 public:
  explicit StateSampler(unsigned seed) : rng_(seed) {}

  Vec4 position() {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (;;) {
      Vec4 q(1.55 + 1.2 * u(rng_), -1.4 + 1.0 * u(rng_), 0.9 * u(rng_),
             0.3 * u(rng_));
      if (std::abs(std::sin(q[1])) > 0.15) return q;
    }
  }

  Vec4 velocity() {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    return Vec4(u(rng_), u(rng_), u(rng_), u(rng_));
  }

  State state() { return State{position(), velocity()}; }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }

 private:
  std::mt19937_64 rng_;
};

// Independent per-body energy oracle: body velocities from central
// finite differences of closed-form body positions, no Jacobian reuse.
inline double kinetic_energy_bodywise(const ModelParams& params,
                                      const State& state, double h = 1e-6) {
  auto body_pose = [&](const Vec4& q, int body) {
    double angle = 0.0;
    Vec2 pos = Vec2::Zero();
    for (int j = 0; j < body; ++j) {
      angle += q[j];
      pos += params.link_lengths[j] * Vec2(std::cos(angle), std::sin(angle));
    }
    const double a = angle + q[body];
    pos += 0.5 * params.link_lengths[body] * Vec2(std::cos(a), std::sin(a));
    return std::make_pair(pos, a);
  };

  double T = 0.0;
  for (int body = 0; body < 3; ++body) {
    const auto plus = body_pose(state.q + h * state.qdot, body);
    const auto minus = body_pose(state.q - h * state.qdot, body);
    const Vec2 v = (plus.first - minus.first) / (2.0 * h);
    const double w = (plus.second - minus.second) / (2.0 * h);
    T += 0.5 * params.link_masses[body] * v.squaredNorm() +
         0.5 * params.link_inertias[body] * w * w;
  }
  T += 0.5 * params.plank_inertia_hinge * state.qdot[3] * state.qdot[3];
  return T;
}

}  // namespace rspread::test
