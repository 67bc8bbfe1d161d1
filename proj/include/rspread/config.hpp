#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rspread/experiment.hpp"

namespace rspread {

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline std::vector<double> parse_numbers(const std::string& value,
                                         size_t expected,
                                         const std::string& key) {
  const auto items = split_list(value);
  if (items.size() != expected)
    throw Error("config: key '" + key + "' expects " +
                std::to_string(expected) + " numbers");
  std::vector<double> out;
  for (const auto& item : items) {
    size_t used = 0;
    out.push_back(std::stod(item, &used));
    if (used != item.size())
      throw Error("config: bad number '" + item + "' for key " + key);
  }
  return out;
}

inline Vec3 to_vec3(const std::vector<double>& v) {
  return Vec3(v[0], v[1], v[2]);
}

}  // namespace detail

/// Parses the sectioned key = value experiment configuration and applies
/// it on top of `base` (shipped defaults). Unknown sections or keys are
/// rejected so typos do not silently fall back to defaults.
inline ExperimentSpec load_config(const std::string& path,
                                  ExperimentSpec base = {}) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open " + path);

  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = detail::trim(s.substr(1, s.size() - 2));
      continue;
    }
    const size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw Error("config: expected key = value at line " +
                  std::to_string(lineno));
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string value = detail::trim(s.substr(eq + 1));
    auto num = [&](size_t n) { return detail::parse_numbers(value, n, key); };

    if (section == "model") {
      ModelParams& m = base.params;
      if (key == "masses") m.link_masses = detail::to_vec3(num(3));
      else if (key == "inertias") m.link_inertias = detail::to_vec3(num(3));
      else if (key == "plank_inertia") m.plank_inertia_hinge = num(1)[0];
      else if (key == "lengths") m.link_lengths = detail::to_vec3(num(3));
      else if (key == "face_width") m.ee_face_width = num(1)[0];
      else if (key == "plank_thickness") m.plank_thickness = num(1)[0];
      else if (key == "hinge_offset") {
        auto v = num(2);
        m.hinge_offset = Vec2(v[0], v[1]);
      } else if (key == "hinge_stiffness") m.hinge_stiffness = num(1)[0];
      else if (key == "hinge_damping") m.hinge_damping = num(1)[0];
      else if (key == "gravity") m.gravity = num(1)[0];
      else if (key == "kp") m.task_gain_pos = num(1)[0];
      else if (key == "ktheta") m.task_gain_orient = num(1)[0];
      else if (key == "wp") m.weight_pos = num(1)[0];
      else if (key == "wtheta") m.weight_orient = num(1)[0];
      else if (key == "wlambda") m.weight_force = num(1)[0];
      else if (key == "joint_stiffness")
        m.joint_stiffness = detail::to_vec3(num(3));
      else if (key == "joint_damping")
        m.joint_damping = detail::to_vec3(num(3));
      else if (key == "motor_inertia")
        m.motor_inertia = detail::to_vec3(num(3));
      else if (key == "desired_motor_inertia")
        m.desired_motor_inertia = detail::to_vec3(num(3));
      else if (key == "contact_exponent") m.contact_exponent = num(1)[0];
      else if (key == "contact_stiffness") m.contact_stiffness = num(1)[0];
      else if (key == "contact_damping") m.contact_damping = num(1)[0];
      else if (key == "contact_pairing") {
        if (value == "gap_rate")
          m.contact_pairing = HuntCrossleyPairing::GapRate;
        else if (value == "penetration_rate")
          m.contact_pairing = HuntCrossleyPairing::PenetrationRate;
        else
          throw Error("config: contact_pairing must be gap_rate or "
                      "penetration_rate");
      } else
        throw Error("config: unknown key [model] " + key);
    } else if (section == "scenario") {
      ReferenceSpec& r = base.scenario;
      if (key == "t_imp") r.t_imp = num(1)[0];
      else if (key == "t_end") r.t_end = num(1)[0];
      else if (key == "approach_speed") r.approach_speed = num(1)[0];
      else if (key == "contact_offset") r.contact_offset = num(1)[0];
      else if (key == "plank_angle") r.plank_nominal.angle = num(1)[0];
      else if (key == "plank_rate") r.plank_nominal.rate = num(1)[0];
      else if (key == "post_plank_delta") r.post_plank_delta = num(1)[0];
      else if (key == "post_tangent_delta") r.post_tangent_delta = num(1)[0];
      else if (key == "start") {
        auto v = num(3);
        r.start_pose = FacePose{Vec2(v[0], v[1]), v[2]};
      } else
        throw Error("config: unknown key [scenario] " + key);
    } else if (section == "control") {
      if (key == "dt") base.control.dt = num(1)[0];
      else if (key == "epsilon") base.control.epsilon = num(1)[0];
      else if (key == "gap_closed_tol")
        base.control.gap_closed_tol = num(1)[0];
      else
        throw Error("config: unknown key [control] " + key);
    } else if (section == "sim") {
      SimConfig& c = base.sim;
      if (key == "offset") c.plank_offset = num(1)[0];
      else if (key == "step") c.step = num(1)[0];
      else if (key == "step_contact") c.step_contact = num(1)[0];
      else if (key == "contact_margin") c.contact_margin = num(1)[0];
      else if (key == "event_tol") c.event_tol = num(1)[0];
      else if (key == "seed") c.seed = static_cast<unsigned>(num(1)[0]);
      else if (key == "energy_audit") c.energy_audit = num(1)[0] != 0.0;
      else
        throw Error("config: unknown key [sim] " + key);
    } else if (section == "run") {
      if (key == "model") base.model = value;
      else if (key == "out") base.outdir = value;
      else if (key == "plots") base.plots = value == "1" || value == "true";
      else if (key == "strategies") {
        base.strategies.clear();
        for (const std::string& name : detail::split_list(value)) {
          auto s = strategy_from_string(name);
          if (!s) throw Error("config: unknown strategy " + name);
          base.strategies.push_back(*s);
        }
      } else
        throw Error("config: unknown key [run] " + key);
    } else {
      throw Error("config: unknown section [" + section + "]");
    }
  }
  return base;
}

}  // namespace rspread
