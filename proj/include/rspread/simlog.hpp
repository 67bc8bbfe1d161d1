#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "rspread/control.hpp"
#include "rspread/model.hpp"

namespace rspread {

struct ImpactEvent {
  double t = 0.0;
  std::vector<int> active;           // contact indices involved in the map
  Vec2 impulse = Vec2::Zero();       // N s, zero for uninvolved contacts
  double kinetic_pre = 0.0;          // J
  double kinetic_post = 0.0;         // J
};

struct ModeSwitch {
  double t = 0.0;
  ControlMode from = ControlMode::Ante;
  ControlMode to = ControlMode::Ante;
};

/// Uniformly sampled simulation log, one sample per control period, plus
/// the discrete impact events and mode switches.
struct SimLog {
  std::string model;     // "rigid" or "flexible"
  std::string strategy;  // strategy name

  std::vector<double> t;
  std::vector<Vec4> q, qdot;
  std::vector<Vec2> p, pdot;
  std::vector<double> theta, thetadot;
  std::vector<Vec2> gaps, lambda;
  std::vector<Vec3> tau_star;
  std::vector<int> mode;
  std::vector<double> qp_cost, qp_kkt;

  // flexible model extras; empty for the rigid model
  std::vector<Vec3> theta_rob, tau_flex;
  std::vector<double> step_size;

  std::vector<ImpactEvent> events;
  std::vector<ModeSwitch> mode_switches;
  double energy_residual_max = 0.0;  // free-motion balance audit

  size_t size() const { return t.size(); }
  bool flexible() const { return model == "flexible"; }
};

inline const char* kRigidCsvHeader =
    "t,q1,q2,q3,q4,qd1,qd2,qd3,qd4,px,py,theta,vx,vy,thetadot,"
    "gamma1,gamma2,lambda1,lambda2,tau1,tau2,tau3,mode,qp_cost,qp_kkt";
inline const char* kFlexCsvExtra =
    ",th1,th2,th3,tauflex1,tauflex2,tauflex3,hstep";

/// Fixed-order, bit-stable CSV serialization (%.12e per value).
inline void write_csv(const SimLog& log, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("write_csv: cannot open " + path);
  std::fputs(kRigidCsvHeader, f);
  if (log.flexible()) std::fputs(kFlexCsvExtra, f);
  std::fputc('\n', f);

  for (size_t k = 0; k < log.size(); ++k) {
    std::vector<double> row = {log.t[k]};
    for (int i = 0; i < 4; ++i) row.push_back(log.q[k][i]);
    for (int i = 0; i < 4; ++i) row.push_back(log.qdot[k][i]);
    row.insert(row.end(), {log.p[k][0], log.p[k][1], log.theta[k],
                           log.pdot[k][0], log.pdot[k][1], log.thetadot[k],
                           log.gaps[k][0], log.gaps[k][1], log.lambda[k][0],
                           log.lambda[k][1], log.tau_star[k][0],
                           log.tau_star[k][1], log.tau_star[k][2]});
    std::fprintf(f, "%.12e", row[0]);
    for (size_t c = 1; c < row.size(); ++c) std::fprintf(f, ",%.12e", row[c]);
    std::fprintf(f, ",%d,%.12e,%.12e", log.mode[k], log.qp_cost[k],
                 log.qp_kkt[k]);
    if (log.flexible()) {
      for (int i = 0; i < 3; ++i) std::fprintf(f, ",%.12e", log.theta_rob[k][i]);
      for (int i = 0; i < 3; ++i) std::fprintf(f, ",%.12e", log.tau_flex[k][i]);
      std::fprintf(f, ",%.12e", log.step_size[k]);
    }
    std::fputc('\n', f);
  }
  std::fclose(f);
}

/// Side-car event file: impact times, active sets, impulses and the
/// kinetic energy across the impact.
inline void write_events_csv(const SimLog& log, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("write_events_csv: cannot open " + path);
  std::fputs("t,active1,active2,Lambda1,Lambda2,T_pre,T_post\n", f);
  for (const ImpactEvent& e : log.events) {
    int a1 = 0, a2 = 0;
    for (int i : e.active) (i == 0 ? a1 : a2) = 1;
    std::fprintf(f, "%.12e,%d,%d,%.12e,%.12e,%.12e,%.12e\n", e.t, a1, a2,
                 e.impulse[0], e.impulse[1], e.kinetic_pre, e.kinetic_post);
  }
  for (const ModeSwitch& s : log.mode_switches) {
    std::fprintf(f, "# mode %.12e %d %d\n", s.t, static_cast<int>(s.from),
                 static_cast<int>(s.to));
  }
  std::fclose(f);
}

/// Column-oriented CSV reader for the fixed schemas written above.
struct CsvTable {
  std::vector<std::string> header;
  std::map<std::string, std::vector<double>> columns;

  const std::vector<double>& col(const std::string& name) const {
    auto it = columns.find(name);
    if (it == columns.end())
      throw SchemaMismatch("csv: missing column " + name);
    return it->second;
  }
  size_t rows() const {
    return columns.empty() ? 0 : columns.begin()->second.size();
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "r");
  if (!f) throw Error("read_csv: cannot open " + path);
  CsvTable table;
  char line[4096];
  if (!std::fgets(line, sizeof(line), f)) {
    std::fclose(f);
    throw SchemaMismatch("csv: empty file " + path);
  }
  {
    std::string h(line);
    while (!h.empty() && (h.back() == '\n' || h.back() == '\r')) h.pop_back();
    size_t pos = 0;
    while (pos <= h.size()) {
      size_t comma = h.find(',', pos);
      if (comma == std::string::npos) comma = h.size();
      table.header.push_back(h.substr(pos, comma - pos));
      pos = comma + 1;
    }
  }
  for (const std::string& name : table.header) table.columns[name] = {};
  while (std::fgets(line, sizeof(line), f)) {
    if (line[0] == '#' || line[0] == '\n') continue;
    const char* ptr = line;
    for (size_t c = 0; c < table.header.size(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(ptr, &end);
      if (end == ptr) {
        std::fclose(f);
        throw SchemaMismatch("csv: bad row in " + path);
      }
      table.columns[table.header[c]].push_back(v);
      ptr = (*end == ',') ? end + 1 : end;
    }
  }
  std::fclose(f);
  return table;
}

}  // namespace rspread
