#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "rspread/control.hpp"
#include "rspread/model.hpp"
#include "rspread/reference.hpp"
#include "rspread/sim_flex.hpp"
#include "rspread/sim_rigid.hpp"
#include "rspread/simlog.hpp"
#include "rspread/svgplot.hpp"

namespace rspread {

/// Full description of a batch study: which model, which strategies,
/// and the scenario/controller/simulation settings shared by the runs.
struct ExperimentSpec {
  ModelParams params;        // nominal model (controller and references)
  ReferenceSpec scenario;
  ControllerConfig control;  // strategy field is set per run
  SimConfig sim;
  std::string model = "rigid";  // "rigid" | "flexible"
  std::vector<Strategy> strategies = {Strategy::RsWithIntermediate,
                                      Strategy::RsNoIntermediate,
                                      Strategy::NoRs};
  std::string outdir = "out";
  bool plots = false;

  void validate() const {
    if (strategies.empty())
      throw Error("ExperimentSpec: at least one strategy required");
    if (model != "rigid" && model != "flexible")
      throw Error("ExperimentSpec: model must be rigid or flexible");
    if (!(sim.plank_offset > -0.5 && sim.plank_offset < 0.5))
      throw Error("ExperimentSpec: plank offset outside validity range");
    params.validate();
    control.validate();
    sim.validate();
  }
};

struct RunSummary {
  std::string name;
  bool ok = false;
  std::string error;
  std::vector<double> impact_times;
  double intermediate_duration = 0.0;
  double inter_impact_max_tau = 0.0;
  double post_rms_error = 0.0;
  double energy_residual_max = 0.0;
  double max_kkt_residual = 0.0;
};

namespace detail {

inline std::vector<double> first_closures(const SimLog& log) {
  // first closure time per contact, sorted; rigid logs use the exact
  // event times, flexible logs the first sampled penetration
  std::vector<double> times;
  if (!log.events.empty()) {
    bool seen[2] = {false, false};
    for (const ImpactEvent& e : log.events) {
      for (int i : e.active) {
        if (!seen[i]) {
          seen[i] = true;
          times.push_back(e.t);
        }
      }
    }
  } else {
    for (int i = 0; i < 2; ++i) {
      for (size_t k = 0; k < log.size(); ++k) {
        if (log.gaps[k][i] <= 0.0) {
          times.push_back(log.t[k]);
          break;
        }
      }
    }
  }
  std::sort(times.begin(), times.end());
  return times;
}

}  // namespace detail

inline RunSummary summarize_run(const SimLog& log,
                                const ReferenceBundle& refs) {
  RunSummary s;
  s.name = log.model + "_" + log.strategy;
  s.ok = true;
  s.impact_times = detail::first_closures(log);
  s.energy_residual_max = log.energy_residual_max;

  double t_itmd = -1.0, t_post = -1.0;
  for (const ModeSwitch& sw : log.mode_switches) {
    if (sw.to == ControlMode::Intermediate && t_itmd < 0.0) t_itmd = sw.t;
    if (sw.to == ControlMode::Post && t_post < 0.0) t_post = sw.t;
  }
  if (t_itmd >= 0.0 && t_post >= t_itmd)
    s.intermediate_duration = t_post - t_itmd;

  if (!s.impact_times.empty()) {
    const double t1 = s.impact_times.front();
    const double t2 = s.impact_times.size() > 1
                          ? s.impact_times[1]
                          : std::min(t1 + 0.1, log.t.back());
    for (size_t k = 0; k < log.size(); ++k) {
      if (log.t[k] < t1 || log.t[k] > t2) continue;
      s.inter_impact_max_tau = std::max(
          s.inter_impact_max_tau, log.tau_star[k].cwiseAbs().maxCoeff());
    }
  }

  double sq_sum = 0.0;
  size_t post_samples = 0;
  for (size_t k = 0; k < log.size(); ++k) {
    s.max_kkt_residual = std::max(s.max_kkt_residual, log.qp_kkt[k]);
    if (log.mode[k] != static_cast<int>(ControlMode::Post)) continue;
    const Vec2 err = refs.post_pos(log.t[k]).value - log.p[k];
    sq_sum += err.squaredNorm();
    ++post_samples;
  }
  if (post_samples > 0) s.post_rms_error = std::sqrt(sq_sum / post_samples);
  return s;
}

/// Builds the nominal reference bundle and runs one (model, strategy)
/// simulation. The true plant differs from the nominal model only by the
/// plank offset: its hinge rests at the offset angle while controller
/// and references assume the estimated one.
inline RunSummary run_one(const ExperimentSpec& spec, Strategy strategy,
                          SimLog& log) {
  ModelParams nominal = spec.params;
  nominal.plank_rest_angle = spec.scenario.plank_nominal.angle;
  SimConfig sim = spec.sim;
  sim.t_end = spec.scenario.t_end;
  sim.strategy = strategy;

  ControllerConfig ctl = spec.control;
  ctl.strategy = strategy;

  RunSummary summary;
  summary.name = spec.model + "_" + std::string(to_string(strategy));
  try {
    const ReferenceBundle refs = build_reference(nominal, spec.scenario);

    ModelParams truth = spec.params;
    truth.plank_rest_angle =
        spec.scenario.plank_nominal.angle + sim.plank_offset;

    Controller controller(nominal, ctl, refs);
    if (spec.model == "flexible")
      run_flex(truth, sim, refs, controller, log);
    else
      run_rigid(truth, sim, refs, controller, log);
    summary = summarize_run(log, refs);
  } catch (const std::exception& e) {
    summary.ok = false;
    summary.error = e.what();
  }
  return summary;
}

inline void write_summary(const std::vector<RunSummary>& runs,
                          const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("write_summary: cannot open " + path);
  for (const RunSummary& r : runs) {
    std::fprintf(f, "run: %s\n  status: %s\n", r.name.c_str(),
                 r.ok ? "ok" : ("error " + r.error).c_str());
    if (!r.ok) continue;
    std::fputs("  impact_times:", f);
    for (double t : r.impact_times) std::fprintf(f, " %.12e", t);
    std::fputc('\n', f);
    std::fprintf(f, "  intermediate_duration: %.12e\n",
                 r.intermediate_duration);
    std::fprintf(f, "  inter_impact_max_tau: %.12e\n",
                 r.inter_impact_max_tau);
    std::fprintf(f, "  post_rms_error: %.12e\n", r.post_rms_error);
    std::fprintf(f, "  energy_residual_max: %.12e\n", r.energy_residual_max);
    std::fprintf(f, "  max_kkt_residual: %.12e\n", r.max_kkt_residual);
  }
  std::fclose(f);
}

inline void emit_plots(const ExperimentSpec& spec);

/// Runs every (model, strategy) combination of the spec, writing one CSV
/// and one events file per run plus a summary table. Returns the run
/// summaries; the experiment succeeded iff all runs are ok.
inline std::vector<RunSummary> run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  std::filesystem::create_directories(spec.outdir);

  std::vector<RunSummary> results;
  for (Strategy strategy : spec.strategies) {
    SimLog log;
    RunSummary summary = run_one(spec, strategy, log);
    const std::string base =
        spec.outdir + "/" + spec.model + "_" + to_string(strategy);
    if (!log.t.empty() || summary.ok) {
      write_csv(log, base + ".csv");
      write_events_csv(log, base + "_events.csv");
    }
    results.push_back(summary);
  }
  if (spec.plots) emit_plots(spec);
  write_summary(results, spec.outdir + "/summary.txt");
  return results;
}

namespace detail {

inline void ensure_nominal_run(const ExperimentSpec& spec,
                               const std::string& path) {
  if (std::filesystem::exists(path)) return;
  ExperimentSpec nominal = spec;
  nominal.sim.plank_offset = 0.0;
  SimLog log;
  RunSummary s = run_one(nominal, Strategy::RsWithIntermediate, log);
  if (!s.ok) throw Error("nominal run failed: " + s.error);
  write_csv(log, path);
}

inline PlotSeries make_series(const CsvTable& table, const std::string& col,
                              const std::string& id, const std::string& label,
                              const std::string& color, bool dashed = false) {
  PlotSeries s;
  s.id = id;
  s.label = label;
  s.color = color;
  s.dashed = dashed;
  s.x = table.col("t");
  s.y = table.col(col);
  return s;
}

}  // namespace detail

/// Produces the two comparison figures per model from the run CSVs:
/// task velocities plus contact forces for the reference-spreading run,
/// and the commanded torque of every strategy against the nominal
/// (zero-offset) torque. The nominal run is executed automatically when
/// its CSV is absent.
inline void emit_plots(const ExperimentSpec& spec) {
  const std::string nominal_csv =
      spec.outdir + "/nominal_" + spec.model + ".csv";
  detail::ensure_nominal_run(spec, nominal_csv);
  const CsvTable nominal = read_csv(nominal_csv);

  const char* colors[3] = {"#1f77b4", "#d62728", "#2ca02c"};

  // velocity / contact-force figure for the intermediate-mode strategy
  {
    const std::string run_csv = spec.outdir + "/" + spec.model + "_" +
                                to_string(Strategy::RsWithIntermediate) +
                                ".csv";
    if (std::filesystem::exists(run_csv)) {
      const CsvTable run = read_csv(run_csv);
      std::vector<PlotPanel> panels(3);
      panels[0].title = "end-effector velocity (" + spec.model + ")";
      panels[0].ylabel = "m/s";
      panels[0].series = {
          detail::make_series(run, "vx", "vx_actual", "vx", colors[0]),
          detail::make_series(run, "vy", "vy_actual", "vy", colors[1]),
          detail::make_series(nominal, "vx", "vx_nominal", "vx nominal",
                              "#777777", true),
          detail::make_series(nominal, "vy", "vy_nominal", "vy nominal",
                              "#bbbbbb", true)};
      panels[1].title = "angular velocity";
      panels[1].ylabel = "rad/s";
      panels[1].series = {detail::make_series(run, "thetadot", "w_actual",
                                              "thetadot", colors[0]),
                          detail::make_series(nominal, "thetadot", "w_nominal",
                                              "nominal", "#777777", true)};
      panels[2].title = "contact forces";
      panels[2].ylabel = "N";
      panels[2].series = {
          detail::make_series(run, "lambda1", "lambda1", "lambda1", colors[0]),
          detail::make_series(run, "lambda2", "lambda2", "lambda2",
                              colors[1])};
      write_svg_panels(spec.outdir + "/" + spec.model + "_velocities.svg",
                       "t [s]", panels);
    }
  }

  // commanded torque comparison
  {
    std::vector<PlotPanel> panels(3);
    for (int j = 0; j < 3; ++j) {
      panels[j].title = "joint " + std::to_string(j + 1) + " commanded torque";
      panels[j].ylabel = "N m";
    }
    int ci = 0;
    for (Strategy strategy : spec.strategies) {
      const std::string run_csv =
          spec.outdir + "/" + spec.model + "_" + to_string(strategy) + ".csv";
      if (!std::filesystem::exists(run_csv)) continue;
      const CsvTable run = read_csv(run_csv);
      for (int j = 0; j < 3; ++j) {
        const std::string col = "tau" + std::to_string(j + 1);
        panels[j].series.push_back(detail::make_series(
            run, col, col + "_" + to_string(strategy), to_string(strategy),
            colors[ci % 3]));
      }
      ++ci;
    }
    for (int j = 0; j < 3; ++j) {
      const std::string col = "tau" + std::to_string(j + 1);
      panels[j].series.push_back(detail::make_series(
          nominal, col, col + "_nominal", "nominal", "#555555", true));
    }
    write_svg_panels(spec.outdir + "/" + spec.model + "_torques.svg", "t [s]",
                     panels);
  }
}

/// Invariant audit over a serialized run, used by the `check` command.
/// Returns human-readable violation messages, empty when clean.
inline std::vector<std::string> audit_table(const CsvTable& table) {
  std::vector<std::string> issues;
  const bool flexible = table.columns.count("hstep") > 0;
  const auto& t = table.col("t");
  const auto& g1 = table.col("gamma1");
  const auto& g2 = table.col("gamma2");
  const auto& l1 = table.col("lambda1");
  const auto& l2 = table.col("lambda2");
  const auto& mode = table.col("mode");

  auto complain = [&issues](const std::string& msg, size_t row) {
    if (issues.size() < 20)
      issues.push_back(msg + " at row " + std::to_string(row));
  };
  for (size_t k = 0; k < t.size(); ++k) {
    if (k > 0 && !(t[k] > t[k - 1])) complain("non-monotone time", k);
    if (k > 0 && mode[k] < mode[k - 1]) complain("mode went backwards", k);
    if (l1[k] < -1e-9 || l2[k] < -1e-9) complain("negative contact force", k);
    if (!flexible) {
      if (g1[k] < -1e-9 || g2[k] < -1e-9) complain("gap penetration", k);
      if (std::abs(g1[k] * l1[k]) > 1e-9 || std::abs(g2[k] * l2[k]) > 1e-9)
        complain("complementarity violation", k);
    }
  }
  return issues;
}

}  // namespace rspread
