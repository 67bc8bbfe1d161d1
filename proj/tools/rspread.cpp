// Experiment runner: configure a scenario, run the rigid or flexible
// model under the selected control strategies, and emit CSV logs,
// summary tables and static comparison plots.

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "rspread/config.hpp"
#include "rspread/experiment.hpp"
#include "rspread/reference.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::string model;
  std::string strategies;
  std::string out;
  double offset = std::numeric_limits<double>::quiet_NaN();
  int seed = -1;
};

rspread::ExperimentSpec assemble(const CommonOpts& opts) {
  rspread::ExperimentSpec spec;
  if (!opts.config.empty()) spec = rspread::load_config(opts.config, spec);
  if (!opts.model.empty()) spec.model = opts.model;
  if (!opts.out.empty()) spec.outdir = opts.out;
  if (!std::isnan(opts.offset)) spec.sim.plank_offset = opts.offset;
  if (opts.seed >= 0) spec.sim.seed = static_cast<unsigned>(opts.seed);
  if (!opts.strategies.empty()) {
    spec.strategies.clear();
    for (const std::string& name : rspread::detail::split_list(opts.strategies)) {
      auto s = rspread::strategy_from_string(name);
      if (!s) throw rspread::Error("unknown strategy " + name);
      spec.strategies.push_back(*s);
    }
  }
  return spec;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config, "configuration file (key = value)");
  cmd->add_option("--model", opts.model, "rigid | flexible");
  cmd->add_option("--strategy", opts.strategies,
                  "comma list: rs_intermediate, rs_no_intermediate, no_rs");
  cmd->add_option("--offset", opts.offset, "true plank angle offset [rad]");
  cmd->add_option("--out", opts.out, "output directory");
  cmd->add_option("--seed", opts.seed, "seed recorded with the experiment");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reference-spreading QP control experiments"};
  app.require_subcommand(1);

  CommonOpts run_opts, plot_opts, ref_opts;
  bool run_plots = false;

  CLI::App* run = app.add_subcommand("run", "run an experiment");
  add_common(run, run_opts);
  run->add_flag("--plots", run_plots, "also emit comparison plots");

  CLI::App* plot = app.add_subcommand("plot", "emit plots from run CSVs");
  add_common(plot, plot_opts);

  CLI::App* reference =
      app.add_subcommand("reference", "export the reference bundle");
  add_common(reference, ref_opts);
  std::string ref_file = "reference.csv";
  double ref_dt = 1e-3;
  reference->add_option("--file", ref_file, "output CSV path");
  reference->add_option("--dt", ref_dt, "sample period [s]");

  CLI::App* check = app.add_subcommand("check", "audit invariants of a CSV");
  std::string check_csv;
  check->add_option("--csv", check_csv, "simulation CSV to audit")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      rspread::ExperimentSpec spec = assemble(run_opts);
      spec.plots = spec.plots || run_plots;
      const auto results = rspread::run_experiment(spec);
      bool all_ok = true;
      for (const auto& r : results) {
        std::printf("%-28s %s\n", r.name.c_str(),
                    r.ok ? "ok" : ("error: " + r.error).c_str());
        all_ok = all_ok && r.ok;
      }
      std::printf("summary written to %s/summary.txt\n", spec.outdir.c_str());
      return all_ok ? 0 : 1;
    }
    if (plot->parsed()) {
      rspread::ExperimentSpec spec = assemble(plot_opts);
      rspread::emit_plots(spec);
      std::printf("plots written to %s\n", spec.outdir.c_str());
      return 0;
    }
    if (reference->parsed()) {
      rspread::ExperimentSpec spec = assemble(ref_opts);
      rspread::ModelParams nominal = spec.params;
      nominal.plank_rest_angle = spec.scenario.plank_nominal.angle;
      const auto bundle = rspread::build_reference(nominal, spec.scenario);
      rspread::export_reference_csv(bundle, ref_file, ref_dt);
      std::printf("reference written to %s\n", ref_file.c_str());
      return 0;
    }
    if (check->parsed()) {
      const auto table = rspread::read_csv(check_csv);
      const auto issues = rspread::audit_table(table);
      if (issues.empty()) {
        std::printf("%s: %zu samples, all invariants hold\n",
                    check_csv.c_str(), table.rows());
        return 0;
      }
      for (const auto& issue : issues)
        std::printf("violation: %s\n", issue.c_str());
      return 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
