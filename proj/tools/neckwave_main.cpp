#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "neckwave/pipeline.hpp"
#include "neckwave/util.hpp"

using namespace neckwave;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::string out_dir;
  int threads = -1;
  long long seed = -1;
};

ExperimentConfig effective_config(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config_path.empty()) {
    cfg = load_config(g.config_path);
  } else {
    cfg.checks = ExperimentConfig::default_checks();
  }
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  if (g.threads >= 0) cfg.threads = g.threads;
  if (g.seed >= 0) cfg.seed = static_cast<uint64_t>(g.seed);
  return cfg;
}

GridSpec parse_grid_arg(const std::string& s) {
  // rmin:rmax:nr,tmin:tmax:nt
  GridSpec g;
  if (std::sscanf(s.c_str(), "%lf:%lf:%d,%lf:%lf:%d", &g.r_lo, &g.r_hi, &g.nr, &g.th_lo,
                  &g.th_hi, &g.nth) != 6)
    throw std::invalid_argument("assemble: --grid expects rmin:rmax:nr,tmin:tmax:nt");
  return g;
}

Inventory propagate_inventory(const SurfaceModel& model, const ExperimentConfig& cfg,
                              double direction, int steps, double amp_floor) {
  const IncomingWaveSpec spec{cfg.end, direction, cfg.front_u};
  const ChartWindow window{cfg.window_r_lo, cfg.window_r_hi, kPi - cfg.window_th_half,
                           kPi + cfg.window_th_half};
  Inventory inv = propagate_all(model, spec, window, steps, amp_floor, cfg.branch_budget,
                                cfg.threads);
  attach_sheets(model, spec, inv, cfg.sheet_spacing, 0.04, 2e-5, cfg.threads);
  return inv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distorted plane wave laboratory on a hyperbolic-neck surface"};
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config_path, "experiment config (JSON)");
  app.add_option("--out", g.out_dir, "output directory");
  app.add_option("--threads", g.threads, "worker threads (0 = hardware)");
  app.add_option("--seed", g.seed, "override the config RNG seed");

  auto* geo = app.add_subcommand("geometry-report", "dump f, K and b on a grid");
  double geo_step = 0.01;
  geo->add_option("--step", geo_step, "grid step");

  auto* flow_cmd = app.add_subcommand("flow", "integrate one trajectory");
  std::vector<double> initial{-3.0, 0.0, 1.0, 0.0};
  double flow_time = 50.0, flow_tol = 1e-12;
  flow_cmd->add_option("--initial", initial, "r theta p_r p_theta")->expected(4);
  flow_cmd->add_option("--time", flow_time, "integration time");
  flow_cmd->add_option("--tol", flow_tol, "integrator tolerance");

  auto* pres = app.add_subcommand("pressure", "topological pressure estimate");
  double pres_s = 0.5, pres_eps = 0.03, pres_tmax = 60.0;
  pres->add_option("--s", pres_s, "pressure parameter");
  pres->add_option("--eps", pres_eps, "separation scale");
  pres->add_option("--tmax", pres_tmax, "largest time");

  auto* prop = app.add_subcommand("propagate", "branch inventory of the incoming wave");
  double prop_dir = 0.0, prop_floor = -1.0;
  int prop_steps = -1;
  prop->add_option("--direction", prop_dir, "incoming direction angle");
  prop->add_option("--steps", prop_steps, "propagation steps");
  prop->add_option("--amp-floor", prop_floor, "amplitude floor");

  auto* asmb = app.add_subcommand("assemble", "assemble the distorted plane wave");
  double asmb_h = 0.02, asmb_dir = 0.0;
  std::string asmb_grid;
  asmb->set_help_flag("--help", "print help");  // frees -h for the parameter below
  asmb->add_option("--h", asmb_h, "semiclassical parameter");
  asmb->add_option("--grid", asmb_grid, "rmin:rmax:nr,tmin:tmax:nt")->required();
  asmb->add_option("--direction", asmb_dir, "incoming direction angle");

  auto* verify = app.add_subcommand("verify", "run one verification family");
  std::string verb;
  verify->add_option("verb", verb, "supnorm | equidist | nodal | dsz | phase-decay")->required();

  auto* run_cmd = app.add_subcommand("run", "full pipeline with the configured checks");
  (void)run_cmd;

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = effective_config(g);
    fs::create_directories(cfg.out_dir);
    const fs::path out(cfg.out_dir);

    if (geo->parsed()) {
      write_geometry_report(model_from(cfg), (out / "geometry.csv").string(), geo_step);
      return 0;
    }
    if (flow_cmd->parsed()) {
      const PhasePoint rho0{initial[0], initial[1], initial[2], initial[3]};
      write_flow_dump(model_from(cfg), rho0, flow_time, flow_tol, (out / "flow.csv").string());
      return 0;
    }
    if (pres->parsed()) {
      const SurfaceModel model = model_from(cfg);
      std::vector<double> t_list;
      for (double t = 10; t <= pres_tmax + 1e-9; t += 10) t_list.push_back(t);
      const PressureEstimate est = pressure(model, pres_s, pres_eps, t_list);
      write_pressure_dump(est, (out / "pressure.csv").string());
      const GateResult gate = hypothesis_gate(model);
      std::printf("P=%.6f residual=%.6f gate=%s\n", est.P, est.residual,
                  gate.pass ? "pass" : "fail");
      return 0;
    }
    if (prop->parsed()) {
      const SurfaceModel model = model_from(cfg);
      const Inventory inv =
          propagate_inventory(model, cfg, prop_dir, prop_steps > 0 ? prop_steps : cfg.steps,
                              prop_floor >= 0 ? prop_floor : cfg.amp_floor);
      write_branch_manifest(inv, (out / "branches.csv").string());
      write_branch_samples(inv, out.string());
      return 0;
    }
    if (asmb->parsed()) {
      const SurfaceModel model = model_from(cfg);
      const Inventory inv = propagate_inventory(model, cfg, asmb_dir, cfg.steps, cfg.amp_floor);
      const WaveField fld = assemble(model, inv, asmb_h, parse_grid_arg(asmb_grid));
      write_field_csv(fld, (out / "field.csv").string());
      write_field_manifest(fld, inv, (out / "field.json").string());
      return 0;
    }
    if (verify->parsed()) {
      static const std::vector<std::pair<std::string, std::string>> map{
          {"supnorm", "supnorm"}, {"equidist", "equidist"},      {"nodal", "nodal"},
          {"dsz", "dsz"},         {"phase-decay", "phase-decay"}};
      std::string check;
      for (const auto& [k, v] : map)
        if (k == verb) check = v;
      if (check.empty())
        throw std::invalid_argument("verify: unknown sub-verb '" + verb + "'");
      cfg.checks = {check};
      const RunResult res = run_experiment(cfg);
      return res.pass ? 0 : 1;
    }
    // run
    const RunResult res = run_experiment(cfg);
    for (const CheckRow& r : res.rows)
      std::printf("%-24s value=%-12.6g bound=%-10.6g %s\n", r.name.c_str(), r.value, r.bound,
                  r.pass ? "pass" : "FAIL");
    return res.pass ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
