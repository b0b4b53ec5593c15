#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neckwave/analysis.hpp"
#include "neckwave/pressure.hpp"

namespace neckwave {

// Experiment configuration, loaded from a JSON file.  Angles for the grid and
// window are offsets from theta = pi (the chart is centred on the far side of
// the neck from the incoming direction).
struct ExperimentConfig {
  // geometry
  double bump_amplitude = 1.0;
  double bump_width = 1.0;
  double r2 = 4.0;
  // wave
  int end = -1;
  double direction = 0.0;
  double front_u = 10.0;
  std::vector<double> h_list{0.05, 0.02, 0.01};
  // propagation
  int steps = 40;
  double gamma_uns = 0.05;
  double amp_floor = 1e-6;
  long branch_budget = 400000;
  double sheet_spacing = 0.02;
  double window_r_lo = -1.6, window_r_hi = -0.1;
  double window_th_half = 0.55;
  // assembly grid
  double grid_r_lo = -1.55, grid_r_hi = -0.15;
  double grid_th_half = 0.45;
  int cells_per_h = 10;
  // verification
  std::vector<std::string> checks;  // subset of default_checks(); empty = none
  // plumbing
  std::string out_dir = "out";
  uint64_t seed = 1;
  int threads = 0;

  static std::vector<std::string> default_checks();
};

// parse + validate; both throw std::invalid_argument with a "config:" prefix
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

std::string config_hash(const ExperimentConfig& cfg);
SurfaceModel model_from(const ExperimentConfig& cfg);

struct CheckRow {
  std::string name;
  double h = 0;       // 0 when the row is h-independent
  double value = 0;
  double bound = 0;
  bool pass = false;
  std::string note;
};

struct RunResult {
  bool pass = true;
  std::vector<CheckRow> rows;
  // fitted constants recorded in the manifest
  double P_half = 0, lambda = 0, c_det = 0, C1 = 0, C2 = 0;
  int n_uns = 0;
};

// full pipeline: geometry, dynamics sanity, pressure gate, propagation,
// assembly per h, verification; writes CSV artifacts and a manifest under
// cfg.out_dir
RunResult run_experiment(const ExperimentConfig& cfg);

// stage dumps shared by the subcommands
void write_geometry_report(const SurfaceModel& m, const std::string& path, double step);
void write_flow_dump(const SurfaceModel& m, const PhasePoint& rho0, double T, double tol,
                     const std::string& path);
void write_pressure_dump(const PressureEstimate& est, const std::string& path);
void write_branch_manifest(const Inventory& inv, const std::string& path);
void write_branch_samples(const Inventory& inv, const std::string& dir);
void write_field_csv(const WaveField& f, const std::string& path);
void write_field_manifest(const WaveField& f, const Inventory& inv, const std::string& path);
void write_check_rows(const std::vector<CheckRow>& rows, const std::string& path);

}  // namespace neckwave
