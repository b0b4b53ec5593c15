#pragma once

#include <Eigen/Dense>
#include <vector>

#include "neckwave/dynamics.hpp"

namespace neckwave {

// ---------------------------------------------------------------------------
// Phase-space cover for itinerary words: V0 at infinity, a ring of boxes along
// the neck orbit, and shell boxes tiling the rest of the interaction region.
// ---------------------------------------------------------------------------

enum class BoxKind { Infinity, NearTrapped, Interaction };

struct CoverBox {
  int id = 0;
  BoxKind kind = BoxKind::Infinity;
  double r_lo = 0, r_hi = 0;
  double th_lo = 0, th_hi = 0;    // reduced angle
  double psi_lo = 0, psi_hi = 0;  // momentum angle from the radial direction
};

struct PhaseCover {
  std::vector<CoverBox> boxes;
  double eps_max = 0;   // target box diameter after contraction tuning
  double gamma_uns = 0; // neck tube radius in (r, p_r)
  int retries = 0;      // shrink rounds used by the contraction check
  double worst_contraction = 0;
  // shell layout for O(1) lookup
  int n_b1_th = 0;
  std::vector<double> shell_r;   // interaction shell edges, -R .. R
  std::vector<int> shell_nth, shell_offset;
  int n_psi = 0;
};

PhaseCover build_phase_cover(const SurfaceModel& model, double gamma_uns = 0.05);

// box id for an on-shell point; B1 wins over B2 where the tube overlaps shells
int locate_box(const PhaseCover& cover, const SurfaceModel& model, const PhasePoint& rho);

struct Word {
  std::vector<int> letters;
  int n() const { return static_cast<int>(letters.size()); }
  // index of the last V0 letter (0 when the word never visits V0)
  int tau() const {
    for (int i = n() - 1; i >= 0; --i)
      if (letters[i] == 0) return i + 1;
    return 0;
  }
};

// ---------------------------------------------------------------------------
// Incoming plane wave and its ray family.  Rays are labelled by the impact
// parameter s on the launch front; theta is carried as a universal-cover lift.
// ---------------------------------------------------------------------------

struct IncomingWaveSpec {
  int end = -1;           // -1: minus end, +1: plus end
  double direction = 0;   // rotation of the incoming direction in the end chart
  double front_u = 10.0;  // launch front at end-chart coordinate u = -front_u
};

struct RayState {
  PhasePoint rho;          // theta unreduced
  double phi = 0;          // phase, = t - front_u along the ray
  double Y = 1, Yp = 0;    // transverse Jacobi field (parallel-family data)
  double t = 0, s = 0;
  double amp() const { return 1.0 / std::sqrt(Y); }
};

RayState launch_ray(const SurfaceModel& model, const IncomingWaveSpec& spec, double s);
RayState advance_ray(const SurfaceModel& model, RayState st, double dt);
RayState trace_ray(const SurfaceModel& model, const IncomingWaveSpec& spec, double s, double t);

// hypothesis checks on the incoming manifold: flow invariance in the ends and
// non-expansion of pair distances in the past
struct IncomingReport {
  bool pass = false;
  double worst_momentum_err = 0;  // flow invariance, momentum mismatch
  double worst_expansion = 0;     // max of d(t)/d(0) - 1 over backward pairs
};
IncomingReport check_incoming(const SurfaceModel& model, const IncomingWaveSpec& spec,
                              int pairs = 1000, uint64_t seed = 1);

// ---------------------------------------------------------------------------
// The propagated manifold as a graph over the universal cover.  Past
// non-expansion forces one ray through every cover point, so the winding-class
// sheets are the 2-pi strips of a single smooth graph.
// ---------------------------------------------------------------------------

struct GraphNode {
  double phi = 0, amp = 0;
  double xi_r = 0, xi_th = 0;  // = (p_r, p_theta), |xi|_g = 1
  double s = 0, t = 0, Y = 1;
};

struct LiftedGraph {
  double r0 = 0, dr = 0;
  double th0 = 0, dth = 0;  // cover angle, not reduced
  int nr = 0, nth = 0;
  std::vector<GraphNode> nodes;  // row-major, index i*nth + j
  const GraphNode& at(int i, int j) const { return nodes[i * nth + j]; }
  GraphNode& at(int i, int j) { return nodes[i * nth + j]; }
};

// Solves the graph on [r_lo, r_hi] x [th_lo, th_hi] (cover angles) at the
// given node spacing by Newton continuation in (s, t).  Throws if any node
// solve fails to converge.
LiftedGraph solve_lifted_graph(const SurfaceModel& model, const IncomingWaveSpec& spec,
                               double r_lo, double r_hi, double th_lo, double th_hi,
                               double spacing, int threads = 0);

struct SheetChecks {
  double max_shell_err = 0;  // eikonal at nodes
  double max_curl = 0;       // plaquette loop integral of xi . dx
  double max_phase_err = 0;  // finite-difference d phi vs xi
  double c1_norm = 0, c2_norm = 0;  // FD norms of d phi
  double min_Y = 0;
};
SheetChecks verify_sheet(const SurfaceModel& model, const LiftedGraph& sheet);

// ---------------------------------------------------------------------------
// Word-indexed propagation of sampled fronts and the branch inventory.
// ---------------------------------------------------------------------------

struct BranchFront {
  Word word;
  std::vector<RayState> samples;  // ordered by s
};

BranchFront incoming_front(const SurfaceModel& model, const IncomingWaveSpec& spec, double s_lo,
                           double s_hi, int n_samples);

// one truncated-propagation step: flow by time 1, refine gaps, split by cover
// membership and by winding, append the letter
std::vector<BranchFront> propagate_step(const SurfaceModel& model, const IncomingWaveSpec& spec,
                                        const BranchFront& front, const PhaseCover& cover,
                                        double amp_floor = 0.0);

struct ChartWindow {
  double r_lo = -1.6, r_hi = -0.1;
  double th_lo = kPi - 0.55, th_hi = kPi + 0.55;  // reduced angle
  bool contains(double r, double th_reduced) const {
    return r >= r_lo && r <= r_hi && th_reduced >= th_lo && th_reduced <= th_hi;
  }
};

struct BranchClass {
  int m = 0;          // winding (deck-transformation index)
  Word word;          // a word realising the minimal length
  int n_first = 0;    // = n-tilde, first step the class reaches the window
  int n_last = 0;     // last step any front of the class is seen in the window
  double sup_amp = 0;
  double min_Y = 1e300;
  LiftedGraph sheet;  // graph data over the window strip (filled on demand)
};

struct Inventory {
  std::vector<BranchClass> classes;  // sorted by (n_first, m)
  ChartWindow window;
  double amp_floor = 0;
  int steps = 0;
  double c_det = 0;           // min forward Jacobian over all live samples
  int n_uns = 0;              // first step offset with the cone condition
  double cone_worst = 0;      // worst slope mismatch at offsets >= n_uns
  int n_K = 0;                // fitted word-length spread, max n_last - n_first
  double merge_dxi_worst = 0; // grad-phi agreement across same-class fronts
  double transversality_min_deg = 0;
  long peak_samples = 0, peak_fronts = 0;
};

Inventory propagate_all(const SurfaceModel& model, const IncomingWaveSpec& spec,
                        const ChartWindow& window, int N = 40, double amp_floor = 1e-6,
                        long budget = 200000, int threads = 0);

// attaches lifted-graph sheets (at the given spacing) to every retained class
// with sup_amp >= min_amp.  Classes below the cutoff hug the unstable manifold
// closer than double precision resolves (the ray label would need sub-ulp
// resolution), so their sheets are left empty rather than filled with noise.
void attach_sheets(const SurfaceModel& model, const IncomingWaveSpec& spec, Inventory& inv,
                   double spacing = 0.01, double margin = 0.04, double min_amp = 2e-5,
                   int threads = 0);

struct SeparationReport {
  std::vector<int> classes;  // m values, matching the matrix order
  Eigen::MatrixXd minima;    // pairwise min over the window of |dphi - dphi'|
  bool all_positive = false;
  double C1 = 0, exponent = 0, fit_residual = 0;
};
SeparationReport gradient_separation(const Inventory& inv);

// number of winding classes covering x with amplitude above the floor,
// counted directly on the cover graph (x need not lie in an inventory window)
int branch_completeness(const SurfaceModel& model, const IncomingWaveSpec& spec,
                        const BasePoint& x, double amp_floor = 1e-6);

}  // namespace neckwave
