#pragma once

#include <memory>
#include <string>
#include <vector>

#include "phi4/classical_gibbs.hpp"
#include "phi4/field.hpp"
#include "phi4/wick.hpp"

namespace phi4 {

enum class LangevinModel { linear, hartree, local_phi4 };

std::string to_string(LangevinModel m);
LangevinModel langevin_model_from_string(const std::string& s);

// One trajectory of the mode-truncated gradient dynamics
//   dz_k = -(<k>^2 z_k + (interaction drift)_k) dt + dW_k,  E|dW_k|^2 = 2 dt.
// Sharp cutoffs only: the linear relaxation rate is <k>^2 per mode.
struct LangevinState {
  SpectralField psi;
  double t = 0.0;
  LangevinModel model = LangevinModel::linear;
  double dt = 0.05;
  bool deterministic = false;  // noise off, for decay diagnostics

  // hartree drift tables; null for the other models
  std::shared_ptr<const WickTransform> wick;
  InteractionSpec spec;  // spec.theta is the dynamical mass shift

  // local cubic model
  std::shared_ptr<const Grid> grid;
  double mass_coef = 0.0;  // coefficient of -Phi in the drift beyond the Laplacian
  double a_P = 0.0;        // lattice Wick constant; cubic is -(|Phi|^2 - 2 a_P) Phi
};

LangevinState make_linear_state(const LatticePtr& lat, double dt);
// theta_dyn enters as spec.theta; the Wick centering uses the lattice a_P.
LangevinState make_hartree_state(const LatticePtr& lat, const Potential& pot, double theta_dyn,
                                 double dt);
LangevinState make_local_state(const LatticePtr& lat, double mass_coef, double dt);

// Exact one-step law of the free dynamics: z <- decay z + noise,
// decay = exp(-<k>^2 dt), E|noise|^2 = (1 - exp(-2 <k>^2 dt))/<k>^2.
struct OuTransition {
  double decay = 1.0;
  double noise_var = 0.0;
};
OuTransition ou_transition(double h2, double dt);

void ou_exact_step(LangevinState& s, double dt, Rng& rng);

// Interaction drifts (without the linear part), exposed for direct checks.
// hartree: -dD/dzbar; local: -<e_j, (|Phi|^2 - 2 a_P) Phi> - mass_coef z_j,
// the cubic evaluated alias-free on the grid.
std::vector<cd> drift_hartree(const SpectralField& u, const WickTransform& wick,
                              const InteractionSpec& spec);
std::vector<cd> drift_local(const SpectralField& u, const Grid& grid, double a_P,
                            double mass_coef);

// Integrating-factor Euler: exact linear flow, interaction drift frozen over
// the step, exact OU noise. Throws on a non-finite field (time-stamped).
void step_hartree(LangevinState& s, Rng& rng);
void step_local_phi4(LangevinState& s, Rng& rng);
// Dispatch on s.model.
void step(LangevinState& s, Rng& rng);

// Crude step-size bound: 1/(4 L) with L the largest drift growth rate seen
// over a few free-field probes. Advisory, not enforced.
double suggest_dt(const LangevinState& s, Rng& rng);

struct LangevinConfig {
  LangevinModel model = LangevinModel::linear;
  int d = 1;
  int N = 4;
  double eps = 0.1;    // interaction scale (hartree)
  double pot_c = 1.0;  // Gaussian profile of the pair potential
  double dt = 0.05;
  double t_total = 100.0;
  double burn_in = 0.0;
  double record_stride = 0.5;
  std::uint64_t seed = 1;
  double theta_dyn = 0.0;
  double mass_coef = 0.0;
  std::string checkpoint_path;  // written at the end of the run when nonempty
};

// Observable rows recorded at t = burn_in + j * record_stride, j >= 0,
// while t <= t_total; row count floor((t_total - burn_in)/record_stride) + 1.
struct TimeSeries {
  std::vector<double> t;
  std::vector<double> norm2;     // sum_k |z_k|^2
  std::vector<double> quartic;   // hartree/linear: V^eps; local: int |Phi|^4 dx
  std::vector<double> mode0_p2;  // |<e_0, Psi>|^2
  std::vector<double> mode0_p4;
};

struct SimulateResult {
  TimeSeries series;
  SampleEnsemble ensemble;  // recorded states, tag langevin-stationary
  LangevinState state;      // final state
  std::string rng_state;
};

SimulateResult simulate(const LangevinConfig& cfg);
// Continues a checkpointed run up to cfg.t_total, recording on the original
// grid at times strictly after the checkpoint. Appending the rows to the
// first leg reproduces the uninterrupted run bit-exactly.
SimulateResult simulate_resume(const LangevinConfig& cfg, const std::string& checkpoint_path);

void write_series_csv(const TimeSeries& ts, const std::string& path);

}  // namespace phi4
