#pragma once

#include <functional>
#include <optional>

#include "phi4/fock.hpp"
#include "phi4/potential.hpp"
#include "phi4/wick.hpp"

namespace phi4 {

// Density matrix on a truncated Fock basis. Dense storage; blockwise
// algorithms read the sector offsets from the basis. Invariants: trace 1 to
// 1e-12, PSD to -1e-12, and no cross-sector entries when commutes_with_n.
struct QuantumState {
  BasisPtr basis;
  Eigen::MatrixXcd rho;
  double lambda = 0.0;
  double log_partition = 0.0;  // log Tr e^{-H} for gibbs provenance
  std::string provenance = "constructed";
  bool commutes_with_n = false;
};

// Trace-1 and PSD checks; returns the worst defect found.
struct StateDiagnostics {
  double trace_defect = 0.0;
  double min_eigenvalue = 0.0;
  double sector_leakage = 0.0;
};
StateDiagnostics check_state(const QuantumState& state);

QuantumState make_state(const BasisPtr& basis, Eigen::MatrixXcd rho, double lambda,
                        bool commutes_with_n);

// Gibbs weight of the top total-number sector; the adaptive n_max loop grows
// the basis until this falls below a threshold.
double top_sector_weight(const QuantumState& state);

cd trace_op(const FockOperator& a, const QuantumState& state);

// Interaction part of the renormalized Hamiltonian,
//   W = vhat(0) lambda^2/(2 (2pi)^d) (N - N0)^2
//       + sum_{k != 0} (lambda^2/2) vhat(eps k) |dGamma(e_k)|^2
//       - lambda theta (N - N0),
// with the k-sum over the nonzero mode differences representable in the
// basis. The explicit vhat(0) factor makes the zero interaction vanish
// identically and reduces to the standard form for unit-normalized profiles.
//
// Centering:
//   desk:  N0 = lambda^{-1} sum_{k in basis} 1/<k>^2 and theta from the
//          InteractionSpec, so W matches the classical pair energy D on the
//          same modes;
//   paper: N0 = (2pi)^d rho0(lambda) and theta composed from the free-gas
//          chemical potential (d=3 only).
enum class Centering { desk, paper };
std::string to_string(Centering c);

struct WOptions {
  double lambda = 0.1;
  Centering centering = Centering::desk;
  // Box radius for the total vhat mass used in the dropped-fraction report.
  int mass_K_sum = 64;
  // Dropped-fraction threshold that raises truncation_warning.
  double warn_tol = 0.5;
  // paper centering only: K_sum for the rho0 / chemical potential sums.
  int ideal_gas_K_sum = 200;
  double m0 = 1.0;
};

struct WResult {
  FockOperator op;
  double n0 = 0.0;
  double theta = 0.0;
  // Share of the off-zero vhat(eps k) mass not representable as an in-basis
  // mode difference.
  double vhat_dropped_fraction = 0.0;
  bool truncation_warning = false;
  // Largest dGamma(e_k) per-mode dropped fraction over the retained k.
  double max_shift_dropped = 0.0;
};

WResult build_W(const BasisPtr& basis, const Potential& pot, const InteractionSpec& spec,
                const WOptions& opt);

// Full Hamiltonian lambda dGamma(diag <k>^2) + W.
FockOperator hamiltonian(const BasisPtr& basis, const FockOperator& w, double lambda);
// Free Hamiltonian lambda dGamma(diag <k>^2).
FockOperator free_hamiltonian(const BasisPtr& basis, double lambda);

// Gibbs state e^{-H} / Tr e^{-H} via per-sector Hermitian eigendecomposition
// (parallel over sectors); logZ by shifted log-sum-exp over all eigenvalues.
// Never forms a matrix exponential. Throws on non-Hermitian input.
struct GibbsResult {
  QuantumState state;
  double log_z = 0.0;
};
GibbsResult gibbs(const FockOperator& h, double lambda);

// Occupation <a*_k a_k> for every basis slot.
std::vector<double> occupations(const QuantumState& state);

// Correlation through N_phi = a*(phi) a(phi) for an in-basis one-body vector
// phi (coefficients in basis slot order, need not be normalized).
//   f_form            = Tr[f(lambda N_phi) Gamma]
//   falling_factorial = lambda^k Tr[N_phi (N_phi - 1) ... (N_phi - k + 1) Gamma]
// Both are computed spectrally from the same eigendecomposition; for f = x^k
// they are reported side by side.
struct CorrelationResult {
  double f_form = 0.0;
  double falling_factorial = 0.0;
};
CorrelationResult correlation_power(const QuantumState& state, const Eigen::VectorXcd& phi,
                                    int k);
double correlation_f(const QuantumState& state, const Eigen::VectorXcd& phi,
                     const std::function<double(double)>& f);

// Relative entropy Tr[G (log G - log G')] >= 0, blockwise when both states
// commute with N. Small negative round-off is clipped at -1e-10 by the caller
// if needed; the raw value is returned.
double relative_entropy(const QuantumState& gamma, const QuantumState& gamma_prime);

// H(G, G0) + Tr[W G] + logZ_lambda - logZ_0; zero exactly at the Gibbs state
// of dGamma-free-plus-W and nonnegative otherwise.
double variational_gap(const QuantumState& gamma_test, const QuantumState& gamma0,
                       const FockOperator& w, double log_z_lambda, double log_z0);

// Smallest n_max with top-sector Gibbs weight below tol, found by doubling;
// the probe evaluates the weight on the basis built with the candidate cap.
int adaptive_n_max(const std::function<GibbsResult(int)>& solve_at, double tol,
                   int n_start = 8, int n_limit = 4096);

// Truncated geometric-series occupation of a single thermal mode:
//   <n> = q/(1-q) - (n_max+1) q^{n_max+1} / (1 - q^{n_max+1}),  q = e^{-lambda h}.
double thermal_occupation_truncated(double lambda, double h2, int n_max);

}  // namespace phi4
