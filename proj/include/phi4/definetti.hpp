#pragma once

#include <functional>
#include <vector>

#include "phi4/quantum.hpp"

namespace phi4 {

// Partial trace onto the listed modes, which must all be slots of the state's
// basis. The result lives on the sub-basis with the same lattice and cap, in
// the listed mode order. Trace and the number-conserving flag survive exactly,
// and <a*_k a_k> is preserved for every retained mode.
QuantumState localize(const QuantumState& gamma, const std::vector<Ivec>& p_modes);
// Same, onto a caller-held sub-basis (same cap), so several states can share
// one basis object for the entropy and gap routines.
QuantumState localize(const QuantumState& gamma, const BasisPtr& sub_basis);

// k-particle reduced density matrix on the total-number-k sector, indexed by
// that sector's occupation list:
//   G^(k)(m, m') = (prod_j m_j! prod_j m'_j!)^{-1/2} Tr[G a*^{m'} a^m].
// The occupation shifts stay inside the cap, so the sums are exact on the
// truncated basis. k = 0 gives the 1x1 trace; throws for k < 0 or k > n_max.
Eigen::MatrixXcd reduced_density(const QuantumState& gamma, int k);

// <m| P_s (A (x) 1^{k-l}) P_s |m'> on the k-particle sector, with A given on
// the l-particle sector of the same basis. Brute force over mode sequences;
// meant for small k and mode counts.
Eigen::MatrixXcd symmetric_embed(const BasisPtr& basis, const Eigen::MatrixXcd& a, int l, int k);

// Overlaps <m | phi^{(x) k}> = sqrt(k!/prod_j m_j!) prod_j phi_j^{m_j} of the
// k-sector occupation basis with a normalized product vector.
Eigen::VectorXcd symmetric_power_overlap(const BasisPtr& basis, int k,
                                         const Eigen::VectorXcd& phi);

// Moment identity of the localized state at order k. The integral of
// |u^{(x)k}><u^{(x)k}| against the lower symbol equals, with no integration,
//   rhs = k! lambda^k [ G_P^(k) + sum_{l<k} C(k,l) embed_k(G_P^(l)) ],
// and main_term = k! lambda^k G_P^(k) approximates it to error_bound in trace
// norm:
//   error_bound = lambda^k sum_{l<k} C(k,l)^2 (k-l+M-1)!/(M-1)! Tr[N^l G_P],
// M the number of retained modes. Indices follow the k-sector occupation list
// of the localized basis. Throws for k < 1 or k > n_max.
struct MomentIdentity {
  Eigen::MatrixXcd rhs;
  Eigen::MatrixXcd main_term;
  double error_bound = 0.0;
  int k = 0;
};
MomentIdentity definetti_moment(const QuantumState& gamma, const std::vector<Ivec>& p_modes,
                                int k);

// Coherent vector with mean amplitudes u (slot order), truncated at the cap:
//   c_m = e^{-|u|^2/2} prod_j u_j^{m_j} / sqrt(m_j!).
// dropped_mass is the Poisson tail P(total > n_max) at intensity |u|^2, so
// norm^2 + dropped_mass = 1 up to rounding.
struct CoherentVector {
  FockVector coeffs;
  double norm = 0.0;
  double dropped_mass = 0.0;
};
CoherentVector coherent_vector(const BasisPtr& basis, const Eigen::VectorXcd& u);

// Husimi density of a localized state against its natural scale:
//   mu(u) = (lambda pi)^{-M} e^{-|u|^2/lambda} T(u / sqrt(lambda)),
// where T(v) = <c(v), rho c(v)> with unnormalized coherent coefficients
// c_m(v) = prod_j v_j^{m_j}/sqrt(m_j!). T is a polynomial because rho lives
// under the cap, which makes the Gauss-Laguerre quadratures below exact.
class LowerSymbol {
 public:
  explicit LowerSymbol(QuantumState gamma_p);

  const QuantumState& state() const { return state_; }
  int M() const { return state_.basis->M(); }
  double lambda() const { return state_.lambda; }

  // mu(u) >= 0; u in slot order.
  double density(const Eigen::VectorXcd& u) const;
  // T(v) above, the density with envelope and prefactor stripped.
  double poly_factor(const Eigen::VectorXcd& v) const;

  // Algebraic k-th moment matrix, equal to definetti_moment(...).rhs of the
  // underlying state with every retained mode kept.
  Eigen::MatrixXcd moment_matrix(int k) const;

 private:
  QuantumState state_;
};

// Localize, then wrap as a symbol.
LowerSymbol lower_symbol(const QuantumState& gamma, const std::vector<Ivec>& p_modes);

// Integral of g against the symbol density over C^M, radial Gauss-Laguerre
// times uniform angles per mode. Exact when T(v) g(u) is polynomial of radial
// degree < 2 * radial_nodes per mode and trigonometric degree < angular_nodes.
// Throws for M > 2.
double symbol_integral(const LowerSymbol& sym,
                       const std::function<double(const Eigen::VectorXcd&)>& g, int radial_nodes,
                       int angular_nodes);

// k-th moment matrix by quadrature, same index order as moment_matrix(k).
// Number-conserving states reduce to the relative angle (cross-sector blocks
// vanish identically); other states use the full angular product. M <= 2.
Eigen::MatrixXcd symbol_moment_quadrature(const LowerSymbol& sym, int k, int radial_nodes,
                                          int angular_nodes);

// Spectral weights w_n = Tr[1(N_phi = n) G] of N_phi = a*(phi) a(phi) for an
// in-basis phi (normalized internally). The spectrum of N_phi on a capped
// basis is exactly integer; requires a number-conserving state.
std::vector<double> phi_number_weights(const QuantumState& gamma, const Eigen::VectorXcd& phi);

// Moments of |<phi, u>|^2 under the lower symbol, by the phi-line weights:
//   power: integral of |<phi,u>|^{2k} = lambda^k sum_n w_n (n+k)!/n!
//   f:     sum_n w_n integral_0^inf f(lambda x) e^{-x} x^n/n! dx
// with the n-th integrand evaluated as exp(n log x - x - lgamma(n+1)).
double poisson_moment_power(const QuantumState& gamma, const Eigen::VectorXcd& phi, int k);
double poisson_moment_f(const QuantumState& gamma, const Eigen::VectorXcd& phi,
                        const std::function<double(double)>& f, double tol = 1e-10);

// Coherent expectation of the interaction against the classical pair energy
// D[u] on the sublattice spanned by the basis modes. With desk centering the
// two agree at u = 0 and the gap is the explicit lambda correction
//   lambda/(2 (2pi)^d) sum_{p,q in basis} vhat(eps (p - q)) |u_q|^2
// up to the coherent tail beyond the cap.
struct CoherentWGap {
  double quantum = 0.0;       // <W(u/sqrt lambda), W_op W(u/sqrt lambda)>, truncated
  double classical = 0.0;     // D[u] with matching theta and Wick constant
  double gap = 0.0;           // quantum - classical
  double lambda_terms = 0.0;  // closed-form value of the gap
  double dropped_mass = 0.0;  // coherent tail beyond the cap
};
CoherentWGap coherent_expectation_W(const WResult& w, const Potential& pot, double lambda,
                                    const Eigen::VectorXcd& u);

// Free-state symbol against its classical limit, all in closed form. The
// symbol of the localized free Gibbs state is a product of centered complex
// Gaussians with per-mode variance lambda/(1 - e^{-lambda h_j}); the limit
// density has variance 1/h_j. Their ratio satisfies ratio(0) <= 1 and
//   log ratio(u) <= C lambda |u|^2,
// with C = max_j (h_j - (1 - e^{-lambda h_j})/lambda) / lambda reported next
// to a sup fitted over radial probe grids.
struct GaussianSymbolReport {
  double ratio_at_zero = 0.0;
  double c_fit = 0.0;
  double c_analytic = 0.0;
  std::vector<double> symbol_variance;
  std::vector<double> limit_variance;
};
GaussianSymbolReport gaussian_symbol_bound_check(double lambda, const std::vector<double>& h_values,
                                                 int grid_points = 24, double u_max = 4.0);

// Both sides of the entropy chain
//   H(G, G') >= H(G_P, G'_P) >= integral mu log(mu / mu'),
// the classical term by symbol quadrature (shared envelope cancels, only the
// polynomial factors enter the log). M <= 2 after localization.
struct BerezinLiebReport {
  double quantum = 0.0;
  double localized = 0.0;
  double classical = 0.0;
};
BerezinLiebReport berezin_lieb_check(const QuantumState& gamma, const QuantumState& gamma_prime,
                                     const std::vector<Ivec>& p_modes, int radial_nodes = 64,
                                     int angular_nodes = 48);

}  // namespace phi4
