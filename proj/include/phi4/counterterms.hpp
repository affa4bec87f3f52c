#pragma once

#include <functional>
#include <optional>
#include <string>

#include "phi4/lattice.hpp"
#include "phi4/potential.hpp"

namespace phi4 {

// Truncated sums are reported together with a tail estimate so callers can
// refuse values that are not converged.
struct TruncatedValue {
  double value = 0.0;
  double tail_bound = 0.0;
  int K_sum = 0;
};

struct TailError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// a_eps = (2pi)^{-d} sum_k vhat(eps k) / <k>^2 over the box |k|_inf <= K_sum.
// Throws TailError when the tail estimate exceeds tail_tol (if given).
TruncatedValue counterterm_a(const Potential& pot, int d, int K_sum,
                             std::optional<double> tail_tol = std::nullopt);

// Lattice version: sum over retained modes with chi^2 weights.
double counterterm_a_N(const Potential& pot, const ModeLattice& lat);

// Second order sunset sums over the symmetric region
//   R_K = { max(|k1|_inf, |k2|_inf, |k1+k2|_inf) <= K_sum }.
// direct:      sum [vhat(k1)^2 + vhat(k2) vhat(k1)] / [(2pi)^{2d} A B C]
// resummed:    b1 + 2 b2 + 2 b3 + b4 with the kernel
//              b = 1 / [(2pi)^{2d} A B (A + B + C)]
// and weights  b1: vhat(k1+k2)^2, b2: vhat(k1+k2) vhat(k1),
//              b3: vhat(k1)^2,     b4: vhat(k1) vhat(k2),
// where A = <k1>^2, B = <k2>^2, C = <k1+k2>^2. The two forms agree exactly at
// every truncation level because R_K and the summands are invariant under the
// permutations of {k1, k2, -k1-k2}.
struct SunsetSums {
  double b1 = 0.0;
  double b2 = 0.0;
  double b3 = 0.0;
  double b4 = 0.0;
  double six_b_resummed = 0.0;  // b1 + 2 b2 + 2 b3 + b4
  double six_b_direct = 0.0;
  int K_sum = 0;
};

SunsetSums counterterm_b(const Potential& pot, int d, int K_sum);

// Cutoff version: both mode arguments run over the lattice and every line
// carries the cutoff weight chi^2, including the internal one.
SunsetSums counterterm_b_N(const Potential& pot, const ModeLattice& lat);

// Finite parts of the renormalization window (d=3, radial profiles with
// vhat(0) = 1 only):
//   C1 = (2pi)^{-6} [ int_{|x|<=1} vhat(x) (vhat(y) - vhat(x-y) - x.grad vhat(y))
//                     / (2 |x|^4 |y|^2)
//                   + int_{|x|>1} vhat(x) (vhat(y) - vhat(x-y)) / (2 |x|^4 |y|^2) ],
//   C2 = the same with the outer vhat(x) replaced by 1.
struct C1C2 {
  double C1 = 0.0;
  double C2 = 0.0;
  double quad_error = 0.0;  // estimated quadrature error (refinement delta)
};

C1C2 counterterm_C1_C2(const Potential& pot);

// Time-dependent approach to the window constants:
//   c1(t) = (2pi)^{-6} sum_{k1} vhat(eps k1) (1 - e^{-2 t <k1>^2}) / (2 <k1>^4)
//             * sum_k [vhat(eps k) - vhat(eps (k1 - k))] / <k>^2,
//   c2(t) = the same with vhat(eps k1) replaced by 1.
// Requires d = 3 and t > 0. The inner sum runs over |k|_inf <= K_sum, the
// outer one over the same box with an analytic tail correction for c2.
struct C1C2Eps {
  double c1 = 0.0;
  double c2 = 0.0;
  int K_sum = 0;
};

C1C2Eps counterterm_c1_c2_eps(const Potential& pot, double t, int K_sum);

// Pointwise value of the scaled interaction at the origin,
// v^eps(0) = (2pi)^{-d} sum_k vhat(eps k), with the same tail reporting as
// the mass counterterm.
TruncatedValue potential_at_origin(const Potential& pot, int d, int K_sum,
                                   std::optional<double> tail_tol = std::nullopt);

// Bundle used by the chemical-potential composition and the CLI table.
struct CountertermTable {
  double eps = 0.0;
  double a_eps = 0.0;
  double six_b_eps = 0.0;
  double C1 = 0.0;
  double C2 = 0.0;
  double v_eps_zero = 0.0;
  int K_sum_a = 0;
  int K_sum_b = 0;
  std::string potential;
};

CountertermTable build_counterterm_table(const Potential& pot, int d, int K_sum_a, int K_sum_b);

namespace detail {
// Radial double integral behind C1/C2, exposed for degeneration tests.
// g is the radial profile, dphi(a, b) = int_a^b rho g(rho) drho is its
// weighted integral over an interval (the angular integral in closed form).
// dphi must be supplied in a cancellation-free form: for decaying g this
// means differencing the tails, not the antiderivative anchored at 0.
// outer_one replaces the outer vhat(x) by 1 (the C2 variant).
double c_window_integral(const std::function<double(double)>& g,
                         const std::function<double(double, double)>& dphi, bool outer_one,
                         int n_nodes);

// Reduced integrand 2 g(ry) - dphi(|rx-ry|, rx+ry) / (rx ry), exposed so the
// flat-profile identity (it vanishes for g == 1) can be checked pointwise.
double window_integrand_value(const std::function<double(double)>& g,
                              const std::function<double(double, double)>& dphi, double rx,
                              double ry);
}  // namespace detail

}  // namespace phi4
