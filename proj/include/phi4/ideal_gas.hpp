#pragma once

#include <optional>

#include "phi4/counterterms.hpp"

namespace phi4 {

// Thermodynamics of the free Bose gas on the torus. All sums run over the
// integer box |k|_inf <= K_sum with a sup-norm shell tail bound; the
// asymptotic decompositions are d=3 specific and refuse other dimensions.

struct DensityResult {
  double rho0 = 0.0;      // (2pi)^{-d} sum_k 1/(e^{lambda <k>^2} - 1)
  double mode_sum = 0.0;  // sum_k lambda/(e^{lambda <k>^2} - 1)
  double tail_bound = 0.0;
  int K_sum = 0;
};

DensityResult rho0_density(double lambda, int d, int K_sum,
                           std::optional<double> tail_tol = std::nullopt);

// Finite-volume constant -1/(4pi) + (4pi)^{-1} sum_{l in 2pi Z^3 \ 0}
// e^{-|l|}/|l|, summed over sup-norm shells 1..n_shells of the integer
// vectors l/(2pi).
double C0_constant(int n_shells);

// rho0 split into its divergent parts and the remainder, d=3 only:
// rho0 = zeta(3/2)/(4 pi lambda)^{3/2} + C0/lambda + remainder.
struct Rho0Expansion {
  double rho0 = 0.0;
  double leading = 0.0;
  double c0_term = 0.0;
  double remainder = 0.0;  // O(lambda^{-1/2})
};

Rho0Expansion rho0_expansion(double lambda, int K_sum);

// Both sides of the Poisson-summation expansion of the mode sum, d=3 only:
// sum_k lambda/(e^{lambda<k>^2}-1)
//   = pi^{3/2} zeta(3/2)/sqrt(lambda) - 2 pi^2 + 2 pi^2 sum_l e^{-|l|}/|l|
//     + O(sqrt(lambda)).
struct PoissonCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
  double residual_over_sqrt_lambda = 0.0;
  double leading_coefficient = 0.0;  // pi^{3/2} zeta(3/2)
  double constant_term = 0.0;        // -2 pi^2
};

PoissonCheck poisson_expansion_check(double lambda, int K_sum);

// Chemical potential composition, d=3 only:
//   theta     = zeta(3/2)/(4pi)^{3/2} lambda^{-1/2} + C0 + a - 6b
//               + 2 C1 + 2 C2 - m0
//   theta_eps = a - 6b - m + 1 - e_lambda,  m = m0 - 2 C1 - 2 C2
//   e_lambda  = lambda rho0 - zeta(3/2)/(4pi)^{3/2} lambda^{-1/2} - C0
//               - (lambda/2) v_eps(0)
struct ChemicalPotential {
  double theta = 0.0;
  double theta_eps = 0.0;
  double e_lambda = 0.0;
  double m = 0.0;
  double rho0 = 0.0;
  double N0 = 0.0;        // (2pi)^3 rho0
  double E_lambda = 0.0;  // (lambda^2/2)(2pi)^3 rho0^2 + (2pi)^3 lambda rho0 theta_eps
};

ChemicalPotential chemical_potential(double lambda, const CountertermTable& table, double m0,
                                     int K_sum);

// Occupation numbers at chemical potential theta0 > 0 (note |k|^2, not
// <k>^2: theta0 replaces the unit mass):
//   M  = sum_k 1/(e^{lambda(|k|^2 + theta0)} - 1),  M0 = 1/(e^{lambda theta0} - 1).
struct CondensateReport {
  double M = 0.0;
  double M0 = 0.0;
  double fraction = 0.0;  // M0 / M
  double lambda_c = 0.0;  // pi (M / zeta(3/2))^{-2/3}
  int K_sum = 0;
};

CondensateReport condensate_fraction(double lambda, double theta0, int K_sum);

}  // namespace phi4
