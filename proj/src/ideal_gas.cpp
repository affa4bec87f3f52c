#include "phi4/ideal_gas.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "phi4/common.hpp"

namespace phi4 {

namespace {

// sum_{|k|_inf <= K} f(|k|^2) using signed-permutation orbits of sorted
// nonnegative triples/pairs; f must depend on k only through |k|^2.
template <typename F>
double radial_box_sum(int d, int K, F&& f) {
  KahanSum s;
  if (d == 1) {
    s.add(f(0.0));
    for (int a = 1; a <= K; ++a) s.add(2.0 * f(static_cast<double>(a) * a));
    return s.value();
  }
  if (d == 2) {
    for (int a = 0; a <= K; ++a)
      for (int b = 0; b <= a; ++b) {
        double w = (a == b ? 1.0 : 2.0) * (1 << ((a > 0) + (b > 0)));
        s.add(w * f(static_cast<double>(a) * a + static_cast<double>(b) * b));
      }
    return s.value();
  }
  for (int a = 0; a <= K; ++a)
    for (int b = 0; b <= a; ++b)
      for (int c = 0; c <= b; ++c) {
        double perms = (a == c) ? 1.0 : ((a == b || b == c) ? 3.0 : 6.0);
        double w = perms * (1 << ((a > 0) + (b > 0) + (c > 0)));
        s.add(w * f(static_cast<double>(a) * a + static_cast<double>(b) * b +
                    static_cast<double>(c) * c));
      }
  return s.value();
}

// occupation of a mode with energy x: 1/(e^x - 1), safe for large x
double bose(double x) { return 1.0 / std::expm1(x); }

// tail of sum_{|k|_inf > K} 1/(e^{lambda(|k|^2 + mu)} - 1) over sup-norm
// shells; the occupation is monotone in |k|, so the shell floor m^2 bounds it
double bose_tail(double lambda, double mu, int d, int K) {
  KahanSum tail;
  double prev_side = std::pow(2.0 * K + 1.0, d);
  double total = 0.0;
  for (int m = K + 1; m < K + 2000000; ++m) {
    double cur_side = std::pow(2.0 * m + 1.0, d);
    double count = cur_side - prev_side;
    prev_side = cur_side;
    double x = lambda * (static_cast<double>(m) * m + mu);
    if (x > 700.0) break;
    double term = count * bose(x);
    tail.add(term);
    total = tail.value();
    if (term < 1e-18 * (total + 1e-300)) break;
  }
  return tail.value();
}

void require_lambda(double lambda, const char* who) {
  if (!(lambda > 0.0)) throw std::invalid_argument(std::string(who) + ": lambda must be > 0");
}

}  // namespace

DensityResult rho0_density(double lambda, int d, int K_sum, std::optional<double> tail_tol) {
  require_lambda(lambda, "rho0_density");
  if (d < 1 || d > 3) throw std::invalid_argument("rho0_density: d must be 1, 2 or 3");
  if (K_sum < 0) throw std::invalid_argument("rho0_density: K_sum must be >= 0");

  double raw =
      radial_box_sum(d, K_sum, [&](double r2) { return bose(lambda * (1.0 + r2)); });
  DensityResult out;
  out.K_sum = K_sum;
  out.rho0 = raw / pow_2pi(d);
  out.mode_sum = lambda * raw;
  out.tail_bound = bose_tail(lambda, 1.0, d, K_sum) / pow_2pi(d);
  if (tail_tol && out.tail_bound > *tail_tol)
    throw TailError("rho0_density: tail bound " + std::to_string(out.tail_bound) +
                    " exceeds tolerance " + std::to_string(*tail_tol));
  return out;
}

double C0_constant(int n_shells) {
  if (n_shells < 0) throw std::invalid_argument("C0_constant: n_shells must be >= 0");
  KahanSum s;
  for (int m = 1; m <= n_shells; ++m)
    for (int a = -m; a <= m; ++a)
      for (int b = -m; b <= m; ++b)
        for (int c = -m; c <= m; ++c) {
          if (std::max({std::abs(a), std::abs(b), std::abs(c)}) != m) continue;
          double el = kTwoPi * std::sqrt(static_cast<double>(a) * a +
                                         static_cast<double>(b) * b +
                                         static_cast<double>(c) * c);
          s.add(std::exp(-el) / el);
        }
  return (s.value() - 1.0) / (4.0 * kPi);
}

Rho0Expansion rho0_expansion(double lambda, int K_sum) {
  require_lambda(lambda, "rho0_expansion");
  Rho0Expansion out;
  out.rho0 = rho0_density(lambda, 3, K_sum).rho0;
  out.leading = zeta_three_halves() / std::pow(4.0 * kPi * lambda, 1.5);
  out.c0_term = C0_constant(6) / lambda;
  out.remainder = out.rho0 - out.leading - out.c0_term;
  return out;
}

PoissonCheck poisson_expansion_check(double lambda, int K_sum) {
  require_lambda(lambda, "poisson_expansion_check");
  PoissonCheck out;
  out.lhs = rho0_density(lambda, 3, K_sum).mode_sum;
  out.leading_coefficient = std::pow(kPi, 1.5) * zeta_three_halves();
  out.constant_term = -2.0 * kPi * kPi;
  // sum_l e^{-|l|}/|l| = 4 pi C0 + 1
  double lattice_sum = 4.0 * kPi * C0_constant(6) + 1.0;
  out.rhs = out.leading_coefficient / std::sqrt(lambda) + out.constant_term +
            2.0 * kPi * kPi * lattice_sum;
  out.residual = out.lhs - out.rhs;
  out.residual_over_sqrt_lambda = out.residual / std::sqrt(lambda);
  return out;
}

ChemicalPotential chemical_potential(double lambda, const CountertermTable& table, double m0,
                                     int K_sum) {
  require_lambda(lambda, "chemical_potential");
  ChemicalPotential out;
  const double c0 = C0_constant(6);
  const double zl = zeta_three_halves() / std::pow(4.0 * kPi, 1.5) / std::sqrt(lambda);
  out.m = m0 - 2.0 * table.C1 - 2.0 * table.C2;
  out.theta = zl + c0 + table.a_eps - table.six_b_eps + 2.0 * table.C1 + 2.0 * table.C2 - m0;
  out.rho0 = rho0_density(lambda, 3, K_sum).rho0;
  out.e_lambda = lambda * out.rho0 - zl - c0 - 0.5 * lambda * table.v_eps_zero;
  out.theta_eps = table.a_eps - table.six_b_eps - out.m + 1.0 - out.e_lambda;
  out.N0 = pow_2pi(3) * out.rho0;
  out.E_lambda = 0.5 * lambda * lambda * pow_2pi(3) * out.rho0 * out.rho0 +
                 pow_2pi(3) * lambda * out.rho0 * out.theta_eps;
  return out;
}

CondensateReport condensate_fraction(double lambda, double theta0, int K_sum) {
  require_lambda(lambda, "condensate_fraction");
  if (!(theta0 > 0.0))
    throw std::invalid_argument("condensate_fraction: theta0 must be > 0");
  if (K_sum < 0) throw std::invalid_argument("condensate_fraction: K_sum must be >= 0");
  CondensateReport out;
  out.K_sum = K_sum;
  out.M = radial_box_sum(3, K_sum, [&](double r2) { return bose(lambda * (r2 + theta0)); });
  out.M0 = bose(lambda * theta0);
  out.fraction = out.M0 / out.M;
  out.lambda_c = kPi * std::pow(out.M / zeta_three_halves(), -2.0 / 3.0);
  return out;
}

}  // namespace phi4
