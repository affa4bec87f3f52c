#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "phi4/lattice.hpp"

namespace phi4 {

enum class PotentialKind { gaussian, bessel, table };

// Radial interaction profile in Fourier variables, evaluated at scaled modes.
// gaussian: vhat(x) = exp(-c |x|^2); bessel: vhat(x) = (1 + |x|^2)^(-beta/2).
// Both satisfy vhat(0) = 1 and 0 <= vhat <= 1. A table assigns values to
// integer modes directly (the scale eps is not applied) and may violate
// vhat(0) = 1; that is the intended escape hatch for degenerate inputs.
class Potential {
 public:
  static Potential gaussian(double c, double eps);
  static Potential bessel(double beta, double eps, int d);
  static Potential table(std::map<std::int64_t, double> values, double eps);
  // All modes -> 0.
  static Potential table_zero();
  // vhat(0) = 1, all other modes 0.
  static Potential table_delta0();

  PotentialKind kind() const { return kind_; }
  double eps() const { return eps_; }
  double c() const { return c_; }
  double beta() const { return beta_; }

  // vhat(eps k) for an integer mode k (table: direct lookup, 0 when absent).
  double hat(const Ivec& k) const {
    if (kind_ == PotentialKind::table) {
      auto it = table_.find(pack_mode(k));
      return it == table_.end() ? 0.0 : it->second;
    }
    double k2 = static_cast<double>(k[0]) * k[0] + static_cast<double>(k[1]) * k[1] +
                static_cast<double>(k[2]) * k[2];
    return radial2(eps_ * eps_ * k2);
  }

  // Same, keyed by integer |k|^2 (radial kinds only).
  double hat_r2(double k2_int) const {
    if (kind_ == PotentialKind::table)
      throw std::logic_error("potential: radial evaluation undefined for tables");
    return radial2(eps_ * eps_ * k2_int);
  }

  // Unscaled radial profile g(r) = vhat at |x| = r, and its derivative.
  double profile(double r) const { return radial2(r * r); }
  double profile_prime(double r) const {
    switch (kind_) {
      case PotentialKind::gaussian: return -2.0 * c_ * r * std::exp(-c_ * r * r);
      case PotentialKind::bessel: return -beta_ * r * std::pow(1.0 + r * r, -beta_ / 2.0 - 1.0);
      case PotentialKind::table:
        throw std::logic_error("potential: no radial profile for tables");
    }
    return 0.0;
  }

  bool is_radial() const { return kind_ != PotentialKind::table; }

  std::string describe() const;

 private:
  Potential() = default;
  double radial2(double x2) const {
    switch (kind_) {
      case PotentialKind::gaussian: return std::exp(-c_ * x2);
      case PotentialKind::bessel: return std::pow(1.0 + x2, -beta_ / 2.0);
      case PotentialKind::table:
        throw std::logic_error("potential: radial evaluation undefined for tables");
    }
    return 0.0;
  }

  PotentialKind kind_ = PotentialKind::gaussian;
  double eps_ = 1.0;
  double c_ = 1.0;
  double beta_ = 4.0;
  std::map<std::int64_t, double> table_;
};

// Convenience alias used by the counterterm callers.
inline double potential_hat(const Potential& p, const Ivec& k) { return p.hat(k); }

}  // namespace phi4
