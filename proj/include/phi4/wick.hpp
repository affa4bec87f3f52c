#pragma once

#include <memory>
#include <vector>

#include "phi4/field.hpp"
#include "phi4/potential.hpp"

namespace phi4 {

// Coupling constants of the centered pair interaction
//   D[u] = 1/2 sum_k vhat(eps k) |W_k|^2 - theta (2pi)^{d/2} Re W_0,
//   W_k = <e_k, |u|^2> - delta_{k,0} (2pi)^{d/2} a_P.
// a_P is the Wick constant of the free field projected to the lattice; m and
// m0 are kept for reporting how theta was composed.
struct InteractionSpec {
  double theta = 0.0;
  double m = 0.0;
  double m0 = 0.0;
  double a_P = 0.0;
};

// theta supplied directly; a_P from the lattice.
InteractionSpec make_spec(const ModeLattice& lat, double theta, double m0 = 1.0);
// theta = a_eps - 6 b_eps + 1 - m with m = m0 - 2 C1 - 2 C2.
InteractionSpec make_spec_composed(const ModeLattice& lat, double a_eps, double b6_eps, double C1,
                                   double C2, double m0);

// Shared per-lattice tables: the difference set and vhat on it.
class WickTransform {
 public:
  WickTransform(LatticePtr lat, const Potential& pot);

  const DifferenceSet& diffs() const { return diffs_; }
  LatticePtr lattice() const { return lat_; }
  double vhat(std::size_t diff_index) const { return vhat_[diff_index]; }

  // W_k for every difference mode, in difference-set order.
  std::vector<cd> wick_coeffs(const SpectralField& u, const InteractionSpec& spec) const;

  // D[u]; finite for finite inputs by construction.
  double energy_D(const SpectralField& u, const InteractionSpec& spec) const;

  // V[u] = sum_k vhat(eps k) |<e_k, |u|^2>|^2 (no centering, no theta).
  double energy_V(const SpectralField& u) const;

  // grad_j = d D / d conj(z_j) = (2pi)^{-d/2} sum_k vhat(k) W_k z_{j-k} - theta z_j.
  // The negative of this is the interaction drift of the gradient flow.
  std::vector<cd> gradient(const SpectralField& u, const InteractionSpec& spec) const;

 private:
  LatticePtr lat_;
  DifferenceSet diffs_;
  std::vector<double> vhat_;
  // pair_diff_[i * K + j] = index of mode(i) - mode(j) in the difference set.
  std::vector<int> pair_diff_;
};

// Real-space quadrature path for D[u], used as an independent oracle: the
// kernel is periodized by a direct mode sum over the difference set and the
// double integral is a grid double sum. O(G^{2d}); small lattices only.
double energy_D_grid(const SpectralField& u, const Potential& pot, const InteractionSpec& spec,
                     int points_per_axis);

// Same quadrature path for V[u].
double energy_V_grid(const SpectralField& u, const Potential& pot, int points_per_axis);

}  // namespace phi4
