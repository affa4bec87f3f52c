#pragma once

#include <complex>
#include <vector>

#include "phi4/lattice.hpp"

namespace phi4 {

// Complex field on the torus [0, 2pi)^d held as coefficients z_k of the
// orthonormal modes e_k(x) = (2pi)^{-d/2} exp(i k.x), one per lattice mode.
struct SpectralField {
  LatticePtr lat;
  std::vector<cd> z;

  SpectralField() = default;
  explicit SpectralField(LatticePtr l) : lat(std::move(l)), z(lat->size(), cd{0.0, 0.0}) {}
  SpectralField(LatticePtr l, std::vector<cd> coeffs) : lat(std::move(l)), z(std::move(coeffs)) {
    if (z.size() != lat->size()) throw std::invalid_argument("field: coefficient count mismatch");
  }

  std::size_t size() const { return z.size(); }
  // L^2 norm squared; Parseval makes this sum_k |z_k|^2.
  double norm2() const {
    KahanSum s;
    for (const cd& v : z) s.add(std::norm(v));
    return s.value();
  }
};

// <phi, u> = sum_k conj(phi_k) u_k; both fields must share a lattice object.
cd inner(const SpectralField& phi, const SpectralField& u);

// Uniform tensor grid with G points per axis used as an independent quadrature
// path. G > 4N keeps quartic products of lattice modes alias-free.
class Grid {
 public:
  Grid(LatticePtr lat, int points_per_axis);

  int G() const { return G_; }
  std::int64_t n_points() const { return n_points_; }
  double cell_weight() const { return cell_weight_; }  // (2pi/G)^d

  // Field values u(x_j) at all grid points (lexicographic over axes).
  std::vector<cd> values(const SpectralField& u) const;
  // Quadrature of conj(e_k) * w over the grid for an arbitrary integer mode.
  cd project(const std::vector<cd>& w, const Ivec& k) const;
  // Trapezoid quadrature of a scalar grid function (exact for band-limited w).
  double integrate_real(const std::vector<double>& w) const;

  LatticePtr lattice() const { return lat_; }

 private:
  LatticePtr lat_;
  int G_;
  std::int64_t n_points_;
  double cell_weight_;
  // phase[axis][(k + offset) * G + j] = exp(i k x_j), x_j = 2pi j / G.
  int max_mode_;
  std::vector<std::vector<cd>> phase_;
  const cd* phase_row(int axis, int k) const { return &phase_[static_cast<size_t>(axis)][static_cast<size_t>((k + max_mode_) * G_)]; }
};

// Independent-mode Gaussian field: z_k = chi(k) zeta_k / <k>, E|zeta_k|^2 = 1.
SpectralField sample_gff_field(const LatticePtr& lat, Rng& rng);

}  // namespace phi4
