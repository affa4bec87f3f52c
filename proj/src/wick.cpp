#include "phi4/wick.hpp"

#include <cmath>
#include <stdexcept>

namespace phi4 {

InteractionSpec make_spec(const ModeLattice& lat, double theta, double m0) {
  InteractionSpec s;
  s.theta = theta;
  s.m = m0;
  s.m0 = m0;
  s.a_P = lat.wick_constant();
  return s;
}

InteractionSpec make_spec_composed(const ModeLattice& lat, double a_eps, double b6_eps, double C1,
                                   double C2, double m0) {
  InteractionSpec s;
  s.m0 = m0;
  s.m = m0 - 2.0 * C1 - 2.0 * C2;
  s.theta = a_eps - b6_eps + 1.0 - s.m;
  s.a_P = lat.wick_constant();
  return s;
}

WickTransform::WickTransform(LatticePtr lat, const Potential& pot)
    : lat_(std::move(lat)), diffs_(*lat_) {
  vhat_.resize(diffs_.size());
  for (std::size_t i = 0; i < diffs_.size(); ++i) vhat_[i] = pot.hat(diffs_.mode(i));
  const std::size_t K = lat_->size();
  pair_diff_.resize(K * K);
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) {
      const Ivec& a = lat_->mode(i);
      const Ivec& b = lat_->mode(j);
      int idx = diffs_.find(Ivec{a[0] - b[0], a[1] - b[1], a[2] - b[2]});
      if (idx < 0) throw std::logic_error("wick: difference set incomplete");
      pair_diff_[i * K + j] = idx;
    }
}

std::vector<cd> WickTransform::wick_coeffs(const SpectralField& u,
                                           const InteractionSpec& spec) const {
  if (u.lat != lat_) throw std::invalid_argument("wick_coeffs: lattice mismatch");
  const std::size_t K = lat_->size();
  std::vector<cd> w(diffs_.size(), cd{0.0, 0.0});
  const double norm = 1.0 / std::sqrt(pow_2pi(lat_->d()));
  // <e_k, |u|^2> = (2pi)^{-d/2} sum_{i,j: mode_i - mode_j = k} z_i conj(z_j).
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j)
      w[static_cast<std::size_t>(pair_diff_[i * K + j])] += u.z[i] * std::conj(u.z[j]);
  for (cd& v : w) v *= norm;
  w[static_cast<std::size_t>(diffs_.zero_index())] -=
      std::sqrt(pow_2pi(lat_->d())) * spec.a_P;
  return w;
}

double WickTransform::energy_D(const SpectralField& u, const InteractionSpec& spec) const {
  std::vector<cd> w = wick_coeffs(u, spec);
  KahanSum s;
  for (std::size_t k = 0; k < w.size(); ++k) s.add(vhat_[k] * std::norm(w[k]));
  double d0 = 0.5 * s.value();
  double w0 = w[static_cast<std::size_t>(diffs_.zero_index())].real();
  return d0 - spec.theta * std::sqrt(pow_2pi(lat_->d())) * w0;
}

double WickTransform::energy_V(const SpectralField& u) const {
  InteractionSpec uncentered;  // a_P = 0, theta = 0
  std::vector<cd> w = wick_coeffs(u, uncentered);
  KahanSum s;
  for (std::size_t k = 0; k < w.size(); ++k) s.add(vhat_[k] * std::norm(w[k]));
  return s.value();
}

std::vector<cd> WickTransform::gradient(const SpectralField& u,
                                        const InteractionSpec& spec) const {
  std::vector<cd> w = wick_coeffs(u, spec);
  const std::size_t K = lat_->size();
  std::vector<cd> g(K, cd{0.0, 0.0});
  const double norm = 1.0 / std::sqrt(pow_2pi(lat_->d()));
  // (v * :|u|^2:) u projected back: g_i = (2pi)^{-d/2} sum_j vhat(k_ij) W_{k_ij} z_j
  // with k_ij = mode_i - mode_j, then the theta term.
  for (std::size_t i = 0; i < K; ++i) {
    cd acc{0.0, 0.0};
    for (std::size_t j = 0; j < K; ++j) {
      int k = pair_diff_[i * K + j];
      acc += vhat_[static_cast<std::size_t>(k)] * w[static_cast<std::size_t>(k)] * u.z[j];
    }
    g[i] = norm * acc - spec.theta * u.z[i];
  }
  return g;
}

namespace {

// Periodized kernel v^eps on the torus evaluated by a direct sum over the
// difference modes: v(x) = (2pi)^{-d} sum_k vhat(eps k) e^{i k.x}.
std::vector<double> kernel_on_displacements(const DifferenceSet& diffs, const Potential& pot,
                                            int d, int G) {
  std::int64_t n = 1;
  for (int i = 0; i < d; ++i) n *= G;
  std::vector<double> v(static_cast<size_t>(n), 0.0);
  std::vector<double> vh(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) vh[i] = pot.hat(diffs.mode(i));
  const double norm = 1.0 / pow_2pi(d);
  for (std::int64_t p = 0; p < n; ++p) {
    std::int64_t rest = p;
    double x[3] = {0.0, 0.0, 0.0};
    for (int axis = d - 1; axis >= 0; --axis) {
      x[axis] = kTwoPi * static_cast<double>(rest % G) / G;
      rest /= G;
    }
    KahanSum s;
    for (std::size_t i = 0; i < diffs.size(); ++i) {
      const Ivec& k = diffs.mode(i);
      s.add(vh[i] * std::cos(k[0] * x[0] + k[1] * x[1] + k[2] * x[2]));
    }
    v[static_cast<size_t>(p)] = norm * s.value();
  }
  return v;
}

std::vector<double> centered_density(const SpectralField& u, const Grid& grid, double a_P) {
  std::vector<cd> vals = grid.values(u);
  std::vector<double> w(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) w[i] = std::norm(vals[i]) - a_P;
  return w;
}

// index arithmetic for periodic displacement x_i - x_j on the grid
std::int64_t displacement_index(std::int64_t i, std::int64_t j, int d, int G) {
  std::int64_t out = 0;
  std::int64_t fi = i, fj = j;
  std::int64_t scale = 1;
  for (int axis = 0; axis < d; ++axis) scale *= G;
  for (int axis = 0; axis < d; ++axis) {
    scale /= G;
    int ci = static_cast<int>(fi / scale);
    int cj = static_cast<int>(fj / scale);
    fi %= scale;
    fj %= scale;
    int delta = ci - cj;
    if (delta < 0) delta += G;
    out = out * G + delta;
  }
  return out;
}

}  // namespace

double energy_D_grid(const SpectralField& u, const Potential& pot, const InteractionSpec& spec,
                     int points_per_axis) {
  const int d = u.lat->d();
  const int G = points_per_axis;
  Grid grid(u.lat, G);
  DifferenceSet diffs(*u.lat);
  std::vector<double> v = kernel_on_displacements(diffs, pot, d, G);
  std::vector<double> w = centered_density(u, grid, spec.a_P);
  const std::int64_t n = grid.n_points();
  KahanSum pair;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      pair.add(w[static_cast<size_t>(i)] * v[static_cast<size_t>(displacement_index(i, j, d, G))] *
               w[static_cast<size_t>(j)]);
  const double cw = grid.cell_weight();
  double quad = 0.5 * pair.value() * cw * cw;
  double lin = spec.theta * grid.integrate_real(w);
  return quad - lin;
}

double energy_V_grid(const SpectralField& u, const Potential& pot, int points_per_axis) {
  // V has no 1/2 in front of the pair integral and no centering.
  InteractionSpec uncentered;
  return 2.0 * energy_D_grid(u, pot, uncentered, points_per_axis);
}

}  // namespace phi4
