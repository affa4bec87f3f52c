#include "phi4/field.hpp"

#include <cmath>
#include <stdexcept>

namespace phi4 {

cd inner(const SpectralField& phi, const SpectralField& u) {
  if (phi.lat != u.lat) throw std::invalid_argument("inner: lattice mismatch");
  KahanSum re, im;
  for (std::size_t i = 0; i < phi.z.size(); ++i) {
    cd t = std::conj(phi.z[i]) * u.z[i];
    re.add(t.real());
    im.add(t.imag());
  }
  return {re.value(), im.value()};
}

Grid::Grid(LatticePtr lat, int points_per_axis) : lat_(std::move(lat)), G_(points_per_axis) {
  if (G_ < 1) throw std::invalid_argument("grid: need at least one point per axis");
  const int d = lat_->d();
  n_points_ = 1;
  for (int i = 0; i < d; ++i) n_points_ *= G_;
  cell_weight_ = 1.0;
  for (int i = 0; i < d; ++i) cell_weight_ *= kTwoPi / G_;

  max_mode_ = 0;
  for (const Ivec& k : lat_->modes())
    for (int i = 0; i < 3; ++i) max_mode_ = std::max(max_mode_, std::abs(k[i]));

  phase_.assign(static_cast<size_t>(d), {});
  for (int axis = 0; axis < d; ++axis) {
    auto& rows = phase_[static_cast<size_t>(axis)];
    rows.resize(static_cast<size_t>((2 * max_mode_ + 1) * G_));
    for (int k = -max_mode_; k <= max_mode_; ++k)
      for (int j = 0; j < G_; ++j) {
        double x = kTwoPi * j / G_;
        rows[static_cast<size_t>((k + max_mode_) * G_ + j)] =
            cd(std::cos(k * x), std::sin(k * x));
      }
  }
}

std::vector<cd> Grid::values(const SpectralField& u) const {
  if (u.lat != lat_) throw std::invalid_argument("grid: field lattice mismatch");
  const int d = lat_->d();
  std::vector<cd> out(static_cast<size_t>(n_points_), cd{0.0, 0.0});
  const double norm = 1.0 / std::sqrt(pow_2pi(d));
  for (std::size_t m = 0; m < lat_->size(); ++m) {
    const Ivec& k = lat_->mode(m);
    const cd a = u.z[m] * norm;
    if (a == cd{0.0, 0.0}) continue;
    if (d == 1) {
      const cd* p0 = phase_row(0, k[0]);
      for (int j = 0; j < G_; ++j) out[static_cast<size_t>(j)] += a * p0[j];
    } else if (d == 2) {
      const cd* p0 = phase_row(0, k[0]);
      const cd* p1 = phase_row(1, k[1]);
      std::size_t idx = 0;
      for (int j0 = 0; j0 < G_; ++j0) {
        const cd f0 = a * p0[j0];
        for (int j1 = 0; j1 < G_; ++j1) out[idx++] += f0 * p1[j1];
      }
    } else {
      const cd* p0 = phase_row(0, k[0]);
      const cd* p1 = phase_row(1, k[1]);
      const cd* p2 = phase_row(2, k[2]);
      std::size_t idx = 0;
      for (int j0 = 0; j0 < G_; ++j0) {
        const cd f0 = a * p0[j0];
        for (int j1 = 0; j1 < G_; ++j1) {
          const cd f1 = f0 * p1[j1];
          for (int j2 = 0; j2 < G_; ++j2) out[idx++] += f1 * p2[j2];
        }
      }
    }
  }
  return out;
}

cd Grid::project(const std::vector<cd>& w, const Ivec& k) const {
  if (static_cast<std::int64_t>(w.size()) != n_points_)
    throw std::invalid_argument("grid: value array size mismatch");
  const int d = lat_->d();
  for (int i = 0; i < d; ++i)
    if (std::abs(k[i]) > max_mode_) throw std::invalid_argument("grid: mode outside phase table");
  KahanSum re, im;
  const double norm = 1.0 / std::sqrt(pow_2pi(d));
  if (d == 1) {
    const cd* p0 = phase_row(0, k[0]);
    for (int j = 0; j < G_; ++j) {
      cd t = std::conj(p0[j]) * w[static_cast<size_t>(j)];
      re.add(t.real());
      im.add(t.imag());
    }
  } else if (d == 2) {
    const cd* p0 = phase_row(0, k[0]);
    const cd* p1 = phase_row(1, k[1]);
    std::size_t idx = 0;
    for (int j0 = 0; j0 < G_; ++j0)
      for (int j1 = 0; j1 < G_; ++j1) {
        cd t = std::conj(p0[j0] * p1[j1]) * w[idx++];
        re.add(t.real());
        im.add(t.imag());
      }
  } else {
    const cd* p0 = phase_row(0, k[0]);
    const cd* p1 = phase_row(1, k[1]);
    const cd* p2 = phase_row(2, k[2]);
    std::size_t idx = 0;
    for (int j0 = 0; j0 < G_; ++j0)
      for (int j1 = 0; j1 < G_; ++j1)
        for (int j2 = 0; j2 < G_; ++j2) {
          cd t = std::conj(p0[j0] * p1[j1] * p2[j2]) * w[idx++];
          re.add(t.real());
          im.add(t.imag());
        }
  }
  return cd{re.value(), im.value()} * (norm * cell_weight_);
}

double Grid::integrate_real(const std::vector<double>& w) const {
  if (static_cast<std::int64_t>(w.size()) != n_points_)
    throw std::invalid_argument("grid: value array size mismatch");
  KahanSum s;
  for (double v : w) s.add(v);
  return s.value() * cell_weight_;
}

SpectralField sample_gff_field(const LatticePtr& lat, Rng& rng) {
  SpectralField u(lat);
  for (std::size_t i = 0; i < lat->size(); ++i) {
    double sd = lat->chi(i) / std::sqrt(lat->h(i));
    u.z[i] = sd * rng.cgauss();
  }
  return u;
}

}  // namespace phi4
