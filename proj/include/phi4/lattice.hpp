#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "phi4/common.hpp"

namespace phi4 {

using Ivec = std::array<int, 3>;  // integer mode; entries beyond dimension d are 0

inline std::int64_t pack_mode(const Ivec& k) {
  // Components fit comfortably in 21 bits each.
  auto enc = [](int v) { return static_cast<std::int64_t>(v + (1 << 20)); };
  return (enc(k[0]) << 42) | (enc(k[1]) << 21) | enc(k[2]);
}

enum class CutoffKind {
  sharp_ball,  // |k| <= N (Euclidean)
  sharp_h,     // <k>^2 <= (N+1)^2
  smooth,      // weight chi(<k>/(N+1)), support <k> < N+1
};

std::string to_string(CutoffKind kind);
CutoffKind cutoff_kind_from_string(const std::string& s);

// C^1 bump: 1 on [0, 1/2], quintic smoothstep down to 0 at 1.
double smooth_profile(double y);

// Finite symmetric set of Fourier modes with cutoff weights.
// Invariants: contains -k whenever it contains k, weights chi in (0, 1],
// chi(-k) = chi(k), modes ordered lexicographically.
class ModeLattice {
 public:
  ModeLattice(int d, int N, CutoffKind kind, std::vector<Ivec> modes, std::vector<double> chi);

  int d() const { return d_; }
  int N() const { return N_; }
  CutoffKind kind() const { return kind_; }
  std::size_t size() const { return modes_.size(); }
  const std::vector<Ivec>& modes() const { return modes_; }
  const Ivec& mode(std::size_t i) const { return modes_[i]; }
  double chi(std::size_t i) const { return chi_[i]; }
  const std::vector<double>& chi() const { return chi_; }
  // <k>^2 = 1 + |k|^2.
  double h(std::size_t i) const { return h_[i]; }

  // Index of a mode, or -1 if absent.
  int find(const Ivec& k) const {
    auto it = index_.find(pack_mode(k));
    return it == index_.end() ? -1 : it->second;
  }

  // sum_k chi(k)^2 / <k>^2 / (2pi)^d; the Wick constant of the projected free field.
  double wick_constant() const;

  std::string to_json() const;
  static std::shared_ptr<const ModeLattice> from_json(const std::string& text);

 private:
  int d_;
  int N_;
  CutoffKind kind_;
  std::vector<Ivec> modes_;
  std::vector<double> chi_;
  std::vector<double> h_;
  std::unordered_map<std::int64_t, int> index_;
};

using LatticePtr = std::shared_ptr<const ModeLattice>;

// Enumerates the retained modes for the given cutoff. Throws std::invalid_argument
// for d outside {1,2,3}, N < 0, or a mode count beyond the in-memory budget.
LatticePtr build_lattice(int d, int N, CutoffKind kind = CutoffKind::sharp_ball);

// All pairwise differences k1 - k2 of lattice modes, with an index. Shared by
// the convolution paths; ordered lexicographically.
class DifferenceSet {
 public:
  explicit DifferenceSet(const ModeLattice& lat);
  std::size_t size() const { return modes_.size(); }
  const std::vector<Ivec>& modes() const { return modes_; }
  const Ivec& mode(std::size_t i) const { return modes_[i]; }
  int find(const Ivec& k) const {
    auto it = index_.find(pack_mode(k));
    return it == index_.end() ? -1 : it->second;
  }
  int zero_index() const { return zero_; }

 private:
  std::vector<Ivec> modes_;
  std::unordered_map<std::int64_t, int> index_;
  int zero_ = -1;
};

}  // namespace phi4
