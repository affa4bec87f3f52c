#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <string>
#include <vector>

#include "phi4/lattice.hpp"

namespace phi4 {

using SpMat = Eigen::SparseMatrix<cd>;

// Truncated bosonic Fock space over M lattice modes with a total-occupation
// cap: all occupation vectors (n_1,...,n_M) with sum n_i <= n_max, grouped
// into contiguous total-number sectors. Dimension is
// sum_{n<=n_max} C(n+M-1, M-1). The total cap (rather than per-mode caps)
// keeps the number operator block structure exact.
class FockBasis {
 public:
  FockBasis(LatticePtr lat, std::vector<Ivec> modes, int n_max);

  int M() const { return static_cast<int>(modes_.size()); }
  int n_max() const { return n_max_; }
  std::size_t dim() const { return occ_.size(); }
  int d() const { return lat_->d(); }
  LatticePtr lattice() const { return lat_; }

  const std::vector<Ivec>& modes() const { return modes_; }
  const Ivec& mode(int slot) const { return modes_[static_cast<std::size_t>(slot)]; }
  // <k>^2 of the mode in a slot.
  double h(int slot) const { return h_[static_cast<std::size_t>(slot)]; }
  const std::vector<double>& h_values() const { return h_; }

  const std::vector<int>& occ(std::size_t i) const { return occ_[i]; }
  int total(std::size_t i) const { return total_[i]; }
  // Half-open index range [begin, end) of the total-number-n sector.
  std::size_t sector_begin(int n) const { return sector_begin_[static_cast<std::size_t>(n)]; }
  std::size_t sector_end(int n) const { return sector_begin_[static_cast<std::size_t>(n) + 1]; }

  // Index of an occupation vector, or -1 if it is not in the basis.
  std::ptrdiff_t find(const std::vector<int>& occ) const;
  // Slot of a lattice mode within the basis, or -1.
  int mode_slot(const Ivec& k) const;

 private:
  LatticePtr lat_;
  std::vector<Ivec> modes_;
  std::vector<double> h_;
  int n_max_;
  std::vector<std::vector<int>> occ_;
  std::vector<int> total_;
  std::vector<std::size_t> sector_begin_;
  std::unordered_map<std::string, std::ptrdiff_t> index_;
};

using BasisPtr = std::shared_ptr<const FockBasis>;

BasisPtr make_fock_basis(LatticePtr lat, std::vector<Ivec> modes, int n_max);
// All modes of the lattice.
BasisPtr make_fock_basis(LatticePtr lat, int n_max);

// Sparse operator on a FockBasis. The flags are structural guarantees set by
// the constructors: hermitian means A = A^dagger to 1e-13, number_conserving
// means no matrix elements across total-number sectors (exact zeros).
struct FockOperator {
  BasisPtr basis;
  SpMat m;
  bool hermitian = false;
  bool number_conserving = false;
};

enum class LadderKind { create, annihilate };

// a_k / a*_k with matrix elements sqrt(n_k), sqrt(n_k + 1); transitions that
// would leave the total cap are dropped. Throws if the mode is not in the basis.
FockOperator ladder(const BasisPtr& basis, const Ivec& k, LadderKind kind);

// N = dGamma(identity), diagonal.
FockOperator number_operator(const BasisPtr& basis);

// Second quantization of an M x M one-body matrix A:
//   dGamma(A) = sum_{j,k} A_{jk} a*_j a_k.
// Requires A Hermitian to 1e-13 (dense input, slots in basis order).
FockOperator dGamma(const BasisPtr& basis, const Eigen::MatrixXcd& one_body);

// Second quantization of multiplication by the Fourier mode e_k:
//   dGamma(e_k) = (2pi)^{-d/2} sum_q a*_{q+k} a_q
// restricted to pairs (q, q+k) inside the basis. dropped_fraction reports the
// share of source modes q whose target q+k falls outside the basis.
struct ShiftSecondQuant {
  FockOperator op;
  double dropped_fraction = 0.0;
};
ShiftSecondQuant dGamma_shift(const BasisPtr& basis, const Ivec& k);

// Operator algebra. Flags propagate conservatively: sums and real scalings
// keep both flags, products keep number conservation only, adjoints keep both.
FockOperator op_identity(const BasisPtr& basis);
FockOperator op_add(const FockOperator& a, const FockOperator& b);
FockOperator op_scale(cd s, const FockOperator& a);
FockOperator op_mul(const FockOperator& a, const FockOperator& b);
FockOperator op_adjoint(const FockOperator& a);
FockOperator op_commutator(const FockOperator& a, const FockOperator& b);
// a^dagger a; Hermitian by construction.
FockOperator op_abs2(const FockOperator& a);

double op_max_abs(const FockOperator& a);
// max |A - A^dagger| over entries.
double hermiticity_defect(const FockOperator& a);
// max |entry| connecting different total-number sectors.
double sector_leakage(const FockOperator& a);

// Vector on the basis (dense coefficients in basis order).
using FockVector = Eigen::VectorXcd;

cd expectation(const FockOperator& a, const FockVector& v);

}  // namespace phi4
