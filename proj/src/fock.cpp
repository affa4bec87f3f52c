#include "phi4/fock.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace phi4 {

namespace {

constexpr double kFlagTol = 1e-13;
// Basis enumeration budget; dense state assembly has its own guard in gibbs.
constexpr std::size_t kMaxFockDim = 2000000;

std::string occ_key(const std::vector<int>& occ) {
  return std::string(reinterpret_cast<const char*>(occ.data()), occ.size() * sizeof(int));
}

void check_same_basis(const FockOperator& a, const FockOperator& b, const char* who) {
  if (a.basis.get() != b.basis.get())
    throw std::invalid_argument(std::string(who) + ": operators live on different bases");
}

using Triplets = std::vector<Eigen::Triplet<cd>>;

FockOperator from_triplets(const BasisPtr& basis, Triplets& t, bool hermitian, bool conserving) {
  FockOperator op;
  op.basis = basis;
  const auto n = static_cast<Eigen::Index>(basis->dim());
  op.m.resize(n, n);
  op.m.setFromTriplets(t.begin(), t.end());
  op.m.prune(0.0, 0.0);
  op.hermitian = hermitian;
  op.number_conserving = conserving;
  return op;
}

}  // namespace

FockBasis::FockBasis(LatticePtr lat, std::vector<Ivec> modes, int n_max)
    : lat_(std::move(lat)), modes_(std::move(modes)), n_max_(n_max) {
  if (!lat_) throw std::invalid_argument("fock basis: null lattice");
  if (modes_.empty()) throw std::invalid_argument("fock basis: empty mode set");
  if (n_max_ < 0) throw std::invalid_argument("fock basis: n_max must be >= 0");
  h_.reserve(modes_.size());
  std::unordered_map<std::int64_t, int> seen;
  for (const Ivec& k : modes_) {
    int idx = lat_->find(k);
    if (idx < 0) throw std::invalid_argument("fock basis: mode not in the lattice");
    if (!seen.emplace(pack_mode(k), 1).second)
      throw std::invalid_argument("fock basis: duplicate mode");
    h_.push_back(lat_->h(static_cast<std::size_t>(idx)));
  }

  // Occupation count: dim = sum_{n<=n_max} C(n+M-1, M-1), guarded.
  const int M = static_cast<int>(modes_.size());
  double dim_estimate = 0.0, sector = 1.0;  // C(M-1, M-1) = 1 at n=0
  for (int n = 0; n <= n_max_; ++n) {
    dim_estimate += sector;
    if (dim_estimate > static_cast<double>(kMaxFockDim))
      throw std::invalid_argument("fock basis: dimension beyond the in-memory budget");
    sector *= static_cast<double>(n + M) / static_cast<double>(n + 1);
  }

  occ_.reserve(static_cast<std::size_t>(dim_estimate));
  sector_begin_.assign(1, 0);
  std::vector<int> cur(static_cast<std::size_t>(M), 0);
  // Lexicographic weak compositions of n into M parts, per sector.
  auto enumerate = [&](auto&& self, int slot, int remaining) -> void {
    if (slot == M - 1) {
      cur[static_cast<std::size_t>(slot)] = remaining;
      occ_.push_back(cur);
      return;
    }
    for (int v = remaining; v >= 0; --v) {
      cur[static_cast<std::size_t>(slot)] = v;
      self(self, slot + 1, remaining - v);
    }
  };
  for (int n = 0; n <= n_max_; ++n) {
    enumerate(enumerate, 0, n);
    sector_begin_.push_back(occ_.size());
  }

  total_.resize(occ_.size());
  index_.reserve(occ_.size() * 2);
  for (std::size_t i = 0; i < occ_.size(); ++i) {
    int t = 0;
    for (int v : occ_[i]) t += v;
    total_[i] = t;
    index_[occ_key(occ_[i])] = static_cast<std::ptrdiff_t>(i);
  }
}

std::ptrdiff_t FockBasis::find(const std::vector<int>& occ) const {
  if (occ.size() != modes_.size()) return -1;
  auto it = index_.find(occ_key(occ));
  return it == index_.end() ? -1 : it->second;
}

int FockBasis::mode_slot(const Ivec& k) const {
  for (std::size_t j = 0; j < modes_.size(); ++j)
    if (modes_[j] == k) return static_cast<int>(j);
  return -1;
}

BasisPtr make_fock_basis(LatticePtr lat, std::vector<Ivec> modes, int n_max) {
  return std::make_shared<const FockBasis>(std::move(lat), std::move(modes), n_max);
}

BasisPtr make_fock_basis(LatticePtr lat, int n_max) {
  std::vector<Ivec> modes = lat->modes();
  return std::make_shared<const FockBasis>(std::move(lat), std::move(modes), n_max);
}

FockOperator ladder(const BasisPtr& basis, const Ivec& k, LadderKind kind) {
  int slot = basis->mode_slot(k);
  if (slot < 0) throw std::invalid_argument("ladder: mode not in basis");
  const auto s = static_cast<std::size_t>(slot);
  Triplets t;
  t.reserve(basis->dim());
  std::vector<int> target;
  for (std::size_t i = 0; i < basis->dim(); ++i) {
    const std::vector<int>& occ = basis->occ(i);
    if (kind == LadderKind::create) {
      if (basis->total(i) + 1 > basis->n_max()) continue;  // cap truncation
      target = occ;
      target[s] += 1;
      std::ptrdiff_t j = basis->find(target);
      t.emplace_back(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i),
                     cd(std::sqrt(static_cast<double>(occ[s] + 1)), 0.0));
    } else {
      if (occ[s] == 0) continue;
      target = occ;
      target[s] -= 1;
      std::ptrdiff_t j = basis->find(target);
      t.emplace_back(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i),
                     cd(std::sqrt(static_cast<double>(occ[s])), 0.0));
    }
  }
  return from_triplets(basis, t, false, false);
}

FockOperator number_operator(const BasisPtr& basis) {
  Triplets t;
  t.reserve(basis->dim());
  for (std::size_t i = 0; i < basis->dim(); ++i) {
    double n = static_cast<double>(basis->total(i));
    if (n != 0.0)
      t.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), cd(n, 0.0));
  }
  return from_triplets(basis, t, true, true);
}

FockOperator dGamma(const BasisPtr& basis, const Eigen::MatrixXcd& one_body) {
  const int M = basis->M();
  if (one_body.rows() != M || one_body.cols() != M)
    throw std::invalid_argument("dGamma: one-body matrix must be M x M");
  double scale = std::max(1.0, one_body.cwiseAbs().maxCoeff());
  if ((one_body - one_body.adjoint()).cwiseAbs().maxCoeff() > kFlagTol * scale)
    throw std::invalid_argument("dGamma: one-body matrix must be Hermitian");

  Triplets t;
  std::vector<int> target;
  for (std::size_t i = 0; i < basis->dim(); ++i) {
    const std::vector<int>& occ = basis->occ(i);
    for (int j = 0; j < M; ++j) {
      for (int k = 0; k < M; ++k) {
        cd a = one_body(j, k);
        if (a == cd(0.0, 0.0)) continue;
        if (j == k) {
          if (occ[static_cast<std::size_t>(k)] == 0) continue;
          t.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i),
                         a * static_cast<double>(occ[static_cast<std::size_t>(k)]));
        } else {
          int nk = occ[static_cast<std::size_t>(k)];
          if (nk == 0) continue;
          int nj = occ[static_cast<std::size_t>(j)];
          target = occ;
          target[static_cast<std::size_t>(k)] -= 1;
          target[static_cast<std::size_t>(j)] += 1;
          std::ptrdiff_t row = basis->find(target);
          double amp = std::sqrt(static_cast<double>(nk) * (nj + 1));
          t.emplace_back(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(i), a * amp);
        }
      }
    }
  }
  return from_triplets(basis, t, true, true);
}

ShiftSecondQuant dGamma_shift(const BasisPtr& basis, const Ivec& k) {
  const int M = basis->M();
  const double scale = 1.0 / std::sqrt(pow_2pi(basis->d()));
  // Map slot q -> slot of q + k, -1 when the target leaves the basis.
  std::vector<int> shift_to(static_cast<std::size_t>(M), -1);
  int dropped = 0;
  for (int q = 0; q < M; ++q) {
    Ivec target = basis->mode(q);
    for (int c = 0; c < 3; ++c) target[static_cast<std::size_t>(c)] += k[static_cast<std::size_t>(c)];
    shift_to[static_cast<std::size_t>(q)] = basis->mode_slot(target);
    if (shift_to[static_cast<std::size_t>(q)] < 0) ++dropped;
  }

  Triplets t;
  std::vector<int> target;
  for (std::size_t i = 0; i < basis->dim(); ++i) {
    const std::vector<int>& occ = basis->occ(i);
    for (int q = 0; q < M; ++q) {
      int nq = occ[static_cast<std::size_t>(q)];
      if (nq == 0) continue;
      int r = shift_to[static_cast<std::size_t>(q)];
      if (r < 0) continue;
      if (r == q) {
        t.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i),
                       cd(scale * nq, 0.0));
      } else {
        int nr = occ[static_cast<std::size_t>(r)];
        target = occ;
        target[static_cast<std::size_t>(q)] -= 1;
        target[static_cast<std::size_t>(r)] += 1;
        std::ptrdiff_t row = basis->find(target);
        double amp = scale * std::sqrt(static_cast<double>(nq) * (nr + 1));
        t.emplace_back(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(i),
                       cd(amp, 0.0));
      }
    }
  }
  bool is_diag = (k == Ivec{0, 0, 0});
  ShiftSecondQuant out;
  out.op = from_triplets(basis, t, is_diag, true);
  out.dropped_fraction = static_cast<double>(dropped) / static_cast<double>(M);
  return out;
}

FockOperator op_identity(const BasisPtr& basis) {
  FockOperator op;
  op.basis = basis;
  const auto n = static_cast<Eigen::Index>(basis->dim());
  op.m.resize(n, n);
  op.m.setIdentity();
  op.hermitian = true;
  op.number_conserving = true;
  return op;
}

FockOperator op_add(const FockOperator& a, const FockOperator& b) {
  check_same_basis(a, b, "op_add");
  FockOperator op;
  op.basis = a.basis;
  op.m = a.m + b.m;
  op.m.prune(0.0, 0.0);
  op.hermitian = a.hermitian && b.hermitian;
  op.number_conserving = a.number_conserving && b.number_conserving;
  return op;
}

FockOperator op_scale(cd s, const FockOperator& a) {
  FockOperator op;
  op.basis = a.basis;
  op.m = s * a.m;
  op.hermitian = a.hermitian && s.imag() == 0.0;
  op.number_conserving = a.number_conserving;
  return op;
}

FockOperator op_mul(const FockOperator& a, const FockOperator& b) {
  check_same_basis(a, b, "op_mul");
  FockOperator op;
  op.basis = a.basis;
  op.m = (a.m * b.m).pruned();
  op.hermitian = false;
  op.number_conserving = a.number_conserving && b.number_conserving;
  return op;
}

FockOperator op_adjoint(const FockOperator& a) {
  FockOperator op;
  op.basis = a.basis;
  op.m = a.m.adjoint();
  op.hermitian = a.hermitian;
  op.number_conserving = a.number_conserving;
  return op;
}

FockOperator op_commutator(const FockOperator& a, const FockOperator& b) {
  check_same_basis(a, b, "op_commutator");
  FockOperator op;
  op.basis = a.basis;
  op.m = (a.m * b.m - b.m * a.m).pruned();
  op.hermitian = false;
  op.number_conserving = a.number_conserving && b.number_conserving;
  return op;
}

FockOperator op_abs2(const FockOperator& a) {
  FockOperator op;
  op.basis = a.basis;
  op.m = (SpMat(a.m.adjoint()) * a.m).pruned();
  op.hermitian = true;
  op.number_conserving = a.number_conserving;
  return op;
}

double op_max_abs(const FockOperator& a) {
  double m = 0.0;
  for (int c = 0; c < a.m.outerSize(); ++c)
    for (SpMat::InnerIterator it(a.m, c); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

double hermiticity_defect(const FockOperator& a) {
  SpMat diff = a.m - SpMat(a.m.adjoint());
  double m = 0.0;
  for (int c = 0; c < diff.outerSize(); ++c)
    for (SpMat::InnerIterator it(diff, c); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

double sector_leakage(const FockOperator& a) {
  double m = 0.0;
  for (int c = 0; c < a.m.outerSize(); ++c)
    for (SpMat::InnerIterator it(a.m, c); it; ++it)
      if (a.basis->total(static_cast<std::size_t>(it.row())) !=
          a.basis->total(static_cast<std::size_t>(it.col())))
        m = std::max(m, std::abs(it.value()));
  return m;
}

cd expectation(const FockOperator& a, const FockVector& v) {
  if (v.size() != static_cast<Eigen::Index>(a.basis->dim()))
    throw std::invalid_argument("expectation: vector size mismatch");
  return v.dot(a.m * v);
}

}  // namespace phi4
