#include "phi4/quantum.hpp"

#include <algorithm>
#include <future>
#include <set>
#include <stdexcept>
#include <thread>

#include "phi4/ideal_gas.hpp"

namespace phi4 {

namespace {

// Dense density matrices beyond this are refused (memory guard).
constexpr Eigen::Index kMaxDense = 3000;

struct SectorEig {
  std::size_t begin = 0;
  Eigen::VectorXd evals;
  Eigen::MatrixXcd evecs;
};

Eigen::MatrixXcd dense_block(const SpMat& m, std::size_t begin, std::size_t width) {
  return Eigen::MatrixXcd(m.block(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(begin),
                                  static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(width)));
}

// Eigendecomposition of every total-number block, parallel over chunks of
// sectors. Results are keyed by sector, so the assembly is deterministic
// regardless of scheduling.
std::vector<SectorEig> sector_eigs(const FockOperator& h) {
  const FockBasis& basis = *h.basis;
  const int n_sectors = basis.n_max() + 1;
  std::vector<SectorEig> out(static_cast<std::size_t>(n_sectors));
  auto solve_range = [&](int lo, int hi) {
    for (int n = lo; n < hi; ++n) {
      std::size_t b = basis.sector_begin(n);
      std::size_t w = basis.sector_end(n) - b;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(dense_block(h.m, b, w));
      out[static_cast<std::size_t>(n)] = {b, es.eigenvalues(), es.eigenvectors()};
    }
  };
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (basis.dim() < 512 || hw == 1) {
    solve_range(0, n_sectors);
    return out;
  }
  int n_chunks = std::min<int>(n_sectors, static_cast<int>(2 * hw));
  std::vector<std::future<void>> futs;
  for (int c = 0; c < n_chunks; ++c) {
    int lo = n_sectors * c / n_chunks;
    int hi = n_sectors * (c + 1) / n_chunks;
    futs.push_back(std::async(std::launch::async, solve_range, lo, hi));
  }
  for (auto& f : futs) f.get();
  return out;
}

void require_same_basis(const QuantumState& a, const QuantumState& b, const char* who) {
  if (a.basis.get() != b.basis.get())
    throw std::invalid_argument(std::string(who) + ": states live on different bases");
}

double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

constexpr double kLogFloor = -745.0;  // log of the smallest positive double

double safe_log(double q) { return q > 0.0 ? std::max(std::log(q), kLogFloor) : kLogFloor; }

// sum_i p_i log p_i - sum_{ij} |<u_i, w_j>|^2 p_i log q_j for one block pair.
double kl_block(const Eigen::VectorXd& p, const Eigen::MatrixXcd& u, const Eigen::VectorXd& q,
                const Eigen::MatrixXcd& w) {
  Eigen::MatrixXd overlap2 = (u.adjoint() * w).cwiseAbs2();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    double pi = p(i);
    if (pi <= 0.0) continue;
    double cross = 0.0;
    for (Eigen::Index j = 0; j < q.size(); ++j) cross += overlap2(i, j) * safe_log(q(j));
    acc += xlogx(pi) - pi * cross;
  }
  return acc;
}

}  // namespace

std::string to_string(Centering c) { return c == Centering::desk ? "desk" : "paper"; }

QuantumState make_state(const BasisPtr& basis, Eigen::MatrixXcd rho, double lambda,
                        bool commutes_with_n) {
  if (rho.rows() != rho.cols() || rho.rows() != static_cast<Eigen::Index>(basis->dim()))
    throw std::invalid_argument("make_state: matrix size does not match the basis");
  QuantumState s;
  s.basis = basis;
  s.rho = std::move(rho);
  s.lambda = lambda;
  s.provenance = "constructed";
  s.commutes_with_n = commutes_with_n;
  return s;
}

StateDiagnostics check_state(const QuantumState& state) {
  StateDiagnostics d;
  d.trace_defect = std::abs(state.rho.trace() - cd(1.0, 0.0));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(state.rho, Eigen::EigenvaluesOnly);
  d.min_eigenvalue = es.eigenvalues().minCoeff();
  if (state.commutes_with_n) {
    const FockBasis& basis = *state.basis;
    for (int n = 0; n <= basis.n_max(); ++n) {
      std::size_t b = basis.sector_begin(n), e = basis.sector_end(n);
      for (std::size_t r = b; r < e; ++r)
        for (std::size_t c = 0; c < basis.dim(); ++c) {
          if (c >= b && c < e) continue;
          d.sector_leakage = std::max(
              d.sector_leakage,
              std::abs(state.rho(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))));
        }
    }
  }
  return d;
}

double top_sector_weight(const QuantumState& state) {
  const FockBasis& basis = *state.basis;
  std::size_t b = basis.sector_begin(basis.n_max()), e = basis.sector_end(basis.n_max());
  double w = 0.0;
  for (std::size_t i = b; i < e; ++i)
    w += state.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
  return w;
}

cd trace_op(const FockOperator& a, const QuantumState& state) {
  if (a.basis.get() != state.basis.get())
    throw std::invalid_argument("trace_op: operator and state bases differ");
  cd acc(0.0, 0.0);
  for (int c = 0; c < a.m.outerSize(); ++c)
    for (SpMat::InnerIterator it(a.m, c); it; ++it) acc += it.value() * state.rho(it.col(), it.row());
  return acc;
}

WResult build_W(const BasisPtr& basis, const Potential& pot, const InteractionSpec& spec,
                const WOptions& opt) {
  if (opt.lambda <= 0.0) throw std::invalid_argument("build_W: lambda must be positive");
  const int d = basis->d();
  const double lam = opt.lambda;
  const double vhat0 = pot.hat(Ivec{0, 0, 0});

  WResult out;
  if (opt.centering == Centering::desk) {
    KahanSum s;
    for (int j = 0; j < basis->M(); ++j) s.add(1.0 / basis->h(j));
    out.n0 = s.value() / lam;
    out.theta = spec.theta;
  } else {
    if (d != 3) throw std::invalid_argument("build_W: paper centering is d=3 only");
    DensityResult rho0 = rho0_density(lam, 3, opt.ideal_gas_K_sum);
    CountertermTable table = build_counterterm_table(pot, 3, opt.ideal_gas_K_sum, 40);
    ChemicalPotential cp = chemical_potential(lam, table, opt.m0, opt.ideal_gas_K_sum);
    out.n0 = pow_2pi(3) * rho0.rho0;
    out.theta = cp.theta_eps;
  }

  // Diagonal part: vhat(0) lambda^2 / (2 (2pi)^d) (N - N0)^2 - lambda theta (N - N0).
  std::vector<Eigen::Triplet<cd>> diag;
  diag.reserve(basis->dim());
  const double quad_coef = vhat0 * lam * lam / (2.0 * pow_2pi(d));
  for (std::size_t i = 0; i < basis->dim(); ++i) {
    double nc = static_cast<double>(basis->total(i)) - out.n0;
    double v = quad_coef * nc * nc - lam * out.theta * nc;
    if (v != 0.0)
      diag.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), cd(v, 0.0));
  }
  FockOperator w;
  w.basis = basis;
  w.m.resize(static_cast<Eigen::Index>(basis->dim()), static_cast<Eigen::Index>(basis->dim()));
  w.m.setFromTriplets(diag.begin(), diag.end());
  w.hermitian = true;
  w.number_conserving = true;

  // Nonzero mode differences representable inside the basis.
  std::set<std::int64_t> seen;
  std::vector<Ivec> diffs;
  for (int a = 0; a < basis->M(); ++a)
    for (int b = 0; b < basis->M(); ++b) {
      if (a == b) continue;
      Ivec k;
      for (int c = 0; c < 3; ++c)
        k[static_cast<std::size_t>(c)] = basis->mode(a)[static_cast<std::size_t>(c)] -
                                         basis->mode(b)[static_cast<std::size_t>(c)];
      if (seen.insert(pack_mode(k)).second) diffs.push_back(k);
    }

  KahanSum represented;
  for (const Ivec& k : diffs) {
    double vk = pot.hat(k);
    represented.add(vk);
    if (vk == 0.0) continue;
    ShiftSecondQuant sq = dGamma_shift(basis, k);
    out.max_shift_dropped = std::max(out.max_shift_dropped, sq.dropped_fraction);
    w = op_add(w, op_scale(cd(0.5 * lam * lam * vk, 0.0), op_abs2(sq.op)));
  }

  // Off-zero vhat mass over the ambient box, for the truncation report.
  KahanSum total;
  const int K = opt.mass_K_sum;
  Ivec k{0, 0, 0};
  auto sweep = [&](auto&& self, int axis) -> void {
    if (axis == d) {
      if (k != Ivec{0, 0, 0}) total.add(pot.hat(k));
      return;
    }
    for (int v = -K; v <= K; ++v) {
      k[static_cast<std::size_t>(axis)] = v;
      self(self, axis + 1);
    }
    k[static_cast<std::size_t>(axis)] = 0;
  };
  sweep(sweep, 0);
  out.vhat_dropped_fraction =
      total.value() > 0.0 ? std::max(0.0, 1.0 - represented.value() / total.value()) : 0.0;
  out.truncation_warning = out.vhat_dropped_fraction > opt.warn_tol;
  out.op = std::move(w);
  return out;
}

FockOperator free_hamiltonian(const BasisPtr& basis, double lambda) {
  std::vector<Eigen::Triplet<cd>> diag;
  diag.reserve(basis->dim());
  for (std::size_t i = 0; i < basis->dim(); ++i) {
    const std::vector<int>& occ = basis->occ(i);
    double e = 0.0;
    for (int j = 0; j < basis->M(); ++j) e += occ[static_cast<std::size_t>(j)] * basis->h(j);
    if (e != 0.0)
      diag.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i),
                        cd(lambda * e, 0.0));
  }
  FockOperator op;
  op.basis = basis;
  op.m.resize(static_cast<Eigen::Index>(basis->dim()), static_cast<Eigen::Index>(basis->dim()));
  op.m.setFromTriplets(diag.begin(), diag.end());
  op.hermitian = true;
  op.number_conserving = true;
  return op;
}

FockOperator hamiltonian(const BasisPtr& basis, const FockOperator& w, double lambda) {
  return op_add(free_hamiltonian(basis, lambda), w);
}

GibbsResult gibbs(const FockOperator& h, double lambda) {
  if (!h.hermitian) throw std::invalid_argument("gibbs: Hamiltonian must be flagged Hermitian");
  double defect = hermiticity_defect(h);
  if (defect > 1e-12 * std::max(1.0, op_max_abs(h)))
    throw std::invalid_argument("gibbs: Hamiltonian fails the Hermiticity check");
  const FockBasis& basis = *h.basis;
  const auto dim = static_cast<Eigen::Index>(basis.dim());
  if (dim > kMaxDense)
    throw std::invalid_argument("gibbs: basis too large for a dense density matrix");

  QuantumState state;
  state.basis = h.basis;
  state.lambda = lambda;
  state.provenance = "gibbs";
  state.rho = Eigen::MatrixXcd::Zero(dim, dim);
  double log_z = 0.0;

  if (h.number_conserving) {
    std::vector<SectorEig> eigs = sector_eigs(h);
    double e_min = eigs.front().evals.size() ? eigs.front().evals.minCoeff() : 0.0;
    for (const SectorEig& se : eigs)
      if (se.evals.size()) e_min = std::min(e_min, se.evals.minCoeff());
    KahanSum z;
    for (const SectorEig& se : eigs)
      for (Eigen::Index i = 0; i < se.evals.size(); ++i) z.add(std::exp(-(se.evals(i) - e_min)));
    log_z = -e_min + std::log(z.value());
    for (const SectorEig& se : eigs) {
      Eigen::VectorXcd w = (((-(se.evals.array() - e_min)).exp() / z.value()).matrix()).cast<cd>();
      auto b = static_cast<Eigen::Index>(se.begin);
      auto n = se.evals.size();
      state.rho.block(b, b, n, n) = se.evecs * w.asDiagonal() * se.evecs.adjoint();
    }
    state.commutes_with_n = true;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es{Eigen::MatrixXcd(h.m)};
    double e_min = es.eigenvalues().minCoeff();
    KahanSum z;
    for (Eigen::Index i = 0; i < dim; ++i) z.add(std::exp(-(es.eigenvalues()(i) - e_min)));
    log_z = -e_min + std::log(z.value());
    Eigen::VectorXcd w =
        (((-(es.eigenvalues().array() - e_min)).exp() / z.value()).matrix()).cast<cd>();
    state.rho = es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint();
    state.commutes_with_n = false;
  }
  state.log_partition = log_z;
  return {std::move(state), log_z};
}

std::vector<double> occupations(const QuantumState& state) {
  const FockBasis& basis = *state.basis;
  std::vector<double> out(static_cast<std::size_t>(basis.M()), 0.0);
  for (std::size_t i = 0; i < basis.dim(); ++i) {
    double p = state.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
    const std::vector<int>& occ = basis.occ(i);
    for (int j = 0; j < basis.M(); ++j) out[static_cast<std::size_t>(j)] += p * occ[static_cast<std::size_t>(j)];
  }
  return out;
}

namespace {

// Shared spectral pass for the correlation forms: eigenpairs of N_phi per
// sector with weights <v_i, rho v_i>.
struct NphiSpectrum {
  std::vector<double> nu;
  std::vector<double> weight;
};

NphiSpectrum nphi_spectrum(const QuantumState& state, const Eigen::VectorXcd& phi) {
  const FockBasis& basis = *state.basis;
  if (phi.size() != basis.M())
    throw std::invalid_argument("correlation: phi must have one coefficient per basis mode");
  if (phi.norm() == 0.0) throw std::invalid_argument("correlation: phi must be nonzero");
  FockOperator nphi = dGamma(state.basis, phi * phi.adjoint());
  std::vector<SectorEig> eigs = sector_eigs(nphi);
  NphiSpectrum sp;
  sp.nu.reserve(basis.dim());
  sp.weight.reserve(basis.dim());
  for (const SectorEig& se : eigs) {
    auto b = static_cast<Eigen::Index>(se.begin);
    auto n = se.evals.size();
    if (n == 0) continue;
    Eigen::MatrixXcd rho_block = state.rho.block(b, b, n, n);
    Eigen::MatrixXcd w = se.evecs.adjoint() * rho_block * se.evecs;
    for (Eigen::Index i = 0; i < n; ++i) {
      sp.nu.push_back(se.evals(i));
      sp.weight.push_back(w(i, i).real());
    }
  }
  return sp;
}

}  // namespace

CorrelationResult correlation_power(const QuantumState& state, const Eigen::VectorXcd& phi,
                                    int k) {
  if (k < 0) throw std::invalid_argument("correlation: power must be >= 0");
  NphiSpectrum sp = nphi_spectrum(state, phi);
  const double lam = state.lambda;
  KahanSum f_form, falling;
  for (std::size_t i = 0; i < sp.nu.size(); ++i) {
    f_form.add(std::pow(lam * sp.nu[i], k) * sp.weight[i]);
    double prod = 1.0;
    for (int j = 0; j < k; ++j) prod *= lam * (sp.nu[i] - j);
    falling.add(prod * sp.weight[i]);
  }
  return {f_form.value(), falling.value()};
}

double correlation_f(const QuantumState& state, const Eigen::VectorXcd& phi,
                     const std::function<double(double)>& f) {
  NphiSpectrum sp = nphi_spectrum(state, phi);
  KahanSum acc;
  for (std::size_t i = 0; i < sp.nu.size(); ++i) acc.add(f(state.lambda * sp.nu[i]) * sp.weight[i]);
  return acc.value();
}

double relative_entropy(const QuantumState& gamma, const QuantumState& gamma_prime) {
  require_same_basis(gamma, gamma_prime, "relative_entropy");
  const FockBasis& basis = *gamma.basis;
  KahanSum acc;
  if (gamma.commutes_with_n && gamma_prime.commutes_with_n) {
    for (int n = 0; n <= basis.n_max(); ++n) {
      auto b = static_cast<Eigen::Index>(basis.sector_begin(n));
      auto w = static_cast<Eigen::Index>(basis.sector_end(n)) - b;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ep(gamma.rho.block(b, b, w, w));
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eq(gamma_prime.rho.block(b, b, w, w));
      acc.add(kl_block(ep.eigenvalues(), ep.eigenvectors(), eq.eigenvalues(), eq.eigenvectors()));
    }
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ep(gamma.rho);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eq(gamma_prime.rho);
    acc.add(kl_block(ep.eigenvalues(), ep.eigenvectors(), eq.eigenvalues(), eq.eigenvectors()));
  }
  return acc.value();
}

double variational_gap(const QuantumState& gamma_test, const QuantumState& gamma0,
                       const FockOperator& w, double log_z_lambda, double log_z0) {
  require_same_basis(gamma_test, gamma0, "variational_gap");
  double energy = trace_op(w, gamma_test).real();
  return relative_entropy(gamma_test, gamma0) + energy + log_z_lambda - log_z0;
}

int adaptive_n_max(const std::function<GibbsResult(int)>& solve_at, double tol, int n_start,
                   int n_limit) {
  int n = std::max(1, n_start);
  while (n <= n_limit) {
    GibbsResult g = solve_at(n);
    if (top_sector_weight(g.state) < tol) return n;
    n = std::max(n + 8, n + n / 2);
  }
  throw std::runtime_error("adaptive_n_max: cap exceeded the search limit");
}

double thermal_occupation_truncated(double lambda, double h2, int n_max) {
  if (lambda <= 0.0 || h2 <= 0.0) throw std::invalid_argument("thermal occupation: need lambda, h > 0");
  if (n_max < 0) throw std::invalid_argument("thermal occupation: n_max must be >= 0");
  double q = std::exp(-lambda * h2);
  double qn1 = std::pow(q, n_max + 1);
  return q / (1.0 - q) - (n_max + 1) * qn1 / (1.0 - qn1);
}

}  // namespace phi4
