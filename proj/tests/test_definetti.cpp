#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "phi4/common.hpp"
#include "phi4/definetti.hpp"
#include "phi4/fock.hpp"
#include "phi4/lattice.hpp"
#include "phi4/potential.hpp"
#include "phi4/quantum.hpp"

using namespace phi4;

namespace {

constexpr Ivec kZero{0, 0, 0};
constexpr Ivec kOne{1, 0, 0};
constexpr Ivec kMinus{-1, 0, 0};

double max_diff(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

double trace_norm_herm(const Eigen::MatrixXcd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum();
}

QuantumState wishart_dense(const BasisPtr& basis, double lambda, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(basis->dim());
  Eigen::MatrixXcd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = rng.cgauss();
  Eigen::MatrixXcd rho = g * g.adjoint();
  rho /= rho.trace().real();
  return make_state(basis, std::move(rho), lambda, false);
}

QuantumState wishart_conserving(const BasisPtr& basis, double lambda, Rng& rng) {
  const auto dim = static_cast<Eigen::Index>(basis->dim());
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim, dim);
  for (int n = 0; n <= basis->n_max(); ++n) {
    auto b = static_cast<Eigen::Index>(basis->sector_begin(n));
    auto w = static_cast<Eigen::Index>(basis->sector_end(n)) - b;
    Eigen::MatrixXcd g(w, w);
    for (Eigen::Index i = 0; i < w; ++i)
      for (Eigen::Index j = 0; j < w; ++j) g(i, j) = rng.cgauss();
    rho.block(b, b, w, w) = (0.2 + rng.uniform()) * (g * g.adjoint());
  }
  rho /= rho.trace().real();
  return make_state(basis, std::move(rho), lambda, true);
}

QuantumState free_gibbs_state(const BasisPtr& basis, double lambda) {
  return gibbs(free_hamiltonian(basis, lambda), lambda).state;
}

QuantumState number_state(const BasisPtr& basis, const std::vector<int>& occ, double lambda) {
  auto idx = basis->find(occ);
  REQUIRE(idx >= 0);
  const auto dim = static_cast<Eigen::Index>(basis->dim());
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim, dim);
  rho(idx, idx) = 1.0;
  return make_state(basis, std::move(rho), lambda, true);
}

double slice_real(const Eigen::MatrixXcd& a, const BasisPtr& basis, int k,
                  const Eigen::VectorXcd& phi) {
  Eigen::VectorXcd o = symmetric_power_overlap(basis, k, phi);
  return o.dot(a * o).real();
}

// Row of the occupation with a single particle in the given slot, relative to
// the start of sector 1.
Eigen::Index one_particle_row(const FockBasis& basis, int slot) {
  for (std::size_t i = basis.sector_begin(1); i < basis.sector_end(1); ++i)
    if (basis.occ(i)[static_cast<std::size_t>(slot)] == 1)
      return static_cast<Eigen::Index>(i - basis.sector_begin(1));
  REQUIRE(false);
  return -1;
}

// Normalized symmetric occupation vector inside the k-fold tensor space of
// m_modes modes, components indexed lexicographically by mode sequence.
Eigen::VectorXcd symmetric_tensor_vector(const std::vector<int>& occ, int k, int m_modes) {
  Eigen::Index dim = 1;
  for (int i = 0; i < k; ++i) dim *= m_modes;
  Eigen::VectorXcd vec = Eigen::VectorXcd::Zero(dim);
  std::vector<int> seq(static_cast<std::size_t>(k), 0);
  double occ_fact = 1.0, k_fact = 1.0;
  for (int n : occ)
    for (int i = 2; i <= n; ++i) occ_fact *= i;
  for (int i = 2; i <= k; ++i) k_fact *= i;
  while (true) {
    std::vector<int> type(static_cast<std::size_t>(m_modes), 0);
    Eigen::Index flat = 0;
    for (int pos = 0; pos < k; ++pos) {
      ++type[static_cast<std::size_t>(seq[static_cast<std::size_t>(pos)])];
      flat = flat * m_modes + seq[static_cast<std::size_t>(pos)];
    }
    if (type == occ) vec(flat) += 1.0;
    int pos = k - 1;
    while (pos >= 0 && seq[static_cast<std::size_t>(pos)] == m_modes - 1) {
      seq[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++seq[static_cast<std::size_t>(pos)];
  }
  return std::sqrt(occ_fact / k_fact) * vec;
}

Eigen::MatrixXcd kron(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  Eigen::MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace

TEST_CASE("partial trace keeps product factors, occupations and the trace") {
  LatticePtr lat = build_lattice(1, 1);
  BasisPtr full = make_fock_basis(lat, 7);
  REQUIRE(full->M() == 3);
  Rng rng(91);

  SUBCASE("product state splits into its factors") {
    BasisPtr basis_a = make_fock_basis(lat, {kZero}, 7);
    BasisPtr basis_b = make_fock_basis(lat, {kMinus, kOne}, 7);

    auto support_wishart = [&](const BasisPtr& basis, int max_total) {
      const auto dim = static_cast<Eigen::Index>(basis->dim());
      Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(dim, dim);
      for (Eigen::Index i = 0; i < dim; ++i) {
        if (basis->total(static_cast<std::size_t>(i)) > max_total) continue;
        for (Eigen::Index j = 0; j < dim; ++j)
          if (basis->total(static_cast<std::size_t>(j)) <= max_total) g(i, j) = rng.cgauss();
      }
      Eigen::MatrixXcd rho = g * g.adjoint();
      rho /= rho.trace().real();
      return rho;
    };
    Eigen::MatrixXcd rho_a = support_wishart(basis_a, 3);
    Eigen::MatrixXcd rho_b = support_wishart(basis_b, 4);

    int slot_a = full->mode_slot(kZero);
    int slot_bm = full->mode_slot(kMinus);
    int slot_bp = full->mode_slot(kOne);
    const auto dim = static_cast<Eigen::Index>(full->dim());
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim, dim);
    auto split = [&](std::size_t i, std::ptrdiff_t& ia, std::ptrdiff_t& ib) {
      const std::vector<int>& occ = full->occ(i);
      ia = basis_a->find({occ[static_cast<std::size_t>(slot_a)]});
      ib = basis_b->find(
          {occ[static_cast<std::size_t>(slot_bm)], occ[static_cast<std::size_t>(slot_bp)]});
    };
    for (std::size_t i = 0; i < full->dim(); ++i) {
      std::ptrdiff_t ia, ib;
      split(i, ia, ib);
      for (std::size_t j = 0; j < full->dim(); ++j) {
        std::ptrdiff_t ja, jb;
        split(j, ja, jb);
        rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            rho_a(ia, ja) * rho_b(ib, jb);
      }
    }
    QuantumState st = make_state(full, std::move(rho), 0.3, false);

    QuantumState loc_a = localize(st, {kZero});
    CHECK(max_diff(loc_a.rho, rho_a) <= 1e-13);
    CHECK(loc_a.lambda == 0.3);
    CHECK(loc_a.provenance == "localized");
    CHECK(std::abs(loc_a.rho.trace().real() - 1.0) <= 1e-13);

    QuantumState loc_b = localize(st, {kMinus, kOne});
    CHECK(max_diff(loc_b.rho, rho_b) <= 1e-13);
    CHECK(loc_b.basis->mode(0) == kMinus);
    CHECK(loc_b.basis->mode(1) == kOne);

    std::vector<double> occ_full = occupations(st);
    std::vector<double> occ_loc = occupations(loc_b);
    CHECK(std::abs(occ_full[static_cast<std::size_t>(slot_bm)] - occ_loc[0]) <= 1e-12);
    CHECK(std::abs(occ_full[static_cast<std::size_t>(slot_bp)] - occ_loc[1]) <= 1e-12);
  }

  SUBCASE("keeping every mode reproduces the state bitwise") {
    QuantumState st = wishart_dense(full, 0.4, rng);
    QuantumState loc = localize(st, full->modes());
    CHECK(max_diff(loc.rho, st.rho) == 0.0);
  }

  SUBCASE("number conservation survives the partial trace") {
    QuantumState st = wishart_conserving(full, 0.4, rng);
    QuantumState loc = localize(st, {kZero, kOne});
    CHECK(loc.commutes_with_n);
    StateDiagnostics diag = check_state(loc);
    CHECK(diag.sector_leakage == 0.0);
    CHECK(diag.trace_defect <= 1e-12);
    CHECK(diag.min_eigenvalue >= -1e-12);
  }

  SUBCASE("bad mode lists are rejected") {
    QuantumState st = wishart_dense(full, 0.4, rng);
    CHECK_THROWS_AS(localize(st, std::vector<Ivec>{}), std::invalid_argument);
    CHECK_THROWS_AS(localize(st, {kZero, kZero}), std::invalid_argument);
    CHECK_THROWS_AS(localize(st, {Ivec{2, 0, 0}}), std::invalid_argument);
    BasisPtr short_cap = make_fock_basis(lat, {kZero}, 5);
    CHECK_THROWS_AS(localize(st, short_cap), std::invalid_argument);
  }
}

TEST_CASE("reduced density matrices agree with ladder and spectral oracles") {
  LatticePtr lat = build_lattice(1, 1);
  Rng rng(137);

  SUBCASE("single-mode number state gives binomial coefficients") {
    BasisPtr basis = make_fock_basis(lat, {kZero}, 9);
    QuantumState st = number_state(basis, {5}, 0.3);
    const double expected[] = {5.0, 10.0, 10.0};
    for (int k = 1; k <= 3; ++k) {
      Eigen::MatrixXcd g = reduced_density(st, k);
      REQUIRE(g.rows() == 1);
      CHECK(std::abs(g(0, 0).real() - expected[k - 1]) <= 1e-12 * expected[k - 1]);
      CHECK(std::abs(g(0, 0).imag()) <= 1e-14);
    }
    CHECK(std::abs(reduced_density(st, 0)(0, 0).real() - 1.0) <= 1e-14);
  }

  SUBCASE("thermal falling factorials match the spectral route") {
    BasisPtr basis = make_fock_basis(lat, {kZero}, 30);
    const double lambda = 0.5;
    QuantumState st = free_gibbs_state(basis, lambda);
    Eigen::VectorXcd phi(1);
    phi << cd{1.0, 0.0};
    double k_fact = 1.0;
    for (int k = 1; k <= 3; ++k) {
      k_fact *= k;
      double via_reduced =
          k_fact * std::pow(lambda, k) * reduced_density(st, k)(0, 0).real();
      double via_spectral = correlation_power(st, phi, k).falling_factorial;
      CHECK(std::abs(via_reduced - via_spectral) <= 1e-11 * std::max(1.0, via_spectral));
    }
  }

  SUBCASE("one-body entries equal ladder traces, any state") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 6);
    for (QuantumState st : {wishart_conserving(basis, 0.4, rng), wishart_dense(basis, 0.4, rng)}) {
      Eigen::MatrixXcd g1 = reduced_density(st, 1);
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          FockOperator op = op_mul(ladder(basis, basis->mode(a), LadderKind::create),
                                   ladder(basis, basis->mode(b), LadderKind::annihilate));
          cd expected = trace_op(op, st);
          cd got = g1(one_particle_row(*basis, b), one_particle_row(*basis, a));
          CHECK(std::abs(got - expected) <= 1e-12);
        }
      }
    }
  }

  SUBCASE("trace identity against falling moments of the total number") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 8);
    for (QuantumState st : {wishart_conserving(basis, 0.4, rng), wishart_dense(basis, 0.4, rng)}) {
      double k_fact = 1.0;
      for (int k = 1; k <= 3; ++k) {
        k_fact *= k;
        Eigen::MatrixXcd g = reduced_density(st, k);
        CHECK(max_diff(g, g.adjoint()) <= 1e-13);
        double lhs = k_fact * g.trace().real();
        double rhs = 0.0;
        for (std::size_t i = 0; i < basis->dim(); ++i) {
          double f = 1.0;
          for (int t = 0; t < k; ++t) f *= static_cast<double>(basis->total(i) - t);
          rhs += st.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real() * f;
        }
        CHECK(std::abs(lhs - rhs) <= 1e-11 * std::max(1.0, std::abs(rhs)));
      }
    }
  }

  SUBCASE("vacuum has empty reduced matrices and bad orders throw") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 4);
    QuantumState vac = number_state(basis, {0, 0}, 0.3);
    CHECK(reduced_density(vac, 1).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(reduced_density(vac, 5), std::invalid_argument);
    CHECK_THROWS_AS(reduced_density(vac, -1), std::invalid_argument);
  }
}

TEST_CASE("symmetric embedding matches the explicit tensor computation") {
  LatticePtr lat = build_lattice(1, 1);
  BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 4);
  Rng rng(53);

  auto occupation_list = [&](int k) {
    std::vector<std::vector<int>> occs;
    for (std::size_t i = basis->sector_begin(k); i < basis->sector_end(k); ++i)
      occs.push_back(basis->occ(i));
    return occs;
  };

  auto random_hermitian = [&](int n) {
    Eigen::MatrixXcd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = rng.cgauss();
    return Eigen::MatrixXcd((a + a.adjoint()) / 2.0);
  };

  SUBCASE("lower block acts on the first factors, identity on the rest") {
    for (auto [l, k] : {std::pair{1, 2}, std::pair{2, 3}, std::pair{1, 3}}) {
      const auto l_occs = occupation_list(l);
      const auto k_occs = occupation_list(k);
      Eigen::MatrixXcd a = random_hermitian(static_cast<int>(l_occs.size()));

      // A as an operator on the l-fold tensor space, then tensored with the
      // identity and sandwiched between symmetric occupation vectors.
      Eigen::Index l_dim = 1;
      for (int i = 0; i < l; ++i) l_dim *= 2;
      Eigen::MatrixXcd a_tensor = Eigen::MatrixXcd::Zero(l_dim, l_dim);
      for (std::size_t p = 0; p < l_occs.size(); ++p)
        for (std::size_t q = 0; q < l_occs.size(); ++q)
          a_tensor += a(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) *
                      symmetric_tensor_vector(l_occs[p], l, 2) *
                      symmetric_tensor_vector(l_occs[q], l, 2).adjoint();
      Eigen::Index rest_dim = 1;
      for (int i = 0; i < k - l; ++i) rest_dim *= 2;
      Eigen::MatrixXcd lifted =
          kron(a_tensor, Eigen::MatrixXcd::Identity(rest_dim, rest_dim));

      Eigen::MatrixXcd expected(k_occs.size(), k_occs.size());
      for (std::size_t p = 0; p < k_occs.size(); ++p)
        for (std::size_t q = 0; q < k_occs.size(); ++q)
          expected(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) =
              symmetric_tensor_vector(k_occs[p], k, 2).dot(
                  lifted * symmetric_tensor_vector(k_occs[q], k, 2));

      Eigen::MatrixXcd got = symmetric_embed(basis, a, l, k);
      CHECK(max_diff(got, expected) <= 1e-13);
    }
  }

  SUBCASE("scalar bottom block lifts to a multiple of the identity") {
    Eigen::MatrixXcd c(1, 1);
    c(0, 0) = cd{0.7, 0.0};
    for (int k = 1; k <= 3; ++k) {
      const auto n = static_cast<Eigen::Index>(occupation_list(k).size());
      Eigen::MatrixXcd want = 0.7 * Eigen::MatrixXcd::Identity(n, n);
      CHECK(max_diff(symmetric_embed(basis, c, 0, k), want) <= 1e-13);
    }
  }

  SUBCASE("bad block shapes and orders throw") {
    Eigen::MatrixXcd wrong = Eigen::MatrixXcd::Zero(3, 3);
    CHECK_THROWS_AS(symmetric_embed(basis, wrong, 1, 2), std::invalid_argument);
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Identity(2, 2);
    CHECK_THROWS_AS(symmetric_embed(basis, a, 2, 2), std::invalid_argument);
    CHECK_THROWS_AS(symmetric_embed(basis, a, 1, 5), std::invalid_argument);
  }
}

TEST_CASE("moment identity holds in closed form, under quadrature and within its bound") {
  LatticePtr lat = build_lattice(1, 1);
  Rng rng(811);

  SUBCASE("vacuum first moment is the scaled identity") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 6);
    const double lambda = 0.45;
    QuantumState vac = number_state(basis, {0, 0}, lambda);
    MomentIdentity mi = definetti_moment(vac, basis->modes(), 1);
    Eigen::MatrixXcd want = lambda * Eigen::MatrixXcd::Identity(2, 2);
    CHECK(max_diff(mi.rhs, want) <= 1e-15);
    CHECK(mi.main_term.cwiseAbs().maxCoeff() == 0.0);
    CHECK(std::abs(mi.error_bound - 2.0 * lambda) <= 1e-15);
  }

  SUBCASE("single-mode number states match the rising factorial, algebra and quadrature") {
    BasisPtr basis = make_fock_basis(lat, {kZero}, 8);
    const double lambda = 0.37;
    for (int n = 0; n <= 4; ++n) {
      QuantumState st = number_state(basis, {n}, lambda);
      for (int k = 1; k <= 3; ++k) {
        double expected = std::pow(lambda, k);
        for (int i = 1; i <= k; ++i) expected *= static_cast<double>(n + i);
        MomentIdentity mi = definetti_moment(st, basis->modes(), k);
        REQUIRE(mi.rhs.rows() == 1);
        CHECK(std::abs(mi.rhs(0, 0).real() - expected) <= 1e-12 * expected);
        LowerSymbol sym = lower_symbol(st, basis->modes());
        Eigen::MatrixXcd quad = symbol_moment_quadrature(sym, k, basis->n_max() + k, 1);
        CHECK(std::abs(quad(0, 0).real() - expected) <= 1e-10 * expected);
      }
    }
  }

  SUBCASE("thermal first moment shifts the occupations by one") {
    LatticePtr lat2 = build_lattice(1, 1);
    BasisPtr basis = make_fock_basis(lat2, {kZero, kOne}, 30);
    const double lambda = 0.6;
    QuantumState st = free_gibbs_state(basis, lambda);
    MomentIdentity mi = definetti_moment(st, basis->modes(), 1);
    Eigen::MatrixXcd want =
        lambda * (reduced_density(st, 1) + Eigen::MatrixXcd::Identity(2, 2));
    CHECK(max_diff(mi.rhs, want) <= 1e-12);
    std::vector<double> occ = occupations(st);
    // Exact oracle: Boltzmann sum over the shared-cap basis. The single-mode
    // truncated closed form does not apply, the cap couples the modes.
    for (int j = 0; j < 2; ++j) {
      Eigen::Index r = one_particle_row(*basis, j);
      CHECK(std::abs(mi.rhs(r, r).real() - lambda * (occ[static_cast<std::size_t>(j)] + 1.0)) <=
            1e-10);
      KahanSum z, num;
      for (std::size_t i = 0; i < basis->dim(); ++i) {
        const std::vector<int>& o = basis->occ(i);
        double e = 0.0;
        for (int l = 0; l < 2; ++l) e += basis->h(l) * o[static_cast<std::size_t>(l)];
        double boltz = std::exp(-lambda * e);
        z.add(boltz);
        num.add(boltz * o[static_cast<std::size_t>(j)]);
      }
      CHECK(std::abs(occ[static_cast<std::size_t>(j)] - num.value() / z.value()) <= 1e-11);
    }
  }

  SUBCASE("two-mode quadrature reproduces the algebraic matrix") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 8);
    const double lambda = 0.7;
    QuantumState st = wishart_conserving(basis, lambda, rng);
    for (int k = 1; k <= 3; ++k) {
      MomentIdentity mi = definetti_moment(st, basis->modes(), k);
      LowerSymbol sym = lower_symbol(st, basis->modes());
      Eigen::MatrixXcd quad = symbol_moment_quadrature(sym, k, 16, 2 * (8 + k) + 3);
      double scale = std::max(1.0, mi.rhs.cwiseAbs().maxCoeff());
      CHECK(max_diff(quad, mi.rhs) <= 1e-9 * scale);
    }

    QuantumState dense_st = wishart_dense(make_fock_basis(lat, {kZero, kOne}, 5), lambda, rng);
    for (int k = 1; k <= 2; ++k) {
      MomentIdentity mi = definetti_moment(dense_st, dense_st.basis->modes(), k);
      LowerSymbol sym = lower_symbol(dense_st, dense_st.basis->modes());
      Eigen::MatrixXcd quad = symbol_moment_quadrature(sym, k, 10, 2 * (5 + k) + 3);
      double scale = std::max(1.0, mi.rhs.cwiseAbs().maxCoeff());
      CHECK(max_diff(quad, mi.rhs) <= 1e-9 * scale);
    }
  }

  SUBCASE("single-mode quadrature, thermal and dense") {
    BasisPtr basis = make_fock_basis(lat, {kZero}, 12);
    QuantumState thermal = free_gibbs_state(basis, 0.6);
    QuantumState dense_st = wishart_dense(basis, 0.6, rng);
    for (int k = 1; k <= 2; ++k) {
      for (const QuantumState* st : {&thermal, &dense_st}) {
        MomentIdentity mi = definetti_moment(*st, basis->modes(), k);
        LowerSymbol sym = lower_symbol(*st, basis->modes());
        Eigen::MatrixXcd quad = symbol_moment_quadrature(sym, k, 16, 2 * (12 + k) + 3);
        double scale = std::max(1.0, mi.rhs.cwiseAbs().maxCoeff());
        CHECK(max_diff(quad, mi.rhs) <= 1e-9 * scale);
      }
    }
  }

  SUBCASE("trace-norm error bound covers the lower-order remainder") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 8);
    QuantumState states[] = {free_gibbs_state(basis, 0.5), wishart_conserving(basis, 0.5, rng),
                             wishart_dense(basis, 0.5, rng)};
    for (const QuantumState& st : states) {
      for (int k = 1; k <= 3; ++k) {
        MomentIdentity mi = definetti_moment(st, basis->modes(), k);
        double remainder = trace_norm_herm(mi.rhs - mi.main_term);
        CHECK(mi.error_bound > 0.0);
        CHECK(remainder <= mi.error_bound * (1.0 + 1e-10));
      }
    }
  }

  SUBCASE("orders outside the cap throw") {
    BasisPtr basis = make_fock_basis(lat, {kZero}, 4);
    QuantumState st = free_gibbs_state(basis, 0.5);
    CHECK_THROWS_AS(definetti_moment(st, basis->modes(), 0), std::invalid_argument);
    CHECK_THROWS_AS(definetti_moment(st, basis->modes(), 5), std::invalid_argument);
  }
}

TEST_CASE("coherent vectors account for the tail and satisfy the eigenrelation") {
  LatticePtr lat = build_lattice(1, 1);

  SUBCASE("zero amplitude is the vacuum") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 10);
    CoherentVector cv = coherent_vector(basis, Eigen::Vector2cd::Zero());
    auto vac = basis->find({0, 0});
    CHECK(cv.coeffs(vac) == cd{1.0, 0.0});
    CHECK(cv.coeffs.cwiseAbs().sum() == 1.0);
    CHECK(cv.dropped_mass == 0.0);
    CHECK(cv.norm == 1.0);
  }

  SUBCASE("coefficients, norm and tail agree with closed forms") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 20);
    Eigen::Vector2cd u(cd{0.9, 0.3}, cd{-0.7, 0.4});
    double s = u.squaredNorm();
    CoherentVector cv = coherent_vector(basis, u);
    CHECK(std::abs(cv.norm * cv.norm + cv.dropped_mass - 1.0) <= 1e-12);

    auto idx = basis->find({2, 1});
    cd want = std::exp(-0.5 * s) * u(0) * u(0) * u(1) / std::sqrt(2.0);
    CHECK(std::abs(cv.coeffs(idx) - want) <= 1e-14);

    double tail = 0.0;
    double term = std::exp(-s);
    for (int n = 0; n <= basis->n_max(); ++n) {
      tail += term;
      term *= s / (n + 1);
    }
    CHECK(std::abs(cv.dropped_mass - (1.0 - tail)) <= 1e-13);
  }

  SUBCASE("annihilation acts as the amplitude inner product up to the cap") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 12);
    Eigen::Vector2cd u(cd{0.9, 0.3}, cd{-0.7, 0.4});
    Eigen::Vector2cd phi(cd{0.6, 0.0}, cd{0.0, 0.8});
    double s = u.squaredNorm();
    CoherentVector cv = coherent_vector(basis, u);

    FockOperator a_phi = op_add(op_scale(std::conj(phi(0)), ladder(basis, kZero, LadderKind::annihilate)),
                                op_scale(std::conj(phi(1)), ladder(basis, kOne, LadderKind::annihilate)));
    cd eig = std::conj(phi(0)) * u(0) + std::conj(phi(1)) * u(1);
    Eigen::VectorXcd residual = a_phi.m * cv.coeffs - eig * cv.coeffs;
    double top_mass =
        std::exp(-s + basis->n_max() * std::log(s) - std::lgamma(basis->n_max() + 1.0));
    double want = std::abs(eig) * std::sqrt(top_mass);
    CHECK(std::abs(residual.norm() - want) <= 1e-8 * want);
  }

  SUBCASE("number moments are Poissonian") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 26);
    Eigen::Vector2cd u(cd{0.8, 0.2}, cd{-0.6, 0.5});
    double s = u.squaredNorm();
    CoherentVector cv = coherent_vector(basis, u);
    FockOperator n_op = number_operator(basis);
    CHECK(std::abs(expectation(n_op, cv.coeffs).real() - s) <= 1e-11);
    FockOperator n2 = op_mul(n_op, n_op);
    CHECK(std::abs(expectation(n2, cv.coeffs).real() - (s * s + s)) <= 1e-11);
  }

  SUBCASE("amplitude size must match the basis") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 6);
    CHECK_THROWS_AS(coherent_vector(basis, Eigen::VectorXcd::Zero(3)), std::invalid_argument);
  }
}

TEST_CASE("lower symbol densities: closed forms, positivity, normalization") {
  LatticePtr lat = build_lattice(1, 1);
  Rng rng(229);

  SUBCASE("vacuum symbol is the centered Gaussian") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 6);
    const double lambda = 0.5;
    QuantumState vac = number_state(basis, {0, 0}, lambda);
    LowerSymbol sym = lower_symbol(vac, basis->modes());
    for (double r : {0.0, 0.4, 1.1}) {
      Eigen::Vector2cd u(cd{r, 0.2}, cd{-0.3, r});
      double want = std::pow(lambda * kPi, -2.0) * std::exp(-u.squaredNorm() / lambda);
      CHECK(std::abs(sym.density(u) - want) <= 1e-13 * want);
    }
  }

  SUBCASE("free thermal symbol is the widened Gaussian") {
    BasisPtr basis = make_fock_basis(lat, {kOne}, 60);
    const double lambda = 0.8;
    const double h = basis->h(0);
    REQUIRE(h == 2.0);
    QuantumState st = free_gibbs_state(basis, lambda);
    LowerSymbol sym = lower_symbol(st, basis->modes());
    const double q = std::exp(-lambda * h);
    for (double x2 : {0.0, 0.5, 1.5, 4.0}) {
      Eigen::VectorXcd u(1);
      u << std::sqrt(x2) * std::polar(1.0, 0.7);
      double want = (1.0 - q) / (lambda * kPi) * std::exp(-(x2 / lambda) * (1.0 - q));
      CHECK(std::abs(sym.density(u) - want) <= 1e-11 * want);
    }
    GaussianSymbolReport rep = gaussian_symbol_bound_check(lambda, {h});
    Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(1);
    CHECK(std::abs(sym.density(zero) * lambda * kPi * rep.symbol_variance[0] / lambda - 1.0) <=
          1e-10);
  }

  SUBCASE("densities stay nonnegative") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 6);
    QuantumState st = wishart_dense(basis, 0.35, rng);
    LowerSymbol sym = lower_symbol(st, basis->modes());
    double largest = 0.0;
    for (int t = 0; t < 40; ++t) {
      Eigen::Vector2cd u(rng.cgauss(), rng.cgauss());
      double d = sym.density(u);
      CHECK(d >= -1e-12);
      largest = std::max(largest, d);
    }
    CHECK(largest > 0.0);
  }

  SUBCASE("every symbol integrates to one") {
    auto one = [](const Eigen::VectorXcd&) { return 1.0; };
    {
      BasisPtr basis = make_fock_basis(lat, {kZero}, 10);
      LowerSymbol sym = lower_symbol(wishart_dense(basis, 0.45, rng), basis->modes());
      CHECK(std::abs(symbol_integral(sym, one, 12, 23) - 1.0) <= 1e-10);
    }
    {
      BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 6);
      LowerSymbol sym = lower_symbol(wishart_conserving(basis, 0.45, rng), basis->modes());
      CHECK(std::abs(symbol_integral(sym, one, 8, 15) - 1.0) <= 1e-10);
    }
    {
      BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 5);
      LowerSymbol sym = lower_symbol(wishart_dense(basis, 0.45, rng), basis->modes());
      CHECK(std::abs(symbol_integral(sym, one, 7, 13) - 1.0) <= 1e-10);
    }
  }

  SUBCASE("first moment accessor shifts the one-body matrix") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 7);
    QuantumState st = wishart_conserving(basis, 0.55, rng);
    LowerSymbol sym = lower_symbol(st, basis->modes());
    Eigen::MatrixXcd want =
        0.55 * (reduced_density(st, 1) + Eigen::MatrixXcd::Identity(2, 2));
    CHECK(max_diff(sym.moment_matrix(1), want) <= 1e-12);
  }

  SUBCASE("three retained modes refuse the quadrature") {
    BasisPtr basis = make_fock_basis(lat, 4);
    LowerSymbol sym = lower_symbol(wishart_dense(basis, 0.4, rng), basis->modes());
    auto one = [](const Eigen::VectorXcd&) { return 1.0; };
    CHECK_THROWS_AS(symbol_integral(sym, one, 6, 9), std::invalid_argument);
    CHECK_THROWS_AS(symbol_moment_quadrature(sym, 1, 6, 9), std::invalid_argument);
  }
}

TEST_CASE("line weights and Poisson moments are consistent across routes") {
  LatticePtr lat = build_lattice(1, 1);
  Rng rng(613);

  SUBCASE("thermal line weights are the truncated geometric law") {
    BasisPtr basis = make_fock_basis(lat, {kZero}, 50);
    const double lambda = 0.8;
    QuantumState st = free_gibbs_state(basis, lambda);
    Eigen::VectorXcd phi(1);
    phi << cd{1.0, 0.0};
    std::vector<double> w = phi_number_weights(st, phi);
    const double q = std::exp(-lambda * basis->h(0));
    const double z = (1.0 - std::pow(q, basis->n_max() + 1)) / (1.0 - q);
    for (int n = 0; n <= basis->n_max(); ++n)
      CHECK(std::abs(w[static_cast<std::size_t>(n)] - std::pow(q, n) / z) <= 1e-13);

    double p1 = poisson_moment_power(st, phi, 1);
    double p2 = poisson_moment_power(st, phi, 2);
    CHECK(std::abs(p1 - lambda / (1.0 - q)) <= 1e-12);
    CHECK(std::abs(p2 - 2.0 * lambda * lambda / ((1.0 - q) * (1.0 - q))) <= 1e-12);
  }

  SUBCASE("vacuum and number-state powers in closed form") {
    BasisPtr basis2 = make_fock_basis(lat, {kZero, kOne}, 6);
    const double lambda = 0.42;
    QuantumState vac = number_state(basis2, {0, 0}, lambda);
    Eigen::VectorXcd phi(2);
    phi << cd{0.6, 0.0}, cd{0.0, 0.8};
    double k_fact = 1.0;
    for (int k = 1; k <= 3; ++k) {
      k_fact *= k;
      CHECK(std::abs(poisson_moment_power(vac, phi, k) - std::pow(lambda, k) * k_fact) <= 1e-14);
    }
    BasisPtr basis1 = make_fock_basis(lat, {kZero}, 8);
    QuantumState three = number_state(basis1, {3}, lambda);
    Eigen::VectorXcd e0(1);
    e0 << cd{1.0, 0.0};
    CHECK(std::abs(poisson_moment_power(three, e0, 2) - 20.0 * lambda * lambda) <= 1e-13);
  }

  SUBCASE("general integrands reduce to the closed forms") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 8);
    QuantumState st = wishart_conserving(basis, 0.7, rng);
    Eigen::VectorXcd phi(2);
    phi << cd{0.8, 0.0}, cd{0.0, 0.6};
    CHECK(std::abs(poisson_moment_f(st, phi, [](double) { return 1.0; }, 1e-11) - 1.0) <= 1e-9);
    double via_f = poisson_moment_f(st, phi, [](double x) { return x * x; }, 1e-11);
    double via_power = poisson_moment_power(st, phi, 2);
    CHECK(std::abs(via_f - via_power) <= 1e-8 * std::max(1.0, via_power));
  }

  SUBCASE("powers, matrix slices and density quadrature form one value") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 8);
    const double lambda = 0.7;
    QuantumState st = wishart_conserving(basis, lambda, rng);
    Eigen::VectorXcd phi(2);
    phi << cd{0.8, 0.0}, cd{0.0, 0.6};  // unit norm, off the mode axes
    LowerSymbol sym = lower_symbol(st, basis->modes());
    for (int k = 1; k <= 2; ++k) {
      double via_power = poisson_moment_power(st, phi, k);
      MomentIdentity mi = definetti_moment(st, basis->modes(), k);
      double via_slice = slice_real(mi.rhs, basis, k, phi);
      Eigen::MatrixXcd quad = symbol_moment_quadrature(sym, k, 16, 2 * (8 + k) + 3);
      double via_quad_slice = slice_real(quad, basis, k, phi);
      auto abs_k = [&](const Eigen::VectorXcd& u) {
        return std::pow(std::norm(phi.dot(u)), k);
      };
      double via_density = symbol_integral(sym, abs_k, 16, 2 * (8 + k) + 3);
      double scale = std::max(1.0, via_power);
      CHECK(std::abs(via_power - via_slice) <= 1e-9 * scale);
      CHECK(std::abs(via_power - via_quad_slice) <= 1e-9 * scale);
      CHECK(std::abs(via_power - via_density) <= 1e-9 * scale);
    }
  }

  SUBCASE("states that mix sectors are rejected, as are zero lines") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 5);
    QuantumState bad = wishart_dense(basis, 0.4, rng);
    Eigen::VectorXcd phi(2);
    phi << cd{1.0, 0.0}, cd{0.0, 0.0};
    CHECK_THROWS_AS(phi_number_weights(bad, phi), std::invalid_argument);
    QuantumState good = wishart_conserving(basis, 0.4, rng);
    CHECK_THROWS_AS(phi_number_weights(good, Eigen::VectorXcd::Zero(2)), std::invalid_argument);
  }
}

TEST_CASE("coherent interaction expectation matches the pair energy with explicit corrections") {
  Rng rng(1009);

  SUBCASE("three-mode interaction: zero at the origin, closed-form gap elsewhere") {
    LatticePtr lat = build_lattice(1, 2);
    BasisPtr basis = make_fock_basis(lat, {kMinus, kZero, kOne}, 24);
    Potential pot = Potential::gaussian(0.9, 0.7);
    const double lambda = 0.2;
    WOptions opt;
    opt.lambda = lambda;
    WResult w = build_W(basis, pot, make_spec(*lat, 0.15), opt);

    CoherentWGap at_zero = coherent_expectation_W(w, pot, lambda, Eigen::Vector3cd::Zero());
    CHECK(std::abs(at_zero.gap) <= 1e-12 * std::max(1.0, std::abs(at_zero.quantum)));
    CHECK(at_zero.lambda_terms == 0.0);
    CHECK(at_zero.dropped_mass == 0.0);

    for (int t = 0; t < 2; ++t) {
      Eigen::Vector3cd u(rng.cgauss(), rng.cgauss(), rng.cgauss());
      u *= 0.8 / u.norm();
      CoherentWGap g = coherent_expectation_W(w, pot, lambda, u);
      double scale = std::max(1.0, std::abs(g.quantum));
      CHECK(g.dropped_mass <= 1e-12);
      CHECK(std::abs(g.gap - g.lambda_terms) <= 1e-9 * scale);
      CHECK(g.lambda_terms > 0.0);
    }
  }

  SUBCASE("pure number interaction has Poisson statistics") {
    LatticePtr lat = build_lattice(1, 1);
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 30);
    Potential pot = Potential::table_delta0();
    const double lambda = 0.25;
    WOptions opt;
    opt.lambda = lambda;
    WResult w = build_W(basis, pot, make_spec(*lat, 0.0), opt);

    Eigen::Vector2cd u(cd{0.5, 0.3}, cd{-0.4, 0.2});
    double s = u.squaredNorm() / lambda;
    CoherentWGap g = coherent_expectation_W(w, pot, lambda, u);
    double quad_coef = lambda * lambda / (2.0 * pow_2pi(1));
    double want = quad_coef * ((s - w.n0) * (s - w.n0) + s);
    CHECK(std::abs(g.quantum - want) <= 1e-10 * std::max(1.0, std::abs(want)));
    double want_terms = lambda * u.squaredNorm() / (2.0 * pow_2pi(1));
    CHECK(std::abs(g.lambda_terms - want_terms) <= 1e-14);
    CHECK(std::abs(g.gap - want_terms) <= 1e-10 * std::max(1.0, std::abs(want)));
  }

  SUBCASE("gap scales linearly in lambda across the sweep") {
    LatticePtr lat = build_lattice(1, 1);
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 48);
    Potential pot = Potential::gaussian(1.0, 0.6);
    const double lambdas[] = {0.2, 0.1, 0.05};

    std::vector<Eigen::Vector2cd> us;
    for (int t = 0; t < 20; ++t) {
      Eigen::Vector2cd u(rng.cgauss(), rng.cgauss());
      us.push_back(0.8 / u.norm() * u);
    }

    std::vector<std::vector<double>> per_lambda;
    for (double lambda : lambdas) {
      WOptions opt;
      opt.lambda = lambda;
      WResult w = build_W(basis, pot, make_spec(*lat, 0.1), opt);
      std::vector<double> ratios;
      for (const auto& u : us) {
        CoherentWGap g = coherent_expectation_W(w, pot, lambda, u);
        CHECK(std::abs(g.gap - g.lambda_terms) <= 1e-9 * std::max(1.0, std::abs(g.quantum)));
        CHECK(std::abs(g.gap) / lambda <= 0.2);
        ratios.push_back(g.gap / lambda);
      }
      per_lambda.push_back(std::move(ratios));
    }
    for (std::size_t t = 0; t < us.size(); ++t)
      CHECK(std::abs(per_lambda.front()[t] - per_lambda.back()[t]) <= 1e-6);
  }
}

TEST_CASE("free symbol bound constants are stable under halving") {
  SUBCASE("closed forms and the fitted constant") {
    const double lambda = 0.1;
    const std::vector<double> h = {1.0, 2.0, 5.0};
    GaussianSymbolReport rep = gaussian_symbol_bound_check(lambda, h, 48, 6.0);

    double want_r0 = 1.0;
    double want_c = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) {
      double decay = (1.0 - std::exp(-lambda * h[j])) / lambda;
      want_r0 *= decay / h[j];
      want_c = std::max(want_c, (h[j] - decay) / lambda);
      CHECK(std::abs(rep.symbol_variance[j] - 1.0 / decay) <= 1e-14);
      CHECK(std::abs(rep.limit_variance[j] - 1.0 / h[j]) <= 1e-16);
    }
    CHECK(rep.ratio_at_zero <= 1.0);
    CHECK(std::abs(rep.ratio_at_zero - want_r0) <= 1e-14);
    CHECK(std::abs(rep.c_analytic - want_c) <= 1e-12);
    CHECK(rep.c_fit <= rep.c_analytic + 1e-12);
    CHECK(rep.c_fit >= 0.8 * rep.c_analytic);

    // Pointwise: log ratio(u) - C lambda |u|^2 <= log ratio(0) <= 0.
    for (double x0 : {0.0, 1.0, 4.0}) {
      for (double x1 : {0.0, 2.0, 9.0}) {
        double log_ratio = std::log(want_r0);
        double norm2 = x0 + x1;
        log_ratio += (h[0] - (1.0 - std::exp(-lambda * h[0])) / lambda) * x0;
        log_ratio += (h[2] - (1.0 - std::exp(-lambda * h[2])) / lambda) * x1;
        CHECK(log_ratio <= rep.c_analytic * lambda * norm2 + 1e-12);
      }
    }
  }

  SUBCASE("variances collapse to the classical ones as lambda shrinks") {
    for (double lambda : {0.05, 0.025}) {
      GaussianSymbolReport rep = gaussian_symbol_bound_check(lambda, {1.0, 2.0, 5.0});
      for (std::size_t j = 0; j < 3; ++j) {
        double hj = rep.limit_variance[j] > 0.0 ? 1.0 / rep.limit_variance[j] : 0.0;
        CHECK(std::abs(rep.symbol_variance[j] * hj - 1.0) <= 0.6 * lambda * hj);
      }
    }
  }

  SUBCASE("halving lambda moves the constant by under ten percent") {
    GaussianSymbolReport a = gaussian_symbol_bound_check(0.1, {1.0, 2.0, 5.0});
    GaussianSymbolReport b = gaussian_symbol_bound_check(0.05, {1.0, 2.0, 5.0});
    CHECK(std::abs(b.c_analytic - a.c_analytic) <= 0.1 * a.c_analytic);
    CHECK(std::abs(b.c_fit - a.c_fit) <= 0.12 * a.c_fit);
  }

  SUBCASE("degenerate inputs throw") {
    CHECK_THROWS_AS(gaussian_symbol_bound_check(0.0, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_symbol_bound_check(0.1, {}), std::invalid_argument);
  }
}

TEST_CASE("entropy chain is ordered across quantum, localized and classical") {
  LatticePtr lat = build_lattice(1, 1);
  Rng rng(75);

  SUBCASE("single mode: localization is lossless, the symbol loses information") {
    BasisPtr basis = make_fock_basis(lat, {kZero}, 40);
    const double lambda = 0.8;
    QuantumState g1 = free_gibbs_state(basis, lambda);
    QuantumState g2 = gibbs(op_scale(2.0, free_hamiltonian(basis, lambda)), lambda).state;
    BerezinLiebReport rep = berezin_lieb_check(g1, g2, basis->modes(), 64, 1);
    CHECK(std::abs(rep.quantum - rep.localized) <= 1e-10);
    CHECK(rep.classical >= -1e-9);
    CHECK(rep.localized >= rep.classical + 0.1);

    // Closed forms: geometric relative entropy versus Gaussian relative entropy.
    const double h0 = basis->h(0);
    const double q1 = std::exp(-lambda * h0), q2 = std::exp(-2.0 * lambda * h0);
    double mean1 = q1 / (1.0 - q1);
    double want_quantum =
        std::log((1.0 - q1) / (1.0 - q2)) + mean1 * std::log(q1 / q2);
    CHECK(std::abs(rep.quantum - want_quantum) <= 1e-8);
    double v1 = lambda / (1.0 - q1), v2 = lambda / (1.0 - q2);
    double want_classical = std::log(v2 / v1) + v1 / v2 - 1.0;
    CHECK(std::abs(rep.classical - want_classical) <= 1e-7);
  }

  SUBCASE("two modes: tracing out costs entropy, the symbol costs more") {
    BasisPtr basis = make_fock_basis(lat, 6);
    REQUIRE(basis->M() == 3);
    const double lambda = 0.6;
    QuantumState g1 = wishart_conserving(basis, lambda, rng);
    QuantumState g2 = free_gibbs_state(basis, lambda);
    BerezinLiebReport rep = berezin_lieb_check(g1, g2, {kZero, kOne}, 24, 30);
    CHECK(rep.quantum >= rep.localized - 1e-9);
    CHECK(rep.localized >= rep.classical - 1e-6);
    CHECK(rep.classical >= -1e-8);
  }

  SUBCASE("identical states sit at zero everywhere") {
    BasisPtr basis = make_fock_basis(lat, {kZero, kOne}, 8);
    QuantumState st = wishart_conserving(basis, 0.5, rng);
    BerezinLiebReport rep = berezin_lieb_check(st, st, basis->modes(), 16, 19);
    CHECK(std::abs(rep.quantum) <= 1e-10);
    CHECK(std::abs(rep.localized) <= 1e-10);
    CHECK(std::abs(rep.classical) <= 1e-9);
  }
}
