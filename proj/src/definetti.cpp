#include "phi4/definetti.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace phi4 {

namespace {

double falling(int n, int m) {
  double p = 1.0;
  for (int i = 0; i < m; ++i) p *= static_cast<double>(n - i);
  return p;
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double p = 1.0;
  for (int i = 1; i <= k; ++i) p = p * static_cast<double>(n - k + i) / static_cast<double>(i);
  return p;
}

double factorial(int n) {
  double p = 1.0;
  for (int i = 2; i <= n; ++i) p *= static_cast<double>(i);
  return p;
}

std::string occ_bytes(const int* occ, std::size_t n) {
  return std::string(reinterpret_cast<const char*>(occ), n * sizeof(int));
}

// Per-mode tables t[j][n] = v_j^n / sqrt(n!), built by the stable recursion
// t[j][n] = t[j][n-1] v_j / sqrt(n).
std::vector<std::vector<cd>> mode_tables(const Eigen::VectorXcd& v, int n_max) {
  std::vector<std::vector<cd>> tab(static_cast<std::size_t>(v.size()));
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    auto& t = tab[static_cast<std::size_t>(j)];
    t.resize(static_cast<std::size_t>(n_max) + 1);
    t[0] = cd{1.0, 0.0};
    for (int n = 1; n <= n_max; ++n)
      t[static_cast<std::size_t>(n)] =
          t[static_cast<std::size_t>(n) - 1] * v(j) / std::sqrt(static_cast<double>(n));
  }
  return tab;
}

Eigen::VectorXcd coherent_unnormalized(const FockBasis& basis, const Eigen::VectorXcd& v) {
  const auto tab = mode_tables(v, basis.n_max());
  Eigen::VectorXcd c(static_cast<Eigen::Index>(basis.dim()));
  for (std::size_t i = 0; i < basis.dim(); ++i) {
    const std::vector<int>& occ = basis.occ(i);
    cd prod{1.0, 0.0};
    for (std::size_t j = 0; j < occ.size(); ++j)
      prod *= tab[j][static_cast<std::size_t>(occ[j])];
    c(static_cast<Eigen::Index>(i)) = prod;
  }
  return c;
}

// Occupation list of the total-number-k sector, in basis order.
std::vector<std::vector<int>> sector_occupations(const FockBasis& basis, int k) {
  std::vector<std::vector<int>> out;
  for (std::size_t i = basis.sector_begin(k); i < basis.sector_end(k); ++i)
    out.push_back(basis.occ(i));
  return out;
}

// All length-k sequences over m_modes modes grouped by occupation type, with
// the sector occupation list fixing the group order.
struct SequenceGroups {
  std::vector<std::vector<int>> types;
  std::vector<std::vector<std::vector<int>>> seqs;
  std::map<std::vector<int>, int> type_index;
};

SequenceGroups sequences_by_type(const FockBasis& basis, int k) {
  SequenceGroups g;
  g.types = sector_occupations(basis, k);
  g.seqs.resize(g.types.size());
  for (std::size_t t = 0; t < g.types.size(); ++t) g.type_index[g.types[t]] = static_cast<int>(t);
  const int m_modes = basis.M();
  std::vector<int> seq(static_cast<std::size_t>(k), 0);
  while (true) {
    std::vector<int> type(static_cast<std::size_t>(m_modes), 0);
    for (int pos = 0; pos < k; ++pos) ++type[static_cast<std::size_t>(seq[static_cast<std::size_t>(pos)])];
    g.seqs[static_cast<std::size_t>(g.type_index.at(type))].push_back(seq);
    int pos = k - 1;
    while (pos >= 0 && seq[static_cast<std::size_t>(pos)] == m_modes - 1) {
      seq[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++seq[static_cast<std::size_t>(pos)];
  }
  return g;
}

double occ_factorial(const std::vector<int>& occ) {
  double p = 1.0;
  for (int n : occ) p *= factorial(n);
  return p;
}

// Shared algebraic RHS of the moment identity for an already localized state.
Eigen::MatrixXcd moment_rhs(const QuantumState& gamma_p, int k) {
  Eigen::MatrixXcd rhs = reduced_density(gamma_p, k);
  for (int l = 0; l < k; ++l) {
    Eigen::MatrixXcd gl = reduced_density(gamma_p, l);
    rhs += binomial(k, l) * symmetric_embed(gamma_p.basis, gl, l, k);
  }
  double pref = factorial(k) * std::pow(gamma_p.lambda, k);
  return pref * rhs;
}

double trace_n_power(const QuantumState& state, int l) {
  const FockBasis& basis = *state.basis;
  double acc = 0.0;
  for (std::size_t i = 0; i < basis.dim(); ++i)
    acc += state.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real() *
           std::pow(static_cast<double>(basis.total(i)), l);
  return acc;
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double tol) {
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 28);
}

}  // namespace

QuantumState localize(const QuantumState& gamma, const BasisPtr& sub) {
  const FockBasis& basis = *gamma.basis;
  if (sub->n_max() != basis.n_max())
    throw std::invalid_argument("localize: sub-basis cap mismatch");
  const std::vector<Ivec>& p_modes = sub->modes();
  if (p_modes.empty()) throw std::invalid_argument("localize: empty mode list");
  std::vector<int> slots;
  slots.reserve(p_modes.size());
  for (const Ivec& k : p_modes) {
    int s = basis.mode_slot(k);
    if (s < 0) throw std::invalid_argument("localize: mode not in the basis");
    if (std::find(slots.begin(), slots.end(), s) != slots.end())
      throw std::invalid_argument("localize: duplicate mode");
    slots.push_back(s);
  }
  std::vector<int> rest;
  for (int s = 0; s < basis.M(); ++s)
    if (std::find(slots.begin(), slots.end(), s) == slots.end()) rest.push_back(s);

  // Group the full basis by complement occupation; the partial trace sums
  // each group's outer products into the sub-basis.
  std::unordered_map<std::string, std::vector<std::pair<Eigen::Index, Eigen::Index>>> groups;
  std::vector<int> p_occ(slots.size()), c_occ(rest.size());
  for (std::size_t i = 0; i < basis.dim(); ++i) {
    const std::vector<int>& occ = basis.occ(i);
    for (std::size_t j = 0; j < slots.size(); ++j) p_occ[j] = occ[static_cast<std::size_t>(slots[j])];
    for (std::size_t j = 0; j < rest.size(); ++j) c_occ[j] = occ[static_cast<std::size_t>(rest[j])];
    std::ptrdiff_t sub_idx = sub->find(p_occ);
    if (sub_idx < 0) throw std::logic_error("localize: sub-basis lookup failed");
    groups[occ_bytes(c_occ.data(), c_occ.size())].emplace_back(
        static_cast<Eigen::Index>(sub_idx), static_cast<Eigen::Index>(i));
  }

  Eigen::MatrixXcd rho_p = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(sub->dim()),
                                                  static_cast<Eigen::Index>(sub->dim()));
  for (const auto& [key, members] : groups)
    for (const auto& [pa, ia] : members)
      for (const auto& [pb, ib] : members) rho_p(pa, pb) += gamma.rho(ia, ib);

  QuantumState out = make_state(sub, std::move(rho_p), gamma.lambda, gamma.commutes_with_n);
  out.provenance = "localized";
  return out;
}

QuantumState localize(const QuantumState& gamma, const std::vector<Ivec>& p_modes) {
  if (p_modes.empty()) throw std::invalid_argument("localize: empty mode list");
  return localize(gamma, make_fock_basis(gamma.basis->lattice(), p_modes, gamma.basis->n_max()));
}

Eigen::MatrixXcd reduced_density(const QuantumState& gamma, int k) {
  const FockBasis& basis = *gamma.basis;
  if (k < 0 || k > basis.n_max())
    throw std::invalid_argument("reduced_density: order outside the cap");
  if (k == 0) {
    Eigen::MatrixXcd g(1, 1);
    g(0, 0) = gamma.rho.trace();
    return g;
  }
  const auto occs = sector_occupations(basis, k);
  const Eigen::Index dk = static_cast<Eigen::Index>(occs.size());
  const int m_modes = basis.M();
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(dk, dk);
  std::vector<int> shifted(static_cast<std::size_t>(m_modes));
  for (Eigen::Index a = 0; a < dk; ++a) {
    for (Eigen::Index b = a; b < dk; ++b) {
      const std::vector<int>& m = occs[static_cast<std::size_t>(a)];
      const std::vector<int>& mp = occs[static_cast<std::size_t>(b)];
      cd acc{0.0, 0.0};
      for (std::size_t i = 0; i < basis.dim(); ++i) {
        const std::vector<int>& occ = basis.occ(i);
        bool ok = true;
        for (int j = 0; j < m_modes; ++j) {
          shifted[static_cast<std::size_t>(j)] = occ[static_cast<std::size_t>(j)] -
                                                 m[static_cast<std::size_t>(j)] +
                                                 mp[static_cast<std::size_t>(j)];
          if (occ[static_cast<std::size_t>(j)] < m[static_cast<std::size_t>(j)]) {
            ok = false;
            break;
          }
        }
        if (!ok) continue;
        std::ptrdiff_t j_idx = basis.find(shifted);
        if (j_idx < 0) throw std::logic_error("reduced_density: shifted state missing");
        double amp = 1.0;
        for (int j = 0; j < m_modes; ++j)
          amp *= falling(occ[static_cast<std::size_t>(j)], m[static_cast<std::size_t>(j)]) *
                 falling(shifted[static_cast<std::size_t>(j)], mp[static_cast<std::size_t>(j)]);
        acc += gamma.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j_idx)) *
               std::sqrt(amp);
      }
      double norm = 1.0 / std::sqrt(occ_factorial(m) * occ_factorial(mp));
      g(a, b) = acc * norm;
      if (b != a) g(b, a) = std::conj(g(a, b));
    }
  }
  return g;
}

Eigen::MatrixXcd symmetric_embed(const BasisPtr& basis, const Eigen::MatrixXcd& a, int l, int k) {
  if (l < 0 || k < 1 || l >= k || k > basis->n_max())
    throw std::invalid_argument("symmetric_embed: need 0 <= l < k <= n_max");
  const auto k_occ = sector_occupations(*basis, k);
  const auto l_occ = sector_occupations(*basis, l);
  if (a.rows() != static_cast<Eigen::Index>(l_occ.size()) || a.rows() != a.cols())
    throw std::invalid_argument("symmetric_embed: matrix does not match the l-sector");

  const SequenceGroups groups = sequences_by_type(*basis, k);
  std::map<std::vector<int>, int> l_index;
  for (std::size_t t = 0; t < l_occ.size(); ++t) l_index[l_occ[t]] = static_cast<int>(t);
  const int m_modes = basis->M();
  const double kfac = factorial(k), lfac = factorial(l);

  auto prefix_type = [&](const std::vector<int>& seq) {
    std::vector<int> type(static_cast<std::size_t>(m_modes), 0);
    for (int pos = 0; pos < l; ++pos) ++type[static_cast<std::size_t>(seq[static_cast<std::size_t>(pos)])];
    return type;
  };

  const Eigen::Index dk = static_cast<Eigen::Index>(k_occ.size());
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(dk, dk);
  for (Eigen::Index ta = 0; ta < dk; ++ta) {
    double wa = std::sqrt(occ_factorial(k_occ[static_cast<std::size_t>(ta)]) / kfac);
    for (Eigen::Index tb = 0; tb < dk; ++tb) {
      double wb = std::sqrt(occ_factorial(k_occ[static_cast<std::size_t>(tb)]) / kfac);
      cd acc{0.0, 0.0};
      for (const auto& s : groups.seqs[static_cast<std::size_t>(ta)]) {
        for (const auto& sp : groups.seqs[static_cast<std::size_t>(tb)]) {
          bool suffix_equal = true;
          for (int pos = l; pos < k; ++pos)
            if (s[static_cast<std::size_t>(pos)] != sp[static_cast<std::size_t>(pos)]) {
              suffix_equal = false;
              break;
            }
          if (!suffix_equal) continue;
          std::vector<int> mu = prefix_type(s), mup = prefix_type(sp);
          double wl = std::sqrt(occ_factorial(mu) / lfac) * std::sqrt(occ_factorial(mup) / lfac);
          acc += wl * a(l_index.at(mu), l_index.at(mup));
        }
      }
      out(ta, tb) = wa * wb * acc;
    }
  }
  return out;
}

Eigen::VectorXcd symmetric_power_overlap(const BasisPtr& basis, int k,
                                         const Eigen::VectorXcd& phi) {
  if (k < 0 || k > basis->n_max())
    throw std::invalid_argument("symmetric_power_overlap: order outside the cap");
  if (phi.size() != basis->M())
    throw std::invalid_argument("symmetric_power_overlap: vector size mismatch");
  const auto occs = sector_occupations(*basis, k);
  const double kfac = factorial(k);
  Eigen::VectorXcd out(static_cast<Eigen::Index>(occs.size()));
  for (std::size_t t = 0; t < occs.size(); ++t) {
    cd prod{1.0, 0.0};
    for (std::size_t j = 0; j < occs[t].size(); ++j)
      for (int n = 0; n < occs[t][j]; ++n) prod *= phi(static_cast<Eigen::Index>(j));
    out(static_cast<Eigen::Index>(t)) = std::sqrt(kfac / occ_factorial(occs[t])) * prod;
  }
  return out;
}

MomentIdentity definetti_moment(const QuantumState& gamma, const std::vector<Ivec>& p_modes,
                                int k) {
  QuantumState gamma_p = localize(gamma, p_modes);
  const FockBasis& basis = *gamma_p.basis;
  if (k < 1 || k > basis.n_max())
    throw std::invalid_argument("definetti_moment: order outside the cap");
  MomentIdentity out;
  out.k = k;
  out.rhs = moment_rhs(gamma_p, k);
  double pref = factorial(k) * std::pow(gamma_p.lambda, k);
  out.main_term = pref * reduced_density(gamma_p, k);
  const int m_modes = basis.M();
  double bound = 0.0;
  for (int l = 0; l < k; ++l) {
    double c = binomial(k, l);
    double dim_factor = 1.0;
    for (int i = 1; i <= k - l; ++i) dim_factor *= static_cast<double>(m_modes - 1 + i);
    bound += c * c * dim_factor * trace_n_power(gamma_p, l);
  }
  out.error_bound = std::pow(gamma_p.lambda, k) * bound;
  return out;
}

CoherentVector coherent_vector(const BasisPtr& basis, const Eigen::VectorXcd& u) {
  if (u.size() != basis->M())
    throw std::invalid_argument("coherent_vector: amplitude size mismatch");
  CoherentVector cv;
  double s = u.squaredNorm();
  cv.coeffs = std::exp(-0.5 * s) * coherent_unnormalized(*basis, u);
  cv.norm = cv.coeffs.norm();
  cv.dropped_mass = 0.0;
  if (s > 1e-300) {
    int n = basis->n_max() + 1;
    double t = std::exp(-s + n * std::log(s) - std::lgamma(static_cast<double>(n) + 1.0));
    double acc = 0.0;
    while (t > acc * 1e-18 + 1e-300 && n < basis->n_max() + 100000) {
      acc += t;
      ++n;
      t *= s / static_cast<double>(n);
    }
    cv.dropped_mass = acc;
  }
  return cv;
}

LowerSymbol::LowerSymbol(QuantumState gamma_p) : state_(std::move(gamma_p)) {}

double LowerSymbol::poly_factor(const Eigen::VectorXcd& v) const {
  Eigen::VectorXcd c = coherent_unnormalized(*state_.basis, v);
  return c.dot(state_.rho * c).real();
}

double LowerSymbol::density(const Eigen::VectorXcd& u) const {
  if (u.size() != state_.basis->M())
    throw std::invalid_argument("lower symbol: amplitude size mismatch");
  const double lam = state_.lambda;
  Eigen::VectorXcd v = u / std::sqrt(lam);
  double pref = std::pow(lam * kPi, -state_.basis->M());
  return pref * std::exp(-v.squaredNorm()) * poly_factor(v);
}

Eigen::MatrixXcd LowerSymbol::moment_matrix(int k) const {
  if (k < 1 || k > state_.basis->n_max())
    throw std::invalid_argument("moment_matrix: order outside the cap");
  return moment_rhs(state_, k);
}

LowerSymbol lower_symbol(const QuantumState& gamma, const std::vector<Ivec>& p_modes) {
  return LowerSymbol(localize(gamma, p_modes));
}

double symbol_integral(const LowerSymbol& sym,
                       const std::function<double(const Eigen::VectorXcd&)>& g, int radial_nodes,
                       int angular_nodes) {
  const int m_modes = sym.M();
  if (m_modes > 2) throw std::invalid_argument("symbol_integral: quadrature limited to M <= 2");
  if (angular_nodes < 1) throw std::invalid_argument("symbol_integral: need angular nodes");
  const Quadrature rule = gauss_laguerre(radial_nodes);
  const double lam = sym.lambda();
  const double sqrt_lam = std::sqrt(lam);

  Eigen::VectorXcd v(m_modes), u(m_modes);
  double acc = 0.0;
  auto eval_node = [&](double weight) {
    for (int j = 0; j < m_modes; ++j) u(j) = sqrt_lam * v(j);
    acc += weight * sym.poly_factor(v) * g(u);
  };

  const double ang_w = 1.0 / static_cast<double>(angular_nodes);
  if (m_modes == 1) {
    for (int i = 0; i < radial_nodes; ++i) {
      double r = std::sqrt(rule.x[static_cast<std::size_t>(i)]);
      for (int a = 0; a < angular_nodes; ++a) {
        double th = 2.0 * kPi * a / angular_nodes;
        v(0) = std::polar(r, th);
        eval_node(rule.w[static_cast<std::size_t>(i)] * ang_w);
      }
    }
  } else {
    for (int i0 = 0; i0 < radial_nodes; ++i0) {
      double r0 = std::sqrt(rule.x[static_cast<std::size_t>(i0)]);
      for (int i1 = 0; i1 < radial_nodes; ++i1) {
        double r1 = std::sqrt(rule.x[static_cast<std::size_t>(i1)]);
        double wr = rule.w[static_cast<std::size_t>(i0)] * rule.w[static_cast<std::size_t>(i1)];
        for (int a0 = 0; a0 < angular_nodes; ++a0) {
          v(0) = std::polar(r0, 2.0 * kPi * a0 / angular_nodes);
          for (int a1 = 0; a1 < angular_nodes; ++a1) {
            v(1) = std::polar(r1, 2.0 * kPi * a1 / angular_nodes);
            eval_node(wr * ang_w * ang_w);
          }
        }
      }
    }
  }
  return acc;
}

Eigen::MatrixXcd symbol_moment_quadrature(const LowerSymbol& sym, int k, int radial_nodes,
                                          int angular_nodes) {
  const int m_modes = sym.M();
  if (m_modes > 2)
    throw std::invalid_argument("symbol_moment_quadrature: quadrature limited to M <= 2");
  if (k < 1 || k > sym.state().basis->n_max())
    throw std::invalid_argument("symbol_moment_quadrature: order outside the cap");
  const FockBasis& basis = *sym.state().basis;
  const auto occs = sector_occupations(basis, k);
  const Eigen::Index dk = static_cast<Eigen::Index>(occs.size());
  const double lam = sym.lambda();
  const double sqrt_lam = std::sqrt(lam);
  const Quadrature rule = gauss_laguerre(radial_nodes);
  const double kfac = factorial(k);

  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(dk, dk);
  Eigen::VectorXcd v(m_modes), overlap(dk);
  auto accumulate_node = [&](double weight) {
    double t = sym.poly_factor(v);
    for (Eigen::Index a = 0; a < dk; ++a) {
      cd prod{1.0, 0.0};
      for (int j = 0; j < m_modes; ++j)
        for (int n = 0; n < occs[static_cast<std::size_t>(a)][static_cast<std::size_t>(j)]; ++n)
          prod *= sqrt_lam * v(j);
      overlap(a) = std::sqrt(kfac / occ_factorial(occs[static_cast<std::size_t>(a)])) * prod;
    }
    double wt = weight * t;
    for (Eigen::Index a = 0; a < dk; ++a)
      for (Eigen::Index b = 0; b < dk; ++b) out(a, b) += wt * overlap(a) * std::conj(overlap(b));
  };

  const double ang_w = 1.0 / static_cast<double>(angular_nodes);
  if (m_modes == 1) {
    if (sym.state().commutes_with_n) {
      for (int i = 0; i < radial_nodes; ++i) {
        v(0) = std::sqrt(rule.x[static_cast<std::size_t>(i)]);
        accumulate_node(rule.w[static_cast<std::size_t>(i)]);
      }
    } else {
      for (int i = 0; i < radial_nodes; ++i) {
        double r = std::sqrt(rule.x[static_cast<std::size_t>(i)]);
        for (int a = 0; a < angular_nodes; ++a) {
          v(0) = std::polar(r, 2.0 * kPi * a / angular_nodes);
          accumulate_node(rule.w[static_cast<std::size_t>(i)] * ang_w);
        }
      }
    }
    return out;
  }

  if (sym.state().commutes_with_n) {
    // Relative-angle reduction: the first amplitude stays real and the
    // absolute phase is integrated out, which kills cross-sector blocks.
    for (int i0 = 0; i0 < radial_nodes; ++i0) {
      double r0 = std::sqrt(rule.x[static_cast<std::size_t>(i0)]);
      for (int i1 = 0; i1 < radial_nodes; ++i1) {
        double r1 = std::sqrt(rule.x[static_cast<std::size_t>(i1)]);
        double wr = rule.w[static_cast<std::size_t>(i0)] * rule.w[static_cast<std::size_t>(i1)];
        for (int a = 0; a < angular_nodes; ++a) {
          v(0) = r0;
          v(1) = std::polar(r1, 2.0 * kPi * a / angular_nodes);
          accumulate_node(wr * ang_w);
        }
      }
    }
    // The reduction is only valid blockwise; zero what the absolute phase
    // would average away.
    for (Eigen::Index a = 0; a < dk; ++a)
      for (Eigen::Index b = 0; b < dk; ++b) {
        int ta = 0, tb = 0;
        for (std::size_t j = 0; j < occs[static_cast<std::size_t>(a)].size(); ++j) ta += occs[static_cast<std::size_t>(a)][j];
        for (std::size_t j = 0; j < occs[static_cast<std::size_t>(b)].size(); ++j) tb += occs[static_cast<std::size_t>(b)][j];
        if (ta != tb) out(a, b) = cd{0.0, 0.0};
      }
    return out;
  }

  for (int i0 = 0; i0 < radial_nodes; ++i0) {
    double r0 = std::sqrt(rule.x[static_cast<std::size_t>(i0)]);
    for (int i1 = 0; i1 < radial_nodes; ++i1) {
      double r1 = std::sqrt(rule.x[static_cast<std::size_t>(i1)]);
      double wr = rule.w[static_cast<std::size_t>(i0)] * rule.w[static_cast<std::size_t>(i1)];
      for (int a0 = 0; a0 < angular_nodes; ++a0) {
        v(0) = std::polar(r0, 2.0 * kPi * a0 / angular_nodes);
        for (int a1 = 0; a1 < angular_nodes; ++a1) {
          v(1) = std::polar(r1, 2.0 * kPi * a1 / angular_nodes);
          accumulate_node(wr * ang_w * ang_w);
        }
      }
    }
  }
  return out;
}

std::vector<double> phi_number_weights(const QuantumState& gamma, const Eigen::VectorXcd& phi) {
  const FockBasis& basis = *gamma.basis;
  if (!gamma.commutes_with_n)
    throw std::invalid_argument("phi_number_weights: state must conserve total number");
  if (phi.size() != basis.M())
    throw std::invalid_argument("phi_number_weights: vector size mismatch");
  double nrm = phi.norm();
  if (nrm <= 0.0) throw std::invalid_argument("phi_number_weights: zero vector");
  Eigen::VectorXcd unit = phi / nrm;
  Eigen::MatrixXcd one_body = unit * unit.adjoint();
  FockOperator n_phi = dGamma(gamma.basis, one_body);
  Eigen::MatrixXcd dense = Eigen::MatrixXcd(n_phi.m);

  std::vector<double> w(static_cast<std::size_t>(basis.n_max()) + 1, 0.0);
  for (int n = 0; n <= basis.n_max(); ++n) {
    Eigen::Index b = static_cast<Eigen::Index>(basis.sector_begin(n));
    Eigen::Index len = static_cast<Eigen::Index>(basis.sector_end(n)) - b;
    if (len == 0) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(dense.block(b, b, len, len));
    Eigen::MatrixXcd folded =
        es.eigenvectors().adjoint() * gamma.rho.block(b, b, len, len) * es.eigenvectors();
    for (Eigen::Index i = 0; i < len; ++i) {
      double nu = es.eigenvalues()(i);
      auto r = static_cast<long long>(std::llround(nu));
      if (std::abs(nu - static_cast<double>(r)) > 1e-6 || r < 0 || r > n)
        throw std::logic_error("phi_number_weights: non-integer line spectrum");
      w[static_cast<std::size_t>(r)] += folded(i, i).real();
    }
  }
  return w;
}

double poisson_moment_power(const QuantumState& gamma, const Eigen::VectorXcd& phi, int k) {
  if (k < 0) throw std::invalid_argument("poisson_moment_power: negative order");
  const std::vector<double> w = phi_number_weights(gamma, phi);
  double acc = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    double rising = 1.0;
    for (int i = 1; i <= k; ++i) rising *= static_cast<double>(n) + static_cast<double>(i);
    acc += w[n] * rising;
  }
  return std::pow(gamma.lambda, k) * acc;
}

double poisson_moment_f(const QuantumState& gamma, const Eigen::VectorXcd& phi,
                        const std::function<double(double)>& f, double tol) {
  const std::vector<double> w = phi_number_weights(gamma, phi);
  const double lam = gamma.lambda;
  double acc = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    if (std::abs(w[n]) < 1e-18) continue;
    double dn = static_cast<double>(n);
    auto integrand = [&](double x) {
      if (x <= 0.0) return n == 0 ? f(0.0) : 0.0;
      return f(lam * x) * std::exp(dn * std::log(x) - x - std::lgamma(dn + 1.0));
    };
    double upper = dn + 12.0 * std::sqrt(dn + 1.0) + 40.0;
    acc += w[n] * integrate_adaptive(integrand, 0.0, upper, tol);
  }
  return acc;
}

CoherentWGap coherent_expectation_W(const WResult& w, const Potential& pot, double lambda,
                                    const Eigen::VectorXcd& u) {
  const BasisPtr& basis = w.op.basis;
  const FockBasis& b = *basis;
  if (u.size() != b.M()) throw std::invalid_argument("coherent_expectation_W: size mismatch");

  CoherentWGap out;
  CoherentVector cv = coherent_vector(basis, u / std::sqrt(lambda));
  out.dropped_mass = cv.dropped_mass;
  out.quantum = expectation(w.op, cv.coeffs).real();

  // Classical pair energy on the sublattice spanned by the basis modes; its
  // Wick constant reproduces the desk centering of the interaction.
  auto sub = std::make_shared<ModeLattice>(b.d(), b.lattice()->N(), b.lattice()->kind(),
                                           b.modes(),
                                           std::vector<double>(static_cast<std::size_t>(b.M()), 1.0));
  WickTransform wt(sub, pot);
  InteractionSpec spec = make_spec(*sub, w.theta);
  std::vector<cd> z(static_cast<std::size_t>(b.M()));
  for (int j = 0; j < b.M(); ++j) z[static_cast<std::size_t>(j)] = u(j);
  SpectralField field(sub, std::move(z));
  out.classical = wt.energy_D(field, spec);
  out.gap = out.quantum - out.classical;

  double pair_sum = 0.0;
  for (int p = 0; p < b.M(); ++p) {
    for (int q = 0; q < b.M(); ++q) {
      Ivec diff{b.mode(p)[0] - b.mode(q)[0], b.mode(p)[1] - b.mode(q)[1],
                b.mode(p)[2] - b.mode(q)[2]};
      pair_sum += pot.hat(diff) * std::norm(u(q));
    }
  }
  out.lambda_terms = lambda / (2.0 * pow_2pi(b.d())) * pair_sum;
  return out;
}

GaussianSymbolReport gaussian_symbol_bound_check(double lambda,
                                                 const std::vector<double>& h_values,
                                                 int grid_points, double u_max) {
  if (lambda <= 0.0 || h_values.empty())
    throw std::invalid_argument("gaussian_symbol_bound_check: bad inputs");
  GaussianSymbolReport rep;
  rep.ratio_at_zero = 1.0;
  rep.c_analytic = 0.0;
  double log_r0 = 0.0;
  std::vector<double> slope(h_values.size());
  for (std::size_t j = 0; j < h_values.size(); ++j) {
    double h = h_values[j];
    double decay = (1.0 - std::exp(-lambda * h)) / lambda;  // symbol stiffness
    rep.symbol_variance.push_back(1.0 / decay);
    rep.limit_variance.push_back(1.0 / h);
    rep.ratio_at_zero *= decay / h;
    log_r0 += std::log(decay / h);
    slope[j] = h - decay;
    rep.c_analytic = std::max(rep.c_analytic, slope[j] / lambda);
  }
  // log ratio(u) = log ratio(0) + sum_j slope_j |u_j|^2; probe each mode axis
  // and the equal-mass diagonal for the fitted constant.
  rep.c_fit = 0.0;
  for (int i = 1; i <= grid_points; ++i) {
    double x = u_max * u_max * static_cast<double>(i) / grid_points;
    for (double sj : slope) rep.c_fit = std::max(rep.c_fit, (log_r0 + sj * x) / (lambda * x));
    double all = 0.0, tot = 0.0;
    for (double sj : slope) {
      all += sj * x;
      tot += x;
    }
    rep.c_fit = std::max(rep.c_fit, (log_r0 + all) / (lambda * tot));
  }
  rep.c_fit = std::max(rep.c_fit, 0.0);
  return rep;
}

BerezinLiebReport berezin_lieb_check(const QuantumState& gamma, const QuantumState& gamma_prime,
                                     const std::vector<Ivec>& p_modes, int radial_nodes,
                                     int angular_nodes) {
  BerezinLiebReport rep;
  rep.quantum = relative_entropy(gamma, gamma_prime);
  QuantumState gp = localize(gamma, p_modes);
  QuantumState gpp = localize(gamma_prime, gp.basis);
  rep.localized = relative_entropy(gp, gpp);

  // Classical relative entropy of the two symbols. The Gaussian envelope is
  // shared, so only the polynomial factors enter the log; the quadrature is
  // approximate here (log integrand), unlike the exact moment rules.
  const int m_modes = gp.basis->M();
  if (m_modes > 2)
    throw std::invalid_argument("berezin_lieb_check: quadrature limited to M <= 2");
  LowerSymbol sym(std::move(gp));
  LowerSymbol sym_prime(std::move(gpp));
  const bool conserving = sym.state().commutes_with_n && sym_prime.state().commutes_with_n;
  const Quadrature rule = gauss_laguerre(radial_nodes);
  const double ang_w = 1.0 / static_cast<double>(angular_nodes);

  Eigen::VectorXcd v(m_modes);
  double acc = 0.0;
  auto add_node = [&](double weight) {
    double t = std::max(sym.poly_factor(v), 1e-300);
    double tp = std::max(sym_prime.poly_factor(v), 1e-300);
    acc += weight * t * std::log(t / tp);
  };

  if (m_modes == 1) {
    for (int i = 0; i < radial_nodes; ++i) {
      double r = std::sqrt(rule.x[static_cast<std::size_t>(i)]);
      if (conserving) {
        v(0) = r;
        add_node(rule.w[static_cast<std::size_t>(i)]);
      } else {
        for (int a = 0; a < angular_nodes; ++a) {
          v(0) = std::polar(r, 2.0 * kPi * a / angular_nodes);
          add_node(rule.w[static_cast<std::size_t>(i)] * ang_w);
        }
      }
    }
  } else {
    for (int i0 = 0; i0 < radial_nodes; ++i0) {
      double r0 = std::sqrt(rule.x[static_cast<std::size_t>(i0)]);
      for (int i1 = 0; i1 < radial_nodes; ++i1) {
        double r1 = std::sqrt(rule.x[static_cast<std::size_t>(i1)]);
        double wr = rule.w[static_cast<std::size_t>(i0)] * rule.w[static_cast<std::size_t>(i1)];
        if (conserving) {
          // Both factors depend on the relative angle only.
          for (int a = 0; a < angular_nodes; ++a) {
            v(0) = r0;
            v(1) = std::polar(r1, 2.0 * kPi * a / angular_nodes);
            add_node(wr * ang_w);
          }
        } else {
          for (int a0 = 0; a0 < angular_nodes; ++a0) {
            v(0) = std::polar(r0, 2.0 * kPi * a0 / angular_nodes);
            for (int a1 = 0; a1 < angular_nodes; ++a1) {
              v(1) = std::polar(r1, 2.0 * kPi * a1 / angular_nodes);
              add_node(wr * ang_w * ang_w);
            }
          }
        }
      }
    }
  }
  rep.classical = acc;
  return rep;
}

}  // namespace phi4
