#include "phi4/counterterms.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace phi4 {

namespace {

// vhat and 1/<k>^2 keyed by integer |k|^2; valid for radial potentials.
struct RadialTables {
  std::vector<double> vhat;
  std::vector<double> inv_h;
  std::vector<double> inv_3h;  // 1 / (3 + r2a + r2b + r2c) lookup, see below
};

RadialTables make_tables(const Potential& pot, int d, int K) {
  RadialTables t;
  const int r2_max = d * K * K;
  t.vhat.resize(static_cast<size_t>(r2_max) + 1);
  t.inv_h.resize(static_cast<size_t>(r2_max) + 1);
  for (int r2 = 0; r2 <= r2_max; ++r2) {
    t.vhat[static_cast<size_t>(r2)] = pot.hat_r2(static_cast<double>(r2));
    t.inv_h[static_cast<size_t>(r2)] = 1.0 / (1.0 + static_cast<double>(r2));
  }
  t.inv_3h.resize(static_cast<size_t>(3 * r2_max) + 4);
  for (std::size_t n = 3; n < t.inv_3h.size(); ++n)
    t.inv_3h[n] = 1.0 / static_cast<double>(n);
  return t;
}


// Canonical representatives 0 <= a <= b <= c of the signed-permutation orbits,
// with orbit sizes; valid only for radial summands.
struct ConeEntry {
  Ivec k;
  double weight;
};

std::vector<ConeEntry> canonical_cone(int d, int K) {
  std::vector<ConeEntry> out;
  auto push = [&](int a, int b, int c) {
    int comps[3] = {a, b, c};
    int nonzero = 0;
    for (int i = 0; i < d; ++i)
      if (comps[i] != 0) ++nonzero;
    // distinct axis arrangements of the sorted multiset
    double perms = 1.0;
    if (d == 2) {
      perms = (a == b) ? 1.0 : 2.0;
    } else if (d == 3) {
      if (a == b && b == c) perms = 1.0;
      else if (a == b || b == c) perms = 3.0;
      else perms = 6.0;
    }
    double w = perms * std::pow(2.0, nonzero);
    out.push_back({Ivec{a, b, c}, w});
  };
  if (d == 1) {
    for (int a = 0; a <= K; ++a) push(a, 0, 0);
  } else if (d == 2) {
    for (int a = 0; a <= K; ++a)
      for (int b = a; b <= K; ++b) push(a, b, 0);
  } else {
    for (int a = 0; a <= K; ++a)
      for (int b = a; b <= K; ++b)
        for (int c = b; c <= K; ++c) push(a, b, c);
  }
  return out;
}

// Inner sums over k2 for a fixed k1 inside R_K. Accumulates, with Kahan
// compensation, the six reductions needed by both forms of 6b.
struct InnerSums {
  KahanSum kb;        // sum of the resummed kernel
  KahanSum kb_v12;    // * vhat(k1+k2)
  KahanSum kb_v12v12; // * vhat(k1+k2)^2
  KahanSum kb_v2;     // * vhat(k2)
  KahanSum abc;       // sum of the direct kernel
  KahanSum abc_v2;    // * vhat(k2)
};

void inner_sums_radial(const Ivec& k1, int d, int K, const RadialTables& t, InnerSums& s) {
  const int x = k1[0], y = k1[1], z = k1[2];
  const int r2a = x * x + y * y + z * z;
  const double invA = t.inv_h[static_cast<size_t>(r2a)];
  const int base = 3 + r2a;
  auto range = [K](int comp) {
    return std::pair<int, int>{std::max(-K, -K - comp), std::min(K, K - comp)};
  };
  auto [plo, phi] = range(x);
  auto [qlo, qhi] = d >= 2 ? range(y) : std::pair<int, int>{0, 0};
  auto [rlo, rhi] = d >= 3 ? range(z) : std::pair<int, int>{0, 0};
  for (int p = plo; p <= phi; ++p) {
    const int pp = p * p;
    const int xp = (x + p) * (x + p);
    for (int q = qlo; q <= qhi; ++q) {
      const int pq2 = pp + q * q;
      const int xy2 = xp + (y + q) * (y + q);
      for (int r = rlo; r <= rhi; ++r) {
        const int r2b = pq2 + r * r;
        const int r2c = xy2 + (z + r) * (z + r);
        const double invB = t.inv_h[static_cast<size_t>(r2b)];
        const double invC = t.inv_h[static_cast<size_t>(r2c)];
        const double invAB = invA * invB;
        const double kb = invAB * t.inv_3h[static_cast<size_t>(base + r2b + r2c)];
        const double dk = invAB * invC;
        const double v2 = t.vhat[static_cast<size_t>(r2b)];
        const double v12 = t.vhat[static_cast<size_t>(r2c)];
        s.kb.add(kb);
        s.kb_v12.add(v12 * kb);
        s.kb_v12v12.add(v12 * v12 * kb);
        s.kb_v2.add(v2 * kb);
        s.abc.add(dk);
        s.abc_v2.add(v2 * dk);
      }
    }
  }
}

void inner_sums_table(const Ivec& k1, const Potential& pot, int d, int K, InnerSums& s) {
  const int x = k1[0], y = k1[1], z = k1[2];
  const double A = 1.0 + x * x + y * y + z * z;
  auto range = [K](int comp) {
    return std::pair<int, int>{std::max(-K, -K - comp), std::min(K, K - comp)};
  };
  auto [plo, phi] = range(x);
  auto [qlo, qhi] = d >= 2 ? range(y) : std::pair<int, int>{0, 0};
  auto [rlo, rhi] = d >= 3 ? range(z) : std::pair<int, int>{0, 0};
  for (int p = plo; p <= phi; ++p)
    for (int q = qlo; q <= qhi; ++q)
      for (int r = rlo; r <= rhi; ++r) {
        Ivec k2{p, q, r};
        Ivec k12{x + p, y + q, z + r};
        double B = 1.0 + p * p + q * q + r * r;
        double C = 1.0 + k12[0] * k12[0] + k12[1] * k12[1] + k12[2] * k12[2];
        double kb = 1.0 / (A * B * (A + B + C));
        double dk = 1.0 / (A * B * C);
        double v2 = pot.hat(k2);
        double v12 = pot.hat(k12);
        s.kb.add(kb);
        s.kb_v12.add(v12 * kb);
        s.kb_v12v12.add(v12 * v12 * kb);
        s.kb_v2.add(v2 * kb);
        s.abc.add(dk);
        s.abc_v2.add(v2 * dk);
      }
}

}  // namespace

namespace {

// Shared box sum (2pi)^{-d} sum_{|k|_inf<=K} vhat(eps k) * (1/<k>^2 or 1),
// with a sup-norm shell tail bound. green_power is the exponent on 1/<k>^2.
TruncatedValue box_sum_vhat(const Potential& pot, int d, int K_sum,
                            std::optional<double> tail_tol, int green_power, const char* who) {
  if (d < 1 || d > 3) throw std::invalid_argument(std::string(who) + ": d must be 1, 2 or 3");
  if (K_sum < 0) throw std::invalid_argument(std::string(who) + ": K_sum must be >= 0");

  const std::int64_t side = 2 * K_sum + 1;
  std::int64_t n = 1;
  for (int i = 0; i < d; ++i) n *= side;

  double sum = 0.0;
  if (pot.is_radial()) {
    const int r2_max = d * K_sum * K_sum;
    std::vector<double> vh(static_cast<size_t>(r2_max) + 1);
    for (int r2 = 0; r2 <= r2_max; ++r2)
      vh[static_cast<size_t>(r2)] = pot.hat_r2(static_cast<double>(r2));
    sum = parallel_sum(n, [&](std::int64_t idx) {
      std::int64_t rest = idx;
      int r2 = 0;
      for (int axis = 0; axis < d; ++axis) {
        int c = static_cast<int>(rest % side) - K_sum;
        rest /= side;
        r2 += c * c;
      }
      double g = green_power ? 1.0 / (1.0 + static_cast<double>(r2)) : 1.0;
      return vh[static_cast<size_t>(r2)] * g;
    });
  } else {
    sum = parallel_sum(n, [&](std::int64_t idx) {
      std::int64_t rest = idx;
      Ivec k{0, 0, 0};
      for (int axis = 0; axis < d; ++axis) {
        k[static_cast<size_t>(axis)] = static_cast<int>(rest % side) - K_sum;
        rest /= side;
      }
      double r2 = static_cast<double>(k[0]) * k[0] + k[1] * k[1] + k[2] * k[2];
      double g = green_power ? 1.0 / (1.0 + r2) : 1.0;
      return pot.hat(k) * g;
    });
  }

  TruncatedValue out;
  out.K_sum = K_sum;
  out.value = sum / pow_2pi(d);

  // Tail estimate over sup-norm shells m > K_sum. Radial kinds are
  // monotonically decreasing in |k|, so the shell minimum |k|^2 = m^2 bounds
  // every mode in the shell.
  if (pot.is_radial()) {
    KahanSum tail;
    double prev_side = std::pow(2.0 * K_sum + 1.0, d);
    const int m_cap = std::max(8 * (K_sum + 1), K_sum + 64);
    double last_term = 0.0;
    int last_m = K_sum;
    for (int m = K_sum + 1; m <= m_cap; ++m) {
      double cur_side = std::pow(2.0 * m + 1.0, d);
      double count = cur_side - prev_side;
      prev_side = cur_side;
      double r2 = static_cast<double>(m) * m;
      last_term = count * pot.hat_r2(r2) * (green_power ? 1.0 / (1.0 + r2) : 1.0);
      last_m = m;
      tail.add(last_term);
      if (last_term < 1e-18 * (std::abs(sum) + 1.0)) break;
    }
    double remainder = 0.0;
    if (pot.kind() == PotentialKind::bessel && last_term > 0.0) {
      // terms ~ m^{d-1-beta-2*green_power}: power-law remainder
      double decay = pot.beta() + 2.0 * green_power - static_cast<double>(d);
      if (decay > 0.5) remainder = last_term * static_cast<double>(last_m) / decay;
    }
    out.tail_bound = (tail.value() + remainder) / pow_2pi(d);
  } else {
    // finite support: anything outside the box is an exact leftover
    out.tail_bound = 0.0;
  }

  if (tail_tol && out.tail_bound > *tail_tol)
    throw TailError(std::string(who) + ": tail bound " + std::to_string(out.tail_bound) +
                    " exceeds tolerance " + std::to_string(*tail_tol));
  return out;
}

}  // namespace

TruncatedValue counterterm_a(const Potential& pot, int d, int K_sum,
                             std::optional<double> tail_tol) {
  return box_sum_vhat(pot, d, K_sum, tail_tol, 1, "counterterm_a");
}

TruncatedValue potential_at_origin(const Potential& pot, int d, int K_sum,
                                   std::optional<double> tail_tol) {
  return box_sum_vhat(pot, d, K_sum, tail_tol, 0, "potential_at_origin");
}

double counterterm_a_N(const Potential& pot, const ModeLattice& lat) {
  KahanSum s;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    double chi2 = lat.chi(i) * lat.chi(i);
    s.add(chi2 * pot.hat(lat.mode(i)) / lat.h(i));
  }
  return s.value() / pow_2pi(lat.d());
}

SunsetSums counterterm_b(const Potential& pot, int d, int K_sum) {
  if (d < 1 || d > 3) throw std::invalid_argument("counterterm_b: d must be 1, 2 or 3");
  if (K_sum < 0) throw std::invalid_argument("counterterm_b: K_sum must be >= 0");

  const bool radial = pot.is_radial();
  RadialTables tables;
  std::vector<ConeEntry> outer;
  if (radial) {
    tables = make_tables(pot, d, K_sum);
    outer = canonical_cone(d, K_sum);
  } else {
    // non-radial tables get the full box, weight 1
    const int K = K_sum;
    const int r2 = d >= 2 ? K : 0;
    const int r3 = d >= 3 ? K : 0;
    for (int a = -K; a <= K; ++a)
      for (int b = -r2; b <= r2; ++b)
        for (int c = -r3; c <= r3; ++c) outer.push_back({Ivec{a, b, c}, 1.0});
  }

  // accumulators: kb, kb_v12, kb_v12v12, kb_v2, abc, abc_v2 scaled by
  // vhat(k1)-powers and the orbit weight
  double acc[6] = {0, 0, 0, 0, 0, 0};
  parallel_sum_multi(
      static_cast<std::int64_t>(outer.size()), 6,
      [&](std::int64_t i, double* a) {
        const ConeEntry& e = outer[static_cast<size_t>(i)];
        InnerSums s;
        if (radial)
          inner_sums_radial(e.k, d, K_sum, tables, s);
        else
          inner_sums_table(e.k, pot, d, K_sum, s);
        double v1 = pot.hat(e.k);
        double w = e.weight;
        a[0] += w * s.kb_v12v12.value();            // b1
        a[1] += w * v1 * s.kb_v12.value();          // b2
        a[2] += w * v1 * v1 * s.kb.value();         // b3
        a[3] += w * v1 * s.kb_v2.value();           // b4
        a[4] += w * v1 * v1 * s.abc.value();        // direct, vhat(k1)^2 part
        a[5] += w * v1 * s.abc_v2.value();          // direct, vhat(k1) vhat(k2) part
      },
      acc);

  const double scale = 1.0 / (pow_2pi(d) * pow_2pi(d));
  SunsetSums out;
  out.K_sum = K_sum;
  out.b1 = scale * acc[0];
  out.b2 = scale * acc[1];
  out.b3 = scale * acc[2];
  out.b4 = scale * acc[3];
  out.six_b_resummed = out.b1 + 2.0 * out.b2 + 2.0 * out.b3 + out.b4;
  out.six_b_direct = scale * (acc[4] + acc[5]);
  return out;
}

SunsetSums counterterm_b_N(const Potential& pot, const ModeLattice& lat) {
  const std::size_t K = lat.size();
  std::vector<double> vh(K), chi2(K);
  for (std::size_t i = 0; i < K; ++i) {
    vh[i] = pot.hat(lat.mode(i));
    chi2[i] = lat.chi(i) * lat.chi(i);
  }
  double acc[6] = {0, 0, 0, 0, 0, 0};
  parallel_sum_multi(
      static_cast<std::int64_t>(K), 6,
      [&](std::int64_t i1, double* a) {
        const Ivec& k1 = lat.mode(static_cast<size_t>(i1));
        const double A = lat.h(static_cast<size_t>(i1));
        const double v1 = vh[static_cast<size_t>(i1)];
        const double c1 = chi2[static_cast<size_t>(i1)];
        KahanSum t[6];
        for (std::size_t i2 = 0; i2 < K; ++i2) {
          const Ivec& k2 = lat.mode(i2);
          Ivec k12{k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2]};
          int i12 = lat.find(k12);
          if (i12 < 0) continue;  // chi = 0 outside the lattice
          double c = c1 * chi2[i2] * chi2[static_cast<size_t>(i12)];
          double B = lat.h(i2);
          double C = lat.h(static_cast<size_t>(i12));
          double kb = c / (A * B * (A + B + C));
          double dk = c / (A * B * C);
          double v2 = vh[i2];
          double v12 = vh[static_cast<size_t>(i12)];
          t[0].add(v12 * v12 * kb);
          t[1].add(v12 * kb);
          t[2].add(kb);
          t[3].add(v2 * kb);
          t[4].add(dk);
          t[5].add(v2 * dk);
        }
        a[0] += t[0].value();
        a[1] += v1 * t[1].value();
        a[2] += v1 * v1 * t[2].value();
        a[3] += v1 * t[3].value();
        a[4] += v1 * v1 * t[4].value();
        a[5] += v1 * t[5].value();
      },
      acc);
  const double scale = 1.0 / (pow_2pi(lat.d()) * pow_2pi(lat.d()));
  SunsetSums out;
  out.K_sum = lat.N();
  out.b1 = scale * acc[0];
  out.b2 = scale * acc[1];
  out.b3 = scale * acc[2];
  out.b4 = scale * acc[3];
  out.six_b_resummed = out.b1 + 2.0 * out.b2 + 2.0 * out.b3 + out.b4;
  out.six_b_direct = scale * (acc[4] + acc[5]);
  return out;
}

namespace detail {

namespace {

// Angular integral over s = cos(angle) of g(|x - y|) in closed form:
// int_{-1}^{1} g(rho) ds = dphi(|rx - ry|, rx + ry) / (rx ry),
// dphi(a, b) = int_a^b rho g(rho) drho. The remaining integrand
//   I(rx, ry) = 2 g(ry) - dphi(|rx - ry|, rx + ry) / (rx ry)
// is O(rx^2) near rx = 0; the first-order Taylor correction integrates to
// zero over the sphere, so it never appears after the angular reduction.
// For ry >> rx both terms approach 2 g(ry); a dphi evaluated as a cancelling
// difference of O(1) antiderivatives turns that region into amplified noise
// under the 1/w tail map, hence the interval form of the callback.
struct WindowIntegrand {
  const std::function<double(double)>& g;
  const std::function<double(double, double)>& dphi;

  double operator()(double rx, double ry) const {
    double a = std::abs(rx - ry);
    double b = rx + ry;
    return 2.0 * g(ry) - dphi(a, b) / (rx * ry);
  }
};

// Composite Gauss-Legendre over the given breakpoints.
double integrate_panels(const std::function<double(double)>& f,
                        const std::vector<double>& breaks, int n_nodes) {
  static thread_local std::vector<std::pair<int, Quadrature>> cache;
  const Quadrature* base = nullptr;
  for (auto& kv : cache)
    if (kv.first == n_nodes) base = &kv.second;
  if (!base) {
    cache.emplace_back(n_nodes, gauss_legendre(n_nodes));
    base = &cache.back().second;
  }
  KahanSum s;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    double a = breaks[p], b = breaks[p + 1];
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (std::size_t i = 0; i < base->x.size(); ++i)
      s.add(half * base->w[i] * f(mid + half * base->x[i]));
  }
  return s.value();
}

// int_0^infty I(rx, ry) dry with a kink at ry = rx and tails handled by the
// 1/w map. Decay of g is probed numerically to choose the cut.
double inner_ry_integral(const WindowIntegrand& I, double rx, int n_nodes) {
  double r_decay = 1.0;
  while (r_decay < 1e4 && std::abs(I.g(r_decay)) > 1e-22) r_decay *= 1.5;
  double finite_end = std::max(rx + 2.0 * r_decay, 2.0 * r_decay);

  std::vector<double> raw{0.5 * std::min(rx, 1.0),
                          std::min(rx, 1.0),
                          rx - r_decay,
                          rx - 1.0,
                          rx,
                          rx + 1.0,
                          rx + r_decay,
                          1.0,
                          0.5 * r_decay,
                          r_decay,
                          2.0 * r_decay};
  std::vector<double> breaks{0.0};
  std::sort(raw.begin(), raw.end());
  for (double v : raw)
    if (v > breaks.back() + 1e-12 && v < finite_end) breaks.push_back(v);
  breaks.push_back(finite_end);

  double finite = integrate_panels([&](double ry) { return I(rx, ry); }, breaks, n_nodes);

  // tail int_{finite_end}^infty via ry = 1/w
  double w_end = 1.0 / finite_end;
  double tail = integrate_panels(
      [&](double w) {
        double ry = 1.0 / w;
        return I(rx, ry) / (w * w);
      },
      {1e-9, w_end}, n_nodes);
  return finite + tail;
}

double window_value(const std::function<double(double)>& g,
                    const std::function<double(double, double)>& dphi, bool outer_one,
                    int n_nodes) {
  WindowIntegrand I{g, dphi};
  auto F = [&](double rx) { return inner_ry_integral(I, rx, n_nodes); };

  // rx in (0, 1]: direct panels; integrand is smooth and O(1) at 0.
  double inner = integrate_panels(
      [&](double rx) { return (outer_one ? 1.0 : g(rx)) * F(rx) / (2.0 * rx * rx); },
      {1e-7, 0.1, 0.3, 0.6, 1.0}, n_nodes);

  // rx in [1, infty): rx = 1/w turns the measure drx / rx^2 into dw.
  double outer = integrate_panels(
      [&](double w) {
        double rx = 1.0 / w;
        return (outer_one ? 1.0 : g(rx)) * F(rx) * 0.5;
      },
      {1e-6, 0.05, 0.2, 0.5, 1.0}, n_nodes);

  const double pref = 1.0 / (8.0 * kPi * kPi * kPi * kPi);
  return pref * (inner + outer);
}

}  // namespace

double c_window_integral(const std::function<double(double)>& g,
                         const std::function<double(double, double)>& dphi, bool outer_one,
                         int n_nodes) {
  return window_value(g, dphi, outer_one, n_nodes);
}

double window_integrand_value(const std::function<double(double)>& g,
                              const std::function<double(double, double)>& dphi, double rx,
                              double ry) {
  return WindowIntegrand{g, dphi}(rx, ry);
}

}  // namespace detail

C1C2 counterterm_C1_C2(const Potential& pot) {
  if (!pot.is_radial())
    throw std::invalid_argument("counterterm_C1_C2: radial profile required");
  std::function<double(double)> g = [&pot](double r) { return pot.profile(r); };
  // dphi differences the decaying tails, keeping full precision at large radii
  std::function<double(double, double)> dphi;
  if (pot.kind() == PotentialKind::gaussian) {
    double c = pot.c();
    dphi = [c](double a, double b) {
      return (std::exp(-c * a * a) - std::exp(-c * b * b)) / (2.0 * c);
    };
  } else {
    double beta = pot.beta();
    dphi = [beta](double a, double b) {
      double q = 1.0 - beta / 2.0;
      return (std::pow(1.0 + a * a, q) - std::pow(1.0 + b * b, q)) / (beta - 2.0);
    };
  }
  C1C2 out;
  double c1_lo = detail::c_window_integral(g, dphi, false, 24);
  double c2_lo = detail::c_window_integral(g, dphi, true, 24);
  out.C1 = detail::c_window_integral(g, dphi, false, 40);
  out.C2 = detail::c_window_integral(g, dphi, true, 40);
  out.quad_error = std::max(std::abs(out.C1 - c1_lo), std::abs(out.C2 - c2_lo));
  return out;
}

C1C2Eps counterterm_c1_c2_eps(const Potential& pot, double t, int K_sum) {
  if (!(t > 0.0)) throw std::invalid_argument("counterterm_c1_c2_eps: t must be > 0");
  if (K_sum < 1) throw std::invalid_argument("counterterm_c1_c2_eps: K_sum must be >= 1");
  if (pot.kind() != PotentialKind::gaussian)
    throw std::invalid_argument(
        "counterterm_c1_c2_eps: only the separable gaussian profile is supported");
  const int d = 3;
  const int K = K_sum;
  const double ce2 = pot.c() * pot.eps() * pot.eps();

  // S_a = sum_{|k|_inf <= K} vhat(eps k) / <k>^2
  const double S_a = counterterm_a(pot, d, K).value * pow_2pi(d);

  // s-quadrature for 1/<k>^2 = int_0^inf e^{-s} e^{-s |k|^2} ds, s = e^u - 1.
  const double s_max = 46.0;
  std::vector<double> breaks;
  for (double u : {0.0, 0.02, 0.1, 0.4, 1.0, 2.0, 3.0, std::log(1.0 + s_max)})
    breaks.push_back(u);
  const int nodes_per_panel = 24;
  Quadrature base = gauss_legendre(nodes_per_panel);
  std::vector<double> s_nodes, s_weights;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    double a = breaks[p], b = breaks[p + 1];
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int i = 0; i < nodes_per_panel; ++i) {
      double u = mid + half * base.x[static_cast<size_t>(i)];
      double s = std::exp(u) - 1.0;
      s_nodes.push_back(s);
      s_weights.push_back(half * base.w[static_cast<size_t>(i)] * std::exp(u) * std::exp(-s));
    }
  }
  const std::size_t n_s = s_nodes.size();

  // theta(s, m) = sum_{q = -K..K} e^{-c eps^2 (m - q)^2} e^{-s q^2}
  const int side = 2 * K + 1;
  std::vector<double> theta(n_s * static_cast<size_t>(side));
  for (std::size_t is = 0; is < n_s; ++is) {
    double s = s_nodes[is];
    for (int m = -K; m <= K; ++m) {
      KahanSum acc;
      for (int q = -K; q <= K; ++q) {
        double dm = static_cast<double>(m - q);
        acc.add(std::exp(-ce2 * dm * dm - s * static_cast<double>(q) * q));
      }
      theta[is * static_cast<size_t>(side) + static_cast<size_t>(m + K)] = acc.value();
    }
  }

  // outer sweep over k1 in the box; weight w(k1) = (1 - e^{-2 t <k1>^2}) / (2 <k1>^4)
  std::int64_t n_outer = static_cast<std::int64_t>(side) * side * side;
  double acc[2] = {0.0, 0.0};
  parallel_sum_multi(
      n_outer, 2,
      [&](std::int64_t idx, double* a) {
        std::int64_t rest = idx;
        int m[3];
        for (int axis = 0; axis < 3; ++axis) {
          m[axis] = static_cast<int>(rest % side) - K;
          rest /= side;
        }
        double r2 = static_cast<double>(m[0]) * m[0] + static_cast<double>(m[1]) * m[1] +
                    static_cast<double>(m[2]) * m[2];
        double h = 1.0 + r2;
        double w = (1.0 - std::exp(-2.0 * t * h)) / (2.0 * h * h);
        double T = 0.0;
        for (std::size_t is = 0; is < n_s; ++is) {
          const double* row = &theta[is * static_cast<size_t>(side)];
          T += s_weights[is] * row[m[0] + K] * row[m[1] + K] * row[m[2] + K];
        }
        double inner = S_a - T;
        double v1 = std::exp(-ce2 * r2);
        a[0] += v1 * w * inner;
        a[1] += w * inner;
      },
      acc);

  // analytic tail of the S_a part of c2 beyond the box: lattice sum of w out
  // to 4K, then the radial integral remainder.
  const int K2 = std::max(4 * K, 200);
  double w_out = parallel_sum(static_cast<std::int64_t>(2 * K2 + 1) * (2 * K2 + 1) * (2 * K2 + 1),
                              [&](std::int64_t idx) {
                                const std::int64_t s2 = 2 * K2 + 1;
                                std::int64_t rest = idx;
                                int m[3];
                                for (int axis = 0; axis < 3; ++axis) {
                                  m[axis] = static_cast<int>(rest % s2) - K2;
                                  rest /= s2;
                                }
                                if (std::abs(m[0]) <= K && std::abs(m[1]) <= K &&
                                    std::abs(m[2]) <= K)
                                  return 0.0;
                                double r2 = static_cast<double>(m[0]) * m[0] +
                                            static_cast<double>(m[1]) * m[1] +
                                            static_cast<double>(m[2]) * m[2];
                                double h = 1.0 + r2;
                                return (1.0 - std::exp(-2.0 * t * h)) / (2.0 * h * h);
                              });
  const double R = static_cast<double>(K2);
  w_out += 4.0 * kPi * 0.5 * (kPi / 4.0 - 0.5 * std::atan(R) + R / (2.0 * (1.0 + R * R)));

  const double scale = 1.0 / (pow_2pi(d) * pow_2pi(d));
  C1C2Eps out;
  out.K_sum = K;
  out.c1 = scale * acc[0];
  out.c2 = scale * (acc[1] + S_a * w_out);
  return out;
}

CountertermTable build_counterterm_table(const Potential& pot, int d, int K_sum_a, int K_sum_b) {
  CountertermTable t;
  t.eps = pot.eps();
  t.potential = pot.describe();
  t.K_sum_a = K_sum_a;
  t.K_sum_b = K_sum_b;
  t.a_eps = counterterm_a(pot, d, K_sum_a).value;
  t.six_b_eps = counterterm_b(pot, d, K_sum_b).six_b_direct;
  t.v_eps_zero = potential_at_origin(pot, d, K_sum_a).value;
  if (d == 3 && pot.is_radial()) {
    C1C2 c = counterterm_C1_C2(pot);
    t.C1 = c.C1;
    t.C2 = c.C2;
  } else {
    // no continuum window in d != 3; the finite parts are zero by convention
    t.C1 = 0.0;
    t.C2 = 0.0;
  }
  return t;
}

}  // namespace phi4
