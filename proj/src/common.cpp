#include "phi4/common.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <thread>

namespace phi4 {

namespace {

int worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 4;
  return static_cast<int>(std::min(hw, 16u));
}

}  // namespace

double parallel_sum(std::int64_t n, const std::function<double(std::int64_t)>& term) {
  std::vector<double> out(1);
  parallel_sum_multi(n, 1, [&](std::int64_t i, double* acc) { acc[0] += term(i); }, out.data());
  return out[0];
}

void parallel_sum_multi(std::int64_t n, int n_out,
                        const std::function<void(std::int64_t, double*)>& term,
                        double* out) {
  if (n <= 0) {
    std::fill(out, out + n_out, 0.0);
    return;
  }
  const std::int64_t n_chunks = std::min<std::int64_t>(n, 256);
  const std::int64_t chunk = (n + n_chunks - 1) / n_chunks;

  // Per-chunk plain accumulation, then a Kahan combine in chunk order.
  std::vector<std::vector<double>> partial(static_cast<size_t>(n_chunks),
                                           std::vector<double>(n_out, 0.0));
  std::atomic<std::int64_t> next{0};
  auto work = [&]() {
    std::vector<double> acc(n_out);
    for (;;) {
      std::int64_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      std::fill(acc.begin(), acc.end(), 0.0);
      const std::int64_t lo = c * chunk;
      const std::int64_t hi = std::min(n, lo + chunk);
      for (std::int64_t i = lo; i < hi; ++i) term(i, acc.data());
      partial[static_cast<size_t>(c)] = acc;
    }
  };
  const int n_threads = static_cast<int>(std::min<std::int64_t>(worker_count(), n_chunks));
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (int j = 0; j < n_out; ++j) {
    KahanSum k;
    for (std::int64_t c = 0; c < n_chunks; ++c) k.add(partial[static_cast<size_t>(c)][j]);
    out[j] = k.value();
  }
}

double zeta_three_halves() {
  static const double z = [] {
    const double s = 1.5;
    const int N = 4000;
    KahanSum k;
    for (int n = 1; n <= N; ++n) k.add(std::pow(static_cast<double>(n), -s));
    double Nn = static_cast<double>(N);
    double v = k.value();
    v += std::pow(Nn, 1.0 - s) / (s - 1.0);
    v -= 0.5 * std::pow(Nn, -s);
    v += s * std::pow(Nn, -s - 1.0) / 12.0;
    v -= s * (s + 1.0) * (s + 2.0) * std::pow(Nn, -s - 3.0) / 720.0;
    return v;
  }();
  return z;
}

Quadrature gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n >= 1 required");
  Quadrature q;
  q.x.resize(static_cast<size_t>(n));
  q.w.resize(static_cast<size_t>(n));
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Chebyshev-style initial guess, then Newton on P_n.
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    q.x[static_cast<size_t>(i)] = -x;
    q.x[static_cast<size_t>(n - 1 - i)] = x;
    double w = 2.0 / ((1.0 - x * x) * pp * pp);
    q.w[static_cast<size_t>(i)] = w;
    q.w[static_cast<size_t>(n - 1 - i)] = w;
  }
  return q;
}

Quadrature gauss_legendre(int n, double a, double b) {
  Quadrature q = gauss_legendre(n);
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  for (size_t i = 0; i < q.x.size(); ++i) {
    q.x[i] = mid + half * q.x[i];
    q.w[i] *= half;
  }
  return q;
}

Quadrature gauss_laguerre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_laguerre: n >= 1 required");
  // Golub-Welsch: Jacobi matrix of the Laguerre recurrence.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    J(i, i) = 2.0 * i + 1.0;
    if (i + 1 < n) {
      double b = static_cast<double>(i + 1);
      J(i, i + 1) = b;
      J(i + 1, i) = b;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J, Eigen::EigenvaluesOnly);
  Quadrature q;
  q.x.resize(static_cast<size_t>(n));
  q.w.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    // The eigenvector route loses the tiny tail weights to eigensolver noise,
    // so evaluate w_i = x_i / ((n+1) L_{n+1}(x_i))^2 by upward recurrence,
    // rescaling to keep the polynomial value in range.
    const double x = es.eigenvalues()(i);
    double lkm1 = 1.0, lk = 1.0 - x;
    double log_scale = 0.0;
    for (int k = 1; k <= n; ++k) {
      double lkp1 = ((2.0 * k + 1.0 - x) * lk - k * lkm1) / (k + 1.0);
      lkm1 = lk;
      lk = lkp1;
      if (std::abs(lk) > 1e200) {
        lk *= 1e-200;
        lkm1 *= 1e-200;
        log_scale += 200.0 * std::log(10.0);
      }
    }
    double log_w = std::log(x) - 2.0 * (std::log(std::abs(lk)) + log_scale) -
                   2.0 * std::log(static_cast<double>(n + 1));
    q.x[static_cast<size_t>(i)] = x;
    q.w[static_cast<size_t>(i)] = std::exp(log_w);
  }
  return q;
}

MeanErr sample_mean(const std::vector<double>& xs) {
  MeanErr r;
  if (xs.empty()) return r;
  KahanSum s;
  for (double x : xs) s.add(x);
  r.mean = s.value() / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    KahanSum v;
    for (double x : xs) v.add((x - r.mean) * (x - r.mean));
    double var = v.value() / static_cast<double>(xs.size() - 1);
    r.stderr_ = std::sqrt(var / static_cast<double>(xs.size()));
  }
  return r;
}

SeriesStats batch_means(const std::vector<double>& xs, int n_batches) {
  SeriesStats r;
  const std::int64_t n = static_cast<std::int64_t>(xs.size());
  if (n == 0) return r;
  MeanErr naive = sample_mean(xs);
  r.mean = naive.mean;
  if (n < 2 * n_batches) {
    r.stderr_ = naive.stderr_;
    r.tau = 1.0;
    r.n_eff = static_cast<double>(n);
    return r;
  }
  const std::int64_t b = n / n_batches;
  std::vector<double> bm(static_cast<size_t>(n_batches));
  for (int i = 0; i < n_batches; ++i) {
    KahanSum s;
    for (std::int64_t j = i * b; j < (i + 1) * b; ++j) s.add(xs[static_cast<size_t>(j)]);
    bm[static_cast<size_t>(i)] = s.value() / static_cast<double>(b);
  }
  MeanErr batch = sample_mean(bm);
  r.mean = batch.mean;
  r.stderr_ = batch.stderr_;
  // tau = b * Var(batch mean) / Var(x); clamp away degenerate estimates.
  KahanSum vx;
  for (double x : xs) vx.add((x - naive.mean) * (x - naive.mean));
  double var_x = vx.value() / static_cast<double>(n - 1);
  double var_b = batch.stderr_ * batch.stderr_ * static_cast<double>(n_batches);
  double tau = var_x > 0.0 ? (static_cast<double>(b) * var_b / var_x) : 1.0;
  r.tau = std::max(1.0, tau);
  r.n_eff = static_cast<double>(n) / r.tau;
  return r;
}

}  // namespace phi4
