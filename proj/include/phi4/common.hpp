#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace phi4 {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// (2pi)^d for d in {1,2,3}.
inline double pow_2pi(int d) {
  double r = 1.0;
  for (int i = 0; i < d; ++i) r *= kTwoPi;
  return r;
}

using cd = std::complex<double>;

// Compensated accumulator. Summation order fixed by the caller.
struct KahanSum {
  double s = 0.0;
  double c = 0.0;
  void add(double x) {
    double y = x - c;
    double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  double value() const { return s; }
};

// Splits [0, n) into a fixed number of chunks and reduces them in chunk order,
// so the result does not depend on the number of worker threads.
double parallel_sum(std::int64_t n, const std::function<double(std::int64_t)>& term);

// Same chunking, but the per-index callback accumulates into a small vector of
// accumulators (used when several sums share one sweep).
void parallel_sum_multi(std::int64_t n, int n_out,
                        const std::function<void(std::int64_t, double*)>& term,
                        double* out);

// Deterministic RNG. All distributions are hand-rolled on top of mt19937_64 so
// that streams are reproducible across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{seed, stream, std::uint64_t{0x9e3779b97f4a7c15ULL}};
    eng_.seed(seq);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Standard normal (Box-Muller, cosine branch).
  double gauss() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  // Complex normal with E|z|^2 = 1, E z^2 = 0.
  cd cgauss() {
    double re = gauss();
    double im = gauss();
    return cd(re, im) * (1.0 / std::sqrt(2.0));
  }

  std::uint64_t raw() { return eng_(); }

  std::string save_state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }
  void restore_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (!is) throw std::runtime_error("rng: bad serialized state");
  }

 private:
  std::mt19937_64 eng_;
};

// zeta(3/2) by Euler-Maclaurin: sum_{n<=N} n^{-s} + N^{1-s}/(s-1) - N^{-s}/2
// + s N^{-s-1}/12 - s(s+1)(s+2) N^{-s-3}/720.
double zeta_three_halves();

struct Quadrature {
  std::vector<double> x;
  std::vector<double> w;
};

// Gauss-Legendre on [-1, 1].
Quadrature gauss_legendre(int n);
// Gauss-Legendre mapped to [a, b].
Quadrature gauss_legendre(int n, double a, double b);
// Gauss-Laguerre for integrals of e^{-x} f(x) on [0, inf).
Quadrature gauss_laguerre(int n);

// Mean / standard error of a scalar sample.
struct MeanErr {
  double mean = 0.0;
  double stderr_ = 0.0;
};
MeanErr sample_mean(const std::vector<double>& xs);

// Batch-means estimate for correlated series: mean, stderr corrected by the
// integrated autocorrelation time tau, and the effective sample size n/tau.
struct SeriesStats {
  double mean = 0.0;
  double stderr_ = 0.0;
  double tau = 1.0;
  double n_eff = 0.0;
};
SeriesStats batch_means(const std::vector<double>& xs, int n_batches = 64);

}  // namespace phi4
