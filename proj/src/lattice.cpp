#include "phi4/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace phi4 {

namespace {

constexpr std::size_t kMaxModes = 20'000'000;

double norm2(const Ivec& k) {
  return static_cast<double>(k[0]) * k[0] + static_cast<double>(k[1]) * k[1] +
         static_cast<double>(k[2]) * k[2];
}

}  // namespace

std::string to_string(CutoffKind kind) {
  switch (kind) {
    case CutoffKind::sharp_ball: return "sharp_ball";
    case CutoffKind::sharp_h: return "sharp_h";
    case CutoffKind::smooth: return "smooth";
  }
  return "?";
}

CutoffKind cutoff_kind_from_string(const std::string& s) {
  if (s == "sharp_ball" || s == "sharp") return CutoffKind::sharp_ball;
  if (s == "sharp_h") return CutoffKind::sharp_h;
  if (s == "smooth") return CutoffKind::smooth;
  throw std::invalid_argument("unknown cutoff kind: " + s);
}

double smooth_profile(double y) {
  if (y <= 0.5) return 1.0;
  if (y >= 1.0) return 0.0;
  double t = 2.0 * y - 1.0;  // in (0, 1)
  double s = t * t * t * (t * (6.0 * t - 15.0) + 10.0);
  return 1.0 - s;
}

ModeLattice::ModeLattice(int d, int N, CutoffKind kind, std::vector<Ivec> modes,
                         std::vector<double> chi)
    : d_(d), N_(N), kind_(kind), modes_(std::move(modes)), chi_(std::move(chi)) {
  h_.resize(modes_.size());
  index_.reserve(modes_.size() * 2);
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    h_[i] = 1.0 + norm2(modes_[i]);
    index_[pack_mode(modes_[i])] = static_cast<int>(i);
  }
}

double ModeLattice::wick_constant() const {
  KahanSum s;
  for (std::size_t i = 0; i < modes_.size(); ++i) s.add(chi_[i] * chi_[i] / h_[i]);
  return s.value() / pow_2pi(d_);
}

LatticePtr build_lattice(int d, int N, CutoffKind kind) {
  if (d < 1 || d > 3) throw std::invalid_argument("build_lattice: d must be 1, 2 or 3");
  if (N < 0) throw std::invalid_argument("build_lattice: N must be >= 0");

  // Enumeration radius per axis.
  int R = N;
  if (kind == CutoffKind::sharp_h || kind == CutoffKind::smooth) {
    // <k>^2 <= (N+1)^2 needs |k_i| <= sqrt((N+1)^2 - 1); smooth support is <k> < N+1.
    R = static_cast<int>(std::floor(std::sqrt(static_cast<double>(N + 1) * (N + 1) - 1.0)));
  }
  {
    double count = 1.0;
    for (int i = 0; i < d; ++i) count *= 2.0 * R + 1.0;
    if (count > static_cast<double>(kMaxModes))
      throw std::invalid_argument("build_lattice: mode budget exceeded");
  }

  std::vector<Ivec> modes;
  std::vector<double> chi;
  const int r1 = R;
  const int r2 = d >= 2 ? R : 0;
  const int r3 = d >= 3 ? R : 0;
  for (int a = -r1; a <= r1; ++a)
    for (int b = -r2; b <= r2; ++b)
      for (int c = -r3; c <= r3; ++c) {
        Ivec k{a, b, c};
        double k2 = norm2(k);
        double w = 0.0;
        switch (kind) {
          case CutoffKind::sharp_ball:
            if (k2 <= static_cast<double>(N) * N) w = 1.0;
            break;
          case CutoffKind::sharp_h:
            if (1.0 + k2 <= static_cast<double>(N + 1) * (N + 1)) w = 1.0;
            break;
          case CutoffKind::smooth:
            w = smooth_profile(std::sqrt(1.0 + k2) / (N + 1));
            break;
        }
        if (w > 0.0) {
          modes.push_back(k);
          chi.push_back(w);
        }
      }
  if (modes.size() > kMaxModes) throw std::invalid_argument("build_lattice: mode budget exceeded");
  return std::make_shared<const ModeLattice>(d, N, kind, std::move(modes), std::move(chi));
}

std::string ModeLattice::to_json() const {
  nlohmann::json j;
  j["d"] = d_;
  j["N"] = N_;
  j["kind"] = phi4::to_string(kind_);
  auto ms = nlohmann::json::array();
  auto cs = nlohmann::json::array();
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    ms.push_back({modes_[i][0], modes_[i][1], modes_[i][2]});
    cs.push_back(chi_[i]);
  }
  j["modes"] = std::move(ms);
  j["chi"] = std::move(cs);
  return j.dump();
}

LatticePtr ModeLattice::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  int d = j.at("d").get<int>();
  int N = j.at("N").get<int>();
  CutoffKind kind = cutoff_kind_from_string(j.at("kind").get<std::string>());
  std::vector<Ivec> modes;
  std::vector<double> chi;
  for (const auto& m : j.at("modes")) modes.push_back({m[0].get<int>(), m[1].get<int>(), m[2].get<int>()});
  for (const auto& c : j.at("chi")) chi.push_back(c.get<double>());
  if (modes.size() != chi.size())
    throw std::invalid_argument("lattice json: modes/chi length mismatch");
  return std::make_shared<const ModeLattice>(d, N, kind, std::move(modes), std::move(chi));
}

DifferenceSet::DifferenceSet(const ModeLattice& lat) {
  std::unordered_map<std::int64_t, Ivec> by_key;
  for (std::size_t i = 0; i < lat.size(); ++i)
    for (std::size_t j = 0; j < lat.size(); ++j) {
      const Ivec& a = lat.mode(i);
      const Ivec& b = lat.mode(j);
      Ivec k{a[0] - b[0], a[1] - b[1], a[2] - b[2]};
      by_key.emplace(pack_mode(k), k);
    }
  modes_.reserve(by_key.size());
  for (const auto& kv : by_key) modes_.push_back(kv.second);
  std::sort(modes_.begin(), modes_.end());
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    index_[pack_mode(modes_[i])] = static_cast<int>(i);
    if (modes_[i] == Ivec{0, 0, 0}) zero_ = static_cast<int>(i);
  }
}

}  // namespace phi4
