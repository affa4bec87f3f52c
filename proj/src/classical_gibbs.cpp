#include "phi4/classical_gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace phi4 {

namespace {

void require_pos(int n, const char* what) {
  if (n <= 0) throw std::invalid_argument(std::string("classical_gibbs: ") + what + " must be positive");
}

double energy_or_throw(const WickTransform& wick, const SpectralField& u,
                       const InteractionSpec& spec) {
  double d = wick.energy_D(u, spec);
  if (std::isnan(d)) throw std::runtime_error("classical_gibbs: interaction energy is NaN");
  return d;
}

// Negative log density of the target w.r.t. flat measure on coefficients:
// sum_k <k>^2 |z_k|^2 / chi_k^2 + D(u).
double full_energy(const WickTransform& wick, const SpectralField& u,
                   const InteractionSpec& spec) {
  const ModeLattice& lat = *u.lat;
  KahanSum g;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    double c = lat.chi(i);
    g.add(lat.h(i) * std::norm(u.z[i]) / (c * c));
  }
  return g.value() + energy_or_throw(wick, u, spec);
}

struct ChainResult {
  std::vector<cd> data;
  std::size_t kept = 0;
  double acceptance = 1.0;
  double trace_tau = 1.0;
};

ChainResult run_chain(const LatticePtr& lat, const WickTransform& wick,
                      const InteractionSpec& spec, const McmcConfig& cfg, Rng& rng) {
  require_pos(cfg.n_samples, "n_samples");
  require_pos(cfg.thin, "thin");
  if (cfg.burn_in < 0) throw std::invalid_argument("classical_gibbs: burn_in must be >= 0");

  const std::size_t K = lat->size();
  ChainResult out;
  out.data.reserve(static_cast<std::size_t>(cfg.n_samples) * K);
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(cfg.n_samples));

  SpectralField u = sample_gff_field(lat, rng);
  std::int64_t total = static_cast<std::int64_t>(cfg.burn_in) +
                       static_cast<std::int64_t>(cfg.n_samples) * cfg.thin;
  std::int64_t accepted = 0;

  if (cfg.sampler == SamplerKind::independence) {
    double e_cur = energy_or_throw(wick, u, spec);
    for (std::int64_t step = 0; step < total; ++step) {
      SpectralField prop = sample_gff_field(lat, rng);
      double e_prop = energy_or_throw(wick, prop, spec);
      // acceptance exp(D(u) - D(u')); +inf proposals fall through as rejects
      double log_a = e_cur - e_prop;
      if (log_a >= 0.0 || std::log(1.0 - rng.uniform()) < log_a) {
        u = std::move(prop);
        e_cur = e_prop;
        ++accepted;
      }
      std::int64_t past = step + 1 - cfg.burn_in;
      if (past > 0 && past % cfg.thin == 0) {
        out.data.insert(out.data.end(), u.z.begin(), u.z.end());
        trace.push_back(u.norm2());
      }
    }
  } else {
    if (cfg.h_mala <= 0.0) throw std::invalid_argument("classical_gibbs: h_mala must be positive");
    const double h = cfg.h_mala;
    // preconditioner per complex mode: chi^2 / <k>^2 (the mu0 covariance scale)
    std::vector<double> prec(K);
    for (std::size_t i = 0; i < K; ++i) prec[i] = lat->chi(i) * lat->chi(i) / lat->h(i);

    auto drift = [&](const SpectralField& f) {
      // 2 dF/dzbar per mode: Gaussian part + interaction part
      std::vector<cd> g = wick.gradient(f, spec);
      for (std::size_t i = 0; i < K; ++i) {
        double c = lat->chi(i);
        g[i] = 2.0 * (lat->h(i) / (c * c) * f.z[i] + g[i]);
      }
      return g;
    };
    // log transition density z -> z', fixed preconditioner: -|z' - mean|^2/(4 h prec)
    auto log_q = [&](const std::vector<cd>& to, const SpectralField& from,
                     const std::vector<cd>& drift_from) {
      KahanSum s;
      for (std::size_t i = 0; i < K; ++i) {
        cd mean = from.z[i] - h * prec[i] * drift_from[i];
        s.add(std::norm(to[i] - mean) / (4.0 * h * prec[i]));
      }
      return -s.value();
    };

    double e_cur = full_energy(wick, u, spec);
    std::vector<cd> g_cur = drift(u);
    SpectralField prop(lat);
    for (std::int64_t step = 0; step < total; ++step) {
      for (std::size_t i = 0; i < K; ++i) {
        cd noise = std::sqrt(4.0 * h * prec[i]) * rng.cgauss();
        prop.z[i] = u.z[i] - h * prec[i] * g_cur[i] + noise;
      }
      double e_prop = full_energy(wick, prop, spec);
      std::vector<cd> g_prop = drift(prop);
      double log_a = (e_cur - e_prop) + log_q(u.z, prop, g_prop) - log_q(prop.z, u, g_cur);
      if (log_a >= 0.0 || std::log(1.0 - rng.uniform()) < log_a) {
        std::swap(u.z, prop.z);
        e_cur = e_prop;
        g_cur = std::move(g_prop);
        ++accepted;
      }
      std::int64_t past = step + 1 - cfg.burn_in;
      if (past > 0 && past % cfg.thin == 0) {
        out.data.insert(out.data.end(), u.z.begin(), u.z.end());
        trace.push_back(u.norm2());
      }
    }
  }

  out.kept = trace.size();
  out.acceptance = static_cast<double>(accepted) / static_cast<double>(total);
  out.trace_tau = batch_means(trace).tau;
  if (out.acceptance < cfg.acceptance_floor) {
    std::string hint = cfg.sampler == SamplerKind::independence
                           ? "switch to the preconditioned MALA sampler"
                           : "reduce h_mala";
    throw std::runtime_error("classical_gibbs: acceptance rate " +
                             std::to_string(out.acceptance) + " below floor " +
                             std::to_string(cfg.acceptance_floor) + "; " + hint);
  }
  return out;
}

MomentEstimate weighted_mean(const std::vector<double>& xs, const std::vector<double>& log_w) {
  double lmax = *std::max_element(log_w.begin(), log_w.end());
  KahanSum sw, swx;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double w = std::exp(log_w[i] - lmax);
    sw.add(w);
    swx.add(w * xs[i]);
  }
  MomentEstimate r;
  r.estimate = swx.value() / sw.value();
  KahanSum sv, sw2;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double w = std::exp(log_w[i] - lmax);
    double d = xs[i] - r.estimate;
    sv.add(w * w * d * d);
    sw2.add(w * w);
  }
  r.stderr_ = std::sqrt(sv.value()) / sw.value();
  r.n_eff = sw.value() * sw.value() / sw2.value();
  r.tau = 1.0;
  return r;
}

}  // namespace

std::string to_string(MeasureTag tag) {
  switch (tag) {
    case MeasureTag::mu0: return "mu0";
    case MeasureTag::muNeps: return "muNeps";
    case MeasureTag::langevin_stationary: return "langevin-stationary";
  }
  return "?";
}

MeasureTag measure_tag_from_string(const std::string& s) {
  if (s == "mu0") return MeasureTag::mu0;
  if (s == "muNeps") return MeasureTag::muNeps;
  if (s == "langevin-stationary") return MeasureTag::langevin_stationary;
  throw std::invalid_argument("classical_gibbs: unknown measure tag " + s);
}

SpectralField SampleEnsemble::sample(std::size_t i) const {
  if (i >= n_samples) throw std::out_of_range("ensemble: sample index");
  const cd* p = sample_ptr(i);
  return SpectralField(lat, std::vector<cd>(p, p + lat->size()));
}

SampleEnsemble sample_gff(const LatticePtr& lat, int n, Rng& rng) {
  require_pos(n, "n");
  SampleEnsemble ens;
  ens.tag = MeasureTag::mu0;
  ens.lat = lat;
  ens.n_samples = static_cast<std::size_t>(n);
  ens.data.reserve(ens.n_samples * lat->size());
  for (int i = 0; i < n; ++i) {
    SpectralField u = sample_gff_field(lat, rng);
    ens.data.insert(ens.data.end(), u.z.begin(), u.z.end());
  }
  return ens;
}

SampleEnsemble mcmc_muNeps(const LatticePtr& lat, const Potential& pot,
                           const InteractionSpec& spec, const McmcConfig& cfg, Rng& rng) {
  WickTransform wick(lat, pot);
  ChainResult r = run_chain(lat, wick, spec, cfg, rng);
  SampleEnsemble ens;
  ens.tag = MeasureTag::muNeps;
  ens.lat = lat;
  ens.eps = pot.eps();
  ens.theta = spec.theta;
  ens.data = std::move(r.data);
  ens.n_samples = r.kept;
  ens.seed = cfg.seed;
  ens.diag.acceptance = r.acceptance;
  ens.diag.trace_tau = r.trace_tau;
  return ens;
}

SampleEnsemble mcmc_multi(const LatticePtr& lat, const Potential& pot,
                          const InteractionSpec& spec, const McmcConfig& cfg) {
  require_pos(cfg.n_chains, "n_chains");
  WickTransform wick(lat, pot);
  std::vector<std::future<ChainResult>> futs;
  futs.reserve(static_cast<std::size_t>(cfg.n_chains));
  for (int c = 0; c < cfg.n_chains; ++c) {
    futs.push_back(std::async(std::launch::async, [&, c] {
      Rng rng(cfg.seed, static_cast<std::uint64_t>(c));
      return run_chain(lat, wick, spec, cfg, rng);
    }));
  }
  SampleEnsemble ens;
  ens.tag = MeasureTag::muNeps;
  ens.lat = lat;
  ens.eps = pot.eps();
  ens.theta = spec.theta;
  ens.seed = cfg.seed;
  double acc = 0.0, tau = 1.0;
  for (auto& f : futs) {
    ChainResult r = f.get();
    ens.data.insert(ens.data.end(), r.data.begin(), r.data.end());
    ens.n_samples += r.kept;
    acc += r.acceptance;
    tau = std::max(tau, r.trace_tau);
  }
  ens.diag.acceptance = acc / cfg.n_chains;
  ens.diag.trace_tau = tau;
  return ens;
}

MomentEstimate moments(const SampleEnsemble& ens, const SpectralField& phi, int k) {
  if (k < 0) throw std::invalid_argument("moments: k must be >= 0");
  // accept distinct lattice objects with identical construction (same mode order)
  const ModeLattice& el = *ens.lat;
  const ModeLattice& pl = *phi.lat;
  bool same = phi.lat.get() == ens.lat.get() ||
              (pl.d() == el.d() && pl.N() == el.N() && pl.kind() == el.kind() &&
               pl.size() == el.size());
  if (!same) throw std::invalid_argument("moments: phi must live on the ensemble lattice");
  const std::size_t K = ens.lat->size();
  std::vector<double> xs(ens.n_samples);
  for (std::size_t i = 0; i < ens.n_samples; ++i) {
    const cd* z = ens.sample_ptr(i);
    cd ip{0.0, 0.0};
    for (std::size_t j = 0; j < K; ++j) ip += std::conj(phi.z[j]) * z[j];
    xs[i] = std::pow(std::norm(ip), k);
  }
  if (ens.weighted()) return weighted_mean(xs, ens.log_weights);
  SeriesStats s = batch_means(xs);
  return {s.mean, s.stderr_, s.tau, s.n_eff};
}

MomentEstimate observable_mean(const SampleEnsemble& ens,
                               const std::function<double(const SpectralField&)>& f) {
  std::vector<double> xs(ens.n_samples);
  for (std::size_t i = 0; i < ens.n_samples; ++i) xs[i] = f(ens.sample(i));
  if (ens.weighted()) return weighted_mean(xs, ens.log_weights);
  SeriesStats s = batch_means(xs);
  return {s.mean, s.stderr_, s.tau, s.n_eff};
}

SampleEnsemble reweight_by_interaction(const SampleEnsemble& ens, const Potential& pot,
                                       const InteractionSpec& spec) {
  if (ens.weighted())
    throw std::invalid_argument("reweight: ensemble already carries weights");
  WickTransform wick(ens.lat, pot);
  SampleEnsemble out = ens;
  out.tag = MeasureTag::muNeps;
  out.eps = pot.eps();
  out.theta = spec.theta;
  out.log_weights.resize(ens.n_samples);
  for (std::size_t i = 0; i < ens.n_samples; ++i) {
    double d = energy_or_throw(wick, ens.sample(i), spec);
    if (std::isinf(d) && d < 0.0)
      throw std::runtime_error("reweight: unbounded importance weight");
    out.log_weights[i] = -d;
  }
  // normalized weight variance (sum w)^2 / sum w^2 = n / (1 + var)
  double lmax = *std::max_element(out.log_weights.begin(), out.log_weights.end());
  KahanSum sw, sw2;
  for (double lw : out.log_weights) {
    double w = std::exp(lw - lmax);
    sw.add(w);
    sw2.add(w * w);
  }
  double n = static_cast<double>(ens.n_samples);
  double mean = sw.value() / n;
  double var = sw2.value() / n - mean * mean;
  out.diag.weight_var = var / (mean * mean);
  return out;
}

LogPartition log_partition_fn(const LatticePtr& lat,
                              const std::function<double(const SpectralField&)>& energy, int n,
                              Rng& rng) {
  require_pos(n, "n");
  std::vector<double> ls(static_cast<std::size_t>(n));
  double lmax = -std::numeric_limits<double>::infinity();
  KahanSum jensen;
  for (int i = 0; i < n; ++i) {
    double d = energy(sample_gff_field(lat, rng));
    if (std::isnan(d)) throw std::runtime_error("log_partition: energy is NaN");
    ls[static_cast<std::size_t>(i)] = -d;
    lmax = std::max(lmax, -d);
    jensen.add(-d);
  }
  KahanSum s;
  for (double l : ls) s.add(std::exp(l - lmax));
  double mean = s.value() / n;
  LogPartition r;
  r.estimate = lmax + std::log(mean);
  KahanSum v;
  for (double l : ls) {
    double d = std::exp(l - lmax) - mean;
    v.add(d * d);
  }
  // delta method for log of a mean
  r.stderr_ = n > 1 ? std::sqrt(v.value() / (n - 1)) / (mean * std::sqrt(static_cast<double>(n)))
                    : 0.0;
  r.jensen_lower = jensen.value() / n;
  return r;
}

LogPartition log_partition(const LatticePtr& lat, const Potential& pot,
                           const InteractionSpec& spec, int n, Rng& rng) {
  WickTransform wick(lat, pot);
  return log_partition_fn(
      lat, [&](const SpectralField& u) { return wick.energy_D(u, spec); }, n, rng);
}

void save_ensemble(const SampleEnsemble& ens, const std::string& path) {
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_ensemble: cannot open " + path);
    const char magic[8] = {'P', 'H', 'I', '4', 'E', 'N', 'S', '1'};
    f.write(magic, 8);
    std::uint64_t k = ens.lat->size(), n = ens.n_samples,
                  w = ens.log_weights.size();
    f.write(reinterpret_cast<const char*>(&k), 8);
    f.write(reinterpret_cast<const char*>(&n), 8);
    f.write(reinterpret_cast<const char*>(&w), 8);
    f.write(reinterpret_cast<const char*>(ens.data.data()),
            static_cast<std::streamsize>(ens.data.size() * sizeof(cd)));
    f.write(reinterpret_cast<const char*>(ens.log_weights.data()),
            static_cast<std::streamsize>(w * sizeof(double)));
    if (!f) throw std::runtime_error("save_ensemble: write failed on " + path);
  }
  nlohmann::json j;
  j["tag"] = to_string(ens.tag);
  j["eps"] = ens.eps;
  j["theta"] = ens.theta;
  j["seed"] = ens.seed;
  j["n_samples"] = ens.n_samples;
  j["acceptance"] = ens.diag.acceptance;
  j["trace_tau"] = ens.diag.trace_tau;
  j["weight_var"] = ens.diag.weight_var;
  j["lattice"] = nlohmann::json::parse(ens.lat->to_json());
  std::ofstream side(path + ".json", std::ios::trunc);
  if (!side) throw std::runtime_error("save_ensemble: cannot open sidecar for " + path);
  side << j.dump(2) << "\n";
}

SampleEnsemble load_ensemble(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw std::runtime_error("load_ensemble: missing sidecar for " + path);
  nlohmann::json j = nlohmann::json::parse(side);
  SampleEnsemble ens;
  ens.tag = measure_tag_from_string(j.at("tag").get<std::string>());
  ens.eps = j.at("eps").get<double>();
  ens.theta = j.at("theta").get<double>();
  ens.seed = j.at("seed").get<std::uint64_t>();
  ens.diag.acceptance = j.at("acceptance").get<double>();
  ens.diag.trace_tau = j.at("trace_tau").get<double>();
  ens.diag.weight_var = j.at("weight_var").get<double>();
  ens.lat = ModeLattice::from_json(j.at("lattice").dump());

  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_ensemble: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::string(magic, 8) != "PHI4ENS1")
    throw std::runtime_error("load_ensemble: bad container header in " + path);
  std::uint64_t k = 0, n = 0, w = 0;
  f.read(reinterpret_cast<char*>(&k), 8);
  f.read(reinterpret_cast<char*>(&n), 8);
  f.read(reinterpret_cast<char*>(&w), 8);
  if (k != ens.lat->size()) throw std::runtime_error("load_ensemble: lattice size mismatch");
  ens.n_samples = n;
  ens.data.resize(k * n);
  ens.log_weights.resize(w);
  f.read(reinterpret_cast<char*>(ens.data.data()),
         static_cast<std::streamsize>(ens.data.size() * sizeof(cd)));
  f.read(reinterpret_cast<char*>(ens.log_weights.data()),
         static_cast<std::streamsize>(w * sizeof(double)));
  if (!f) throw std::runtime_error("load_ensemble: truncated container " + path);
  return ens;
}

}  // namespace phi4
