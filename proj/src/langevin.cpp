#include "phi4/langevin.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace phi4 {

namespace {

void require_sharp(const ModeLattice& lat) {
  for (std::size_t i = 0; i < lat.size(); ++i)
    if (lat.chi(i) != 1.0)
      throw std::invalid_argument("langevin: smooth cutoffs unsupported, the mode relaxation rate is <k>^2");
}

void check_finite(const LangevinState& s) {
  for (const cd& z : s.psi.z)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
      throw std::runtime_error("langevin: non-finite field at t=" + std::to_string(s.t));
}

std::vector<cd> interaction_drift(const LangevinState& s) {
  switch (s.model) {
    case LangevinModel::linear: return std::vector<cd>(s.psi.size(), cd{0.0, 0.0});
    case LangevinModel::hartree: return drift_hartree(s.psi, *s.wick, s.spec);
    case LangevinModel::local_phi4: return drift_local(s.psi, *s.grid, s.a_P, s.mass_coef);
  }
  throw std::logic_error("langevin: unknown model");
}

// Shared integrator core: exact linear flow, frozen interaction drift.
void integrator_step(LangevinState& s, Rng& rng) {
  const ModeLattice& lat = *s.psi.lat;
  std::vector<cd> f = interaction_drift(s);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    OuTransition tr = ou_transition(lat.h(i), s.dt);
    double phi1 = (1.0 - tr.decay) / lat.h(i);
    cd z = tr.decay * s.psi.z[i] + phi1 * f[i];
    if (!s.deterministic) z += std::sqrt(tr.noise_var) * rng.cgauss();
    s.psi.z[i] = z;
  }
  s.t += s.dt;
  check_finite(s);
}

}  // namespace

std::string to_string(LangevinModel m) {
  switch (m) {
    case LangevinModel::linear: return "linear";
    case LangevinModel::hartree: return "hartree";
    case LangevinModel::local_phi4: return "local-phi4";
  }
  return "?";
}

LangevinModel langevin_model_from_string(const std::string& s) {
  if (s == "linear") return LangevinModel::linear;
  if (s == "hartree") return LangevinModel::hartree;
  if (s == "local-phi4" || s == "local") return LangevinModel::local_phi4;
  throw std::invalid_argument("langevin: unknown model " + s);
}

LangevinState make_linear_state(const LatticePtr& lat, double dt) {
  require_sharp(*lat);
  if (!(dt > 0.0)) throw std::invalid_argument("langevin: dt must be positive");
  LangevinState s;
  s.psi = SpectralField(lat);
  s.model = LangevinModel::linear;
  s.dt = dt;
  return s;
}

LangevinState make_hartree_state(const LatticePtr& lat, const Potential& pot, double theta_dyn,
                                 double dt) {
  LangevinState s = make_linear_state(lat, dt);
  s.model = LangevinModel::hartree;
  s.wick = std::make_shared<WickTransform>(lat, pot);
  s.spec = make_spec(*lat, theta_dyn);
  s.a_P = s.spec.a_P;
  return s;
}

LangevinState make_local_state(const LatticePtr& lat, double mass_coef, double dt) {
  LangevinState s = make_linear_state(lat, dt);
  s.model = LangevinModel::local_phi4;
  // cubic bandwidth 3N; projecting modes up to N alias-free needs G >= 4N+1
  s.grid = std::make_shared<Grid>(lat, 4 * lat->N() + 1);
  s.a_P = lat->wick_constant();
  s.mass_coef = mass_coef;
  return s;
}

OuTransition ou_transition(double h2, double dt) {
  if (!(h2 > 0.0) || dt < 0.0) throw std::invalid_argument("langevin: bad transition arguments");
  OuTransition tr;
  tr.decay = std::exp(-h2 * dt);
  tr.noise_var = -std::expm1(-2.0 * h2 * dt) / h2;
  return tr;
}

void ou_exact_step(LangevinState& s, double dt, Rng& rng) {
  const ModeLattice& lat = *s.psi.lat;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    OuTransition tr = ou_transition(lat.h(i), dt);
    cd z = tr.decay * s.psi.z[i];
    if (!s.deterministic) z += std::sqrt(tr.noise_var) * rng.cgauss();
    s.psi.z[i] = z;
  }
  s.t += dt;
  check_finite(s);
}

std::vector<cd> drift_hartree(const SpectralField& u, const WickTransform& wick,
                              const InteractionSpec& spec) {
  std::vector<cd> g = wick.gradient(u, spec);
  for (cd& v : g) v = -v;
  return g;
}

std::vector<cd> drift_local(const SpectralField& u, const Grid& grid, double a_P,
                            double mass_coef) {
  std::vector<cd> w = grid.values(u);
  for (cd& v : w) v *= std::norm(v) - 2.0 * a_P;
  const ModeLattice& lat = *u.lat;
  std::vector<cd> f(lat.size());
  for (std::size_t i = 0; i < lat.size(); ++i)
    f[i] = -grid.project(w, lat.mode(i)) - mass_coef * u.z[i];
  return f;
}

void step_hartree(LangevinState& s, Rng& rng) {
  if (s.model != LangevinModel::hartree) throw std::logic_error("langevin: state is not hartree");
  integrator_step(s, rng);
}

void step_local_phi4(LangevinState& s, Rng& rng) {
  if (s.model != LangevinModel::local_phi4)
    throw std::logic_error("langevin: state is not local-phi4");
  integrator_step(s, rng);
}

void step(LangevinState& s, Rng& rng) {
  if (s.model == LangevinModel::linear)
    ou_exact_step(s, s.dt, rng);
  else
    integrator_step(s, rng);
}

double suggest_dt(const LangevinState& s, Rng& rng) {
  double rate = 1e-6;
  for (int probe = 0; probe < 8; ++probe) {
    SpectralField u = sample_gff_field(s.psi.lat, rng);
    LangevinState tmp = s;
    tmp.psi = u;
    std::vector<cd> f = interaction_drift(tmp);
    KahanSum fn;
    for (const cd& v : f) fn.add(std::norm(v));
    rate = std::max(rate, std::sqrt(fn.value() / std::max(u.norm2(), 1e-12)));
  }
  return 1.0 / (4.0 * rate);
}

namespace {

struct RecordGrid {
  std::int64_t n_total;
  std::int64_t burn;
  std::int64_t stride;
};

RecordGrid make_grid(const LangevinConfig& cfg) {
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("langevin: dt must be positive");
  if (cfg.burn_in < 0.0 || cfg.t_total < cfg.burn_in)
    throw std::invalid_argument("langevin: need 0 <= burn_in <= t_total");
  if (!(cfg.record_stride > 0.0))
    throw std::invalid_argument("langevin: record_stride must be positive");
  RecordGrid g;
  g.n_total = std::llround(cfg.t_total / cfg.dt);
  g.burn = std::llround(cfg.burn_in / cfg.dt);
  g.stride = std::max<std::int64_t>(1, std::llround(cfg.record_stride / cfg.dt));
  return g;
}

LangevinState init_state(const LangevinConfig& cfg, const LatticePtr& lat) {
  switch (cfg.model) {
    case LangevinModel::linear: return make_linear_state(lat, cfg.dt);
    case LangevinModel::hartree:
      return make_hartree_state(lat, Potential::gaussian(cfg.pot_c, cfg.eps), cfg.theta_dyn,
                                cfg.dt);
    case LangevinModel::local_phi4: return make_local_state(lat, cfg.mass_coef, cfg.dt);
  }
  throw std::logic_error("langevin: unknown model");
}

// The quartic diagnostic: V^eps for spectral models, int |Phi|^4 dx for the
// local one (its eps has been sent to zero already).
struct QuarticObservable {
  std::shared_ptr<const WickTransform> wick;
  std::shared_ptr<const Grid> grid;

  double operator()(const SpectralField& u) const {
    if (wick) return wick->energy_V(u);
    std::vector<cd> v = grid->values(u);
    std::vector<double> q(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) q[i] = std::norm(v[i]) * std::norm(v[i]);
    return grid->integrate_real(q);
  }
};

SimulateResult run_loop(const LangevinConfig& cfg, LangevinState state, Rng rng,
                        std::int64_t start_step) {
  RecordGrid g = make_grid(cfg);
  LatticePtr lat = state.psi.lat;
  int i0 = lat->find({0, 0, 0});

  QuarticObservable quartic;
  if (cfg.model == LangevinModel::local_phi4)
    quartic.grid = state.grid;
  else if (cfg.model == LangevinModel::hartree)
    quartic.wick = state.wick;
  else
    quartic.wick = std::make_shared<WickTransform>(lat, Potential::gaussian(cfg.pot_c, cfg.eps));

  SimulateResult out;
  out.ensemble.tag = MeasureTag::langevin_stationary;
  out.ensemble.lat = lat;
  out.ensemble.eps = cfg.eps;
  out.ensemble.theta = cfg.model == LangevinModel::hartree ? cfg.theta_dyn : -cfg.mass_coef;
  out.ensemble.seed = cfg.seed;

  auto record = [&](const LangevinState& s) {
    out.series.t.push_back(s.t);
    out.series.norm2.push_back(s.psi.norm2());
    out.series.quartic.push_back(quartic(s.psi));
    double p2 = i0 >= 0 ? std::norm(s.psi.z[static_cast<std::size_t>(i0)]) : 0.0;
    out.series.mode0_p2.push_back(p2);
    out.series.mode0_p4.push_back(p2 * p2);
    out.ensemble.data.insert(out.ensemble.data.end(), s.psi.z.begin(), s.psi.z.end());
    out.ensemble.n_samples += 1;
  };

  for (std::int64_t step_i = start_step; step_i <= g.n_total; ++step_i) {
    if (step_i >= g.burn && (step_i - g.burn) % g.stride == 0 && step_i > start_step)
      record(state);
    if (step_i == start_step && start_step == 0 && g.burn == 0) record(state);
    if (step_i < g.n_total) step(state, rng);
  }

  out.ensemble.diag.trace_tau = batch_means(out.series.norm2).tau;
  out.state = std::move(state);
  out.rng_state = rng.save_state();

  if (!cfg.checkpoint_path.empty()) {
    const std::string& path = cfg.checkpoint_path;
    {
      std::ofstream f(path, std::ios::binary | std::ios::trunc);
      if (!f) throw std::runtime_error("langevin: cannot open checkpoint " + path);
      const char magic[8] = {'P', 'H', 'I', '4', 'L', 'G', 'V', '1'};
      f.write(magic, 8);
      double t = out.state.t;
      std::uint64_t k = lat->size();
      f.write(reinterpret_cast<const char*>(&t), 8);
      f.write(reinterpret_cast<const char*>(&k), 8);
      f.write(reinterpret_cast<const char*>(out.state.psi.z.data()),
              static_cast<std::streamsize>(k * sizeof(cd)));
      if (!f) throw std::runtime_error("langevin: checkpoint write failed " + path);
    }
    nlohmann::json j;
    j["model"] = to_string(cfg.model);
    j["d"] = cfg.d;
    j["N"] = cfg.N;
    j["eps"] = cfg.eps;
    j["pot_c"] = cfg.pot_c;
    j["dt"] = cfg.dt;
    j["theta_dyn"] = cfg.theta_dyn;
    j["mass_coef"] = cfg.mass_coef;
    j["seed"] = cfg.seed;
    j["rng_state"] = out.rng_state;
    j["wick_convention"] = "cubic centered with 2 a_P at cutoff";
    std::ofstream side(path + ".json", std::ios::trunc);
    if (!side) throw std::runtime_error("langevin: cannot open checkpoint sidecar " + path);
    side << j.dump(2) << "\n";
  }
  return out;
}

}  // namespace

SimulateResult simulate(const LangevinConfig& cfg) {
  LatticePtr lat = build_lattice(cfg.d, cfg.N);
  LangevinState state = init_state(cfg, lat);
  Rng rng(cfg.seed);
  state.psi = sample_gff_field(lat, rng);  // warm start from the free field
  return run_loop(cfg, std::move(state), std::move(rng), 0);
}

SimulateResult simulate_resume(const LangevinConfig& cfg, const std::string& checkpoint_path) {
  std::ifstream side(checkpoint_path + ".json");
  if (!side) throw std::runtime_error("langevin: missing checkpoint sidecar " + checkpoint_path);
  nlohmann::json j = nlohmann::json::parse(side);
  if (j.at("model").get<std::string>() != to_string(cfg.model) || j.at("d").get<int>() != cfg.d ||
      j.at("N").get<int>() != cfg.N || j.at("dt").get<double>() != cfg.dt)
    throw std::runtime_error("langevin: checkpoint does not match the configuration");

  LatticePtr lat = build_lattice(cfg.d, cfg.N);
  LangevinState state = init_state(cfg, lat);

  std::ifstream f(checkpoint_path, std::ios::binary);
  if (!f) throw std::runtime_error("langevin: cannot open checkpoint " + checkpoint_path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::string(magic, 8) != "PHI4LGV1")
    throw std::runtime_error("langevin: bad checkpoint header " + checkpoint_path);
  double t = 0.0;
  std::uint64_t k = 0;
  f.read(reinterpret_cast<char*>(&t), 8);
  f.read(reinterpret_cast<char*>(&k), 8);
  if (k != lat->size()) throw std::runtime_error("langevin: checkpoint lattice size mismatch");
  f.read(reinterpret_cast<char*>(state.psi.z.data()),
         static_cast<std::streamsize>(k * sizeof(cd)));
  if (!f) throw std::runtime_error("langevin: truncated checkpoint " + checkpoint_path);
  state.t = t;

  Rng rng(cfg.seed);
  rng.restore_state(j.at("rng_state").get<std::string>());
  return run_loop(cfg, std::move(state), std::move(rng), std::llround(t / cfg.dt));
}

void write_series_csv(const TimeSeries& ts, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("langevin: cannot open " + path);
  f << "t,norm2,quartic,mode0_p2,mode0_p4\n";
  f.precision(17);
  for (std::size_t i = 0; i < ts.t.size(); ++i)
    f << ts.t[i] << ',' << ts.norm2[i] << ',' << ts.quartic[i] << ',' << ts.mode0_p2[i] << ','
      << ts.mode0_p4[i] << '\n';
  if (!f) throw std::runtime_error("langevin: write failed on " + path);
}

}  // namespace phi4
