#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "phi4/field.hpp"
#include "phi4/wick.hpp"

namespace phi4 {

enum class MeasureTag { mu0, muNeps, langevin_stationary };

std::string to_string(MeasureTag tag);
MeasureTag measure_tag_from_string(const std::string& s);

struct ChainDiagnostics {
  double acceptance = 1.0;  // 1 for exact samplers
  double trace_tau = 1.0;   // autocorrelation time of |u|^2, the trace observable
  double weight_var = 0.0;  // Var(w)/E(w)^2 of importance weights, 0 when unweighted
};

// Collection of field samples from one measure. Samples are stored flat
// (sample-major, lat->size() coefficients each); log-weights are empty for
// exact or MCMC samples and hold log densities d(target)/d(mu0) up to a
// constant for reweighted ensembles.
struct SampleEnsemble {
  MeasureTag tag = MeasureTag::mu0;
  LatticePtr lat;
  double eps = 0.0;
  double theta = 0.0;
  std::vector<cd> data;
  std::size_t n_samples = 0;
  std::vector<double> log_weights;
  std::uint64_t seed = 0;
  ChainDiagnostics diag;

  const cd* sample_ptr(std::size_t i) const { return data.data() + i * lat->size(); }
  SpectralField sample(std::size_t i) const;
  bool weighted() const { return !log_weights.empty(); }
};

// n independent draws of the free field: z_k = chi(k) zeta_k / <k>.
SampleEnsemble sample_gff(const LatticePtr& lat, int n, Rng& rng);

enum class SamplerKind { independence, mala };

struct McmcConfig {
  SamplerKind sampler = SamplerKind::independence;
  int n_samples = 1000;
  int burn_in = 500;
  int thin = 1;
  double h_mala = 0.05;          // MALA step in the preconditioned metric
  double acceptance_floor = 0.02;
  std::uint64_t seed = 1;        // recorded; also the stream base for multi-chain
  int n_chains = 1;
};

// Metropolis chain targeting d(mu) = e^{-D(u)} d(mu0) / Z. The independence
// sampler proposes fresh mu0 draws; MALA moves along -grad of the full
// negative log density with preconditioner diag(chi^2/<k>^2) so the Gaussian
// part relaxes at the same rate on every mode.
// Throws when the final acceptance rate falls below cfg.acceptance_floor
// (message points at MALA) and when D evaluates to NaN.
SampleEnsemble mcmc_muNeps(const LatticePtr& lat, const Potential& pot,
                           const InteractionSpec& spec, const McmcConfig& cfg, Rng& rng);

// cfg.n_chains chains with per-chain streams Rng(cfg.seed, chain); chains run
// concurrently and are concatenated in chain order, so the result does not
// depend on scheduling.
SampleEnsemble mcmc_multi(const LatticePtr& lat, const Potential& pot,
                          const InteractionSpec& spec, const McmcConfig& cfg);

struct MomentEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  double tau = 1.0;
  double n_eff = 0.0;
};

// Mean of |<phi, u>|^{2k}. Unweighted ensembles get batch-means errors
// (autocorrelation-corrected); weighted ones the self-normalized importance
// estimator with its delta-method error.
MomentEstimate moments(const SampleEnsemble& ens, const SpectralField& phi, int k);

// Same machinery for an arbitrary real observable.
MomentEstimate observable_mean(const SampleEnsemble& ens,
                               const std::function<double(const SpectralField&)>& f);

// Attaches log-weights -D(u_i) to a mu0 ensemble, retagging it as muNeps.
// Weighted estimates then target the interacting measure.
SampleEnsemble reweight_by_interaction(const SampleEnsemble& ens, const Potential& pot,
                                       const InteractionSpec& spec);

struct LogPartition {
  double estimate = 0.0;      // log E_{mu0} e^{-D}
  double stderr_ = 0.0;
  double jensen_lower = 0.0;  // -E_{mu0} D <= estimate
};

// Importance estimate of log of the partition ratio from n mu0 draws,
// log-mean-exp with a running max.
LogPartition log_partition(const LatticePtr& lat, const Potential& pot,
                           const InteractionSpec& spec, int n, Rng& rng);

// Same estimator for a caller-supplied energy functional.
LogPartition log_partition_fn(const LatticePtr& lat,
                              const std::function<double(const SpectralField&)>& energy, int n,
                              Rng& rng);

// Binary sample container plus a JSON sidecar (path + ".json") holding the
// lattice, tags, parameters, seed, and diagnostics. Round-trips bit-exactly.
void save_ensemble(const SampleEnsemble& ens, const std::string& path);
SampleEnsemble load_ensemble(const std::string& path);

}  // namespace phi4
