#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "srlm/model.hpp"

namespace srlm {

struct SriConfig {
  int steps = 20;               // K
  double step_size = 1e-2;      // s
  bool noise_enabled = true;    // diffusion term on/off
  bool track_jacobian = false;  // accumulate dR_K/dz_0 and log q
  double divergence_norm = 1e3;

  void validate() const {
    if (steps < 0) throw std::invalid_argument("sri: steps must be >= 0");
    if (step_size <= 0.0) throw std::invalid_argument("sri: step size must be > 0");
  }
};

// One short-run trajectory. When tracked, `jacobian` holds the accumulated
// d x d Jacobian of the deterministic map z0 -> zK with the noise path held
// fixed, and log_q = log p(z0) - log|det jacobian|.
struct ChainRecord {
  LatentVector z0;
  Eigen::MatrixXd noise;  // d x K, column k is eps_k
  LatentVector zK;
  bool tracked = false;
  Eigen::MatrixXd jacobian;
  std::optional<double> log_q;
  bool diverged = false;
  int steps_run = 0;

  bool usable() const { return !diverged; }
};

// One update of Eq.-style Langevin dynamics:
//   z' = z + s * grad_z log p(x, z) + sqrt(2 s) * eps.
// The caller supplies eps for reproducibility; throws on a non-finite
// gradient (decoder numerical failure).
LatentVector langevin_step(const Model& model, const Observation& x, const LatentVector& z,
                           double step_size, const LatentVector& eps);

// Deterministic core: runs K steps from the given start and noise path.
ChainRecord run_chain(const Model& model, const Observation& x, const SriConfig& cfg,
                      LatentVector z0, Eigen::MatrixXd noise);

// Draws z0 from the prior and the noise path from `rng`, then runs the chain.
ChainRecord short_run_infer(const Model& model, const Observation& x, const SriConfig& cfg,
                            RngStream& rng);

// log q(zK) = log p(z0) - log|det dR_K/dz_0| for a tracked record.
// Throws if the record is untracked or the Jacobian is singular.
double log_q_density(const ChainRecord& record);

struct TildeQResult {
  double value = 0.0;     // Monte Carlo estimate of E_q[log p(x,z)] - E_q[log q]
  int divergent = 0;      // chains excluded from the average
  int total = 0;
};

// Perturbed lower bound on the average log marginal likelihood: the sample
// average of log p(x, zK) - log q(zK) over tracked chains, with per-(example,
// sample) random substreams. Noise paths are treated as fixed auxiliary
// randomness, so the bound is over the extended (noise path, z0) space.
TildeQResult tilde_q(const Model& model, std::span<const Observation> batch,
                     const SriConfig& cfg, int samples_per_example, const RngStream& rng,
                     int threads = 1);

struct StepSizeGrid {
  std::vector<double> candidates;
  int samples_per_example = 4;

  void validate() const;
};

// Grid search over step sizes maximizing tilde_q under common random numbers
// (shared z0 and noise paths across candidates). Candidates whose chains all
// diverge or produce non-finite scores are excluded; exact ties resolve to
// the smaller step size. Throws if no candidate yields a finite score.
double optimize_step_size(const Model& model, std::span<const Observation> batch,
                          const StepSizeGrid& grid, const SriConfig& cfg,
                          const RngStream& rng, int threads = 1);

}  // namespace srlm
