#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "srlm/checkpoint.hpp"
#include "srlm/model.hpp"
#include "srlm/sri.hpp"

namespace srlm {

struct TrainConfig {
  int iterations = 2000;  // T
  int batch = 16;         // m
  double lr = 0.3;        // eta
  double lr_decay = 1.0;  // eta_t = lr * lr_decay^t
  std::string optimizer = "sgd";  // sgd | adam
  double clip_norm = 5.0;         // 0 disables gradient-norm clipping
  int samples_per_example = 1;
  int step_interval = 500;  // T_s
  SriConfig sri;
  StepSizeGrid grid;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // 0: final checkpoint only
  std::vector<std::string> freeze;  // block names excluded from updates
  int threads = 1;

  void validate() const;
};

struct TrainState {
  ModelParams params;
  Eigen::VectorXd adam_m;
  Eigen::VectorXd adam_v;
  long adam_t = 0;
  long iter = 0;
  double step_size = 0.0;
  long long total_divergent = 0;
};

struct IterationLog {
  long iter = 0;
  double loss = 0.0;  // negative mean log joint at theta_t (pre-update)
  double step_size = 0.0;
  int divergent_chains = 0;
  double wall_ms = 0.0;
};

using LogSink = std::function<void(const IterationLog&)>;

TrainState init_train_state(const Decoder& decoder, ModelParams params, const TrainConfig& cfg);

// One learning iteration: per example draws z0 from the prior, runs K
// untracked Langevin steps, then takes one optimizer step on the averaged
// theta-gradient of log p(x, zK). Divergent chains are excluded from the
// average; throws if every chain diverges. The reported loss is computed at
// the pre-update parameters. `iter_rng` must be the substream for this
// iteration so that resumed runs reproduce the uninterrupted sequence.
IterationLog train_step(const Decoder& decoder, TrainState& state,
                        std::span<const Observation> batch, const TrainConfig& cfg,
                        const RngStream& iter_rng);

// Batch schedule as a pure function of the iteration index: epoch e uses a
// permutation derived from (seed, e) and iteration t reads m indices starting
// at (t*m mod n), wrapping cyclically within the epoch's permutation.
std::vector<int> batch_indices(int corpus_size, int batch, long iter, std::uint64_t seed);

// Full run: T iterations of train_step with the periodic step-size refresh of
// the grid search every T_s iterations. Checkpoints carry parameters and
// optimizer state; resuming from one reproduces the uninterrupted run
// bit-exactly because all randomness is keyed by (seed, iteration).
TrainState train(const Decoder& decoder, TrainState state,
                 const std::vector<Observation>& corpus, const TrainConfig& cfg,
                 const LogSink& log_sink = nullptr, const std::string& checkpoint_dir = "",
                 std::uint64_t config_hash = 0, const std::string& config_echo = "");

Checkpoint train_state_to_checkpoint(const TrainState& state);
TrainState train_state_from_checkpoint(const Checkpoint& ck, const Decoder& decoder,
                                       const TrainConfig& cfg);

// Norm of the Monte Carlo estimate of the estimating-equation residual
// (1/n) sum_i E_q[d/dtheta log p(x_i, z_i)] over the non-frozen coordinates.
double fixed_point_residual(const Model& model, std::span<const Observation> sample,
                            const SriConfig& cfg, int samples_per_example,
                            const RngStream& rng, const std::vector<std::string>& freeze = {},
                            int threads = 1);

// The raw averaged residual vector (used by noise-floor estimation in tests).
Eigen::VectorXd residual_vector(const Model& model, std::span<const Observation> sample,
                                const SriConfig& cfg, int samples_per_example,
                                const RngStream& rng,
                                const std::vector<std::string>& freeze = {}, int threads = 1);

}  // namespace srlm
