#include "srlm/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>

#include "srlm/parallel.hpp"

namespace srlm {

namespace {

// Substream tags under the run seed.
constexpr std::uint64_t kTagIteration = 0x49544552;  // chain draws for iteration t
constexpr std::uint64_t kTagShuffle = 0x53485546;    // epoch permutations
constexpr std::uint64_t kTagStepSize = 0x53535A45;   // grid-search draws

void mask_frozen(const ModelParams& params, const std::vector<std::string>& freeze,
                 Eigen::VectorXd& flat) {
  for (const auto& name : freeze) {
    if (!params.has(name)) continue;  // decoder without this block
    const auto [offset, size] = params.flat_span(name);
    flat.segment(offset, size).setZero();
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("train: iterations must be >= 0");
  if (batch < 1) throw std::invalid_argument("train: batch must be >= 1");
  if (lr < 0.0) throw std::invalid_argument("train: learning rate must be >= 0");
  if (step_interval < 1) throw std::invalid_argument("train: step interval must be >= 1");
  if (samples_per_example < 1) throw std::invalid_argument("train: samples must be >= 1");
  if (optimizer != "sgd" && optimizer != "adam") {
    throw std::invalid_argument("train: optimizer must be sgd or adam");
  }
  sri.validate();
}

TrainState init_train_state(const Decoder& decoder, ModelParams params, const TrainConfig& cfg) {
  (void)decoder;
  TrainState state;
  state.adam_m = Eigen::VectorXd::Zero(params.flat_size());
  state.adam_v = Eigen::VectorXd::Zero(params.flat_size());
  state.params = std::move(params);
  state.step_size = cfg.sri.step_size;
  return state;
}

IterationLog train_step(const Decoder& decoder, TrainState& state,
                        std::span<const Observation> batch, const TrainConfig& cfg,
                        const RngStream& iter_rng) {
  const auto started = std::chrono::steady_clock::now();
  const Model model(decoder, state.params);
  const int m = static_cast<int>(batch.size());
  const int spe = cfg.samples_per_example;
  const int total = m * spe;

  SriConfig sri = cfg.sri;
  sri.step_size = state.step_size;
  sri.track_jacobian = false;

  std::vector<Eigen::VectorXd> grads(static_cast<std::size_t>(total));
  std::vector<double> joints(static_cast<std::size_t>(total),
                             std::numeric_limits<double>::quiet_NaN());
  parallel_for(total, cfg.threads, [&](int idx) {
    const int i = idx / spe;
    const int j = idx % spe;
    RngStream stream = iter_rng.child(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
    ChainRecord rec;
    try {
      rec = short_run_infer(model, batch[static_cast<std::size_t>(i)], sri, stream);
    } catch (const std::runtime_error&) {
      return;
    }
    if (!rec.usable()) return;
    double joint = 0.0;
    grads[static_cast<std::size_t>(idx)] =
        model.grad_theta(batch[static_cast<std::size_t>(i)], rec.zK, &joint);
    joints[static_cast<std::size_t>(idx)] = joint;
  });

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(state.params.flat_size());
  double loss_sum = 0.0;
  int used = 0;
  int divergent = 0;
  for (int idx = 0; idx < total; ++idx) {
    if (std::isfinite(joints[static_cast<std::size_t>(idx)])) {
      grad += grads[static_cast<std::size_t>(idx)];
      loss_sum += joints[static_cast<std::size_t>(idx)];
      ++used;
    } else {
      ++divergent;
    }
  }
  if (used == 0) {
    throw std::runtime_error("train_step: every chain in the batch diverged");
  }
  grad /= static_cast<double>(used);
  mask_frozen(state.params, cfg.freeze, grad);

  if (cfg.clip_norm > 0.0) {
    const double norm = grad.norm();
    if (norm > cfg.clip_norm) grad *= cfg.clip_norm / norm;
  }

  const double lr_t = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(state.iter));
  if (cfg.optimizer == "adam") {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++state.adam_t;
    state.adam_m = beta1 * state.adam_m + (1.0 - beta1) * grad;
    state.adam_v = beta2 * state.adam_v.array().matrix() +
                   (1.0 - beta2) * grad.array().square().matrix();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.adam_t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.adam_t));
    const Eigen::VectorXd update =
        (state.adam_m / c1).array() / ((state.adam_v / c2).array().sqrt() + eps);
    state.params.axpy(lr_t, update);  // gradient ascent
  } else {
    state.params.axpy(lr_t, grad);
  }
  if (!state.params.to_flat().allFinite()) {
    throw std::runtime_error("train_step: non-finite parameter update");
  }

  IterationLog row;
  row.iter = state.iter;
  row.loss = -loss_sum / static_cast<double>(used);
  row.step_size = state.step_size;
  row.divergent_chains = divergent;
  state.total_divergent += divergent;
  ++state.iter;
  row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                          started)
                    .count();
  return row;
}

std::vector<int> batch_indices(int corpus_size, int batch, long iter, std::uint64_t seed) {
  const long n = corpus_size;
  const long epoch = (static_cast<long>(batch) * iter) / n;
  const long offset = (static_cast<long>(batch) * iter) % n;
  RngStream stream = RngStream(seed).child(kTagShuffle, static_cast<std::uint64_t>(epoch));
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = static_cast<int>(i);
  for (long i = n - 1; i > 0; --i) {
    const int j = stream.uniform_int(static_cast<int>(i) + 1);
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(std::min<long>(batch, n)));
  for (long k = 0; k < std::min<long>(batch, n); ++k) {
    out.push_back(perm[static_cast<std::size_t>((offset + k) % n)]);
  }
  return out;
}

Checkpoint train_state_to_checkpoint(const TrainState& state) {
  Checkpoint ck = Checkpoint::from_params(state.params);
  ck.blocks.push_back({"__adam_m", state.adam_m});
  ck.blocks.push_back({"__adam_v", state.adam_v});
  Eigen::MatrixXd scalars(4, 1);
  scalars << static_cast<double>(state.adam_t), static_cast<double>(state.iter),
      state.step_size, static_cast<double>(state.total_divergent);
  ck.blocks.push_back({"__scalars", scalars});
  return ck;
}

TrainState train_state_from_checkpoint(const Checkpoint& ck, const Decoder& decoder,
                                       const TrainConfig& cfg) {
  TrainState state = init_train_state(decoder, ck.to_params(), cfg);
  if (ck.has("__adam_m")) state.adam_m = ck.block("__adam_m");
  if (ck.has("__adam_v")) state.adam_v = ck.block("__adam_v");
  if (ck.has("__scalars")) {
    const Eigen::MatrixXd& s = ck.block("__scalars");
    state.adam_t = static_cast<long>(s(0, 0));
    state.iter = static_cast<long>(s(1, 0));
    state.step_size = s(2, 0);
    state.total_divergent = static_cast<long long>(s(3, 0));
  }
  return state;
}

TrainState train(const Decoder& decoder, TrainState state,
                 const std::vector<Observation>& corpus, const TrainConfig& cfg,
                 const LogSink& log_sink, const std::string& checkpoint_dir,
                 std::uint64_t config_hash, const std::string& config_echo) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  const RngStream root(cfg.seed);

  auto save_state = [&](const std::string& name) {
    if (checkpoint_dir.empty()) return;
    Checkpoint ck = train_state_to_checkpoint(state);
    ck.seed = cfg.seed;
    ck.config_hash = config_hash;
    ck.config_echo = config_echo;
    save_checkpoint((std::filesystem::path(checkpoint_dir) / name).string(), ck);
  };

  const int n = static_cast<int>(corpus.size());
  for (long t = state.iter; t < cfg.iterations; ++t) {
    const std::vector<int> idx = batch_indices(n, cfg.batch, t, cfg.seed);
    std::vector<Observation> batch;
    batch.reserve(idx.size());
    for (int i : idx) batch.push_back(corpus[static_cast<std::size_t>(i)]);

    // Algorithm step 5: refresh s by grid search every T_s iterations.
    if (t > 0 && t % cfg.step_interval == 0 && !cfg.grid.candidates.empty()) {
      const Model model(decoder, state.params);
      SriConfig sri = cfg.sri;
      sri.step_size = state.step_size;
      state.step_size = optimize_step_size(model, batch, cfg.grid, sri,
                                           root.child(kTagStepSize, static_cast<std::uint64_t>(t)),
                                           cfg.threads);
    }

    const IterationLog row =
        train_step(decoder, state, batch, cfg, root.child(kTagIteration, static_cast<std::uint64_t>(t)));
    if (log_sink) log_sink(row);

    if (cfg.checkpoint_every > 0 && (t + 1) % cfg.checkpoint_every == 0 &&
        t + 1 < cfg.iterations) {
      save_state("ck_" + std::to_string(t + 1) + ".srlm");
    }
  }
  save_state("final.srlm");
  return state;
}

Eigen::VectorXd residual_vector(const Model& model, std::span<const Observation> sample,
                                const SriConfig& cfg, int samples_per_example,
                                const RngStream& rng, const std::vector<std::string>& freeze,
                                int threads) {
  if (sample.empty()) throw std::invalid_argument("residual: empty sample");
  SriConfig sri = cfg;
  sri.track_jacobian = false;
  const int n = static_cast<int>(sample.size());
  const int total = n * samples_per_example;
  std::vector<Eigen::VectorXd> grads(static_cast<std::size_t>(total));
  std::vector<char> ok(static_cast<std::size_t>(total), 0);
  parallel_for(total, threads, [&](int idx) {
    const int i = idx / samples_per_example;
    const int j = idx % samples_per_example;
    RngStream stream = rng.child(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
    ChainRecord rec;
    try {
      rec = short_run_infer(model, sample[static_cast<std::size_t>(i)], sri, stream);
    } catch (const std::runtime_error&) {
      return;
    }
    if (!rec.usable()) return;
    grads[static_cast<std::size_t>(idx)] =
        model.grad_theta(sample[static_cast<std::size_t>(i)], rec.zK);
    ok[static_cast<std::size_t>(idx)] = 1;
  });
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(model.params().flat_size());
  int used = 0;
  for (int idx = 0; idx < total; ++idx) {
    if (ok[static_cast<std::size_t>(idx)]) {
      mean += grads[static_cast<std::size_t>(idx)];
      ++used;
    }
  }
  if (used == 0) throw std::runtime_error("residual: every chain diverged");
  mean /= static_cast<double>(used);
  mask_frozen(model.params(), freeze, mean);
  return mean;
}

double fixed_point_residual(const Model& model, std::span<const Observation> sample,
                            const SriConfig& cfg, int samples_per_example,
                            const RngStream& rng, const std::vector<std::string>& freeze,
                            int threads) {
  return residual_vector(model, sample, cfg, samples_per_example, rng, freeze, threads).norm();
}

}  // namespace srlm
