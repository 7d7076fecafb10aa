#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srlm/sri.hpp"

namespace srlm {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Flat `section.key = value` configuration. Every field that affects numerics
// participates in the config hash; paths and thread counts do not.
struct RunConfig {
  // model
  std::string model_decoder = "recurrent";  // recurrent | linear_gaussian
  int model_latent_dim = 32;
  int model_hidden = 128;
  int model_embedding = 64;
  std::string model_level = "char";  // char | word tokenization
  bool model_lowercase = false;
  bool model_use_latent = true;  // false ablates the latent pathway (z zeroed)
  int model_lg_data_dim = 3;
  double model_lg_sigma2 = 1.0;

  // sri
  int sri_steps = 20;
  double sri_step_size = 0.01;
  std::string sri_grid = "1e-4,3e-4,1e-3,3e-3,1e-2,3e-2,1e-1";
  int sri_grid_samples = 4;
  int sri_step_interval = 500;  // T_s
  double sri_divergence_norm = 1e3;

  // train
  int train_iterations = 2000;
  int train_batch = 16;
  double train_lr = 0.3;
  double train_lr_decay = 1.0;  // multiplicative per iteration
  std::string train_optimizer = "sgd";  // sgd | adam
  double train_clip_norm = 5.0;
  int train_samples = 1;  // posterior samples per example per step
  std::uint64_t train_seed = 1;
  int train_checkpoint_every = 0;  // 0: final checkpoint only
  std::string train_freeze = "log_sigma2";  // comma list; absent blocks ignored

  // eval
  int eval_importance_samples = 512;  // M
  int eval_posterior_samples = 200;
  double eval_au_threshold = 1e-2;

  // unhashed runtime settings
  std::string paths_corpus;
  std::string paths_out = "runs";
  std::string paths_checkpoint;
  std::string paths_vocab;
  int threads = 0;  // 0: hardware concurrency

  void set(const std::string& key, const std::string& value);
  void load_file(const std::string& path);

  // Canonical text of the numerics-affecting fields (hash input and config
  // echo stored in checkpoints and reports).
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;

  void validate() const;

  SriConfig sri_config() const;
  StepSizeGrid step_size_grid() const;
  std::vector<std::string> freeze_list() const;
  int effective_threads() const;
};

std::uint64_t fnv1a64(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);

}  // namespace srlm
