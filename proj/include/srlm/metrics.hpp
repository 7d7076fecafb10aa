#pragma once

#include <functional>
#include <span>
#include <string>

#include "srlm/model.hpp"
#include "srlm/sri.hpp"

namespace srlm {

struct EvalConfig {
  int importance_samples = 512;  // M for the marginal-likelihood estimator
  int posterior_samples = 200;   // samples per example for recon / AU / KL
  double au_threshold = 1e-2;
  SriConfig sri;
  int threads = 1;
};

// Test hook: an injectable importance proposal returning (z, log q(z)).
struct Proposal {
  std::function<std::pair<LatentVector, double>(RngStream&)> draw;
};

// Importance-sampled log p(x): log-mean-exp over M tracked chains of
// log p(x|z) + log p(z) - log q(z|x), computed with max subtraction.
// Divergent chains are excluded and counted; throws if all M diverge.
double estimate_log_marginal(const Model& model, const Observation& x, int importance_samples,
                             const SriConfig& cfg, const RngStream& rng,
                             int* divergent = nullptr);

double estimate_log_marginal_with_proposal(const Model& model, const Observation& x,
                                           int importance_samples, const Proposal& proposal,
                                           const RngStream& rng);

// exp(-total log marginal / total unit count); units are tokens (including
// the end-of-sentence marker) for sentences and dimensions for vectors.
double perplexity(const Model& model, std::span<const Observation> corpus,
                  const EvalConfig& cfg, const RngStream& rng, int* divergent = nullptr);

// Average over the corpus of E_q[-log p(x|z)] with untracked SRI samples.
double reconstruction_error(const Model& model, std::span<const Observation> corpus,
                            const EvalConfig& cfg, const RngStream& rng);

// Count of latent dimensions whose per-example posterior mean varies across
// the corpus with variance above the threshold.
int active_units(const Model& model, std::span<const Observation> corpus, const EvalConfig& cfg,
                 const RngStream& rng);

// Average over the corpus of E_q[log q(z|x) - log p(z)] with the
// conditional-path density tracker.
double kl_estimate(const Model& model, std::span<const Observation> corpus,
                   const EvalConfig& cfg, const RngStream& rng);

struct MetricsReport {
  double ppl = 0.0;
  double recon = 0.0;
  int au = 0;
  double kl = 0.0;
  double log_marginal_per_token = 0.0;
  int importance_samples = 0;
  int posterior_samples = 0;
  double au_threshold = 0.0;
  long long divergent_chains = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  // The paper never defines its KL column for short-run inference; this
  // implementation reports E_x[KL(q(z|x) || p(z))] under the conditional
  // noise-path density.
  std::string kl_definition = "E_x[KL(q(z|x)||p(z))] via conditional-path density";
};

MetricsReport evaluate(const Model& model, std::span<const Observation> corpus,
                       const EvalConfig& cfg, std::uint64_t seed,
                       const std::string& config_hash);

std::string metrics_to_json(const MetricsReport& report);
void write_metrics(const std::string& path, const MetricsReport& report);
void append_metrics_history(const std::string& path, const MetricsReport& report);

}  // namespace srlm
