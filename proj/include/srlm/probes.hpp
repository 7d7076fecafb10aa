#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srlm/metrics.hpp"
#include "srlm/model.hpp"
#include "srlm/recurrent.hpp"

namespace srlm {

struct DecodeResult {
  Sentence sentence;
  bool truncated = false;  // hit max length before the end-of-sentence marker
};

// Argmax decoding, feeding each emitted token back autoregressively; halts at
// the end-of-sentence id or max_length. Deterministic given (theta, z).
DecodeResult greedy_decode(const Model& model, const LatentVector& z, int max_length);

std::vector<DecodeResult> sample_sentences(const Model& model, int count, RngStream& rng,
                                           int max_length);

struct InterpolationPath {
  std::vector<double> weights;         // alphas in [0, 1]
  std::vector<LatentVector> latents;   // (1-a) z1 + a z2
  std::vector<DecodeResult> decoded;
};

InterpolationPath interpolate(const Model& model, const LatentVector& z1,
                              const LatentVector& z2, int steps, int max_length);

// k successive swaps of two distinct uniformly chosen positions, excluding the
// final end-of-sentence marker. Token multiset is preserved.
Sentence swap_noise(const Sentence& x, int swaps, RngStream& rng);

// Infers z from the noised sentence and scores the clean sentence:
// E_q(z | noised)[-log p(clean | z)], averaged over the corpus.
double noisy_reconstruction(const Model& model, std::span<const Sentence> corpus, int swaps,
                            const EvalConfig& cfg, const RngStream& rng);

struct FeatureMatrix {
  Eigen::MatrixXd rows;  // corpus size x d posterior-mean coordinates
  std::vector<std::string> labels;  // optional, empty when absent

  bool has_labels() const { return !labels.empty(); }
};

// Per-example SRI posterior means. Example substreams are keyed by the token
// content (plus the stream key), so duplicate examples get identical rows.
FeatureMatrix extract_features(const Model& model, std::span<const Observation> corpus,
                               const EvalConfig& cfg, const RngStream& rng,
                               std::span<const std::string> labels = {});

// CSV with a `# config=<hash> seed=<seed>` comment line, then
// dim_0..dim_{d-1}[,label].
void write_features_csv(const std::string& path, const FeatureMatrix& features,
                        const std::string& config_hash, std::uint64_t seed);

}  // namespace srlm
