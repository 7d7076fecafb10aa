#pragma once

#include <Eigen/Core>

#include "srlm/model.hpp"

namespace srlm {

struct RecurrentConfig {
  int vocab_size = 0;
  int embedding = 64;
  int hidden = 128;
  int latent_dim = 32;
  int eos_id = 0;
  // When false the latent pathway is ablated: z is replaced by zeros
  // everywhere in the decoder (architecture and parameter shapes unchanged).
  bool use_latent = true;
};

// One-layer LSTM token decoder. The latent vector is mapped by learned affine
// transforms to the initial hidden and cell states, and is concatenated to
// the word embedding as input at every time step. Step t predicts token t
// given the ground-truth prefix; the first input is the end-of-sentence
// marker.
class RecurrentDecoder : public Decoder {
 public:
  explicit RecurrentDecoder(RecurrentConfig cfg);

  ad::Value log_likelihood_graph(ad::Tape& tape, const BoundParams& theta,
                                 const Observation& x, ad::Value z) const override;

  int latent_dim() const override { return cfg_.latent_dim; }
  ModelParams init_params(RngStream& rng) const override;
  std::string kind() const override { return "recurrent"; }

  const RecurrentConfig& config() const { return cfg_; }

  // Plain (tape-free) step interface for decoding and diagnostics.
  struct StepState {
    Eigen::VectorXd h;
    Eigen::VectorXd c;
  };
  StepState init_state(const ModelParams& params, const LatentVector& z) const;
  // Advances the state with token `prev` as input and returns next-token logits.
  Eigen::VectorXd step(const ModelParams& params, StepState& state, int prev,
                       const LatentVector& z) const;
  static Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

 private:
  void check_sentence(const Sentence& s) const;

  RecurrentConfig cfg_;
};

}  // namespace srlm
