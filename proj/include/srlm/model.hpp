#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "srlm/autodiff.hpp"
#include "srlm/params.hpp"
#include "srlm/rng.hpp"

namespace srlm {

// Token-id sequence; the last id is the end-of-sentence marker.
struct Sentence {
  std::vector<int> ids;

  int length() const { return static_cast<int>(ids.size()); }
  bool operator==(const Sentence& o) const { return ids == o.ids; }
};

// One observed example: a sentence for the token decoder, a real vector for
// the linear-Gaussian decoder.
using Observation = std::variant<Sentence, Eigen::VectorXd>;

using LatentVector = Eigen::VectorXd;

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

// log N(z; 0, I)
inline double log_prior(const LatentVector& z) {
  return -0.5 * static_cast<double>(z.size()) * kLogTwoPi - 0.5 * z.squaredNorm();
}

inline LatentVector prior_sample(int d, RngStream& rng) {
  if (d < 1) throw std::invalid_argument("prior_sample: d must be >= 1");
  return rng.normal_vec(d);
}

ad::Value log_prior_graph(ad::Tape& tape, ad::Value z);

// Parameter blocks bound onto a tape for one forward/backward pass.
struct BoundParams {
  std::unordered_map<std::string, ad::Value> nodes;

  ad::Value at(const std::string& name) const {
    auto it = nodes.find(name);
    if (it == nodes.end()) throw std::out_of_range("unbound parameter block: " + name);
    return it->second;
  }
};

BoundParams bind_params(ad::Tape& tape, const ModelParams& params, bool requires_grad);

class Decoder {
 public:
  virtual ~Decoder() = default;

  // Builds log p_theta(x | z) on the tape.
  virtual ad::Value log_likelihood_graph(ad::Tape& tape, const BoundParams& theta,
                                         const Observation& x, ad::Value z) const = 0;

  virtual int latent_dim() const = 0;
  virtual ModelParams init_params(RngStream& rng) const = 0;
  virtual std::string kind() const = 0;
};

// Generative model p(z) p_theta(x|z): a decoder plus a parameter snapshot.
// Parameter values are immutable during any single pass; each evaluation
// builds its own tape, so distinct threads may evaluate concurrently.
class Model {
 public:
  Model(const Decoder& decoder, ModelParams params)
      : decoder_(decoder), params_(std::move(params)) {}

  const Decoder& decoder() const { return decoder_; }
  const ModelParams& params() const { return params_; }
  ModelParams& mutable_params() { return params_; }
  int latent_dim() const { return decoder_.latent_dim(); }

  double log_likelihood(const Observation& x, const LatentVector& z) const;
  double log_joint(const Observation& x, const LatentVector& z) const;

  // Gradient of log p(x, z) with respect to z; also reports the value.
  LatentVector grad_z(const Observation& x, const LatentVector& z,
                      double* log_joint_out = nullptr) const;

  // Gradient plus Hessian-vector products H * V of log p(x, z) in z, computed
  // by forward-mode tangents through the reverse sweep (d analytic JVP
  // columns, no nested tapes).
  struct GradHvp {
    double log_joint = 0.0;
    LatentVector grad;
    Eigen::MatrixXd hvp;  // d x V.cols()
  };
  GradHvp grad_z_with_hvp(const Observation& x, const LatentVector& z,
                          const Eigen::MatrixXd& V) const;

  // Gradient of log p(x, z) with respect to theta, flattened in block order.
  Eigen::VectorXd grad_theta(const Observation& x, const LatentVector& z,
                             double* log_joint_out = nullptr) const;

 private:
  ad::Value joint_graph(ad::Tape& tape, const BoundParams& theta, const Observation& x,
                        ad::Value z) const;

  const Decoder& decoder_;
  ModelParams params_;
};

}  // namespace srlm
