#pragma once

#include <Eigen/Dense>

#include "srlm/model.hpp"

namespace srlm {

// Observation model x = W z + sigma eps with standard-normal prior on z.
// Analytically tractable: used both as a real decoder and as the oracle for
// validating posterior sampling, density tracking and marginal estimation.
struct LinearGaussianSpec {
  Eigen::MatrixXd W;  // p x d
  double sigma2 = 1.0;

  int data_dim() const { return static_cast<int>(W.rows()); }
  int latent_dim() const { return static_cast<int>(W.cols()); }
};

struct PosteriorGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Closed-form p(z | x): cov = (I + W'W/sigma2)^-1, mean = cov W'x / sigma2.
PosteriorGaussian oracle_posterior(const LinearGaussianSpec& spec, const Eigen::VectorXd& x);

// Closed-form log p(x) = log N(x; 0, W W' + sigma2 I).
double oracle_log_marginal(const LinearGaussianSpec& spec, const Eigen::VectorXd& x);

// Gaussian log density with arbitrary mean/covariance (shared helper).
double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const Eigen::MatrixXd& cov);

// KL( N(m0,S0) || N(m1,S1) ).
double gaussian_kl(const Eigen::VectorXd& m0, const Eigen::MatrixXd& S0,
                   const Eigen::VectorXd& m1, const Eigen::MatrixXd& S1);

class LinearGaussianDecoder : public Decoder {
 public:
  LinearGaussianDecoder(int data_dim, int latent_dim, double sigma2)
      : p_(data_dim), d_(latent_dim), sigma2_(sigma2) {
    if (sigma2 <= 0.0) throw std::invalid_argument("sigma2 must be positive");
  }

  ad::Value log_likelihood_graph(ad::Tape& tape, const BoundParams& theta,
                                 const Observation& x, ad::Value z) const override;

  int latent_dim() const override { return d_; }
  ModelParams init_params(RngStream& rng) const override;
  std::string kind() const override { return "linear_gaussian"; }

  // Parameter blocks <-> analytic spec.
  static ModelParams params_from_spec(const LinearGaussianSpec& spec);
  static LinearGaussianSpec spec_from_params(const ModelParams& params);

  int data_dim() const { return p_; }
  double init_sigma2() const { return sigma2_; }

 private:
  int p_;
  int d_;
  double sigma2_;
};

}  // namespace srlm
