#include "srlm/linear_gaussian.hpp"

#include <cmath>

namespace srlm {

PosteriorGaussian oracle_posterior(const LinearGaussianSpec& spec, const Eigen::VectorXd& x) {
  if (spec.sigma2 <= 0.0) throw std::invalid_argument("oracle_posterior: sigma2 <= 0");
  if (x.size() != spec.W.rows()) throw std::invalid_argument("oracle_posterior: x dim mismatch");
  const int d = spec.latent_dim();
  const Eigen::MatrixXd prec =
      Eigen::MatrixXd::Identity(d, d) + spec.W.transpose() * spec.W / spec.sigma2;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(prec);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("oracle_posterior: singular system");
  PosteriorGaussian out;
  out.cov = ldlt.solve(Eigen::MatrixXd::Identity(d, d));
  out.mean = out.cov * (spec.W.transpose() * x) / spec.sigma2;
  return out;
}

double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const Eigen::MatrixXd& cov) {
  const int n = static_cast<int>(x.size());
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("gaussian_log_density: covariance not positive definite");
  }
  const Eigen::VectorXd diff = x - mean;
  const Eigen::VectorXd half = llt.matrixL().solve(diff);
  double log_det = 0.0;
  for (int i = 0; i < n; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (n * kLogTwoPi + log_det + half.squaredNorm());
}

double gaussian_kl(const Eigen::VectorXd& m0, const Eigen::MatrixXd& S0,
                   const Eigen::VectorXd& m1, const Eigen::MatrixXd& S1) {
  const int n = static_cast<int>(m0.size());
  Eigen::LLT<Eigen::MatrixXd> llt1(S1);
  if (llt1.info() != Eigen::Success) throw std::runtime_error("gaussian_kl: S1 not PD");
  const Eigen::MatrixXd S1inv = llt1.solve(Eigen::MatrixXd::Identity(n, n));
  const double tr = (S1inv * S0).trace();
  const Eigen::VectorXd diff = m1 - m0;
  const double maha = diff.dot(S1inv * diff);
  auto log_det = [](const Eigen::MatrixXd& S) {
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) throw std::runtime_error("gaussian_kl: not PD");
    double ld = 0.0;
    for (int i = 0; i < S.rows(); ++i) ld += 2.0 * std::log(llt.matrixL()(i, i));
    return ld;
  };
  return 0.5 * (tr + maha - n + log_det(S1) - log_det(S0));
}

double oracle_log_marginal(const LinearGaussianSpec& spec, const Eigen::VectorXd& x) {
  const int p = spec.data_dim();
  const Eigen::MatrixXd S =
      spec.W * spec.W.transpose() + spec.sigma2 * Eigen::MatrixXd::Identity(p, p);
  return gaussian_log_density(x, Eigen::VectorXd::Zero(p), S);
}

ad::Value LinearGaussianDecoder::log_likelihood_graph(ad::Tape& tape, const BoundParams& theta,
                                                      const Observation& x, ad::Value z) const {
  const auto* xv = std::get_if<Eigen::VectorXd>(&x);
  if (xv == nullptr) {
    throw std::invalid_argument("linear-Gaussian decoder expects a vector observation");
  }
  if (xv->size() != p_) throw std::invalid_argument("observation dimension mismatch");
  ad::Value w = theta.at("W");
  ad::Value ls = theta.at("log_sigma2");
  ad::Value mean = ad::matmul(w, z);
  ad::Value diff = ad::sub(tape.constant(*xv), mean);
  ad::Value ssq = ad::sum(ad::mul(diff, diff));
  // -p/2 log(2 pi) - p/2 log sigma2 - ssq / (2 sigma2)
  ad::Value quad = ad::scale(ad::mul(ssq, ad::exp(ad::scale(ls, -1.0))), -0.5);
  ad::Value norm = ad::shift(ad::scale(ls, -0.5 * p_), -0.5 * p_ * kLogTwoPi);
  return ad::add(norm, quad);
}

ModelParams LinearGaussianDecoder::init_params(RngStream& rng) const {
  ModelParams params;
  Eigen::MatrixXd w(p_, d_);
  for (int j = 0; j < d_; ++j) {
    for (int i = 0; i < p_; ++i) w(i, j) = 0.1 * rng.normal();
  }
  params.add_block("W", std::move(w));
  Eigen::MatrixXd ls(1, 1);
  ls(0, 0) = std::log(sigma2_);
  params.add_block("log_sigma2", std::move(ls));
  return params;
}

ModelParams LinearGaussianDecoder::params_from_spec(const LinearGaussianSpec& spec) {
  ModelParams params;
  params.add_block("W", spec.W);
  Eigen::MatrixXd ls(1, 1);
  ls(0, 0) = std::log(spec.sigma2);
  params.add_block("log_sigma2", std::move(ls));
  return params;
}

LinearGaussianSpec LinearGaussianDecoder::spec_from_params(const ModelParams& params) {
  LinearGaussianSpec spec;
  spec.W = params.block("W");
  spec.sigma2 = std::exp(params.block("log_sigma2")(0, 0));
  return spec;
}

}  // namespace srlm
