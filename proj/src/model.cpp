#include "srlm/model.hpp"

namespace srlm {

ad::Value log_prior_graph(ad::Tape& tape, ad::Value z) {
  const double d = static_cast<double>(z.rows());
  ad::Value ssq = ad::sum(ad::mul(z, z));
  return ad::shift(ad::scale(ssq, -0.5), -0.5 * d * kLogTwoPi);
}

BoundParams bind_params(ad::Tape& tape, const ModelParams& params, bool requires_grad) {
  BoundParams bound;
  for (const auto& b : params.blocks()) {
    bound.nodes.emplace(b.name, requires_grad ? tape.input(b.value, true)
                                              : tape.constant(b.value));
  }
  return bound;
}

ad::Value Model::joint_graph(ad::Tape& tape, const BoundParams& theta, const Observation& x,
                             ad::Value z) const {
  ad::Value ll = decoder_.log_likelihood_graph(tape, theta, x, z);
  return ad::add(log_prior_graph(tape, z), ll);
}

double Model::log_likelihood(const Observation& x, const LatentVector& z) const {
  ad::Tape tape;
  BoundParams theta = bind_params(tape, params_, /*requires_grad=*/false);
  ad::Value zc = tape.constant(z);
  ad::Value ll = decoder_.log_likelihood_graph(tape, theta, x, zc);
  return tape.value(ll)(0, 0);
}

double Model::log_joint(const Observation& x, const LatentVector& z) const {
  return log_prior(z) + log_likelihood(x, z);
}

LatentVector Model::grad_z(const Observation& x, const LatentVector& z,
                           double* log_joint_out) const {
  ad::Tape tape;
  BoundParams theta = bind_params(tape, params_, /*requires_grad=*/false);
  ad::Value zv = tape.input(z, /*requires_grad=*/true);
  ad::Value out = joint_graph(tape, theta, x, zv);
  if (log_joint_out != nullptr) *log_joint_out = tape.value(out)(0, 0);
  tape.backward(out);
  return tape.grad(zv);
}

Model::GradHvp Model::grad_z_with_hvp(const Observation& x, const LatentVector& z,
                                      const Eigen::MatrixXd& V) const {
  if (V.rows() != z.size()) throw std::invalid_argument("grad_z_with_hvp: V rows != d");
  ad::Tape tape(static_cast<int>(V.cols()));
  BoundParams theta = bind_params(tape, params_, /*requires_grad=*/false);
  ad::Value zv = tape.input_with_tangent(z, V, /*requires_grad=*/true);
  ad::Value out = joint_graph(tape, theta, x, zv);
  GradHvp result;
  result.log_joint = tape.value(out)(0, 0);
  tape.backward(out);
  result.grad = tape.grad(zv);
  result.hvp = tape.grad_tangent(zv);
  return result;
}

Eigen::VectorXd Model::grad_theta(const Observation& x, const LatentVector& z,
                                  double* log_joint_out) const {
  ad::Tape tape;
  BoundParams theta = bind_params(tape, params_, /*requires_grad=*/true);
  ad::Value zc = tape.constant(z);
  ad::Value out = joint_graph(tape, theta, x, zc);
  if (log_joint_out != nullptr) *log_joint_out = tape.value(out)(0, 0);
  tape.backward(out);
  Eigen::VectorXd flat(params_.flat_size());
  Eigen::Index at = 0;
  for (const auto& b : params_.blocks()) {
    const ad::Matrix g = tape.grad(theta.at(b.name));
    flat.segment(at, b.value.size()) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    at += b.value.size();
  }
  return flat;
}

}  // namespace srlm
