#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "srlm/rng.hpp"

namespace srlm {

struct GmmResult {
  std::vector<int> assignments;
  Eigen::MatrixXd means;               // components x d
  std::vector<Eigen::MatrixXd> covs;   // full covariance per component
  Eigen::VectorXd weights;
  double log_likelihood = 0.0;
  std::vector<double> log_likelihood_trace;  // per EM iteration, non-decreasing
  std::optional<double> accuracy;      // present when labels were supplied
};

// Full-covariance Gaussian mixture fit by expectation-maximization. The EM
// objective is asserted non-decreasing every iteration; a degenerate
// component covariance triggers a jittered restart (bounded retries). When
// labels are supplied, accuracy uses the best cluster-to-label matching:
// exhaustive over permutations when the label count equals the component
// count (components <= 8), per-cluster majority otherwise.
GmmResult gmm_cluster(const Eigen::MatrixXd& features, int components, RngStream& rng,
                      std::span<const std::string> labels = {});

}  // namespace srlm
