#include "srlm/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

namespace srlm {

namespace {

constexpr double kLogTwoPiLocal = 1.8378770664093454835606594728112;

struct Component {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double weight = 0.0;
  // cached cholesky pieces
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_det = 0.0;

  bool refresh() {
    llt.compute(cov);
    if (llt.info() != Eigen::Success) return false;
    log_det = 0.0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
      const double l = llt.matrixL()(i, i);
      if (!(l > 0.0) || !std::isfinite(l)) return false;
      log_det += 2.0 * std::log(l);
    }
    return true;
  }

  double log_density(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd half = llt.matrixL().solve(x - mean);
    return -0.5 * (static_cast<double>(x.size()) * kLogTwoPiLocal + log_det +
                   half.squaredNorm());
  }
};

double best_label_accuracy(const std::vector<int>& assignments,
                           std::span<const std::string> labels, int components) {
  // Map label strings to dense ids.
  std::map<std::string, int> label_ids;
  std::vector<int> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, _] = label_ids.emplace(labels[i], static_cast<int>(label_ids.size()));
    y[i] = it->second;
  }
  const int n_labels = static_cast<int>(label_ids.size());
  const int n = static_cast<int>(labels.size());

  // Joint counts cluster x label.
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(components, n_labels);
  for (int i = 0; i < n; ++i) {
    counts(assignments[static_cast<std::size_t>(i)], y[static_cast<std::size_t>(i)]) += 1;
  }

  if (n_labels == components && components <= 8) {
    // Exhaustive bijective matching.
    std::vector<int> perm(static_cast<std::size_t>(components));
    std::iota(perm.begin(), perm.end(), 0);
    int best = 0;
    do {
      int hits = 0;
      for (int c = 0; c < components; ++c) hits += counts(c, perm[static_cast<std::size_t>(c)]);
      best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / n;
  }
  // Per-cluster majority vote (optimal for unconstrained cluster->label maps).
  int hits = 0;
  for (int c = 0; c < components; ++c) hits += counts.row(c).maxCoeff();
  return static_cast<double>(hits) / n;
}

}  // namespace

GmmResult gmm_cluster(const Eigen::MatrixXd& features, int components, RngStream& rng,
                      std::span<const std::string> labels) {
  const int n = static_cast<int>(features.rows());
  const int d = static_cast<int>(features.cols());
  if (components < 1) throw std::invalid_argument("gmm: components must be >= 1");
  if (n < components) throw std::invalid_argument("gmm: fewer rows than components");
  if (!labels.empty() && static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("gmm: label count mismatch");
  }

  const Eigen::RowVectorXd data_mean = features.colwise().mean();
  Eigen::MatrixXd centered = features.rowwise() - data_mean;
  Eigen::MatrixXd data_cov = (centered.transpose() * centered) / std::max(1, n - 1);
  data_cov += 1e-6 * Eigen::MatrixXd::Identity(d, d);

  constexpr int kMaxRestarts = 5;
  constexpr int kMaxIters = 200;

  for (int attempt = 0; attempt < kMaxRestarts; ++attempt) {
    RngStream stream = rng.child(0x474D4D, static_cast<std::uint64_t>(attempt));

    // Means start at distinct data points; jitter grows with retries.
    std::vector<Component> comps(static_cast<std::size_t>(components));
    std::vector<int> picks;
    while (static_cast<int>(picks.size()) < components) {
      const int cand = stream.uniform_int(n);
      if (std::find(picks.begin(), picks.end(), cand) == picks.end()) picks.push_back(cand);
    }
    const double jitter = attempt == 0 ? 0.0 : 0.05 * attempt;
    bool init_ok = true;
    for (int c = 0; c < components; ++c) {
      auto& comp = comps[static_cast<std::size_t>(c)];
      comp.mean = features.row(picks[static_cast<std::size_t>(c)]).transpose();
      if (jitter > 0.0) comp.mean += jitter * stream.normal_vec(d);
      comp.cov = data_cov;
      comp.weight = 1.0 / components;
      if (!comp.refresh()) init_ok = false;
    }
    if (!init_ok) continue;

    GmmResult result;
    Eigen::MatrixXd resp(n, components);
    double prev_ll = -std::numeric_limits<double>::infinity();
    bool degenerate = false;

    for (int iter = 0; iter < kMaxIters; ++iter) {
      // E step in the log domain.
      double ll = 0.0;
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd logp(components);
        for (int c = 0; c < components; ++c) {
          const auto& comp = comps[static_cast<std::size_t>(c)];
          logp[c] = std::log(comp.weight) + comp.log_density(features.row(i).transpose());
        }
        const double mx = logp.maxCoeff();
        const double lse = mx + std::log((logp.array() - mx).exp().sum());
        ll += lse;
        resp.row(i) = (logp.array() - lse).exp();
      }
      if (!std::isfinite(ll)) {
        degenerate = true;
        break;
      }
      if (iter > 0 && ll + 1e-9 * std::max(1.0, std::abs(ll)) < prev_ll) {
        throw std::logic_error("gmm: EM objective decreased");
      }
      result.log_likelihood_trace.push_back(ll);
      const bool converged = iter > 0 && std::abs(ll - prev_ll) < 1e-8 * std::max(1.0, std::abs(ll));
      prev_ll = ll;
      if (converged) break;

      // M step.
      for (int c = 0; c < components; ++c) {
        auto& comp = comps[static_cast<std::size_t>(c)];
        const double nk = resp.col(c).sum();
        if (!(nk > 1e-10)) {
          degenerate = true;
          break;
        }
        comp.weight = nk / n;
        comp.mean = (features.transpose() * resp.col(c)) / nk;
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
        for (int i = 0; i < n; ++i) {
          const Eigen::VectorXd diff = features.row(i).transpose() - comp.mean;
          cov += resp(i, c) * diff * diff.transpose();
        }
        comp.cov = cov / nk + 1e-6 * Eigen::MatrixXd::Identity(d, d);
        if (!comp.refresh()) {
          degenerate = true;
          break;
        }
      }
      if (degenerate) break;
    }
    if (degenerate) continue;

    result.log_likelihood = prev_ll;
    result.assignments.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      int best = 0;
      resp.row(i).maxCoeff(&best);
      result.assignments[static_cast<std::size_t>(i)] = best;
    }
    result.means.resize(components, d);
    result.weights.resize(components);
    for (int c = 0; c < components; ++c) {
      result.means.row(c) = comps[static_cast<std::size_t>(c)].mean.transpose();
      result.covs.push_back(comps[static_cast<std::size_t>(c)].cov);
      result.weights[c] = comps[static_cast<std::size_t>(c)].weight;
    }
    if (!labels.empty()) {
      result.accuracy = best_label_accuracy(result.assignments, labels, components);
    }
    return result;
  }
  throw std::runtime_error("gmm: EM failed after bounded jittered restarts");
}

}  // namespace srlm
