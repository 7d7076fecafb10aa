#include "srlm/metrics.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "srlm/parallel.hpp"

namespace srlm {

namespace {

double log_mean_exp(const std::vector<double>& values) {
  double max = -std::numeric_limits<double>::infinity();
  for (double v : values) max = std::max(max, v);
  if (!std::isfinite(max)) return max;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max);
  return max + std::log(sum / static_cast<double>(values.size()));
}

long long unit_count(const Observation& x) {
  if (const auto* s = std::get_if<Sentence>(&x)) return s->length();
  return std::get<Eigen::VectorXd>(x).size();
}

}  // namespace

double estimate_log_marginal(const Model& model, const Observation& x, int importance_samples,
                             const SriConfig& cfg, const RngStream& rng, int* divergent) {
  if (importance_samples < 1) {
    throw std::invalid_argument("estimate_log_marginal: M must be >= 1");
  }
  SriConfig tracked = cfg;
  tracked.track_jacobian = true;
  std::vector<double> log_w;
  log_w.reserve(static_cast<std::size_t>(importance_samples));
  int bad = 0;
  for (int j = 0; j < importance_samples; ++j) {
    RngStream stream = rng.child(static_cast<std::uint64_t>(j), 0);
    ChainRecord rec;
    try {
      rec = short_run_infer(model, x, tracked, stream);
    } catch (const std::runtime_error&) {
      ++bad;
      continue;
    }
    if (!rec.usable()) {
      ++bad;
      continue;
    }
    const double ll = model.log_likelihood(x, rec.zK);
    log_w.push_back(ll + log_prior(rec.zK) - log_q_density(rec));
  }
  if (divergent != nullptr) *divergent = bad;
  if (log_w.empty()) {
    throw std::runtime_error("estimate_log_marginal: all importance chains diverged");
  }
  return log_mean_exp(log_w);
}

double estimate_log_marginal_with_proposal(const Model& model, const Observation& x,
                                           int importance_samples, const Proposal& proposal,
                                           const RngStream& rng) {
  std::vector<double> log_w;
  log_w.reserve(static_cast<std::size_t>(importance_samples));
  for (int j = 0; j < importance_samples; ++j) {
    RngStream stream = rng.child(static_cast<std::uint64_t>(j), 0);
    const auto [z, log_q] = proposal.draw(stream);
    log_w.push_back(model.log_likelihood(x, z) + log_prior(z) - log_q);
  }
  return log_mean_exp(log_w);
}

double perplexity(const Model& model, std::span<const Observation> corpus,
                  const EvalConfig& cfg, const RngStream& rng, int* divergent) {
  if (corpus.empty()) throw std::invalid_argument("perplexity: empty corpus");
  const int n = static_cast<int>(corpus.size());
  std::vector<double> log_marginals(static_cast<std::size_t>(n));
  std::vector<int> bad(static_cast<std::size_t>(n), 0);
  parallel_for(n, cfg.threads, [&](int i) {
    log_marginals[static_cast<std::size_t>(i)] = estimate_log_marginal(
        model, corpus[static_cast<std::size_t>(i)], cfg.importance_samples, cfg.sri,
        rng.child(static_cast<std::uint64_t>(i), 1), &bad[static_cast<std::size_t>(i)]);
  });
  double total_log = 0.0;
  long long total_units = 0;
  int total_bad = 0;
  for (int i = 0; i < n; ++i) {
    total_log += log_marginals[static_cast<std::size_t>(i)];
    total_units += unit_count(corpus[static_cast<std::size_t>(i)]);
    total_bad += bad[static_cast<std::size_t>(i)];
  }
  if (divergent != nullptr) *divergent = total_bad;
  return std::exp(-total_log / static_cast<double>(total_units));
}

double reconstruction_error(const Model& model, std::span<const Observation> corpus,
                            const EvalConfig& cfg, const RngStream& rng) {
  if (corpus.empty()) throw std::invalid_argument("reconstruction_error: empty corpus");
  SriConfig untracked = cfg.sri;
  untracked.track_jacobian = false;
  const int n = static_cast<int>(corpus.size());
  std::vector<double> per_example(static_cast<std::size_t>(n));
  parallel_for(n, cfg.threads, [&](int i) {
    const Observation& x = corpus[static_cast<std::size_t>(i)];
    double sum = 0.0;
    int used = 0;
    for (int j = 0; j < cfg.posterior_samples; ++j) {
      RngStream stream = rng.child(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      ChainRecord rec;
      try {
        rec = short_run_infer(model, x, untracked, stream);
      } catch (const std::runtime_error&) {
        continue;
      }
      if (!rec.usable()) continue;
      sum += -model.log_likelihood(x, rec.zK);
      ++used;
    }
    if (used == 0) throw std::runtime_error("reconstruction_error: all chains diverged");
    per_example[static_cast<std::size_t>(i)] = sum / used;
  });
  double total = 0.0;
  for (double v : per_example) total += v;
  return total / static_cast<double>(n);
}

int active_units(const Model& model, std::span<const Observation> corpus, const EvalConfig& cfg,
                 const RngStream& rng) {
  if (corpus.size() < 2) throw std::invalid_argument("active_units: need >= 2 examples");
  SriConfig untracked = cfg.sri;
  untracked.track_jacobian = false;
  const int n = static_cast<int>(corpus.size());
  const int d = model.latent_dim();
  Eigen::MatrixXd means(n, d);
  parallel_for(n, cfg.threads, [&](int i) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    int used = 0;
    for (int j = 0; j < cfg.posterior_samples; ++j) {
      RngStream stream = rng.child(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      ChainRecord rec;
      try {
        rec = short_run_infer(model, corpus[static_cast<std::size_t>(i)], untracked, stream);
      } catch (const std::runtime_error&) {
        continue;
      }
      if (!rec.usable()) continue;
      mean += rec.zK;
      ++used;
    }
    if (used == 0) throw std::runtime_error("active_units: all chains diverged");
    means.row(i) = (mean / used).transpose();
  });
  const Eigen::RowVectorXd col_mean = means.colwise().mean();
  int active = 0;
  for (int jdim = 0; jdim < d; ++jdim) {
    const double var =
        (means.col(jdim).array() - col_mean[jdim]).square().sum() / static_cast<double>(n - 1);
    if (var > cfg.au_threshold) ++active;
  }
  return active;
}

double kl_estimate(const Model& model, std::span<const Observation> corpus,
                   const EvalConfig& cfg, const RngStream& rng) {
  if (corpus.empty()) throw std::invalid_argument("kl_estimate: empty corpus");
  SriConfig tracked = cfg.sri;
  tracked.track_jacobian = true;
  const int n = static_cast<int>(corpus.size());
  std::vector<double> per_example(static_cast<std::size_t>(n));
  parallel_for(n, cfg.threads, [&](int i) {
    double sum = 0.0;
    int used = 0;
    for (int j = 0; j < cfg.posterior_samples; ++j) {
      RngStream stream = rng.child(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      ChainRecord rec;
      try {
        rec = short_run_infer(model, corpus[static_cast<std::size_t>(i)], tracked, stream);
      } catch (const std::runtime_error&) {
        continue;
      }
      if (!rec.usable()) continue;
      sum += log_q_density(rec) - log_prior(rec.zK);
      ++used;
    }
    if (used == 0) throw std::runtime_error("kl_estimate: all chains diverged");
    per_example[static_cast<std::size_t>(i)] = sum / used;
  });
  double total = 0.0;
  for (double v : per_example) total += v;
  return total / static_cast<double>(n);
}

MetricsReport evaluate(const Model& model, std::span<const Observation> corpus,
                       const EvalConfig& cfg, std::uint64_t seed,
                       const std::string& config_hash) {
  MetricsReport report;
  report.importance_samples = cfg.importance_samples;
  report.posterior_samples = cfg.posterior_samples;
  report.au_threshold = cfg.au_threshold;
  report.seed = seed;
  report.config_hash = config_hash;

  const RngStream root(seed);
  int ppl_divergent = 0;
  // Distinct substream tags per metric keep their draws independent.
  report.ppl = perplexity(model, corpus, cfg, root.child(0x50504C, 0), &ppl_divergent);
  report.divergent_chains += ppl_divergent;
  report.recon = reconstruction_error(model, corpus, cfg, root.child(0x52454330, 0));
  report.au = active_units(model, corpus, cfg, root.child(0x4155, 0));
  report.kl = kl_estimate(model, corpus, cfg, root.child(0x4B4C, 0));

  long long total_units = 0;
  for (const auto& x : corpus) total_units += unit_count(x);
  (void)total_units;
  report.log_marginal_per_token = -std::log(report.ppl);
  return report;
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["ppl"] = r.ppl;
  j["recon"] = r.recon;
  j["au"] = r.au;
  j["kl"] = r.kl;
  j["log_marginal_per_token"] = r.log_marginal_per_token;
  j["importance_samples"] = r.importance_samples;
  j["posterior_samples"] = r.posterior_samples;
  j["au_threshold"] = r.au_threshold;
  j["divergent_chains"] = r.divergent_chains;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  j["kl_definition"] = r.kl_definition;
  return j.dump(2);
}

void write_metrics(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("metrics: cannot open for writing: " + path);
  out << metrics_to_json(report) << "\n";
}

void append_metrics_history(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("metrics: cannot open for append: " + path);
  nlohmann::json j = nlohmann::json::parse(metrics_to_json(report));
  out << j.dump() << "\n";
}

}  // namespace srlm
