#include "srlm/probes.hpp"

#include <cstdio>
#include <fstream>

#include "srlm/parallel.hpp"

namespace srlm {

namespace {

const RecurrentDecoder& require_recurrent(const Model& model) {
  const auto* dec = dynamic_cast<const RecurrentDecoder*>(&model.decoder());
  if (dec == nullptr) {
    throw std::invalid_argument("latent probes require the recurrent decoder");
  }
  return *dec;
}

std::uint64_t content_key(const Observation& x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bytes = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  if (const auto* s = std::get_if<Sentence>(&x)) {
    mix_bytes(s->ids.data(), s->ids.size() * sizeof(int));
  } else {
    const auto& v = std::get<Eigen::VectorXd>(x);
    mix_bytes(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
  }
  return h;
}

}  // namespace

DecodeResult greedy_decode(const Model& model, const LatentVector& z, int max_length) {
  const RecurrentDecoder& dec = require_recurrent(model);
  if (max_length < 1) throw std::invalid_argument("greedy_decode: max_length must be >= 1");
  DecodeResult out;
  RecurrentDecoder::StepState state = dec.init_state(model.params(), z);
  int prev = dec.config().eos_id;
  for (int t = 0; t < max_length; ++t) {
    const Eigen::VectorXd logits = dec.step(model.params(), state, prev, z);
    int best = 0;
    double best_value = logits[0];
    for (int i = 1; i < logits.size(); ++i) {
      if (logits[i] > best_value) {  // ties keep the lowest id
        best_value = logits[i];
        best = i;
      }
    }
    out.sentence.ids.push_back(best);
    prev = best;
    if (best == dec.config().eos_id) return out;
  }
  out.truncated = true;
  return out;
}

std::vector<DecodeResult> sample_sentences(const Model& model, int count, RngStream& rng,
                                           int max_length) {
  if (count < 0) throw std::invalid_argument("sample_sentences: count must be >= 0");
  std::vector<DecodeResult> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const LatentVector z = prior_sample(model.latent_dim(), rng);
    out.push_back(greedy_decode(model, z, max_length));
  }
  return out;
}

InterpolationPath interpolate(const Model& model, const LatentVector& z1,
                              const LatentVector& z2, int steps, int max_length) {
  if (steps < 2) throw std::invalid_argument("interpolate: steps must be >= 2");
  InterpolationPath path;
  for (int j = 0; j < steps; ++j) {
    const double alpha = static_cast<double>(j) / static_cast<double>(steps - 1);
    path.weights.push_back(alpha);
    path.latents.push_back((1.0 - alpha) * z1 + alpha * z2);
    path.decoded.push_back(greedy_decode(model, path.latents.back(), max_length));
  }
  return path;
}

Sentence swap_noise(const Sentence& x, int swaps, RngStream& rng) {
  if (swaps < 0) throw std::invalid_argument("swap_noise: swap count must be >= 0");
  if (x.ids.empty()) throw std::invalid_argument("swap_noise: empty sentence");
  const int content = x.length() - 1;  // final eos marker excluded
  if (swaps > 0 && content < 2) {
    throw std::invalid_argument("swap_noise: need at least two content tokens");
  }
  Sentence out = x;
  for (int k = 0; k < swaps; ++k) {
    const int i = rng.uniform_int(content);
    int j = rng.uniform_int(content - 1);
    if (j >= i) ++j;  // distinct positions
    std::swap(out.ids[static_cast<std::size_t>(i)], out.ids[static_cast<std::size_t>(j)]);
  }
  return out;
}

double noisy_reconstruction(const Model& model, std::span<const Sentence> corpus, int swaps,
                            const EvalConfig& cfg, const RngStream& rng) {
  if (corpus.empty()) throw std::invalid_argument("noisy_reconstruction: empty corpus");
  SriConfig untracked = cfg.sri;
  untracked.track_jacobian = false;
  const int n = static_cast<int>(corpus.size());
  std::vector<double> per_example(static_cast<std::size_t>(n));
  parallel_for(n, cfg.threads, [&](int i) {
    const Sentence& clean = corpus[static_cast<std::size_t>(i)];
    RngStream noise_stream = rng.child(static_cast<std::uint64_t>(i), 0x4E4F49);
    const Sentence noised = swap_noise(clean, swaps, noise_stream);
    const Observation noised_obs = noised;
    const Observation clean_obs = clean;
    double sum = 0.0;
    int used = 0;
    for (int j = 0; j < cfg.posterior_samples; ++j) {
      RngStream stream = rng.child(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      ChainRecord rec;
      try {
        rec = short_run_infer(model, noised_obs, untracked, stream);
      } catch (const std::runtime_error&) {
        continue;
      }
      if (!rec.usable()) continue;
      sum += -model.log_likelihood(clean_obs, rec.zK);
      ++used;
    }
    if (used == 0) throw std::runtime_error("noisy_reconstruction: all chains diverged");
    per_example[static_cast<std::size_t>(i)] = sum / used;
  });
  double total = 0.0;
  for (double v : per_example) total += v;
  return total / static_cast<double>(n);
}

FeatureMatrix extract_features(const Model& model, std::span<const Observation> corpus,
                               const EvalConfig& cfg, const RngStream& rng,
                               std::span<const std::string> labels) {
  if (!labels.empty() && labels.size() != corpus.size()) {
    throw std::invalid_argument("extract_features: label count mismatch");
  }
  SriConfig untracked = cfg.sri;
  untracked.track_jacobian = false;
  const int n = static_cast<int>(corpus.size());
  const int d = model.latent_dim();
  FeatureMatrix fm;
  fm.rows.resize(n, d);
  parallel_for(n, cfg.threads, [&](int i) {
    const Observation& x = corpus[static_cast<std::size_t>(i)];
    const std::uint64_t key = content_key(x);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    int used = 0;
    for (int j = 0; j < cfg.posterior_samples; ++j) {
      RngStream stream = rng.child(key, static_cast<std::uint64_t>(j));
      ChainRecord rec;
      try {
        rec = short_run_infer(model, x, untracked, stream);
      } catch (const std::runtime_error&) {
        continue;
      }
      if (!rec.usable()) continue;
      mean += rec.zK;
      ++used;
    }
    if (used == 0) throw std::runtime_error("extract_features: all chains diverged");
    fm.rows.row(i) = (mean / used).transpose();
  });
  fm.labels.assign(labels.begin(), labels.end());
  return fm;
}

void write_features_csv(const std::string& path, const FeatureMatrix& features,
                        const std::string& config_hash, std::uint64_t seed) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("features: cannot open for writing: " + path);
  out << "# config=" << config_hash << " seed=" << seed << "\n";
  const int d = static_cast<int>(features.rows.cols());
  for (int j = 0; j < d; ++j) {
    if (j > 0) out << ',';
    out << "dim_" << j;
  }
  if (features.has_labels()) out << ",label";
  out << "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < features.rows.rows(); ++i) {
    for (int j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", features.rows(i, j));
      if (j > 0) out << ',';
      out << buf;
    }
    if (features.has_labels()) out << ',' << features.labels[static_cast<std::size_t>(i)];
    out << "\n";
  }
}

}  // namespace srlm
