#include "srlm/sri.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "srlm/parallel.hpp"

namespace srlm {

namespace {

double log_abs_det(const Eigen::MatrixXd& m) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    log_det += std::log(std::abs(lu.matrixLU()(i, i)));
  }
  return log_det;
}

}  // namespace

LatentVector langevin_step(const Model& model, const Observation& x, const LatentVector& z,
                           double step_size, const LatentVector& eps) {
  if (step_size <= 0.0) throw std::invalid_argument("langevin_step: step size must be > 0");
  if (eps.size() != z.size()) throw std::invalid_argument("langevin_step: eps dim mismatch");
  const LatentVector g = model.grad_z(x, z);
  if (!g.allFinite()) throw std::runtime_error("langevin_step: non-finite gradient");
  return z + step_size * g + std::sqrt(2.0 * step_size) * eps;
}

ChainRecord run_chain(const Model& model, const Observation& x, const SriConfig& cfg,
                      LatentVector z0, Eigen::MatrixXd noise) {
  cfg.validate();
  const int d = static_cast<int>(z0.size());
  if (noise.rows() != d || noise.cols() != cfg.steps) {
    throw std::invalid_argument("run_chain: noise path must be d x K");
  }

  ChainRecord rec;
  rec.z0 = z0;
  rec.noise = std::move(noise);
  rec.tracked = cfg.track_jacobian;

  LatentVector z = std::move(z0);
  Eigen::MatrixXd jac;
  if (rec.tracked) jac = Eigen::MatrixXd::Identity(d, d);

  const double root = std::sqrt(2.0 * cfg.step_size);
  for (int k = 0; k < cfg.steps; ++k) {
    if (z.norm() > cfg.divergence_norm) {
      rec.diverged = true;
      break;
    }
    if (rec.tracked) {
      // One tangent-carrying pass yields the drift gradient and H * J, so the
      // Jacobian update J <- (I + s H) J costs d forward-mode columns.
      Model::GradHvp gh = model.grad_z_with_hvp(x, z, jac);
      if (!gh.grad.allFinite() || !gh.hvp.allFinite()) {
        throw std::runtime_error("run_chain: non-finite gradient");
      }
      z += cfg.step_size * gh.grad;
      jac += cfg.step_size * gh.hvp;
    } else {
      const LatentVector g = model.grad_z(x, z);
      if (!g.allFinite()) throw std::runtime_error("run_chain: non-finite gradient");
      z += cfg.step_size * g;
    }
    if (cfg.noise_enabled) z += root * rec.noise.col(k);
    rec.steps_run = k + 1;
    if (!z.allFinite()) {
      rec.diverged = true;
      break;
    }
  }
  if (z.norm() > cfg.divergence_norm) rec.diverged = true;

  rec.zK = std::move(z);
  if (rec.tracked) {
    rec.jacobian = std::move(jac);
    if (!rec.diverged) {
      const double lad = log_abs_det(rec.jacobian);
      if (std::isfinite(lad) && lad > -690.0) {  // |det| above ~1e-300
        rec.log_q = log_prior(rec.z0) - lad;
      } else {
        rec.diverged = true;
      }
    }
  }
  return rec;
}

ChainRecord short_run_infer(const Model& model, const Observation& x, const SriConfig& cfg,
                            RngStream& rng) {
  cfg.validate();
  const int d = model.latent_dim();
  LatentVector z0 = prior_sample(d, rng);
  Eigen::MatrixXd noise(d, cfg.steps);
  for (int k = 0; k < cfg.steps; ++k) noise.col(k) = rng.normal_vec(d);
  return run_chain(model, x, cfg, std::move(z0), std::move(noise));
}

double log_q_density(const ChainRecord& record) {
  if (!record.tracked) throw std::invalid_argument("log_q_density: record is untracked");
  if (record.diverged || !record.log_q.has_value()) {
    throw std::runtime_error("log_q_density: degenerate dynamics (singular Jacobian)");
  }
  return *record.log_q;
}

TildeQResult tilde_q(const Model& model, std::span<const Observation> batch,
                     const SriConfig& cfg, int samples_per_example, const RngStream& rng,
                     int threads) {
  if (batch.empty()) throw std::invalid_argument("tilde_q: empty batch");
  if (samples_per_example < 1) throw std::invalid_argument("tilde_q: samples must be >= 1");
  SriConfig tracked = cfg;
  tracked.track_jacobian = true;

  const int n = static_cast<int>(batch.size());
  const int total = n * samples_per_example;
  std::vector<double> terms(static_cast<std::size_t>(total),
                            std::numeric_limits<double>::quiet_NaN());
  parallel_for(total, threads, [&](int idx) {
    const int i = idx / samples_per_example;
    const int j = idx % samples_per_example;
    RngStream stream = rng.child(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
    ChainRecord rec;
    try {
      rec = short_run_infer(model, batch[static_cast<std::size_t>(i)], tracked, stream);
    } catch (const std::runtime_error&) {
      return;  // numerical failure counts as a divergent chain
    }
    if (!rec.usable()) return;
    const double joint = model.log_joint(batch[static_cast<std::size_t>(i)], rec.zK);
    terms[static_cast<std::size_t>(idx)] = joint - log_q_density(rec);
  });

  TildeQResult out;
  out.total = total;
  double sum = 0.0;
  int used = 0;
  for (double t : terms) {
    if (std::isfinite(t)) {
      sum += t;
      ++used;
    } else {
      ++out.divergent;
    }
  }
  out.value = used > 0 ? sum / used : -std::numeric_limits<double>::infinity();
  return out;
}

void StepSizeGrid::validate() const {
  if (candidates.empty()) throw std::invalid_argument("step size grid is empty");
  double prev = 0.0;
  for (double s : candidates) {
    if (s <= prev) throw std::invalid_argument("grid must be strictly increasing and positive");
    prev = s;
  }
  if (samples_per_example < 1) throw std::invalid_argument("grid: samples must be >= 1");
}

double optimize_step_size(const Model& model, std::span<const Observation> batch,
                          const StepSizeGrid& grid, const SriConfig& cfg,
                          const RngStream& rng, int threads) {
  grid.validate();
  if (batch.empty()) throw std::invalid_argument("optimize_step_size: empty batch");
  const int d = model.latent_dim();
  const int n = static_cast<int>(batch.size());
  const int spe = grid.samples_per_example;
  const int total = n * spe;

  // Common random numbers: one (z0, noise path) per (example, sample), shared
  // across all candidate step sizes.
  std::vector<LatentVector> starts(static_cast<std::size_t>(total));
  std::vector<Eigen::MatrixXd> paths(static_cast<std::size_t>(total));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < spe; ++j) {
      RngStream stream = rng.child(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      const int idx = i * spe + j;
      starts[static_cast<std::size_t>(idx)] = prior_sample(d, stream);
      Eigen::MatrixXd noise(d, cfg.steps);
      for (int k = 0; k < cfg.steps; ++k) noise.col(k) = stream.normal_vec(d);
      paths[static_cast<std::size_t>(idx)] = std::move(noise);
    }
  }

  double best_score = -std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  for (double s : grid.candidates) {
    SriConfig candidate = cfg;
    candidate.step_size = s;
    candidate.track_jacobian = true;
    std::vector<double> terms(static_cast<std::size_t>(total),
                              std::numeric_limits<double>::quiet_NaN());
    parallel_for(total, threads, [&](int idx) {
      const int i = idx / spe;
      ChainRecord rec;
      try {
        rec = run_chain(model, batch[static_cast<std::size_t>(i)], candidate,
                        starts[static_cast<std::size_t>(idx)],
                        paths[static_cast<std::size_t>(idx)]);
      } catch (const std::runtime_error&) {
        return;
      }
      if (!rec.usable()) return;
      const double joint = model.log_joint(batch[static_cast<std::size_t>(i)], rec.zK);
      terms[static_cast<std::size_t>(idx)] = joint - log_q_density(rec);
    });
    double sum = 0.0;
    int used = 0;
    for (double t : terms) {
      if (std::isfinite(t)) {
        sum += t;
        ++used;
      }
    }
    if (used == 0) continue;  // candidate excluded (all chains failed)
    const double score = sum / used;
    if (!std::isfinite(score)) continue;
    if (score > best_score) {  // ties keep the earlier (smaller) step size
      best_score = score;
      best_s = s;
    }
  }
  if (!(best_s > 0.0)) {
    throw std::runtime_error("optimize_step_size: no candidate produced a finite score");
  }
  return best_s;
}

}  // namespace srlm
