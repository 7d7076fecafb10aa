#include <doctest.h>

#include <cmath>

#include "srlm/linear_gaussian.hpp"
#include "srlm/model.hpp"
#include "srlm/recurrent.hpp"
#include "test_oracles.hpp"

using namespace srlm;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, RngStream& rng, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

}  // namespace

TEST_CASE("prior_sample is reproducible and has standard-normal moments") {
  RngStream a(123);
  RngStream b(123);
  const LatentVector z1 = prior_sample(32, a);
  const LatentVector z2 = prior_sample(32, b);
  CHECK(z1 == z2);

  RngStream c(7);
  const LatentVector s1 = prior_sample(1, c);
  RngStream d(7);
  const LatentVector s2 = prior_sample(1, d);
  CHECK(s1[0] == s2[0]);

  const int n = 100000;
  const int dim = 32;
  RngStream rng(2024);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < n; ++i) {
    const LatentVector z = prior_sample(dim, rng);
    mean += z;
    second += z * z.transpose();
  }
  mean /= n;
  second /= n;
  const Eigen::MatrixXd cov = second - mean * mean.transpose();
  CHECK(mean.cwiseAbs().maxCoeff() < 0.02);
  CHECK((cov - Eigen::MatrixXd::Identity(dim, dim)).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("log_prior closed-form values") {
  CHECK(log_prior(Eigen::VectorXd::Zero(1)) == doctest::Approx(-0.9189385).epsilon(1e-6));
  CHECK(log_prior(Eigen::VectorXd::Zero(32)) == doctest::Approx(-29.40603).epsilon(1e-6));

  RngStream rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const LatentVector z = rng.normal_vec(8);
    // independent direct evaluation of the density formula
    double direct = 0.0;
    for (int i = 0; i < z.size(); ++i) {
      direct += -0.5 * std::log(2.0 * M_PI) - 0.5 * z[i] * z[i];
    }
    CHECK(log_prior(z) == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("linear-Gaussian log-likelihood at the mode") {
  LinearGaussianDecoder dec(1, 1, 1.0);
  LinearGaussianSpec spec;
  spec.W = Eigen::MatrixXd::Identity(1, 1);
  spec.sigma2 = 1.0;
  Model model(dec, LinearGaussianDecoder::params_from_spec(spec));
  const Observation x = Eigen::VectorXd::Zero(1).eval();
  CHECK(model.log_likelihood(x, Eigen::VectorXd::Zero(1)) ==
        doctest::Approx(-0.9189385).epsilon(1e-6));
  CHECK(model.log_joint(x, Eigen::VectorXd::Zero(1)) ==
        doctest::Approx(-1.8378771).epsilon(1e-6));
}

TEST_CASE("recurrent decoder with zeroed weights is uniform") {
  RecurrentConfig cfg;
  cfg.vocab_size = 7;
  cfg.embedding = 4;
  cfg.hidden = 6;
  cfg.latent_dim = 3;
  cfg.eos_id = 0;
  RecurrentDecoder dec(cfg);
  ModelParams params;
  RngStream rng(1);
  params = dec.init_params(rng);
  for (auto& b : const_cast<std::vector<ParamBlock>&>(params.blocks())) b.value.setZero();
  Model model(dec, params);

  Sentence s{{3, 5, 1, 0}};
  const double ll = model.log_likelihood(s, Eigen::VectorXd::Ones(3));
  CHECK(ll == doctest::Approx(-4.0 * std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("recurrent decoder rejects out-of-range token ids") {
  RecurrentConfig cfg;
  cfg.vocab_size = 5;
  cfg.embedding = 4;
  cfg.hidden = 6;
  cfg.latent_dim = 2;
  RecurrentDecoder dec(cfg);
  RngStream rng(3);
  Model model(dec, dec.init_params(rng));
  Sentence bad{{1, 9, 0}};
  CHECK_THROWS_AS((void)model.log_likelihood(bad, Eigen::VectorXd::Zero(2)), std::out_of_range);
}

TEST_CASE("recurrent log-likelihood matches an independent straight-line reimplementation") {
  RecurrentConfig cfg;
  cfg.vocab_size = 9;
  cfg.embedding = 5;
  cfg.hidden = 8;
  cfg.latent_dim = 4;
  cfg.eos_id = 0;
  RecurrentDecoder dec(cfg);
  RngStream rng(17);
  ModelParams params = dec.init_params(rng);
  // Non-degenerate random parameters (init uses zero biases; fill them too).
  params.block("lstm_b") = random_matrix(4 * cfg.hidden, 1, rng, 0.1);
  params.block("out_b") = random_matrix(cfg.vocab_size, 1, rng, 0.1);
  Model model(dec, params);

  for (int rep = 0; rep < 10; ++rep) {
    const int len = 1 + rng.uniform_int(12);
    Sentence s;
    for (int t = 0; t + 1 < len; ++t) s.ids.push_back(rng.uniform_int(cfg.vocab_size));
    s.ids.push_back(cfg.eos_id);
    const LatentVector z = rng.normal_vec(cfg.latent_dim);

    // Straight-line token-by-token recomputation with its own cell math.
    const Eigen::MatrixXd& emb = params.block("embedding");
    const Eigen::MatrixXd& lw = params.block("lstm_w");
    const Eigen::VectorXd lb = params.block("lstm_b").col(0);
    const Eigen::MatrixXd& ow = params.block("out_w");
    const Eigen::VectorXd ob = params.block("out_b").col(0);
    Eigen::VectorXd h = params.block("z_h0_w") * z + params.block("z_h0_b").col(0);
    Eigen::VectorXd c = params.block("z_c0_w") * z + params.block("z_c0_b").col(0);
    const int H = cfg.hidden;
    double want = 0.0;
    int prev = cfg.eos_id;
    for (int id : s.ids) {
      Eigen::VectorXd xh(cfg.embedding + cfg.latent_dim + H);
      xh << emb.col(prev), z, h;
      const Eigen::VectorXd pre = lw * xh + lb;
      Eigen::VectorXd gi(H), gf(H), gg(H), go(H);
      for (int i = 0; i < H; ++i) {
        gi[i] = 1.0 / (1.0 + std::exp(-pre[i]));
        gf[i] = 1.0 / (1.0 + std::exp(-pre[H + i]));
        gg[i] = std::tanh(pre[2 * H + i]);
        go[i] = 1.0 / (1.0 + std::exp(-pre[3 * H + i]));
      }
      c = gf.cwiseProduct(c) + gi.cwiseProduct(gg);
      for (int i = 0; i < H; ++i) h[i] = go[i] * std::tanh(c[i]);
      const Eigen::VectorXd logits = ow * h + ob;
      const double m = logits.maxCoeff();
      const double lse = m + std::log((logits.array() - m).exp().sum());
      want += logits[id] - lse;
      prev = id;
    }

    CHECK(model.log_likelihood(s, z) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("recurrent per-step categorical probabilities sum to one") {
  RecurrentConfig cfg;
  cfg.vocab_size = 11;
  cfg.embedding = 6;
  cfg.hidden = 10;
  cfg.latent_dim = 4;
  RecurrentDecoder dec(cfg);
  RngStream rng(29);
  ModelParams params = dec.init_params(rng);
  const LatentVector z = rng.normal_vec(4);
  RecurrentDecoder::StepState st = dec.init_state(params, z);
  int prev = cfg.eos_id;
  for (int t = 0; t < 8; ++t) {
    const Eigen::VectorXd logits = dec.step(params, st, prev, z);
    const Eigen::VectorXd probs = RecurrentDecoder::softmax(logits);
    CHECK(std::abs(probs.sum() - 1.0) < 1e-10);
    prev = t % cfg.vocab_size;
  }
}

TEST_CASE("log_likelihood is permutation-sensitive for a non-degenerate model") {
  RecurrentConfig cfg;
  cfg.vocab_size = 6;
  cfg.embedding = 4;
  cfg.hidden = 8;
  cfg.latent_dim = 2;
  RecurrentDecoder dec(cfg);
  RngStream rng(31);
  Model model(dec, dec.init_params(rng));
  Sentence s{{1, 2, 3, 0}};
  Sentence swapped{{2, 1, 3, 0}};
  const LatentVector z = rng.normal_vec(2);
  CHECK(model.log_likelihood(s, z) != model.log_likelihood(swapped, z));
}

TEST_CASE("log_joint decomposes exactly and its z-gradient matches finite differences") {
  RngStream rng(37);
  LinearGaussianDecoder dec(3, 2, 0.8);
  LinearGaussianSpec spec;
  spec.W = random_matrix(3, 2, rng);
  spec.sigma2 = 0.8;
  Model model(dec, LinearGaussianDecoder::params_from_spec(spec));
  const Eigen::VectorXd xv = random_matrix(3, 1, rng);
  const Observation x = xv;

  for (int rep = 0; rep < 10; ++rep) {
    const LatentVector z = rng.normal_vec(2);
    CHECK(model.log_joint(x, z) - log_prior(z) == doctest::Approx(model.log_likelihood(x, z)));
    const Eigen::VectorXd g = model.grad_z(x, z);
    const Eigen::VectorXd fd = testutil::fd_grad(
        [&](const Eigen::VectorXd& zz) { return model.log_joint(x, zz); }, z);
    for (int i = 0; i < 2; ++i) CHECK(testutil::rel_err(g[i], fd[i]) < 1e-4);
  }
}

TEST_CASE("oracle posterior: conjugate algebra and uninformative likelihood") {
  LinearGaussianSpec spec;
  spec.W = Eigen::MatrixXd::Identity(1, 1);
  spec.sigma2 = 1.0;
  Eigen::VectorXd x(1);
  x << 1.0;
  const PosteriorGaussian post = oracle_posterior(spec, x);
  CHECK(post.mean[0] == doctest::Approx(0.5));
  CHECK(post.cov(0, 0) == doctest::Approx(0.5));

  LinearGaussianSpec flat;
  flat.W = Eigen::MatrixXd::Zero(2, 3);
  flat.sigma2 = 2.0;
  const PosteriorGaussian prior_post = oracle_posterior(flat, Eigen::VectorXd::Ones(2));
  CHECK(prior_post.mean.isZero(1e-14));
  CHECK((prior_post.cov - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("oracle posterior matches dense grid quadrature") {
  RngStream rng(43);
  LinearGaussianSpec spec;
  spec.W = random_matrix(3, 2, rng, 0.7);
  spec.sigma2 = 1.0;
  const Eigen::VectorXd x = random_matrix(3, 1, rng);

  auto log_joint_fn = [&](const Eigen::Vector2d& z) {
    const Eigen::VectorXd diff = x - spec.W * z;
    return -0.5 * 2 * kLogTwoPi - 0.5 * z.squaredNorm() -
           0.5 * 3 * std::log(2.0 * M_PI * spec.sigma2) -
           0.5 / spec.sigma2 * diff.squaredNorm();
  };
  const testutil::Quadrature2D quad = testutil::quadrature_2d(log_joint_fn, -6.0, 6.0, 601);

  const PosteriorGaussian post = oracle_posterior(spec, x);
  const Eigen::Matrix2d cov_quad =
      quad.second - quad.mean * quad.mean.transpose();
  CHECK((post.mean - quad.mean).cwiseAbs().maxCoeff() < 1e-3);
  CHECK((post.cov - cov_quad).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("oracle log-marginal: closed form and quadrature") {
  LinearGaussianSpec unit;
  unit.W = Eigen::MatrixXd::Identity(1, 1);
  unit.sigma2 = 1.0;
  CHECK(oracle_log_marginal(unit, Eigen::VectorXd::Zero(1)) ==
        doctest::Approx(-1.2655121).epsilon(1e-6));

  LinearGaussianSpec flat;
  flat.W = Eigen::MatrixXd::Zero(1, 2);
  flat.sigma2 = 0.5;
  Eigen::VectorXd x0(1);
  x0 << 0.3;
  CHECK(oracle_log_marginal(flat, x0) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI * 0.5) - 0.5 * 0.09 / 0.5).epsilon(1e-10));

  RngStream rng(47);
  LinearGaussianSpec spec;
  spec.W = random_matrix(3, 2, rng, 0.6);
  spec.sigma2 = 1.2;
  const Eigen::VectorXd x = random_matrix(3, 1, rng);
  auto log_joint_fn = [&](const Eigen::Vector2d& z) {
    const Eigen::VectorXd diff = x - spec.W * z;
    return -0.5 * 2 * kLogTwoPi - 0.5 * z.squaredNorm() -
           0.5 * 3 * std::log(2.0 * M_PI * spec.sigma2) -
           0.5 / spec.sigma2 * diff.squaredNorm();
  };
  const testutil::Quadrature2D quad = testutil::quadrature_2d(log_joint_fn, -6.0, 6.0, 601);
  CHECK(std::abs(std::log(quad.mass) - oracle_log_marginal(spec, x)) < 1e-3);
}

TEST_CASE("conjugacy identity ties joint, marginal and posterior") {
  RngStream rng(53);
  LinearGaussianDecoder dec(3, 2, 1.0);
  LinearGaussianSpec spec;
  spec.W = random_matrix(3, 2, rng);
  spec.sigma2 = 1.0;
  Model model(dec, LinearGaussianDecoder::params_from_spec(spec));
  const Eigen::VectorXd x = random_matrix(3, 1, rng);
  const PosteriorGaussian post = oracle_posterior(spec, x);
  const double lm = oracle_log_marginal(spec, x);
  for (int rep = 0; rep < 50; ++rep) {
    const LatentVector z = rng.normal_vec(2) * 1.5;
    const double joint = model.log_joint(x, z);
    const double via_posterior = lm + gaussian_log_density(z, post.mean, post.cov);
    CHECK(std::abs(joint - via_posterior) < 1e-8);
  }
}

TEST_CASE("flat/block round trip is lossless") {
  RngStream rng(59);
  RecurrentConfig cfg;
  cfg.vocab_size = 5;
  cfg.embedding = 3;
  cfg.hidden = 4;
  cfg.latent_dim = 2;
  RecurrentDecoder dec(cfg);
  ModelParams params = dec.init_params(rng);
  const Eigen::VectorXd flat = params.to_flat();
  CHECK(flat.size() == params.flat_size());

  ModelParams copy = params;
  Eigen::VectorXd perturbed = flat;
  perturbed[5] += 1.25;
  copy.from_flat(perturbed);
  CHECK(copy.to_flat() == perturbed);
  copy.from_flat(flat);
  CHECK(copy.to_flat() == flat);
  for (std::size_t i = 0; i < params.blocks().size(); ++i) {
    CHECK(copy.blocks()[i].value == params.blocks()[i].value);
  }
}
