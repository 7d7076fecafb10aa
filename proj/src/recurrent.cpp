#include "srlm/recurrent.hpp"

#include <cmath>

namespace srlm {

RecurrentDecoder::RecurrentDecoder(RecurrentConfig cfg) : cfg_(cfg) {
  if (cfg_.vocab_size < 1 || cfg_.embedding < 1 || cfg_.hidden < 1 || cfg_.latent_dim < 1) {
    throw std::invalid_argument("recurrent decoder: sizes must be positive");
  }
  if (cfg_.eos_id < 0 || cfg_.eos_id >= cfg_.vocab_size) {
    throw std::invalid_argument("recurrent decoder: eos id out of range");
  }
}

void RecurrentDecoder::check_sentence(const Sentence& s) const {
  if (s.ids.empty()) throw std::invalid_argument("sentence must be non-empty");
  for (int id : s.ids) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw std::out_of_range("token id out of vocabulary range");
    }
  }
}

ad::Value RecurrentDecoder::log_likelihood_graph(ad::Tape& tape, const BoundParams& theta,
                                                 const Observation& x, ad::Value z) const {
  const auto* sent = std::get_if<Sentence>(&x);
  if (sent == nullptr) throw std::invalid_argument("recurrent decoder expects a sentence");
  check_sentence(*sent);

  const int H = cfg_.hidden;
  const int E = cfg_.embedding;

  ad::Value zin = cfg_.use_latent
                      ? z
                      : tape.constant(Eigen::MatrixXd::Zero(cfg_.latent_dim, 1));
  ad::Value emb = theta.at("embedding");  // E x V
  ad::Value lstm_w = theta.at("lstm_w");  // 4H x (E + d + H)
  ad::Value lstm_b = theta.at("lstm_b");
  ad::Value out_w = theta.at("out_w");    // V x H
  ad::Value out_b = theta.at("out_b");

  ad::Value h = ad::add(ad::matmul(theta.at("z_h0_w"), zin), theta.at("z_h0_b"));
  ad::Value c = ad::add(ad::matmul(theta.at("z_c0_w"), zin), theta.at("z_c0_b"));

  ad::Value total_nll = tape.scalar(0.0);
  int prev = cfg_.eos_id;
  for (int t = 0; t < sent->length(); ++t) {
    ad::Value e = ad::slice(emb, 0, E, prev, prev + 1);
    ad::Value xh = ad::concat(ad::concat(e, zin), h);
    ad::Value pre = ad::add(ad::matmul(lstm_w, xh), lstm_b);
    ad::Value gi = ad::sigmoid(ad::slice(pre, 0, H));
    ad::Value gf = ad::sigmoid(ad::slice(pre, H, 2 * H));
    ad::Value gg = ad::tanh(ad::slice(pre, 2 * H, 3 * H));
    ad::Value go = ad::sigmoid(ad::slice(pre, 3 * H, 4 * H));
    c = ad::add(ad::mul(gf, c), ad::mul(gi, gg));
    h = ad::mul(go, ad::tanh(c));
    ad::Value logits = ad::add(ad::matmul(out_w, h), out_b);
    total_nll = ad::add(total_nll, ad::softmax_xent(logits, sent->ids[static_cast<std::size_t>(t)]));
    prev = sent->ids[static_cast<std::size_t>(t)];
  }
  return ad::scale(total_nll, -1.0);
}

ModelParams RecurrentDecoder::init_params(RngStream& rng) const {
  const int V = cfg_.vocab_size;
  const int E = cfg_.embedding;
  const int H = cfg_.hidden;
  const int d = cfg_.latent_dim;
  auto uniform_mat = [&rng](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j) {
      for (int i = 0; i < rows; ++i) m(i, j) = (rng.uniform() * 2.0 - 1.0) * 0.08;
    }
    return m;
  };
  ModelParams params;
  params.add_block("embedding", uniform_mat(E, V));
  params.add_block("lstm_w", uniform_mat(4 * H, E + d + H));
  params.add_block("lstm_b", Eigen::MatrixXd::Zero(4 * H, 1));
  params.add_block("z_h0_w", uniform_mat(H, d));
  params.add_block("z_h0_b", Eigen::MatrixXd::Zero(H, 1));
  params.add_block("z_c0_w", uniform_mat(H, d));
  params.add_block("z_c0_b", Eigen::MatrixXd::Zero(H, 1));
  params.add_block("out_w", uniform_mat(V, H));
  params.add_block("out_b", Eigen::MatrixXd::Zero(V, 1));
  return params;
}

RecurrentDecoder::StepState RecurrentDecoder::init_state(const ModelParams& params,
                                                         const LatentVector& z) const {
  const Eigen::VectorXd zin =
      cfg_.use_latent ? z : Eigen::VectorXd::Zero(cfg_.latent_dim).eval();
  StepState st;
  st.h = params.block("z_h0_w") * zin + params.block("z_h0_b").col(0);
  st.c = params.block("z_c0_w") * zin + params.block("z_c0_b").col(0);
  return st;
}

Eigen::VectorXd RecurrentDecoder::step(const ModelParams& params, StepState& state, int prev,
                                       const LatentVector& z) const {
  const int H = cfg_.hidden;
  const int E = cfg_.embedding;
  const Eigen::VectorXd zin =
      cfg_.use_latent ? z : Eigen::VectorXd::Zero(cfg_.latent_dim).eval();
  Eigen::VectorXd xh(E + cfg_.latent_dim + H);
  xh << params.block("embedding").col(prev), zin, state.h;
  const Eigen::VectorXd pre = params.block("lstm_w") * xh + params.block("lstm_b").col(0);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Eigen::VectorXd gi(H), gf(H), gg(H), go(H);
  for (int i = 0; i < H; ++i) {
    gi[i] = sig(pre[i]);
    gf[i] = sig(pre[H + i]);
    gg[i] = std::tanh(pre[2 * H + i]);
    go[i] = sig(pre[3 * H + i]);
  }
  state.c = gf.cwiseProduct(state.c) + gi.cwiseProduct(gg);
  state.h = go.cwiseProduct(state.c.array().tanh().matrix());
  return params.block("out_w") * state.h + params.block("out_b").col(0);
}

Eigen::VectorXd RecurrentDecoder::softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::ArrayXd e = (logits.array() - m).exp();
  return (e / e.sum()).matrix();
}

}  // namespace srlm
