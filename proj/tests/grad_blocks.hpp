#pragma once

// Finite-difference checks of each differentiable block and of the full
// per-sample loss. Losses are random linear read-outs of a block's outputs,
// so every coordinate carries an O(1) gradient.

#include <functional>
#include <string>
#include <vector>

#include "bnav/layers.hpp"
#include "bnav/numerics.hpp"
#include "bnav/translator.hpp"
#include "bnav/world_gen.hpp"
#include "fixtures.hpp"

namespace fx {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using P = bnav::num::Param<double>;

inline Mat rand_mat(Eigen::Index r, Eigen::Index c, bnav::Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * bnav::uniform(rng, -1, 1);
  return m;
}

inline P param(const std::string& name, Mat value) {
  P p(name, value.rows(), value.cols());
  p.value = std::move(value);
  return p;
}

struct BlockCheck {
  std::string block;
  bnav::num::GradCheckResult result;
  bool ok() const { return result.checked > 0 && result.passed == result.checked; }
};

inline constexpr double kBlockTol = 1e-5;
inline constexpr double kBlockStep = 1e-6;
inline constexpr double kEndToEndTol = 1e-4;
inline constexpr double kEndToEndStep = 1e-5;
inline constexpr double kEndToEndPassFraction = 0.99;

/// One step from a non-zero state: a warm-up step produces h_prev, the loss
/// reads only the second state.
inline BlockCheck check_gru_step(std::uint64_t seed) {
  bnav::Rng rng(seed);
  const Eigen::Index D = 5, H = 4;
  bnav::num::GruCell<double> cell("gru", D, H);
  cell.W.value = rand_mat(3 * H, D, rng, 0.7);
  cell.U.value = rand_mat(3 * H, H, rng, 0.7);
  cell.b.value = rand_mat(3 * H, 1, rng, 0.3);
  P X = param("x", rand_mat(2, D, rng));
  Mat R = Mat::Zero(2, H);
  R.row(1) = rand_mat(1, H, rng);
  auto loss = [&] {
    Vec h1 = bnav::num::gru_step<double>(cell, X.value.row(0).transpose(), Vec::Zero(H));
    Vec h2 = bnav::num::gru_step<double>(cell, X.value.row(1).transpose(), h1);
    return h2.dot(R.row(1).transpose());
  };
  for (auto* p : cell.params()) p->zero_grad();
  bnav::num::GruRun<double> run(cell);
  run.run(X.value);
  X.grad = run.backward(R, cell);
  std::vector<P*> ps = {&cell.W, &cell.U, &cell.b, &X};
  return {"gru step", bnav::num::check_gradients<double>(loss, ps, kBlockTol, kBlockStep)};
}

inline BlockCheck check_gru_sequence(std::uint64_t seed) {
  bnav::Rng rng(seed);
  const Eigen::Index D = 4, H = 5, T = 6;
  bnav::num::GruCell<double> cell("gru", D, H);
  cell.W.value = rand_mat(3 * H, D, rng, 0.7);
  cell.U.value = rand_mat(3 * H, H, rng, 0.7);
  cell.b.value = rand_mat(3 * H, 1, rng, 0.3);
  P X = param("X", rand_mat(T, D, rng));
  const Mat R = rand_mat(T, H, rng);
  auto loss = [&] {
    bnav::num::GruRun<double> run(cell);
    return run.run(X.value).cwiseProduct(R).sum();
  };
  for (auto* p : cell.params()) p->zero_grad();
  bnav::num::GruRun<double> run(cell);
  run.run(X.value);
  X.grad = run.backward(R, cell);
  std::vector<P*> ps = {&cell.W, &cell.U, &cell.b, &X};
  return {"gru sequence", bnav::num::check_gradients<double>(loss, ps, kBlockTol, kBlockStep)};
}

inline BlockCheck check_encoder_attention(std::uint64_t seed) {
  bnav::Rng rng(seed);
  const Eigen::Index T = 5, L = 4, w = 6;
  P W = param("W", rand_mat(w, w, rng, 0.5));
  P I = param("I", rand_mat(T, w, rng));
  P G = param("G", rand_mat(L, w, rng));
  const Mat R = rand_mat(L, 2 * w, rng);
  auto loss = [&] { return bnav::layers::attend_forward<double>(W.value, I.value, G.value).F.cwiseProduct(R).sum(); };
  auto fwd = bnav::layers::attend_forward<double>(W.value, I.value, G.value);
  auto g = bnav::layers::attend_backward<double>(W.value, I.value, G.value, fwd, R);
  W.grad = g.dW;
  I.grad = g.dI;
  G.grad = g.dG;
  return {"encoder attention", bnav::num::check_gradients<double>(loss, {&W, &I, &G}, kBlockTol, kBlockStep)};
}

inline BlockCheck check_fc(std::uint64_t seed) {
  bnav::Rng rng(seed);
  const Eigen::Index L = 4, in = 8, H = 3;
  P W = param("Wfc", rand_mat(H, in, rng, 0.5));
  P b = param("bfc", rand_mat(H, 1, rng, 0.5));
  P F = param("F", rand_mat(L, in, rng));
  const Mat R = rand_mat(L, H, rng);
  auto loss = [&] { return bnav::layers::fc_forward<double>(W.value, b.value, F.value).cwiseProduct(R).sum(); };
  Mat Y = bnav::layers::fc_forward<double>(W.value, b.value, F.value);
  auto g = bnav::layers::fc_backward<double>(W.value, F.value, Y, R);
  W.grad = g.dW;
  b.grad = g.db;
  F.grad = g.dF;
  return {"fc", bnav::num::check_gradients<double>(loss, {&W, &b, &F}, kBlockTol, kBlockStep)};
}

inline BlockCheck check_decoder_attention(std::uint64_t seed) {
  bnav::Rng rng(seed);
  const Eigen::Index H = 4, L = 5;
  P W1 = param("W1", rand_mat(H, H, rng, 0.7));
  P W2 = param("W2", rand_mat(H, H, rng, 0.7));
  P v = param("va", rand_mat(H, 1, rng));
  P h = param("h", rand_mat(H, 1, rng));
  P C = param("C", rand_mat(H, L, rng));
  const Vec r = rand_mat(H, 1, rng);
  auto loss = [&] {
    Mat Pm = W2.value * C.value;
    return bnav::layers::decoder_attend_forward<double>(W1.value, v.value, h.value.col(0), C.value, Pm).ctx.dot(r);
  };
  for (P* p : {&W1, &W2, &v, &h, &C}) p->zero_grad();
  Mat Pm = W2.value * C.value;
  auto fwd = bnav::layers::decoder_attend_forward<double>(W1.value, v.value, h.value.col(0), C.value, Pm);
  Mat dP = Mat::Zero(H, L);
  Vec dh = bnav::layers::decoder_attend_backward<double>(W1.value, v.value, C.value, fwd, r, h.value.col(0), W1.grad,
                                                          v.grad, C.grad, dP);
  W2.grad += dP * C.value.transpose();
  C.grad += W2.value.transpose() * dP;
  h.grad.col(0) = dh;
  return {"decoder attention", bnav::num::check_gradients<double>(loss, {&W1, &W2, &v, &h, &C}, kBlockTol, kBlockStep)};
}

inline BlockCheck check_output_projection(std::uint64_t seed) {
  bnav::Rng rng(seed);
  const Eigen::Index H = 4;
  P W3 = param("W3", rand_mat(12, 2 * H, rng, 0.5));
  P ctx = param("ctx", rand_mat(H, 1, rng));
  P h = param("h", rand_mat(H, 1, rng));
  // Cross-entropy read-out, as in training.
  auto loss = [&] {
    Vec o = bnav::layers::output_forward<double>(W3.value, ctx.value.col(0), h.value.col(0));
    return bnav::num::cross_entropy<double>(o, 4).loss;
  };
  W3.zero_grad();
  Vec o = bnav::layers::output_forward<double>(W3.value, ctx.value.col(0), h.value.col(0));
  auto ce = bnav::num::cross_entropy<double>(o, 4);
  Vec dctx, dh;
  bnav::layers::output_backward<double>(W3.value, ctx.value.col(0), h.value.col(0), ce.dlogits, W3.grad, dctx, dh);
  ctx.grad.col(0) = dctx;
  h.grad.col(0) = dh;
  return {"output projection", bnav::num::check_gradients<double>(loss, {&W3, &ctx, &h}, kBlockTol, kBlockStep)};
}

inline std::vector<BlockCheck> all_block_checks(std::uint64_t seed) {
  return {check_gru_step(seed),        check_gru_sequence(seed + 1), check_encoder_attention(seed + 2),
          check_fc(seed + 3),          check_decoder_attention(seed + 4), check_output_projection(seed + 5)};
}

/// Summed-loss gradient of a small model against central differences, with
/// dropout and scheduled sampling active under a replayed RNG.
inline bnav::num::GradCheckResult end_to_end_check(bnav::Variant v, std::uint64_t seed, std::size_t per_param = 25) {
  static const bnav::Dataset data = bnav::build_dataset(small_spec(11, 2, 6));
  bnav::ModelConfig cfg;
  cfg.variant = v;
  cfg.hidden_size = 6;
  cfg.embed_dim = 5;
  cfg.dropout = 0.2;
  cfg.max_triplets = 30;
  cfg.seed = seed;
  bnav::ModelState st = bnav::build_model(cfg, data.training.samples);
  const auto& s = data.training.samples[seed % data.training.samples.size()];
  auto in = bnav::prepare_input(st, data.training.graph(s.graph_id), s.gold_plan.start, s.instruction);
  const std::uint64_t stream = bnav::derive_seed(seed, {7});
  auto loss = [&] {
    bnav::Rng r(stream);
    return bnav::sample_loss(st, in, s.gold_plan.behaviors, bnav::LossOptions{true, 0.7, false}, r);
  };
  st.zero_grad();
  {
    bnav::Rng r(stream);
    bnav::sample_loss(st, in, s.gold_plan.behaviors, bnav::LossOptions{true, 0.7, true}, r);
  }
  bnav::Rng pick(seed);
  return bnav::num::check_gradients<double>(loss, st.params(), kEndToEndTol, kEndToEndStep, per_param, &pick);
}

}  // namespace fx
