#pragma once

// Forward/backward pairs for the translator's attention, FC and decoder
// blocks. Backward functions take upstream gradients and return (or
// accumulate into) gradients of every input.

#include <Eigen/Dense>

#include "bnav/numerics.hpp"

namespace bnav::layers {

using num::Matrix;
using num::Vector;

// ---------------------------------------------------------------------------
// Graph-to-instruction attention.
//   E = G W I^T,  A = softmax over rows of E,  R = A I,  F = [R | G]

template <class S>
struct Attention {
  Matrix<S> A;  ///< L x T
  Matrix<S> F;  ///< L x 4H
};

template <class S>
Attention<S> attend_forward(const Matrix<S>& W, const Matrix<S>& I, const Matrix<S>& G) {
  if (I.cols() != G.cols() || W.rows() != G.cols() || W.cols() != I.cols())
    throw ShapeMismatch("attention: I, G and W widths disagree");
  Attention<S> out;
  Matrix<S> E = G * W * I.transpose();
  out.A = num::softmax_rows<S>(E);
  out.F.resize(G.rows(), 2 * G.cols());
  out.F.leftCols(G.cols()).noalias() = out.A * I;
  out.F.rightCols(G.cols()) = G;
  return out;
}

template <class S>
struct AttentionGrads {
  Matrix<S> dW, dI, dG;
};

template <class S>
AttentionGrads<S> attend_backward(const Matrix<S>& W, const Matrix<S>& I, const Matrix<S>& G,
                                  const Attention<S>& fwd, const Matrix<S>& dF) {
  const Eigen::Index w = G.cols();
  num::require_shape(dF, G.rows(), 2 * w, "attention dF");
  AttentionGrads<S> g;
  const auto dR = dF.leftCols(w);
  Matrix<S> dA = dR * I.transpose();
  g.dI = fwd.A.transpose() * dR;
  g.dG = dF.rightCols(w);
  Matrix<S> dE = num::softmax_rows_backward<S>(fwd.A, dA);
  Matrix<S> GW = G * W;
  g.dW = G.transpose() * dE * I;
  g.dG.noalias() += dE * I * W.transpose();
  g.dI.noalias() += dE.transpose() * GW;
  return g;
}

// ---------------------------------------------------------------------------
// Fully connected compression, one row per triplet: Y = tanh(F Wfc^T + b).
// The decoder context is C = Y^T.

template <class S>
Matrix<S> fc_forward(const Matrix<S>& Wfc, const Matrix<S>& b, const Matrix<S>& F) {
  if (F.cols() != Wfc.cols()) throw ShapeMismatch("fc: input width does not match weights");
  Matrix<S> Z = F * Wfc.transpose();
  Z.rowwise() += b.col(0).transpose();
  return Z.array().tanh().matrix();
}

template <class S>
struct FcGrads {
  Matrix<S> dW, db, dF;
};

/// Y is the forward output; dY the gradient with respect to it.
template <class S>
FcGrads<S> fc_backward(const Matrix<S>& Wfc, const Matrix<S>& F, const Matrix<S>& Y, const Matrix<S>& dY) {
  FcGrads<S> g;
  Matrix<S> dZ = (dY.array() * (S(1) - Y.array().square())).matrix();
  g.dW = dZ.transpose() * F;
  g.db = dZ.colwise().sum().transpose();
  g.dF = dZ * Wfc;
  return g;
}

// ---------------------------------------------------------------------------
// Decoder attention over the context columns for one step.
//   u_s = tanh(W1 h + P_s) with P = W2 C,  dhat_s = v^T u_s,
//   d = softmax(dhat),  S = C d

template <class S>
struct DecoderAttention {
  Matrix<S> U;  ///< attention dim x L
  Vector<S> d;  ///< L
  Vector<S> ctx;  ///< H
};

template <class S>
DecoderAttention<S> decoder_attend_forward(const Matrix<S>& W1, const Matrix<S>& v, const Vector<S>& h,
                                           const Matrix<S>& C, const Matrix<S>& P) {
  DecoderAttention<S> out;
  Vector<S> q = W1 * h;
  out.U = (P.colwise() + q).array().tanh().matrix();
  Vector<S> scores = out.U.transpose() * v.col(0);
  out.d = num::softmax<S>(scores);
  out.ctx = C * out.d;
  return out;
}

/// Accumulates into dW1, dv, dC and dP; returns the gradient for h.
template <class S>
Vector<S> decoder_attend_backward(const Matrix<S>& W1, const Matrix<S>& v, const Matrix<S>& C,
                                  const DecoderAttention<S>& fwd, const Vector<S>& dctx, const Vector<S>& h,
                                  Matrix<S>& dW1, Matrix<S>& dv, Matrix<S>& dC, Matrix<S>& dP) {
  dC.noalias() += dctx * fwd.d.transpose();
  Vector<S> dd = C.transpose() * dctx;
  Vector<S> dscores = num::softmax_backward<S>(fwd.d, dd);
  dv.col(0).noalias() += fwd.U * dscores;
  Matrix<S> dpre = ((v.col(0) * dscores.transpose()).array() * (S(1) - fwd.U.array().square())).matrix();
  dP += dpre;
  Vector<S> dq = dpre.rowwise().sum();
  dW1.noalias() += dq * h.transpose();
  return W1.transpose() * dq;
}

// ---------------------------------------------------------------------------
// Output projection o = W3 [ctx; h] (no bias).

template <class S>
Vector<S> output_forward(const Matrix<S>& W3, const Vector<S>& ctx, const Vector<S>& h) {
  if (W3.cols() != ctx.size() + h.size()) throw ShapeMismatch("output projection width mismatch");
  return W3.leftCols(ctx.size()) * ctx + W3.rightCols(h.size()) * h;
}

/// Accumulates dW3; writes gradients of ctx and h.
template <class S>
void output_backward(const Matrix<S>& W3, const Vector<S>& ctx, const Vector<S>& h, const Vector<S>& dout,
                     Matrix<S>& dW3, Vector<S>& dctx, Vector<S>& dh) {
  const Eigen::Index k = ctx.size();
  dW3.leftCols(k).noalias() += dout * ctx.transpose();
  dW3.rightCols(h.size()).noalias() += dout * h.transpose();
  dctx = W3.leftCols(k).transpose() * dout;
  dh = W3.rightCols(h.size()).transpose() * dout;
}

}  // namespace bnav::layers
