#pragma once

// Dense differentiable building blocks on Eigen. Everything is templated on
// the scalar; the library instantiates double.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bnav/errors.hpp"
#include "bnav/rng.hpp"

namespace bnav::num {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

/// Entries at or below this are treated as masked out.
inline constexpr double kMaskedBelow = -1e8;

/// A trainable tensor and its accumulated gradient.
template <class S>
struct Param {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix<S>::Zero(rows, cols)), grad(Matrix<S>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

template <class S>
void require_shape(const Matrix<S>& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols)
    throw ShapeMismatch(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
}

template <class S>
void require_size(const Vector<S>& v, Eigen::Index n, const char* what) {
  if (v.size() != n)
    throw ShapeMismatch(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                        std::to_string(v.size()));
}

/// Uniform(-r, r) with r = sqrt(6 / (fan_in + fan_out)).
template <class S>
void glorot_uniform(Matrix<S>& w, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(uniform(rng, -r, r));
}

template <class Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
}

/// Max-subtracted softmax. Throws AllMasked when every entry is a mask
/// sentinel.
template <class S>
Vector<S> softmax(const Vector<S>& x) {
  if (x.size() == 0) throw AllMasked("softmax of an empty vector");
  const S m = x.maxCoeff();
  if (m <= S(kMaskedBelow)) throw AllMasked("every entry is masked");
  Vector<S> e = (x.array() - m).exp();
  return e / e.sum();
}

template <class S>
Vector<S> masked_softmax(const Vector<S>& logits, const Vector<S>& mask) {
  require_size(mask, logits.size(), "mask");
  return softmax<S>(logits + mask);
}

/// Backprop through y = softmax(x): dx = y * (dy - <y, dy>).
template <class S>
Vector<S> softmax_backward(const Vector<S>& y, const Vector<S>& dy) {
  return (y.array() * (dy.array() - y.dot(dy))).matrix();
}

/// Row-wise softmax of a matrix.
template <class S>
Matrix<S> softmax_rows(const Matrix<S>& x) {
  Matrix<S> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S m = x.row(i).maxCoeff();
    auto e = (x.row(i).array() - m).exp();
    y.row(i) = e / e.sum();
  }
  return y;
}

template <class S>
Matrix<S> softmax_rows_backward(const Matrix<S>& y, const Matrix<S>& dy) {
  Vector<S> dots = (y.array() * dy.array()).rowwise().sum();
  return (y.array() * (dy.array().colwise() - dots.array())).matrix();
}

struct CrossEntropy {
  double loss = 0.0;
  VectorXd dlogits;
  VectorXd probs;
};

/// -log softmax(logits + mask)[target]; pass an empty mask for none.
template <class S>
CrossEntropy cross_entropy(const Vector<S>& logits, std::size_t target, const Vector<S>& mask = {}) {
  if (target >= static_cast<std::size_t>(logits.size()))
    throw ShapeMismatch("cross_entropy target " + std::to_string(target) + " outside alphabet of " +
                        std::to_string(logits.size()));
  Vector<S> z = mask.size() ? Vector<S>(logits + mask) : logits;
  if (mask.size()) require_size(mask, logits.size(), "mask");
  CrossEntropy ce;
  ce.probs = softmax<S>(z).template cast<double>();
  const auto t = static_cast<Eigen::Index>(target);
  const double m = static_cast<double>(z.maxCoeff());
  const double lse = m + std::log((z.array().template cast<double>() - m).exp().sum());
  ce.loss = lse - static_cast<double>(z[t]);
  ce.dlogits = ce.probs;
  ce.dlogits[t] -= 1.0;
  return ce;
}

/// Inverted dropout. The returned matrix holds the multiplier per entry (0 or
/// 1/(1-rate)); identity when not training or rate is 0.
template <class S>
Matrix<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, bool train_mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidRate("dropout rate must be in [0, 1)");
  Matrix<S> m = Matrix<S>::Ones(rows, cols);
  if (!train_mode || rate == 0.0) return m;
  const S keep = S(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = bernoulli(rng, rate) ? S(0) : keep;
  return m;
}

template <class S>
Matrix<S> dropout(const Matrix<S>& x, double rate, bool train_mode, Rng& rng) {
  return x.cwiseProduct(dropout_mask<S>(x.rows(), x.cols(), rate, train_mode, rng));
}

// ---------------------------------------------------------------------------
// GRU

/// z = sigmoid(W_z x + U_z h + b_z), r = sigmoid(W_r x + U_r h + b_r),
/// c = tanh(W_c x + U_c (r * h) + b_c), h' = (1 - z) * h + z * c.
/// Gate blocks are stacked [z; r; c] in W (3H x D), U (3H x H) and b (3H).
template <class S>
struct GruCell {
  Param<S> W, U, b;

  GruCell() = default;
  GruCell(const std::string& name, Eigen::Index input_size, Eigen::Index hidden_size)
      : W(name + ".W", 3 * hidden_size, input_size),
        U(name + ".U", 3 * hidden_size, hidden_size),
        b(name + ".b", 3 * hidden_size, 1) {}

  Eigen::Index input_size() const { return W.value.cols(); }
  Eigen::Index hidden_size() const { return U.value.cols(); }

  void init(Rng& rng) {
    const Eigen::Index h = hidden_size();
    for (int g = 0; g < 3; ++g) {
      Matrix<S> w(h, input_size()), u(h, h);
      glorot_uniform(w, rng);
      glorot_uniform(u, rng);
      W.value.middleRows(g * h, h) = w;
      U.value.middleRows(g * h, h) = u;
    }
    b.value.setZero();
  }

  std::vector<Param<S>*> params() { return {&W, &U, &b}; }
};

/// One unrolled GRU pass that can be extended step by step and back-propagated
/// as a whole. Inputs are treated as constants of the pass except through dX.
template <class S>
class GruRun {
 public:
  explicit GruRun(const GruCell<S>& cell) : cell_(&cell) {}

  Eigen::Index steps() const { return static_cast<Eigen::Index>(x_.size()); }

  /// Runs one step from the last hidden state (zero at the start).
  const Vector<S>& push(const Vector<S>& x) {
    const Eigen::Index H = cell_->hidden_size();
    require_size(x, cell_->input_size(), "gru input");
    Vector<S> h_prev = h_.empty() ? Vector<S>::Zero(H) : h_.back();
    Vector<S> a = cell_->W.value * x + cell_->b.value.col(0);
    a.head(2 * H).noalias() += cell_->U.value.topRows(2 * H) * h_prev;
    Vector<S> zr = sigmoid(a.head(2 * H));
    Vector<S> z = zr.head(H), r = zr.tail(H);
    Vector<S> rh = r.cwiseProduct(h_prev);
    a.tail(H).noalias() += cell_->U.value.bottomRows(H) * rh;
    Vector<S> c = a.tail(H).array().tanh().matrix();
    Vector<S> h = h_prev + z.cwiseProduct(c - h_prev);
    x_.push_back(x);
    h_prev_.push_back(std::move(h_prev));
    z_.push_back(std::move(z));
    r_.push_back(std::move(r));
    c_.push_back(std::move(c));
    rh_.push_back(std::move(rh));
    h_.push_back(std::move(h));
    return h_.back();
  }

  /// Runs the whole sequence; returns hidden states as rows (T x H).
  Matrix<S> run(const Matrix<S>& inputs) {
    Matrix<S> out(inputs.rows(), cell_->hidden_size());
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) out.row(t) = push(inputs.row(t).transpose()).transpose();
    return out;
  }

  const Vector<S>& hidden(Eigen::Index t) const { return h_[static_cast<std::size_t>(t)]; }

  /// dH holds dLoss/dh_t as rows. Accumulates parameter gradients into the
  /// cell and returns dLoss/dx_t as rows.
  Matrix<S> backward(const Matrix<S>& dH, GruCell<S>& grads) const {
    const Eigen::Index T = steps();
    const Eigen::Index H = cell_->hidden_size();
    require_shape(dH, T, H, "gru dH");
    Matrix<S> dA(T, 3 * H);
    Vector<S> carry = Vector<S>::Zero(H);
    const auto& Uzr = cell_->U.value.topRows(2 * H);
    const auto& Uc = cell_->U.value.bottomRows(H);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      const auto k = static_cast<std::size_t>(t);
      Vector<S> dh = dH.row(t).transpose() + carry;
      const Vector<S>& z = z_[k];
      const Vector<S>& r = r_[k];
      const Vector<S>& c = c_[k];
      const Vector<S>& hp = h_prev_[k];
      Vector<S> dz = dh.cwiseProduct(c - hp);
      Vector<S> dac = dh.cwiseProduct(z).cwiseProduct((S(1) - c.array().square()).matrix());
      Vector<S> drh = Uc.transpose() * dac;
      Vector<S> daz = dz.array() * z.array() * (S(1) - z.array());
      Vector<S> dar = drh.array() * hp.array() * r.array() * (S(1) - r.array());
      Vector<S> dprev = dh.cwiseProduct((S(1) - z.array()).matrix()) + drh.cwiseProduct(r);
      Vector<S> dzr(2 * H);
      dzr << daz, dar;
      dprev.noalias() += Uzr.transpose() * dzr;
      dA.row(t).head(2 * H) = dzr.transpose();
      dA.row(t).tail(H) = dac.transpose();
      carry = std::move(dprev);
    }
    Matrix<S> X(T, cell_->input_size()), Hp(T, H), RH(T, H);
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto k = static_cast<std::size_t>(t);
      X.row(t) = x_[k].transpose();
      Hp.row(t) = h_prev_[k].transpose();
      RH.row(t) = rh_[k].transpose();
    }
    grads.W.grad.noalias() += dA.transpose() * X;
    grads.U.grad.topRows(2 * H).noalias() += dA.leftCols(2 * H).transpose() * Hp;
    grads.U.grad.bottomRows(H).noalias() += dA.rightCols(H).transpose() * RH;
    grads.b.grad.col(0) += dA.colwise().sum().transpose();
    return dA * cell_->W.value;
  }

 private:
  const GruCell<S>* cell_;
  std::vector<Vector<S>> x_, h_prev_, z_, r_, c_, rh_, h_;
};

template <class S>
Vector<S> gru_step(const GruCell<S>& cell, const Vector<S>& x, const Vector<S>& h_prev) {
  require_size(x, cell.input_size(), "gru input");
  require_size(h_prev, cell.hidden_size(), "gru hidden state");
  const Eigen::Index H = cell.hidden_size();
  Vector<S> a = cell.W.value * x + cell.b.value.col(0);
  a.head(2 * H) += cell.U.value.topRows(2 * H) * h_prev;
  Vector<S> zr = sigmoid(a.head(2 * H));
  a.tail(H) += cell.U.value.bottomRows(H) * zr.tail(H).cwiseProduct(h_prev);
  Vector<S> c = a.tail(H).array().tanh().matrix();
  return h_prev + zr.head(H).cwiseProduct(c - h_prev);
}

/// Forward and backward GRU passes over the same inputs; row t of the output
/// is [forward h_t | backward h_t].
template <class S>
class BiGruRun {
 public:
  BiGruRun(const GruCell<S>& fwd, const GruCell<S>& bwd) : fwd_(fwd), bwd_(bwd), hidden_(fwd.hidden_size()) {}

  Matrix<S> run(const Matrix<S>& inputs) {
    const Eigen::Index T = inputs.rows();
    if (T < 1) throw ShapeMismatch("bidirectional encoder needs at least one input");
    Matrix<S> out(T, 2 * hidden_);
    out.leftCols(hidden_) = fwd_.run(inputs);
    Matrix<S> reversed = inputs.colwise().reverse();
    Matrix<S> back = bwd_.run(reversed);
    out.rightCols(hidden_) = back.colwise().reverse();
    return out;
  }

  Matrix<S> backward(const Matrix<S>& dOut, GruCell<S>& fwd_grads, GruCell<S>& bwd_grads) const {
    Matrix<S> dX = fwd_.backward(dOut.leftCols(hidden_), fwd_grads);
    Matrix<S> dback = dOut.rightCols(hidden_).colwise().reverse();
    Matrix<S> dXb = bwd_.backward(dback, bwd_grads);
    dX += dXb.colwise().reverse();
    return dX;
  }

 private:
  GruRun<S> fwd_, bwd_;
  Eigen::Index hidden_;
};

template <class S>
Matrix<S> encode_bidirectional(const GruCell<S>& fwd, const GruCell<S>& bwd, const Matrix<S>& inputs) {
  BiGruRun<S> run(fwd, bwd);
  return run.run(inputs);
}

// ---------------------------------------------------------------------------
// Optimization

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction; moments are kept per parameter in order.
template <class S>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<Param<S>*>& params) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    if (m_.size() != params.size()) throw ShapeMismatch("optimizer state does not match parameters");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& g = params[i]->grad;
      m_[i] = S(cfg_.beta1) * m_[i] + S(1 - cfg_.beta1) * g;
      v_[i] = S(cfg_.beta2) * v_[i] + S(1 - cfg_.beta2) * g.cwiseProduct(g);
      params[i]->value.array() -=
          S(cfg_.lr) * (m_[i].array() / S(c1)) / ((v_[i].array() / S(c2)).sqrt() + S(cfg_.eps));
    }
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<Matrix<S>>& first_moments() { return m_; }
  std::vector<Matrix<S>>& second_moments() { return v_; }
  const std::vector<Matrix<S>>& first_moments() const { return m_; }
  const std::vector<Matrix<S>>& second_moments() const { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix<S>> m_, v_;
  long t_ = 0;
};

/// Rescales gradients so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
template <class S>
double clip_global_norm(const std::vector<Param<S>*>& params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params) sq += static_cast<double>(p->grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const S scale = S(max_norm / norm);
    for (auto* p : params) p->grad *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Finite differences

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t passed = 0;
  double worst_rel_error = 0.0;
  std::string worst_param;

  double pass_fraction() const { return checked ? static_cast<double>(passed) / static_cast<double>(checked) : 1.0; }
};

/// Relative error with a floor: both gradients below `abs_floor` in magnitude
/// compare absolutely.
inline double relative_error(double analytic, double numeric, double abs_floor = 1e-7) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < abs_floor) return std::abs(analytic - numeric) / abs_floor;
  return std::abs(analytic - numeric) / scale;
}

/// Compares each param's .grad against central differences of `loss`.
/// `max_per_param` limits the coordinates probed per tensor (0 = all); probed
/// coordinates are drawn from `rng`.
template <class S>
GradCheckResult check_gradients(const std::function<double()>& loss, const std::vector<Param<S>*>& params,
                                double tolerance, double step = 1e-6, std::size_t max_per_param = 0,
                                Rng* rng = nullptr) {
  GradCheckResult res;
  for (auto* p : params) {
    const auto n = static_cast<std::size_t>(p->value.size());
    std::vector<std::size_t> coords;
    if (max_per_param == 0 || max_per_param >= n || !rng) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (std::size_t k = 0; k < max_per_param; ++k) coords.push_back(uniform_index(*rng, n));
    }
    for (std::size_t i : coords) {
      S& w = p->value.data()[i];
      const S saved = w;
      w = saved + S(step);
      const double up = loss();
      w = saved - S(step);
      const double down = loss();
      w = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(static_cast<double>(p->grad.data()[i]), numeric);
      ++res.checked;
      if (err < tolerance) ++res.passed;
      if (err > res.worst_rel_error) {
        res.worst_rel_error = err;
        res.worst_param = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

}  // namespace bnav::num
