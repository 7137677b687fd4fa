#pragma once

// Truncated discrete-time Chen series.
//
// Every matrix here is indexed by an OrderVector. The concatenation matrix of
// one input sample has [S]_{jk} = u_xi whenever xi * eta_k = eta_j, so it is
// unit lower triangular, and the running representation of the Chen series is
// the directed product S(N) ... S(1) S(0). Its first column holds the iterated
// sums S_eta[u](N) and is the regressor of the learning unit.

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chenflow/words.hpp"

namespace chenflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using OrderPtr = std::shared_ptr<const OrderVector>;

/// One sample [u_0(N), u_1(N), ..., u_m(N)] of input areas. Always carries
/// m+1 entries; a driftless alphabet simply never reads entry 0.
class InputSample {
 public:
  InputSample() = default;
  explicit InputSample(Vector values) : values_(std::move(values)) {}
  InputSample(std::initializer_list<double> values) : values_(static_cast<Eigen::Index>(values.size())) {
    Eigen::Index i = 0;
    for (double v : values) values_[i++] = v;
  }

  static InputSample zero(std::size_t m) { return InputSample(Vector::Zero(static_cast<Eigen::Index>(m + 1))); }

  /// Zero-order hold of u over one step: u_0 = delta, u_i = u_i * delta.
  static InputSample held(double delta, const Vector& u) {
    Vector v(u.size() + 1);
    v[0] = delta;
    v.tail(u.size()) = u * delta;
    return InputSample(std::move(v));
  }

  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return values_[static_cast<Eigen::Index>(i)]; }
  const Vector& values() const { return values_; }

  /// u_xi = u_{i_k} ... u_{i_1} over the first `length` letters of xi.
  double monomial(const Word& xi, std::size_t length) const {
    double out = 1.0;
    for (std::size_t i = 0; i < length; ++i) out *= (*this)[xi[i]];
    return out;
  }
  double monomial(const Word& xi) const { return monomial(xi, xi.size()); }

 private:
  Vector values_;
};

namespace detail {

inline void check_sample(const InputSample& sample, const Alphabet& alphabet) {
  if (sample.size() != alphabet.m() + 1) {
    throw std::invalid_argument("input sample has " + std::to_string(sample.size()) + " entries, alphabet needs " +
                                std::to_string(alphabet.m() + 1));
  }
}

}  // namespace detail

struct SMatrix {
  OrderPtr order;
  Matrix data;
};

/// Direct construction: test eta_k ⪯ eta_j for every pair and fill u_xi.
/// O(l^2 J); kept as the reference for the inductive builder.
inline SMatrix s_matrix(const InputSample& sample, const OrderPtr& order) {
  detail::check_sample(sample, order->alphabet());
  const auto l = static_cast<Eigen::Index>(order->size());
  Matrix s = Matrix::Zero(l, l);
  for (Eigen::Index j = 0; j < l; ++j) {
    const Word& row = (*order)[static_cast<std::size_t>(j)];
    for (Eigen::Index k = 0; k <= j; ++k) {
      const Word& col = (*order)[static_cast<std::size_t>(k)];
      if (preceq(col, row)) s(j, k) = sample.monomial(row, row.size() - col.size());
    }
  }
  return {order, std::move(s)};
}

/// Block recursion S^0 = [1],
///   S^{J+1} = [ 1                 0                       ]
///             [ u ⊗ (S^J e_1)     blockdiag(S^J, ..., S^J) ]
/// with one block per letter of the alphabet.
inline Matrix s_matrix_block(const InputSample& sample, const Alphabet& alphabet, std::size_t degree) {
  detail::check_sample(sample, alphabet);
  Matrix s = Matrix::Ones(1, 1);
  const auto q = static_cast<Eigen::Index>(alphabet.size());
  for (std::size_t d = 0; d < degree; ++d) {
    const Eigen::Index l = s.rows();
    Matrix next = Matrix::Zero(1 + q * l, 1 + q * l);
    next(0, 0) = 1.0;
    for (Eigen::Index b = 0; b < q; ++b) {
      const double weight = sample[alphabet.letters()[static_cast<std::size_t>(b)]];
      next.block(1 + b * l, 0, l, 1) = weight * s.col(0);
      next.block(1 + b * l, 1 + b * l, l, l) = s;
    }
    s = std::move(next);
  }
  return s;
}

inline SMatrix s_matrix_inductive(const InputSample& sample, const OrderPtr& order) {
  return {order, s_matrix_block(sample, order->alphabet(), order->degree())};
}

/// Monomials u_eta for eta in chi^d, d = 0..degree: the first columns of the
/// nested S^d.
inline std::vector<Vector> monomial_columns(const InputSample& sample, const Alphabet& alphabet, std::size_t degree) {
  std::vector<Vector> cols;
  cols.reserve(degree + 1);
  cols.push_back(Vector::Ones(1));
  const auto q = static_cast<Eigen::Index>(alphabet.size());
  for (std::size_t d = 0; d < degree; ++d) {
    const Vector& prev = cols.back();
    const Eigen::Index l = prev.size();
    Vector next(1 + q * l);
    next[0] = 1.0;
    for (Eigen::Index b = 0; b < q; ++b)
      next.segment(1 + b * l, l) = sample[alphabet.letters()[static_cast<std::size_t>(b)]] * prev;
    cols.push_back(std::move(next));
  }
  return cols;
}

/// Computes S(sample) * r through the block recursion without materializing
/// S. O(l J) per call; this is the hot path of stepping and prediction.
inline Vector apply_s_matrix(const InputSample& sample, const OrderVector& order, const Vector& r) {
  const Alphabet& alphabet = order.alphabet();
  detail::check_sample(sample, alphabet);
  if (static_cast<std::size_t>(r.size()) != order.size()) throw std::invalid_argument("apply_s_matrix: size mismatch");
  const std::size_t degree = order.degree();
  std::vector<Vector> cols = monomial_columns(sample, alphabet, degree);

  // Recursive form of the block product: for block b of letter a,
  //   out_b = u_a * r_0 * (S^{d-1} e_1) + S^{d-1} r_b.
  Vector out(r.size());
  struct Rec {
    const std::vector<Vector>& cols;
    const Alphabet& alphabet;
    const InputSample& sample;
    void operator()(std::size_t d, const double* in, double* dst) const {
      dst[0] = in[0];
      if (d == 0) return;
      const Vector& inner = cols[d - 1];
      const auto l = static_cast<std::size_t>(inner.size());
      for (std::size_t b = 0; b < alphabet.size(); ++b) {
        const std::size_t offset = 1 + b * l;
        (*this)(d - 1, in + offset, dst + offset);
        const double scale = sample[alphabet.letters()[b]] * in[0];
        if (scale != 0.0)
          for (std::size_t i = 0; i < l; ++i) dst[offset + i] += scale * inner[static_cast<Eigen::Index>(i)];
      }
    }
  };
  Rec{cols, alphabet, sample}(degree, r.data(), out.data());
  return out;
}

inline bool is_unit_lower_triangular(const Matrix& m, double tol = 0.0) {
  if (m.rows() != m.cols()) return false;
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    if (std::abs(m(j, j) - 1.0) > tol) return false;
    for (Eigen::Index k = j + 1; k < m.cols(); ++k)
      if (std::abs(m(j, k)) > tol) return false;
  }
  return true;
}

enum class Tracking {
  regressor,  // keep only the first column of Π
  full,       // also keep Π itself (tests, diagnostics)
};

/// Running truncated Chen series Π(S[u](N)). Production code only needs
/// Π e_1 = φ(N), which steps as φ <- S(N+1) φ.
class ChenState {
 public:
  /// The empty input sequence: Π = I, no samples absorbed.
  static ChenState empty(OrderPtr order, Tracking tracking = Tracking::regressor) {
    ChenState s;
    const auto l = static_cast<Eigen::Index>(order->size());
    s.regressor_ = Vector::Zero(l);
    s.regressor_[0] = 1.0;
    if (tracking == Tracking::full) s.pi_ = Matrix::Identity(l, l);
    s.order_ = std::move(order);
    return s;
  }

  const OrderPtr& order() const { return order_; }
  std::size_t samples() const { return samples_; }
  /// Sample index N of the last absorbed sample; -1 for the empty sequence.
  std::ptrdiff_t index() const { return static_cast<std::ptrdiff_t>(samples_) - 1; }

  const Vector& regressor() const { return regressor_; }
  bool tracks_pi() const { return pi_.has_value(); }
  const Matrix& pi() const {
    if (!pi_) throw std::logic_error("ChenState does not track the full representation");
    return *pi_;
  }

  void advance(const InputSample& sample) {
    regressor_ = apply_s_matrix(sample, *order_, regressor_);
    if (pi_) {
      pi_ = s_matrix_inductive(sample, order_).data * *pi_;
#ifndef NDEBUG
      if (!is_unit_lower_triangular(*pi_, 0.0)) throw std::logic_error("Π lost unit lower triangular form");
#endif
    }
    ++samples_;
  }

  ChenState stepped(const InputSample& sample) const {
    ChenState out = *this;
    out.advance(sample);
    return out;
  }

 private:
  ChenState() = default;

  OrderPtr order_;
  Vector regressor_;
  std::optional<Matrix> pi_;
  std::size_t samples_ = 0;
};

/// State after the first sample: Π = S(u(0)), N = 0.
inline ChenState chen_init(OrderPtr order, const InputSample& sample, Tracking tracking = Tracking::regressor) {
  ChenState s = ChenState::empty(std::move(order), tracking);
  s.advance(sample);
  return s;
}

inline ChenState chen_step(const ChenState& state, const InputSample& sample) { return state.stepped(sample); }

/// Absorbs samples[0..] in order starting from the empty sequence.
inline ChenState chen_run(OrderPtr order, std::span<const InputSample> samples, Tracking tracking = Tracking::regressor) {
  ChenState s = ChenState::empty(std::move(order), tracking);
  for (const InputSample& u : samples) s.advance(u);
  return s;
}

inline const Vector& regressor(const ChenState& state) { return state.regressor(); }

/// Coefficients (c, eta_j) of a generating series, in order-vector order.
struct CoefficientVector {
  OrderPtr order;
  Vector theta;

  static CoefficientVector zero(OrderPtr order) {
    const auto l = static_cast<Eigen::Index>(order->size());
    return {std::move(order), Vector::Zero(l)};
  }

  static CoefficientVector from(OrderPtr order, Vector theta) {
    if (static_cast<std::size_t>(theta.size()) != order->size())
      throw std::invalid_argument("coefficient vector length does not match order vector");
    return {std::move(order), std::move(theta)};
  }
};

namespace detail {

inline void check_orders(const OrderPtr& a, const OrderPtr& b) {
  if (a != b && !(*a == *b)) throw std::invalid_argument("order vector mismatch");
}

}  // namespace detail

/// Truncated Fliess operator output θᵀ φ(N).
inline double evaluate(const CoefficientVector& theta, const ChenState& state) {
  detail::check_orders(theta.order, state.order());
  return theta.theta.dot(state.regressor());
}

/// θᵀ S(next) φ(N): the output one step ahead under candidate `next`,
/// without touching `state`. A polynomial in the entries of `next`.
inline double predict_next(const CoefficientVector& theta, const ChenState& state, const InputSample& next) {
  detail::check_orders(theta.order, state.order());
  return theta.theta.dot(apply_s_matrix(next, *state.order(), state.regressor()));
}

/// Reference iterated sum S_eta[u](N, 0) straight from the recursion
///   S_{x_i eta}(N) = sum_{k=0..N} u_i(k) S_eta(k),  S_e = 1.
/// O(|eta| N); independent of the matrix machinery above.
inline double iterated_sum(const Word& eta, std::span<const InputSample> samples, std::size_t n) {
  if (n >= samples.size()) throw std::out_of_range("iterated_sum: sample index beyond input sequence");
  std::vector<double> inner(n + 1, 1.0);
  for (std::size_t pos = eta.size(); pos-- > 0;) {
    const Letter a = eta[pos];
    double running = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      if (a >= samples[k].size()) throw std::invalid_argument("iterated_sum: letter outside sample");
      running += samples[k][a] * inner[k];
      inner[k] = running;
    }
  }
  return inner[n];
}

}  // namespace chenflow
