// Copyright 2026 The ETRNN Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Differentiable kernels. Every forward map has a matching backward map that
// accumulates parameter gradients and returns input gradients; the model
// composes them in reverse order by hand.
//
// Matrix products go through add_product* below rather than Eigen's GEMM. Each
// output row is produced by the same instruction sequence regardless of how
// many rows the operand has, so a client's score does not depend on which
// other clients share its batch.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace etrnn {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = MatrixX<double>;

template <typename Scalar>
struct BasicParameter {
  std::string name;
  MatrixX<Scalar> value;
  MatrixX<Scalar> grad;

  BasicParameter() = default;
  BasicParameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(MatrixX<Scalar>::Zero(rows, cols)),
        grad(MatrixX<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};
using Parameter = BasicParameter<double>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename A, typename B>
void require_inner(const char* op, const A& a, const char* an, const B& b, const char* bn,
                   Eigen::Index a_dim, Eigen::Index b_dim) {
  if (a_dim != b_dim) {
    throw ShapeError(std::string(op) + ": " + an + " is " + shape_str(a.rows(), a.cols()) + " but " +
                     bn + " is " + shape_str(b.rows(), b.cols()));
  }
}

}  // namespace detail

#ifndef NDEBUG
#define ETRNN_CHECK_FINITE(m)                                                      \
  do {                                                                             \
    if (!(m).allFinite()) throw std::runtime_error("non-finite values in " #m);    \
  } while (0)
#else
#define ETRNN_CHECK_FINITE(m) \
  do {                        \
  } while (0)
#endif

/// y += x * w
template <typename DY, typename DX, typename DW>
void add_product(const Eigen::MatrixBase<DY>& y_, const Eigen::MatrixBase<DX>& x,
                 const Eigen::MatrixBase<DW>& w) {
  auto& y = const_cast<Eigen::MatrixBase<DY>&>(y_);
  detail::require_inner("add_product", x, "x", w, "w", x.cols(), w.rows());
  detail::require_inner("add_product", y, "y", x, "x", y.rows(), x.rows());
  detail::require_inner("add_product", y, "y", w, "w", y.cols(), w.cols());
  const Eigen::Index inner = x.cols();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto yi = y.row(i);
    Eigen::Index k = 0;
    for (; k + 4 <= inner; k += 4) {
      yi += x(i, k) * w.row(k) + x(i, k + 1) * w.row(k + 1) + x(i, k + 2) * w.row(k + 2) +
            x(i, k + 3) * w.row(k + 3);
    }
    for (; k < inner; ++k) yi += x(i, k) * w.row(k);
  }
}

/// g += x^T * d
template <typename DG, typename DX, typename DD>
void add_product_tn(const Eigen::MatrixBase<DG>& g_, const Eigen::MatrixBase<DX>& x,
                    const Eigen::MatrixBase<DD>& d) {
  auto& g = const_cast<Eigen::MatrixBase<DG>&>(g_);
  detail::require_inner("add_product_tn", x, "x", d, "d", x.rows(), d.rows());
  detail::require_inner("add_product_tn", g, "g", x, "x", g.rows(), x.cols());
  detail::require_inner("add_product_tn", g, "g", d, "d", g.cols(), d.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) g.row(k) += x(i, k) * d.row(i);
  }
}

/// dx += d * w^T
template <typename DX, typename DD, typename DW>
void add_product_nt(const Eigen::MatrixBase<DX>& dx, const Eigen::MatrixBase<DD>& d,
                    const Eigen::MatrixBase<DW>& w) {
  using Scalar = typename DW::Scalar;
  MatrixX<Scalar> wt = w.transpose();
  add_product(dx, d, wt);
}

// Elementwise activations. The sigmoid branch keeps exp() arguments
// non-positive so it saturates without overflow.
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return static_cast<Scalar>(sigmoid(static_cast<double>(v))); });
}

template <typename Derived>
auto tanh(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return std::tanh(v); });
}

/// dL/dx given dL/dy and y = sigmoid(x).
template <typename DY, typename DG>
auto sigmoid_backward(const Eigen::MatrixBase<DY>& y, const Eigen::MatrixBase<DG>& dy) {
  return (dy.array() * y.array() * (1 - y.array())).matrix();
}

/// dL/dx given dL/dy and y = tanh(x).
template <typename DY, typename DG>
auto tanh_backward(const Eigen::MatrixBase<DY>& y, const Eigen::MatrixBase<DG>& dy) {
  return (dy.array() * (1 - y.array().square())).matrix();
}

template <typename DA, typename DB>
auto concat_columns(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  detail::require_inner("concat_columns", a, "a", b, "b", a.rows(), b.rows());
  MatrixX<Scalar> out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

/// Splits the gradient of a column concatenation back into its two parts.
template <typename DG>
auto concat_columns_backward(const Eigen::MatrixBase<DG>& dy, Eigen::Index left_cols) {
  using Scalar = typename DG::Scalar;
  return std::pair<MatrixX<Scalar>, MatrixX<Scalar>>{dy.leftCols(left_cols),
                                                     dy.rightCols(dy.cols() - left_cols)};
}

template <typename DA, typename DB>
auto hadamard(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  detail::require_inner("hadamard", a, "a", b, "b", a.size(), b.size());
  return a.cwiseProduct(b);
}

// y = x W + b
template <typename DX, typename Scalar>
MatrixX<Scalar> affine(const Eigen::MatrixBase<DX>& x, const BasicParameter<Scalar>& w,
                       const BasicParameter<Scalar>& b) {
  detail::require_inner("affine", x, "x", w.value, "W", x.cols(), w.value.rows());
  detail::require_inner("affine", w.value, "W", b.value, "b", w.value.cols(), b.value.cols());
  if (b.value.rows() != 1) throw ShapeError("affine: bias must have one row");
  MatrixX<Scalar> y = b.value.replicate(x.rows(), 1);
  add_product(y, x, w.value);
  return y;
}

/// Accumulates dW = x^T dy and db = column sums of dy; returns dx = dy W^T.
template <typename DX, typename DY, typename Scalar>
MatrixX<Scalar> affine_backward(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& dy,
                                BasicParameter<Scalar>& w, BasicParameter<Scalar>& b) {
  detail::require_inner("affine_backward", x, "x", dy, "dy", x.rows(), dy.rows());
  detail::require_inner("affine_backward", dy, "dy", w.value, "W", dy.cols(), w.value.cols());
  add_product_tn(w.grad, x, dy);
  for (Eigen::Index i = 0; i < dy.rows(); ++i) b.grad.row(0) += dy.row(i);
  MatrixX<Scalar> dx = MatrixX<Scalar>::Zero(x.rows(), x.cols());
  add_product_nt(dx, dy, w.value);
  return dx;
}

template <typename Scalar>
MatrixX<Scalar> embedding_lookup(const BasicParameter<Scalar>& table,
                                 std::span<const std::int32_t> indices) {
  MatrixX<Scalar> out(static_cast<Eigen::Index>(indices.size()), table.value.cols());
  for (std::size_t t = 0; t < indices.size(); ++t) {
    if (indices[t] < 0 || indices[t] >= table.value.rows()) {
      throw std::out_of_range("embedding_lookup: index " + std::to_string(indices[t]) +
                              " outside table " + table.name + " with " +
                              std::to_string(table.value.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(t)) = table.value.row(indices[t]);
  }
  return out;
}

/// Scatter-adds output gradients into the looked-up table rows.
template <typename DG, typename Scalar>
void embedding_backward(BasicParameter<Scalar>& table, std::span<const std::int32_t> indices,
                        const Eigen::MatrixBase<DG>& dy) {
  detail::require_inner("embedding_backward", dy, "dy", table.value, "table", dy.cols(),
                        table.value.cols());
  for (std::size_t t = 0; t < indices.size(); ++t) {
    table.grad.row(indices[t]) += dy.row(static_cast<Eigen::Index>(t));
  }
}

// ---------------------------------------------------------------------------
// Recurrent cells.
//
// GRU, gate blocks [z | r | n] along the columns of every weight:
//   z  = sigmoid(x Wz + h Uz + bz)
//   r  = sigmoid(x Wr + h Ur + br)
//   n  = tanh(x Wn + (r * h) Un + bn)
//   h' = (1 - z) * h + z * n

struct GruParameters {
  Parameter input_weights;      // I x 3H
  Parameter recurrent_weights;  // H x 3H
  Parameter bias;               // 1 x 3H

  GruParameters() = default;
  GruParameters(const std::string& prefix, int input_size, int hidden_size)
      : input_weights(prefix + ".W", input_size, 3 * hidden_size),
        recurrent_weights(prefix + ".U", hidden_size, 3 * hidden_size),
        bias(prefix + ".b", 1, 3 * hidden_size) {}

  int input_size() const { return static_cast<int>(input_weights.value.rows()); }
  int hidden_size() const { return static_cast<int>(recurrent_weights.value.rows()); }
  std::vector<Parameter*> parameters() { return {&input_weights, &recurrent_weights, &bias}; }
};

struct GruStepCache {
  Matrix x;
  Matrix h_prev;
  Matrix z;
  Matrix r;
  Matrix n;
  Matrix rh;  // r * h_prev
};

struct CellGradients {
  Matrix dx;
  Matrix dh_prev;
  Matrix dc_prev;  // LSTM only
};

Matrix gru_cell(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& h_prev,
                const GruParameters& p, GruStepCache* cache = nullptr);

/// Accumulates weight gradients; returns gradients for x and h_prev.
CellGradients gru_cell_backward(const GruStepCache& cache, const Eigen::Ref<const Matrix>& dh,
                                GruParameters& p);

// LSTM, gate blocks [i | f | g | o]:
//   c' = f * c + i * g,  h' = o * tanh(c')

struct LstmParameters {
  Parameter input_weights;      // I x 4H
  Parameter recurrent_weights;  // H x 4H
  Parameter bias;               // 1 x 4H

  LstmParameters() = default;
  LstmParameters(const std::string& prefix, int input_size, int hidden_size)
      : input_weights(prefix + ".W", input_size, 4 * hidden_size),
        recurrent_weights(prefix + ".U", hidden_size, 4 * hidden_size),
        bias(prefix + ".b", 1, 4 * hidden_size) {}

  int input_size() const { return static_cast<int>(input_weights.value.rows()); }
  int hidden_size() const { return static_cast<int>(recurrent_weights.value.rows()); }
  std::vector<Parameter*> parameters() { return {&input_weights, &recurrent_weights, &bias}; }
};

struct LstmState {
  Matrix h;
  Matrix c;
};

struct LstmStepCache {
  Matrix x;
  Matrix h_prev;
  Matrix c_prev;
  Matrix i, f, g, o;
  Matrix tanh_c;
};

LstmState lstm_cell(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& h_prev,
                    const Eigen::Ref<const Matrix>& c_prev, const LstmParameters& p,
                    LstmStepCache* cache = nullptr);

CellGradients lstm_cell_backward(const LstmStepCache& cache, const Eigen::Ref<const Matrix>& dh,
                                 const Eigen::Ref<const Matrix>& dc, LstmParameters& p);

// ---------------------------------------------------------------------------
// Optimizer.

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  explicit AdamState(AdamOptions o = {}) : options(o) {}
};

/// Bias-corrected Adam update; zeroes the gradients afterwards.
void adam_step(std::span<Parameter* const> params, AdamState& state);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  // Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
  // coordinates with vanishing gradients from dividing roundoff by ~0.
  double denominator_floor = 1e-8;
  // 0 checks every coordinate; otherwise a seeded random subset per parameter.
  int max_coords_per_parameter = 0;
  std::uint64_t seed = 0;
  // Central 5-point stencil: O(h^4) truncation instead of O(h^2).
  bool five_point = false;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_coordinate;
  std::size_t coordinates_checked = 0;
  bool passed = true;
  std::optional<std::string> failure;
};

/// `loss(true)` must evaluate the scalar loss and accumulate its gradient into
/// each parameter's grad; `loss(false)` only evaluates. Parameter values are
/// restored before returning.
GradCheckReport finite_difference_check(std::span<Parameter* const> params,
                                        const std::function<double(bool)>& loss,
                                        const GradCheckOptions& options = {});

}  // namespace etrnn
