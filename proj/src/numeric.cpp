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

#include "etrnn/numeric.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "etrnn/common.hpp"

namespace etrnn {
namespace {

void require_cell_shapes(const char* op, const Eigen::Ref<const Matrix>& x,
                         const Eigen::Ref<const Matrix>& h, int input_size, int hidden_size) {
  if (x.cols() != input_size) {
    throw ShapeError(std::string(op) + ": x has " + std::to_string(x.cols()) +
                     " columns, cell expects " + std::to_string(input_size));
  }
  if (h.cols() != hidden_size || h.rows() != x.rows()) {
    throw ShapeError(std::string(op) + ": h_prev is " + detail::shape_str(h.rows(), h.cols()) +
                     ", expected " + detail::shape_str(x.rows(), hidden_size));
  }
}

void add_column_sums(Eigen::Ref<Matrix> bias_grad, const Matrix& d) {
  for (Eigen::Index i = 0; i < d.rows(); ++i) bias_grad.row(0) += d.row(i);
}

}  // namespace

Matrix gru_cell(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& h_prev,
                const GruParameters& p, GruStepCache* cache) {
  const int hidden = p.hidden_size();
  require_cell_shapes("gru_cell", x, h_prev, p.input_size(), hidden);
  const Eigen::Index batch = x.rows();
  const auto& u = p.recurrent_weights.value;

  Matrix a = p.bias.value.replicate(batch, 1);
  add_product(a, x, p.input_weights.value);
  Matrix zr = a.leftCols(2 * hidden);
  add_product(zr, h_prev, u.leftCols(2 * hidden));

  Matrix z = sigmoid(zr.leftCols(hidden));
  Matrix r = sigmoid(zr.rightCols(hidden));
  Matrix rh = r.cwiseProduct(h_prev);
  Matrix pre_n = a.rightCols(hidden);
  add_product(pre_n, rh, u.rightCols(hidden));
  Matrix n = tanh(pre_n);

  Matrix h = (1.0 - z.array()).matrix().cwiseProduct(h_prev) + z.cwiseProduct(n);
  ETRNN_CHECK_FINITE(h);
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->n = std::move(n);
    cache->rh = std::move(rh);
  }
  return h;
}

CellGradients gru_cell_backward(const GruStepCache& c, const Eigen::Ref<const Matrix>& dh,
                                GruParameters& p) {
  const int hidden = p.hidden_size();
  if (dh.rows() != c.h_prev.rows() || dh.cols() != hidden) {
    throw ShapeError("gru_cell_backward: dh is " + detail::shape_str(dh.rows(), dh.cols()) +
                     ", expected " + detail::shape_str(c.h_prev.rows(), hidden));
  }
  const Eigen::Index batch = dh.rows();
  const auto& u = p.recurrent_weights.value;

  CellGradients out;
  Matrix dz = dh.cwiseProduct(c.n - c.h_prev);
  Matrix dn = dh.cwiseProduct(c.z);
  out.dh_prev = dh.cwiseProduct((1.0 - c.z.array()).matrix());

  Matrix da(batch, 3 * hidden);
  da.rightCols(hidden) = tanh_backward(c.n, dn);
  Matrix d_rh = Matrix::Zero(batch, hidden);
  add_product_nt(d_rh, da.rightCols(hidden), u.rightCols(hidden));
  out.dh_prev += d_rh.cwiseProduct(c.r);
  Matrix dr = d_rh.cwiseProduct(c.h_prev);
  da.leftCols(hidden) = sigmoid_backward(c.z, dz);
  da.middleCols(hidden, hidden) = sigmoid_backward(c.r, dr);

  add_product_tn(p.recurrent_weights.grad.leftCols(2 * hidden), c.h_prev, da.leftCols(2 * hidden));
  add_product_tn(p.recurrent_weights.grad.rightCols(hidden), c.rh, da.rightCols(hidden));
  add_product_nt(out.dh_prev, da.leftCols(2 * hidden), u.leftCols(2 * hidden));

  add_product_tn(p.input_weights.grad, c.x, da);
  add_column_sums(p.bias.grad, da);
  out.dx = Matrix::Zero(batch, c.x.cols());
  add_product_nt(out.dx, da, p.input_weights.value);
  return out;
}

LstmState lstm_cell(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& h_prev,
                    const Eigen::Ref<const Matrix>& c_prev, const LstmParameters& p,
                    LstmStepCache* cache) {
  const int hidden = p.hidden_size();
  require_cell_shapes("lstm_cell", x, h_prev, p.input_size(), hidden);
  if (c_prev.rows() != h_prev.rows() || c_prev.cols() != hidden) {
    throw ShapeError("lstm_cell: c_prev is " + detail::shape_str(c_prev.rows(), c_prev.cols()));
  }
  const Eigen::Index batch = x.rows();

  Matrix a = p.bias.value.replicate(batch, 1);
  add_product(a, x, p.input_weights.value);
  add_product(a, h_prev, p.recurrent_weights.value);

  Matrix i = sigmoid(a.leftCols(hidden));
  Matrix f = sigmoid(a.middleCols(hidden, hidden));
  Matrix g = tanh(a.middleCols(2 * hidden, hidden));
  Matrix o = sigmoid(a.rightCols(hidden));

  LstmState s;
  s.c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  Matrix tc = tanh(s.c);
  s.h = o.cwiseProduct(tc);
  ETRNN_CHECK_FINITE(s.h);
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->g = std::move(g);
    cache->o = std::move(o);
    cache->tanh_c = std::move(tc);
  }
  return s;
}

CellGradients lstm_cell_backward(const LstmStepCache& c, const Eigen::Ref<const Matrix>& dh,
                                 const Eigen::Ref<const Matrix>& dc_next, LstmParameters& p) {
  const int hidden = p.hidden_size();
  if (dh.rows() != c.h_prev.rows() || dh.cols() != hidden || dc_next.rows() != dh.rows() ||
      dc_next.cols() != hidden) {
    throw ShapeError("lstm_cell_backward: gradient shapes do not match the cached step");
  }
  const Eigen::Index batch = dh.rows();

  Matrix d_o = dh.cwiseProduct(c.tanh_c);
  Matrix dc = dc_next + tanh_backward(c.tanh_c, dh.cwiseProduct(c.o));

  Matrix da(batch, 4 * hidden);
  da.leftCols(hidden) = sigmoid_backward(c.i, dc.cwiseProduct(c.g));
  da.middleCols(hidden, hidden) = sigmoid_backward(c.f, dc.cwiseProduct(c.c_prev));
  da.middleCols(2 * hidden, hidden) = tanh_backward(c.g, dc.cwiseProduct(c.i));
  da.rightCols(hidden) = sigmoid_backward(c.o, d_o);

  CellGradients out;
  out.dc_prev = dc.cwiseProduct(c.f);
  add_product_tn(p.recurrent_weights.grad, c.h_prev, da);
  add_product_tn(p.input_weights.grad, c.x, da);
  add_column_sums(p.bias.grad, da);
  out.dh_prev = Matrix::Zero(batch, hidden);
  add_product_nt(out.dh_prev, da, p.recurrent_weights.value);
  out.dx = Matrix::Zero(batch, c.x.cols());
  add_product_nt(out.dx, da, p.input_weights.value);
  return out;
}

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(o.beta1, t);
  const double bias2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    auto m = state.m[k].array();
    auto v = state.v[k].array();
    const auto g = p.grad.array();
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.square();
    p.value.array() -= o.lr * (m / bias1) / ((v / bias2).sqrt() + o.epsilon);
    p.zero_grad();
  }
}

GradCheckReport finite_difference_check(std::span<Parameter* const> params,
                                        const std::function<double(bool)>& loss,
                                        const GradCheckOptions& options) {
  GradCheckReport report;
  for (Parameter* p : params) p->zero_grad();
  const double base = loss(true);
  if (!std::isfinite(base)) {
    report.passed = false;
    report.failure = "loss is non-finite at the unperturbed point";
    return report;
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  const double h = options.step;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(p.value.size()));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (options.max_coords_per_parameter > 0 &&
        coords.size() > static_cast<std::size_t>(options.max_coords_per_parameter)) {
      std::mt19937_64 rng(derive_seed(options.seed, k));
      std::vector<Eigen::Index> picked;
      std::sample(coords.begin(), coords.end(), std::back_inserter(picked),
                  options.max_coords_per_parameter, rng);
      coords = std::move(picked);
    }
    for (Eigen::Index c : coords) {
      double& value = p.value.data()[c];
      const double original = value;
      auto at = [&](double offset) {
        value = original + offset;
        const double v = loss(false);
        value = original;
        return v;
      };
      const double up = at(h), down = at(-h);
      const double up2 = options.five_point ? at(2.0 * h) : 0.0;
      const double down2 = options.five_point ? at(-2.0 * h) : 0.0;

      const std::string where = p.name + "[" + std::to_string(c / p.value.cols()) + "," +
                                std::to_string(c % p.value.cols()) + "]";
      const double a = analytic[k].data()[c];
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(up2) ||
          !std::isfinite(down2) || !std::isfinite(a)) {
        report.passed = false;
        report.failure = "non-finite value at " + where;
        report.worst_coordinate = where;
        return report;
      }
      const double numeric = options.five_point
                                 ? (8.0 * (up - down) - (up2 - down2)) / (12.0 * h)
                                 : (up - down) / (2.0 * h);
      const double abs_err = std::abs(a - numeric);
      const double rel_err =
          abs_err / std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      ++report.coordinates_checked;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel_err > report.max_relative_error) {
        report.max_relative_error = rel_err;
        report.worst_coordinate = where;
      }
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace etrnn
