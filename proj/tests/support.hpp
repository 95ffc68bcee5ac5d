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

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "etrnn/numeric.hpp"
#include "etrnn/transactions.hpp"

namespace etrnn::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline void randomize(Parameter& p, std::mt19937_64& rng, double scale = 0.5) {
  p.value = random_matrix(p.value.rows(), p.value.cols(), rng, scale);
  p.zero_grad();
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-loop GRU step for one row, written straight from the gate equations.
inline std::vector<double> gru_row(const std::vector<double>& x, const std::vector<double>& h,
                            const GruParameters& p) {
  const int I = p.input_size(), H = p.hidden_size();
  auto pre = [&](int col, const std::vector<double>& hv) {
    double s = p.bias.value(0, col);
    for (int i = 0; i < I; ++i) s += x[i] * p.input_weights.value(i, col);
    for (int j = 0; j < H; ++j) s += hv[j] * p.recurrent_weights.value(j, col);
    return s;
  };
  std::vector<double> z(H), r(H), out(H);
  for (int k = 0; k < H; ++k) {
    z[k] = logistic(pre(k, h));
    r[k] = logistic(pre(H + k, h));
  }
  std::vector<double> rh(H);
  for (int k = 0; k < H; ++k) rh[k] = r[k] * h[k];
  for (int k = 0; k < H; ++k) {
    const double n = std::tanh(pre(2 * H + k, rh));
    out[k] = (1 - z[k]) * h[k] + z[k] * n;
  }
  return out;
}

// Central differences of f with respect to every entry of m, compared against
// `analytic`. Returns the largest |a - n| / max(|a|, |n|, floor).
inline double fd_max_rel_error(Matrix& m, const Matrix& analytic, const std::function<double()>& f,
                               double h = 1e-5, double floor = 1e-8) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double keep = m.data()[i];
    m.data()[i] = keep + h;
    const double up = f();
    m.data()[i] = keep - h;
    const double down = f();
    m.data()[i] = keep;
    const double num = (up - down) / (2 * h);
    const double a = analytic.data()[i];
    worst = std::max(worst, std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor}));
  }
  return worst;
}

inline TransactionRecord tx_at(const std::string& when, double amount,
                               const std::string& merchant = "MCC01",
                               const std::string& currency = "EUR",
                               const std::string& card = "card1") {
  TransactionRecord tx;
  tx.amount = amount;
  tx.timestamp = parse_timestamp(when);
  tx.currency = Symbol(currency);
  tx.country = Symbol("DE");
  tx.merchant_type = Symbol(merchant);
  tx.card_type = Symbol("VISA");
  tx.issuing_branch = Symbol("BR1");
  tx.card_id = Symbol(card);
  tx.n_opened_debit_cards = 1;
  tx.n_opened_credit_cards = 0;
  return tx;
}

inline ClientHistory client_with(std::string id, Label label, const std::string& app,
                                 std::vector<TransactionRecord> txs) {
  ClientHistory c;
  c.client_id = std::move(id);
  c.label = label;
  c.application_date = parse_date(app);
  c.transactions = std::move(txs);
  return c;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("etrnn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace etrnn::test
