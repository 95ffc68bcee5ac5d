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


#include <Eigen/Cholesky>
#include <random>

#include "doctest.h"
#include "etrnn/aggregates.hpp"
#include "etrnn/metrics.hpp"
#include "etrnn/synth.hpp"
#include "support.hpp"

namespace etrnn {
namespace {

using test::client_with;
using test::tx_at;

// Newton iterations on the same penalized objective, solved with a dense LDLT.
Eigen::VectorXd irls(const Matrix& x, const std::vector<int>& y, double l2) {
  const Eigen::Index n = x.rows(), d = x.cols() + 1;
  Eigen::MatrixXd a(n, d);
  a.col(0).setOnes();
  a.rightCols(d - 1) = x;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd pen = Eigen::VectorXd::Constant(d, l2);
  pen[0] = 0.0;
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd z = a * beta;
    Eigen::VectorXd p(n), w(n), r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = 1.0 / (1.0 + std::exp(-z[i]));
      w[i] = p[i] * (1 - p[i]);
      r[i] = p[i] - y[i];
    }
    const Eigen::VectorXd g = a.transpose() * r / n + pen.cwiseProduct(beta);
    Eigen::MatrixXd h = a.transpose() * w.asDiagonal() * a / n;
    h.diagonal() += pen;
    beta -= h.ldlt().solve(g);
  }
  return beta;
}

}  // namespace

TEST_CASE("aggregate features of a single restaurant payment") {
  FeatureRegistry reg{{Symbol("5812"), Symbol("5411")}, {Symbol("EUR")}};
  CHECK(reg.size() == 4 * 2 + 1 + 11);
  CHECK(reg.names().size() == reg.size());
  const auto c = client_with("a", Label::non_default, "2019-03-01", {tx_at("2019-02-01T12:00:00", 100, "5812")});
  const auto f = aggregate_features(c, reg);
  CHECK(f[0] == 1);
  CHECK(f[1] == 100);
  CHECK(f[2] == 100);
  CHECK(f[3] == 1);
  for (int k = 4; k < 8; ++k) CHECK(f[k] == 0);

  const auto empty = client_with("b", Label::non_default, "2019-03-01", {});
  for (double v : aggregate_features(empty, reg)) CHECK(v == 0);
}

TEST_CASE("aggregate features of a hand-computed client") {
  FeatureRegistry reg{{Symbol("M1"), Symbol("M2")}, {Symbol("EUR"), Symbol("USD")}};
  const auto c = client_with("a", Label::defaulted, "2019-03-01",
                             {tx_at("2019-01-01T00:00:00", 10, "M1", "EUR", "k1"),
                              tx_at("2019-02-10T00:00:00", 30, "M1", "USD", "k2"),
                              tx_at("2019-02-20T00:00:00", 5, "M3", "EUR", "k1")});
  // Ages 59, 19 and 9 days; gaps 40 and 10 days.
  const std::vector<double> expect = {2, 40, 20, 2.0 / 3, 0, 0, 0, 0, 2, 1,
                                      3, 45, 15, 30, 25, 15, 2, 3, 3, 2, 2.0 / 3};
  const auto f = aggregate_features(c, reg);
  REQUIRE(f.size() == expect.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    CAPTURE(reg.names()[k]);
    CHECK(f[k] == doctest::Approx(expect[k]).epsilon(1e-14));
  }
}

TEST_CASE("feature registry picks the most frequent categories") {
  std::vector<ClientHistory> d = {
      client_with("a", Label::non_default, "2019-03-01",
                  {tx_at("2019-01-01T00:00:00", 1, "B"), tx_at("2019-01-02T00:00:00", 1, "B"),
                   tx_at("2019-01-03T00:00:00", 1, "A", "USD")}),
      client_with("b", Label::defaulted, "2019-03-01",
                  {tx_at("2019-01-01T00:00:00", 1, "C"), tx_at("2019-01-02T00:00:00", 1, "A")})};
  const std::vector<std::size_t> all = {0, 1};
  const FeatureRegistry r = build_feature_registry(d, all, 2, 1);
  REQUIRE(r.merchants.size() == 2);
  CHECK(r.merchants[0].str() == "A");  // ties broken by code text
  CHECK(r.merchants[1].str() == "B");
  REQUIRE(r.currencies.size() == 1);
  CHECK(r.currencies[0].str() == "EUR");
}

TEST_CASE("weight of evidence") {
  SUBCASE("two-bin hand case") {
    std::vector<double> v;
    std::vector<int> y;
    auto add = [&](double x, int label, int n) {
      for (int i = 0; i < n; ++i) {
        v.push_back(x);
        y.push_back(label);
      }
    };
    add(0.0, 0, 30);
    add(0.0, 1, 10);
    add(1.0, 0, 10);
    add(1.0, 1, 30);
    const WoeBinning b = fit_woe(v, y, 2);
    REQUIRE(b.woe.size() == 2);
    CHECK(b.woe[0] == doctest::Approx(std::log(3.0)).epsilon(1e-14));
    CHECK(b.woe[1] == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-14));
    CHECK(b.apply(0.0) == b.woe[0]);
    CHECK(b.apply(7.0) == b.woe[1]);
    CHECK(b.apply(std::nan("")) == b.unknown_woe);
  }
  SUBCASE("bads-only bin is large, negative and finite") {
    const std::vector<double> v = {0, 0, 0, 0, 1, 1, 1, 1};
    const std::vector<int> y = {0, 0, 1, 0, 1, 1, 1, 1};
    const WoeBinning b = fit_woe(v, y, 2);
    REQUIRE(b.woe.size() == 2);
    CHECK(std::isfinite(b.woe[1]));
    CHECK(b.woe[1] < -1.5);
  }
  SUBCASE("independent feature") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u;
    std::vector<double> v(20000);
    std::vector<int> y(20000);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = u(rng);
      y[i] = u(rng) < 0.5;
    }
    const WoeBinning b = fit_woe(v, y, 10);
    CHECK(b.woe.size() == 10);
    for (double w : b.woe) CHECK(std::abs(w) < 0.15);
  }
  CHECK_THROWS_AS(fit_woe(std::vector<double>{1, 2}, std::vector<int>{0, 0}), DataError);
}

TEST_CASE("logistic regression") {
  SUBCASE("separable pair") {
    Matrix x(2, 1);
    x << -1, 1;
    LogisticOptions o;
    o.l2 = 0.0;
    const LogisticModel m = train_logistic(x, std::vector<int>{0, 1}, o);
    CHECK(m.loss_history.back() < 0.01);
    CHECK(m.loss_history.back() < m.loss_history.front());
    const auto p = m.predict(x);
    CHECK(p[0] < 0.5);
    CHECK(p[1] > 0.5);
  }
  SUBCASE("heavy penalty") {
    std::mt19937_64 rng(2);
    const Matrix x = test::random_matrix(50, 3, rng);
    std::vector<int> y(50);
    for (int i = 0; i < 50; ++i) y[i] = x(i, 0) > 0;
    LogisticOptions o;
    o.l2 = 1e4;
    o.lr = 1e-4;
    CHECK(train_logistic(x, y, o).weights.norm() < 1e-3);
  }
  SUBCASE("agrees with a Newton oracle") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    const int n = 600;
    Matrix x(n, 4);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 4; ++j) x(i, j) = z(rng);
      x(i, 3) = 0.6 * x(i, 0) + 0.8 * x(i, 3);
      const double logit = -1.0 + 0.8 * x(i, 0) - 0.5 * x(i, 1) + 0.3 * x(i, 2);
      y[i] = std::uniform_real_distribution<double>()(rng) < 1.0 / (1.0 + std::exp(-logit));
    }
    const LogisticModel m = train_logistic(x, y);
    const Eigen::VectorXd beta = irls(x, y, LogisticOptions{}.l2);
    CHECK(m.intercept == doctest::Approx(beta[0]).epsilon(1e-4));
    std::vector<double> oracle(n);
    for (int i = 0; i < n; ++i) oracle[i] = beta[0] + x.row(i).dot(beta.tail(4));
    CHECK(std::abs(roc_auc(m.predict(x), y) - roc_auc(oracle, y)) < 1e-4);
    CHECK((m.weights - beta.tail(4)).cwiseAbs().maxCoeff() < 1e-4);
  }
  SUBCASE("divergence is reported") {
    Matrix x(4, 1);
    x << 1, -1, 2, -2;
    LogisticOptions o;
    o.l2 = 1.0;
    o.lr = 5.0;  // lr * l2 > 2: the penalty step overshoots further every epoch
    CHECK_THROWS_AS(train_logistic(x, std::vector<int>{1, 0, 0, 1}, o), NumericError);
  }
}

TEST_CASE("baseline fits and scores") {
  GenConfig g;
  g.n_clients = 800;
  g.tx_max = 60;
  g.base_default_rate = 0.2;
  g.signal_mode = SignalMode::aggregate;
  const auto data = generate_dataset(g);
  const auto split = out_of_time_split(data.clients, default_boundary(g));
  const AggregateBaseline b = fit_baseline(data.clients, split.train);
  CHECK(b.binnings.size() == b.registry.size());
  CHECK(b.registry.size() == 48);
  const auto scores = b.predict(data.clients, split.valid);
  CHECK(scores.size() == split.valid.size());
  std::vector<int> y;
  for (std::size_t i : split.valid) y.push_back(label_value(data.clients[i].label));
  CHECK(roc_auc(scores, y) > 0.6);
}

}  // namespace etrnn
