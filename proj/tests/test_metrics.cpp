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


#include <algorithm>
#include <random>
#include <vector>

#include "doctest.h"
#include "etrnn/common.hpp"
#include "etrnn/metrics.hpp"

namespace etrnn {
namespace {

// O(P N) pair count: concordant pairs plus half the ties, over all pairs.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("roc_auc examples") {
  CHECK(roc_auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}) == 0.0);
  CHECK(roc_auc(std::vector<double>(7, 0.3), std::vector<int>{1, 0, 0, 1, 0, 1, 0}) == 0.5);
}

TEST_CASE("roc_auc matches the pairwise oracle with ties") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 200;
    std::uniform_int_distribution<int> level(0, 20);
    std::bernoulli_distribution pos(0.3);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = level(rng) / 20.0;
      y[i] = pos(rng) ? 1 : 0;
    }
    if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
    if (std::count(y.begin(), y.end(), 0) == 0) y[0] = 0;
    CHECK(std::abs(roc_auc(s, y) - pairwise_auc(s, y)) < 1e-12);
  }
}

TEST_CASE("roc_auc is rank based") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  std::vector<double> s(300), t(300);
  std::vector<int> y(300);
  for (int i = 0; i < 300; ++i) {
    y[i] = i % 4 == 0;
    s[i] = z(rng) + y[i];
    t[i] = std::exp(3 * s[i]) - 5;
  }
  CHECK(roc_auc(s, y) == roc_auc(t, y));
  std::vector<int> flipped(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) flipped[i] = 1 - y[i];
  CHECK(roc_auc(s, flipped) == doctest::Approx(1.0 - roc_auc(s, y)).epsilon(1e-12));
}

TEST_CASE("roc_auc rejects degenerate input") {
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), DataError);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), DataError);
}

TEST_CASE("mean and sample stddev") {
  const std::vector<double> v = {2, 4, 4, 4, 5, 5, 7, 9};
  CHECK(mean(v) == 5.0);
  CHECK(stddev(v) == doctest::Approx(std::sqrt(32.0 / 7.0)));
  CHECK(stddev(std::vector<double>{3.0}) == 0.0);
}

}  // namespace etrnn
