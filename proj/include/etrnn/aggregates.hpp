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

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "etrnn/numeric.hpp"
#include "etrnn/transactions.hpp"

namespace etrnn {

// ---------------------------------------------------------------------------
// Hand-crafted aggregate features for the scorecard baseline.

/// Fixed feature layout. Per-category blocks cover the most frequent merchant
/// types and currencies of the data the registry was built from.
struct FeatureRegistry {
  std::vector<Symbol> merchants;
  std::vector<Symbol> currencies;

  std::vector<std::string> names() const;
  std::size_t size() const;
};

FeatureRegistry build_feature_registry(std::span<const ClientHistory> dataset,
                                       std::span<const std::size_t> subset,
                                       int top_merchants = 8, int top_currencies = 5);

/// Windows are measured backwards from the application date. Categories
/// without transactions yield zeros.
std::vector<double> aggregate_features(const ClientHistory& client, const FeatureRegistry& registry);

/// One row per index.
Matrix aggregate_matrix(std::span<const ClientHistory> dataset, std::span<const std::size_t> indices,
                        const FeatureRegistry& registry);

// ---------------------------------------------------------------------------
// Weight-of-evidence binning.

struct WoeBinning {
  std::vector<double> cuts;  // strictly increasing; bin b holds (cuts[b-1], cuts[b]]
  std::vector<double> woe;   // cuts.size() + 1 entries
  double unknown_woe = 0.0;  // applied to non-finite values

  std::size_t bin_of(double x) const;
  double apply(double x) const;
};

/// Quantile bins; WoE_b = ln((goods_b / goods) / (bads_b / bads)), label 0 is
/// "good". Zero cells receive 0.5. Throws DataError unless both classes appear.
WoeBinning fit_woe(std::span<const double> values, std::span<const int> labels, int n_bins = 10);
std::vector<double> apply_woe(const WoeBinning& binning, std::span<const double> values);

// ---------------------------------------------------------------------------
// Logistic regression.

struct LogisticOptions {
  double l2 = 1e-3;
  int epochs = 2000;
  double lr = 0.5;
};

struct LogisticModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  std::vector<double> loss_history;

  std::vector<double> predict(const Matrix& x) const;
};

/// Full-batch gradient descent on mean BCE + l2/2 |w|^2 (intercept unpenalized).
/// Throws NumericError after 10 consecutive loss increases.
LogisticModel train_logistic(const Matrix& x, std::span<const int> y, const LogisticOptions& options = {});

/// Registry + per-feature WoE + logistic, fitted on one index set.
struct AggregateBaseline {
  FeatureRegistry registry;
  std::vector<WoeBinning> binnings;
  LogisticModel model;

  std::vector<double> predict(std::span<const ClientHistory> dataset,
                              std::span<const std::size_t> indices) const;
};

struct BaselineOptions {
  int top_merchants = 8;
  int top_currencies = 5;
  int woe_bins = 10;
  LogisticOptions logistic;
};

AggregateBaseline fit_baseline(std::span<const ClientHistory> dataset,
                               std::span<const std::size_t> train, const BaselineOptions& options = {});

}  // namespace etrnn
