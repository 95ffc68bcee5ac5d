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

#include "etrnn/aggregates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "etrnn/common.hpp"

namespace etrnn {

namespace {

std::vector<Symbol> most_frequent(const std::map<Symbol, std::size_t>& counts, int top) {
  std::vector<std::pair<Symbol, std::size_t>> v(counts.begin(), counts.end());
  // Ties broken by code text so the registry does not depend on intern order.
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first.str() < b.first.str();
  });
  std::vector<Symbol> out;
  for (int i = 0; i < top && i < static_cast<int>(v.size()); ++i) out.push_back(v[i].first);
  return out;
}

constexpr const char* kTailNames[] = {
    "total_count",     "total_amount",    "mean_amount",     "max_amount",
    "mean_days_since_prev", "std_days_since_prev", "count_last_30d", "count_last_90d",
    "count_last_365d", "n_cards",         "top_merchant_share"};
constexpr std::size_t kTailCount = std::size(kTailNames);

}  // namespace

std::vector<std::string> FeatureRegistry::names() const {
  std::vector<std::string> out;
  for (Symbol m : merchants) {
    const std::string s(m.str());
    out.push_back("merchant_" + s + "_count");
    out.push_back("merchant_" + s + "_sum");
    out.push_back("merchant_" + s + "_mean");
    out.push_back("merchant_" + s + "_share");
  }
  for (Symbol c : currencies) out.push_back("currency_" + std::string(c.str()) + "_count");
  for (const char* name : kTailNames) out.emplace_back(name);
  return out;
}

std::size_t FeatureRegistry::size() const {
  return 4 * merchants.size() + currencies.size() + kTailCount;
}

FeatureRegistry build_feature_registry(std::span<const ClientHistory> dataset,
                                       std::span<const std::size_t> subset, int top_merchants,
                                       int top_currencies) {
  std::map<Symbol, std::size_t> merchants, currencies;
  for (std::size_t i : subset) {
    for (const auto& tx : dataset[i].transactions) {
      ++merchants[tx.merchant_type];
      ++currencies[tx.currency];
    }
  }
  return {most_frequent(merchants, top_merchants), most_frequent(currencies, top_currencies)};
}

std::vector<double> aggregate_features(const ClientHistory& client, const FeatureRegistry& registry) {
  std::vector<double> out(registry.size(), 0.0);
  const auto& txs = client.transactions;
  const double n = static_cast<double>(txs.size());
  if (txs.empty()) return out;

  const std::size_t nm = registry.merchants.size();
  std::map<Symbol, std::size_t> merchant_counts;
  double total = 0.0, max_amount = -std::numeric_limits<double>::infinity();
  std::set<Symbol> cards;
  const std::int64_t app = Timestamp(client.application_date).time_since_epoch().count();
  int last30 = 0, last90 = 0, last365 = 0;
  for (const auto& tx : txs) {
    ++merchant_counts[tx.merchant_type];
    for (std::size_t m = 0; m < nm; ++m) {
      if (tx.merchant_type == registry.merchants[m]) {
        out[4 * m] += 1.0;
        out[4 * m + 1] += tx.amount;
      }
    }
    for (std::size_t c = 0; c < registry.currencies.size(); ++c) {
      if (tx.currency == registry.currencies[c]) out[4 * nm + c] += 1.0;
    }
    total += tx.amount;
    max_amount = std::max(max_amount, tx.amount);
    cards.insert(tx.card_id);
    const double age_days = (app - tx.timestamp.time_since_epoch().count()) / kSecondsPerDay;
    last30 += age_days <= 30.0;
    last90 += age_days <= 90.0;
    last365 += age_days <= 365.0;
  }
  for (std::size_t m = 0; m < nm; ++m) {
    if (out[4 * m] > 0.0) out[4 * m + 2] = out[4 * m + 1] / out[4 * m];
    out[4 * m + 3] = out[4 * m] / n;
  }

  double gap_mean = 0.0, gap_sd = 0.0;
  if (txs.size() > 1) {
    std::vector<double> gaps;
    for (std::size_t i = 1; i < txs.size(); ++i) {
      gaps.push_back((txs[i].timestamp - txs[i - 1].timestamp).count() / kSecondsPerDay);
    }
    for (double g : gaps) gap_mean += g;
    gap_mean /= static_cast<double>(gaps.size());
    for (double g : gaps) gap_sd += (g - gap_mean) * (g - gap_mean);
    gap_sd = std::sqrt(gap_sd / static_cast<double>(gaps.size()));
  }
  std::size_t top = 0;
  for (const auto& [sym, count] : merchant_counts) top = std::max(top, count);

  double* tail = out.data() + 4 * nm + registry.currencies.size();
  tail[0] = n;
  tail[1] = total;
  tail[2] = total / n;
  tail[3] = max_amount;
  tail[4] = gap_mean;
  tail[5] = gap_sd;
  tail[6] = last30;
  tail[7] = last90;
  tail[8] = last365;
  tail[9] = static_cast<double>(cards.size());
  tail[10] = static_cast<double>(top) / n;
  return out;
}

Matrix aggregate_matrix(std::span<const ClientHistory> dataset, std::span<const std::size_t> indices,
                        const FeatureRegistry& registry) {
  Matrix x(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(registry.size()));
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::vector<double> f = aggregate_features(dataset[indices[r]], registry);
    x.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), f.size());
  }
  return x;
}

// ---------------------------------------------------------------------------

std::size_t WoeBinning::bin_of(double x) const {
  return static_cast<std::size_t>(std::lower_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
}

double WoeBinning::apply(double x) const {
  if (!std::isfinite(x)) return unknown_woe;
  return woe[bin_of(x)];
}

WoeBinning fit_woe(std::span<const double> values, std::span<const int> labels, int n_bins) {
  if (values.size() != labels.size()) throw DataError("fit_woe: value/label size mismatch");
  if (n_bins < 1) throw UsageError("fit_woe: n_bins must be >= 1");
  std::vector<double> sorted;
  double goods = 0.0, bads = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    (labels[i] == 1 ? bads : goods) += 1.0;
    if (std::isfinite(values[i])) sorted.push_back(values[i]);
  }
  if (goods == 0.0 || bads == 0.0) throw DataError("fit_woe needs both classes");

  WoeBinning out;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (n > 0) {
    for (int k = 1; k < n_bins; ++k) {
      const std::size_t pos = (static_cast<std::size_t>(k) * n + n_bins - 1) / n_bins;
      const double c = sorted[std::min(n - 1, pos == 0 ? 0 : pos - 1)];
      if (c < sorted.back() && (out.cuts.empty() || c > out.cuts.back())) out.cuts.push_back(c);
    }
  }
  const std::size_t bins = out.cuts.size() + 1;
  std::vector<double> g(bins, 0.0), b(bins, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) continue;
    (labels[i] == 1 ? b : g)[out.bin_of(values[i])] += 1.0;
  }
  out.woe.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double gk = g[k] > 0.0 ? g[k] : 0.5;
    const double bk = b[k] > 0.0 ? b[k] : 0.5;
    out.woe[k] = bins == 1 ? 0.0 : std::log((gk / goods) / (bk / bads));
  }
  return out;
}

std::vector<double> apply_woe(const WoeBinning& binning, std::span<const double> values) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = binning.apply(values[i]);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

std::vector<double> LogisticModel::predict(const Matrix& x) const {
  const Eigen::VectorXd z = (x * weights).array() + intercept;
  std::vector<double> out(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-z[i]));
  return out;
}

LogisticModel train_logistic(const Matrix& x, std::span<const int> y, const LogisticOptions& options) {
  if (static_cast<std::size_t>(x.rows()) != y.size() || y.empty()) {
    throw DataError("train_logistic: feature rows and labels differ or are empty");
  }
  if (!x.allFinite()) throw DataError("train_logistic: non-finite feature value");
  const Eigen::Index n = x.rows(), d = x.cols();
  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv[i] = y[static_cast<std::size_t>(i)];

  LogisticModel m;
  m.weights = Eigen::VectorXd::Zero(d);
  int increases = 0;
  double prev = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const Eigen::VectorXd z = (x * m.weights).array() + m.intercept;
    double loss = 0.0;
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      loss += softplus(z[i]) - yv[i] * z[i];
      r[i] = 1.0 / (1.0 + std::exp(-z[i])) - yv[i];
    }
    loss = loss / static_cast<double>(n) + 0.5 * options.l2 * m.weights.squaredNorm();
    if (!std::isfinite(loss)) {
      throw NumericError("logistic regression diverged (non-finite loss); try a smaller lr");
    }
    m.loss_history.push_back(loss);
    increases = loss > prev ? increases + 1 : 0;
    if (increases >= 10) {
      throw NumericError("logistic regression diverged (loss rose 10 epochs in a row); "
                         "try a smaller lr");
    }
    prev = loss;
    const Eigen::VectorXd gw = x.transpose() * r / static_cast<double>(n) + options.l2 * m.weights;
    m.weights -= options.lr * gw;
    m.intercept -= options.lr * r.mean();
  }
  return m;
}

std::vector<double> AggregateBaseline::predict(std::span<const ClientHistory> dataset,
                                               std::span<const std::size_t> indices) const {
  Matrix x = aggregate_matrix(dataset, indices, registry);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = binnings[j].apply(x(i, j));
  }
  return model.predict(x);
}

AggregateBaseline fit_baseline(std::span<const ClientHistory> dataset,
                               std::span<const std::size_t> train, const BaselineOptions& options) {
  AggregateBaseline out;
  out.registry = build_feature_registry(dataset, train, options.top_merchants, options.top_currencies);
  Matrix x = aggregate_matrix(dataset, train, out.registry);
  std::vector<int> y;
  y.reserve(train.size());
  for (std::size_t i : train) y.push_back(label_value(dataset[i].label));
  std::vector<double> column(train.size());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) column[i] = x(i, j);
    out.binnings.push_back(fit_woe(column, y, options.woe_bins));
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = out.binnings.back().apply(x(i, j));
  }
  out.model = train_logistic(x, y, options.logistic);
  return out;
}

}  // namespace etrnn
