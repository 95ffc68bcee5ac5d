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

#include "etrnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "etrnn/csv.hpp"
#include "etrnn/metrics.hpp"

namespace etrnn {

std::string to_string(SignalMode mode) {
  switch (mode) {
    case SignalMode::sequential: return "sequential";
    case SignalMode::aggregate: return "aggregate";
    case SignalMode::mixed: return "mixed";
  }
  return "?";
}

SignalMode signal_mode_from_string(std::string_view name) {
  if (name == "sequential") return SignalMode::sequential;
  if (name == "aggregate") return SignalMode::aggregate;
  if (name == "mixed") return SignalMode::mixed;
  throw UsageError("unknown signal mode '" + std::string(name) +
                   "' (expected sequential, aggregate or mixed)");
}

void GenConfig::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("gen config: " + what); };
  if (n_clients < 1) fail("n_clients must be >= 1");
  if (months_span < 1) fail("months_span must be >= 1");
  if (!(base_default_rate > 0.0 && base_default_rate < 1.0)) {
    fail("base_default_rate must lie in (0, 1)");
  }
  if (signal_strength < 0.0) fail("signal_strength must be >= 0");
  if (tx_min < 1) fail("tx_min must be >= 1");
  if (tx_max < tx_min) fail("tx_max must be >= tx_min");
  if (!(tx_shape > 0.0)) fail("tx_shape must be > 0");
  if (n_currencies < 1 || n_countries < 1 || n_card_types < 1 || n_branches < 1) {
    fail("vocabulary sizes must be >= 1");
  }
  if (n_risky_merchants < 1 || n_merchant_types <= n_risky_merchants) {
    fail("need 1 <= n_risky_merchants < n_merchant_types");
  }
  if (!(risky_alpha > 0.0 && risky_beta > 0.0)) fail("risky_alpha and risky_beta must be > 0");
  if (history_days < 1 || recent_days < 1) fail("history_days and recent_days must be >= 1");
  if (!(gap_shape > 0.0)) fail("gap_shape must be > 0");
  if (tilt_sd < 0.0 || trend_sd < 0.0 || trend_weight < 0.0) {
    fail("tilt_sd, trend_sd and trend_weight must be >= 0");
  }
}

CalendarDate default_boundary(const GenConfig& config, int valid_months) {
  return add_months(config.start_date, config.months_span - valid_months);
}

double GroundTruth::ceiling_auc() const {
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& r : rows) {
    s.push_back(r.latent_risk);
    y.push_back(r.label);
  }
  return roc_auc(s, y);
}

double GroundTruth::ceiling_auc(std::span<const std::size_t> subset) const {
  std::vector<double> s;
  std::vector<int> y;
  for (std::size_t i : subset) {
    s.push_back(rows.at(i).latent_risk);
    y.push_back(rows.at(i).label);
  }
  return roc_auc(s, y);
}

void GroundTruth::write_csv(std::ostream& out) const {
  csv::write_row(out, {"client_id", "latent_risk", "label"});
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.latent_risk);
    csv::write_row(out, {r.client_id, buf, std::to_string(r.label)});
  }
}

namespace {

constexpr std::uint64_t kLabelTag = 0x6c6162656c;  // "label"

std::vector<Symbol> make_symbols(const char* prefix, int n) {
  std::vector<Symbol> out;
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%s%02d", prefix, i);
    out.emplace_back(buf);
  }
  return out;
}

struct Vocab {
  std::vector<Symbol> currencies, countries, merchants, card_types, branches;
  std::vector<double> merchant_log_mean;
};

double sample_gamma(std::mt19937_64& rng, double shape, double scale) {
  return std::gamma_distribution<double>(shape, scale)(rng);
}

std::vector<double> dirichlet(std::mt19937_64& rng, int k, double alpha) {
  std::vector<double> w(k);
  double sum = 0.0;
  for (auto& x : w) {
    x = sample_gamma(rng, alpha, 1.0) + 1e-12;
    sum += x;
  }
  for (auto& x : w) x /= sum;
  return w;
}

// Home value with probability `stay`, otherwise uniform.
int sticky_pick(std::mt19937_64& rng, int home, int n, double stay) {
  if (n == 1 || std::uniform_real_distribution<double>(0.0, 1.0)(rng) < stay) return home;
  return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

struct RawStats {
  double risky_z = 0.0;   // recent risky count vs hypergeometric expectation
  double trend = 0.0;     // log(mean early gap / mean recent gap)
  double share = 0.0;     // overall risky share
};

RawStats generate_client(const GenConfig& cfg, const Vocab& v, std::size_t index,
                         ClientHistory& client) {
  std::mt19937_64 rng(derive_seed(cfg.seed, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool sequential = cfg.signal_mode != SignalMode::aggregate;

  char id[32];
  std::snprintf(id, sizeof id, "c%07zu", index);
  client.client_id = id;
  const int span_days = static_cast<int>((cfg.end_date() - cfg.start_date).count());
  client.application_date =
      cfg.start_date + std::chrono::days(std::uniform_int_distribution<int>(0, span_days - 1)(rng));

  const int n = cfg.tx_min + static_cast<int>(std::floor(
                                 (cfg.tx_max - cfg.tx_min + 1) * std::pow(unit(rng), cfg.tx_shape)));
  const int count = std::min(n, cfg.tx_max);

  // Timestamps, generated backwards from the application date.
  const double mean_gap = static_cast<double>(cfg.history_days) / count;
  const double tau = sequential ? cfg.trend_sd * normal(rng) : 0.0;
  const std::int64_t app = Timestamp(client.application_date).time_since_epoch().count();
  const std::int64_t recent_start = app - static_cast<std::int64_t>(cfg.recent_days) * 86400;
  std::vector<std::int64_t> ts(count);
  std::int64_t cursor = app;
  for (int i = count - 1; i >= 0; --i) {
    double gap = sample_gamma(rng, cfg.gap_shape, mean_gap / cfg.gap_shape);
    if (cursor > recent_start) gap *= std::exp(-tau);
    cursor -= std::max<std::int64_t>(1, std::llround(gap * kSecondsPerDay));
    ts[i] = cursor;
  }
  int n_recent = 0;
  for (auto t : ts) n_recent += t >= recent_start ? 1 : 0;

  // Risky transactions: count from the client's share, placement tilted
  // towards the recent window (weighted sampling without replacement).
  const double a = sample_gamma(rng, cfg.risky_alpha, 1.0);
  const double b = sample_gamma(rng, cfg.risky_beta, 1.0);
  const double q = a / (a + b);
  const int k_risky = std::binomial_distribution<int>(count, q)(rng);
  const double tilt = sequential ? cfg.tilt_sd * normal(rng) : 0.0;
  std::vector<std::pair<double, int>> keys(count);
  for (int i = 0; i < count; ++i) {
    const double w = ts[i] >= recent_start ? std::exp(tilt) : 1.0;
    keys[i] = {std::log(std::max(unit(rng), 1e-300)) / w, i};
  }
  std::vector<char> risky(count, 0);
  std::partial_sort(keys.begin(), keys.begin() + k_risky, keys.end(),
                    [](const auto& x, const auto& y) { return x.first > y.first; });
  for (int j = 0; j < k_risky; ++j) risky[keys[j].second] = 1;

  // Cards.
  const int n_cards = std::uniform_int_distribution<int>(1, 3)(rng);
  const int home_branch = std::uniform_int_distribution<int>(0, cfg.n_branches - 1)(rng);
  std::vector<Symbol> card_ids;
  std::vector<int> card_types;
  std::uint16_t debit = 0, credit = 0;
  const CalendarDate first_day = std::chrono::floor<std::chrono::days>(Timestamp(std::chrono::seconds(ts.front())));
  for (int c = 0; c < n_cards; ++c) {
    char cid[48];
    std::snprintf(cid, sizeof cid, "%s-%d", id, c);
    card_ids.emplace_back(cid);
    const int type = std::uniform_int_distribution<int>(0, cfg.n_card_types - 1)(rng);
    card_types.push_back(type);
    (type % 2 == 0 ? debit : credit) += 1;
    client.card_issue_dates[card_ids.back()] =
        first_day - std::chrono::days(std::uniform_int_distribution<int>(1, 900)(rng));
  }

  // Preferences.
  const int home_currency = unit(rng) < 0.7 ? 0 : std::uniform_int_distribution<int>(0, cfg.n_currencies - 1)(rng);
  const int home_country = unit(rng) < 0.6 ? 0 : std::uniform_int_distribution<int>(0, cfg.n_countries - 1)(rng);
  const int n_safe = cfg.n_merchant_types - cfg.n_risky_merchants;
  const std::vector<double> pref = dirichlet(rng, n_safe, 0.5);
  std::discrete_distribution<int> safe_pick(pref.begin(), pref.end());
  const double spend_level = 0.5 * normal(rng);

  client.transactions.resize(count);
  for (int i = 0; i < count; ++i) {
    TransactionRecord& tx = client.transactions[i];
    tx.timestamp = Timestamp(std::chrono::seconds(ts[i]));
    const int m = risky[i] ? std::uniform_int_distribution<int>(0, cfg.n_risky_merchants - 1)(rng)
                           : cfg.n_risky_merchants + safe_pick(rng);
    tx.merchant_type = v.merchants[m];
    const double log_amount = v.merchant_log_mean[m] + spend_level + 0.8 * normal(rng);
    tx.amount = std::round(std::exp(log_amount) * 100.0) / 100.0;
    tx.currency = v.currencies[sticky_pick(rng, home_currency, cfg.n_currencies, 0.92)];
    tx.country = v.countries[sticky_pick(rng, home_country, cfg.n_countries, 0.85)];
    const int card = std::uniform_int_distribution<int>(0, n_cards - 1)(rng);
    tx.card_id = card_ids[card];
    tx.card_type = v.card_types[card_types[card]];
    tx.issuing_branch = v.branches[home_branch];
    tx.n_opened_debit_cards = debit;
    tx.n_opened_credit_cards = credit;
  }

  RawStats stats;
  stats.share = static_cast<double>(k_risky) / count;
  int k_recent = 0;
  for (int i = 0; i < count; ++i) k_recent += (risky[i] && ts[i] >= recent_start) ? 1 : 0;
  if (count > 1) {
    const double N = count, K = k_risky, nr = n_recent;
    const double var = K * (nr / N) * (1.0 - nr / N) * (N - K) / (N - 1.0);
    if (var > 0.0) stats.risky_z = (k_recent - K * nr / N) / std::sqrt(var);
  }
  double early_sum = 0.0, recent_sum = 0.0;
  int early_n = 0, recent_n = 0;
  for (int i = 1; i < count; ++i) {
    const double gap = static_cast<double>(ts[i] - ts[i - 1]);
    if (ts[i - 1] >= recent_start) {
      recent_sum += gap;
      ++recent_n;
    } else {
      early_sum += gap;
      ++early_n;
    }
  }
  if (early_n > 0 && recent_n > 0 && early_sum > 0.0 && recent_sum > 0.0) {
    stats.trend = std::log((early_sum / early_n) / (recent_sum / recent_n));
  }
  return stats;
}

void standardize(std::vector<double>& x) {
  const double m = mean(x);
  const double s = stddev(x);
  for (auto& v : x) v = s > 0.0 ? (v - m) / s : 0.0;
}

double sigmoid_scalar(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

GeneratedData generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  Vocab v;
  v.currencies = make_symbols("CUR", cfg.n_currencies);
  v.countries = make_symbols("CTY", cfg.n_countries);
  v.merchants = make_symbols("MCC", cfg.n_merchant_types);
  v.card_types = make_symbols("CARD", cfg.n_card_types);
  v.branches = make_symbols("BR", cfg.n_branches);
  for (int m = 0; m < cfg.n_merchant_types; ++m) {
    // Spread merchant price levels over [2, 6) in log units.
    const double frac = std::fmod(0.6180339887498949 * (m + 1), 1.0);
    v.merchant_log_mean.push_back(2.0 + 4.0 * frac);
  }

  GeneratedData out;
  const auto n = static_cast<std::size_t>(cfg.n_clients);
  out.clients.resize(n);
  std::vector<double> risky_z(n), trend(n), share(n);
  for (std::size_t i = 0; i < n; ++i) {
    const RawStats s = generate_client(cfg, v, i, out.clients[i]);
    risky_z[i] = s.risky_z;
    trend[i] = s.trend;
    share[i] = s.share;
  }
  standardize(risky_z);
  standardize(trend);
  standardize(share);

  std::vector<double> seq(n), score(n);
  const double w = cfg.trend_weight;
  for (std::size_t i = 0; i < n; ++i) seq[i] = (risky_z[i] + w * trend[i]) / std::sqrt(1.0 + w * w);
  standardize(seq);
  for (std::size_t i = 0; i < n; ++i) {
    switch (cfg.signal_mode) {
      case SignalMode::sequential: score[i] = seq[i]; break;
      case SignalMode::aggregate: score[i] = share[i]; break;
      case SignalMode::mixed: score[i] = 0.5 * (seq[i] + share[i]); break;
    }
  }

  // Offset so that the population-average default probability equals the base rate.
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double rate = 0.0;
    for (std::size_t i = 0; i < n; ++i) rate += sigmoid_scalar(mid + cfg.signal_strength * score[i]);
    rate /= static_cast<double>(n);
    (rate < cfg.base_default_rate ? lo : hi) = mid;
  }
  out.truth.intercept = 0.5 * (lo + hi);

  out.truth.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = out.truth.rows[i];
    row.client_id = out.clients[i].client_id;
    row.latent_risk = out.truth.intercept + cfg.signal_strength * score[i];
    row.sequential_score = seq[i];
    row.aggregate_score = share[i];
    std::mt19937_64 rng(derive_seed(cfg.seed, i, kLabelTag));
    row.label = std::bernoulli_distribution(sigmoid_scalar(row.latent_risk))(rng) ? 1 : 0;
    out.clients[i].label = row.label ? Label::defaulted : Label::non_default;
  }
  return out;
}

}  // namespace etrnn
