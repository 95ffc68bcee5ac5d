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

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "etrnn/transactions.hpp"

namespace etrnn {

enum class SignalMode { sequential, aggregate, mixed };
std::string to_string(SignalMode mode);
SignalMode signal_mode_from_string(std::string_view name);

struct GenConfig {
  int n_clients = 20000;
  CalendarDate start_date = parse_date("2018-01-01");
  int months_span = 20;
  double base_default_rate = 0.05;
  SignalMode signal_mode = SignalMode::sequential;
  double signal_strength = 2.0;

  // Per-client transaction count: min + floor((max - min + 1) * U^shape).
  int tx_min = 20;
  int tx_max = 600;
  double tx_shape = 1.5;

  int n_currencies = 5;
  int n_countries = 20;
  int n_merchant_types = 30;
  int n_card_types = 4;
  int n_branches = 50;

  // The first `n_risky_merchants` merchant types form the risky subset. A
  // client's risky share is Beta(risky_alpha, risky_beta).
  int n_risky_merchants = 2;
  double risky_alpha = 2.0;
  double risky_beta = 14.0;

  int history_days = 365;
  int recent_days = 60;
  double gap_shape = 1.5;       // gamma shape of inter-arrival times
  double tilt_sd = 1.0;         // spread of the per-client recent-window tilt
  double trend_sd = 0.3;        // spread of the recent-gap log shrink
  double trend_weight = 0.25;   // weight of the gap trend inside the sequential score

  std::uint64_t seed = 20260101;

  /// Throws UsageError naming the first infeasible field.
  void validate() const;
  CalendarDate end_date() const { return add_months(start_date, months_span); }
};

struct GroundTruth {
  struct Row {
    std::string client_id;
    double latent_risk = 0.0;
    int label = 0;
    double sequential_score = 0.0;  // standardized, before mixing
    double aggregate_score = 0.0;   // standardized, before mixing
  };
  std::vector<Row> rows;
  double intercept = 0.0;  // log-odds offset solved so the expected rate is base_default_rate

  /// AUC of the latent risk against the drawn labels.
  double ceiling_auc() const;
  double ceiling_auc(std::span<const std::size_t> subset) const;
  /// CSV columns: client_id, latent_risk, label.
  void write_csv(std::ostream& out) const;
};

struct GeneratedData {
  std::vector<ClientHistory> clients;
  GroundTruth truth;
};

/// Deterministic per seed; per-client streams are seeded by (seed, client index).
GeneratedData generate_dataset(const GenConfig& config);

/// Out-of-time boundary that leaves `valid_months` at the end of the span.
CalendarDate default_boundary(const GenConfig& config, int valid_months = 4);

}  // namespace etrnn
