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

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "etrnn/aggregates.hpp"
#include "etrnn/synth.hpp"
#include "etrnn/training.hpp"

namespace etrnn {

struct EvaluationReport {
  struct Row {
    std::string experiment;
    std::string label;
    std::optional<double> auc;      // empty for rows that carry only a note
    std::optional<double> auc_std;
    std::vector<std::pair<std::string, std::string>> meta;
    std::string note;
  };
  std::vector<Row> rows;

  Row& add(std::string experiment, std::string label, std::optional<double> auc,
           std::optional<double> auc_std = std::nullopt);
  void append(const EvaluationReport& other);

  /// CSV columns: experiment, label, auc, auc_std, metadata (k=v;k=v), note.
  void write_csv(std::ostream& out) const;
  /// Aligned plain-text table.
  void write_table(std::ostream& out) const;
};

/// FNV-1a over the train and valid index lists.
std::uint64_t split_checksum(std::span<const std::size_t> train, std::span<const std::size_t> valid);

/// Vocabularies built from the training side only.
SchemaSpec build_schema_for(std::span<const ClientHistory> dataset,
                            std::span<const std::size_t> train, const EmbeddingRule& rule = {},
                            const EncodingOptions& options = {});

std::vector<int> labels_of(std::span<const ClientHistory> dataset, std::span<const std::size_t> indices);

struct RnnSetup {
  EmbeddingRule embedding;
  EncodingOptions encoding;
  ModelConfig model;
  TrainConfig train;
  int ensemble_size = 6;
  int threads = 1;
  bool track_validation = false;  // per-epoch validation AUC in the training history
};

struct BenchmarkResult {
  EvaluationReport report;
  double baseline_auc = 0.0;
  double ensemble_auc = 0.0;
  std::vector<double> member_aucs;
  std::vector<double> ensemble_scores;  // aligned with the valid indices
  std::vector<EnsembleMember> members;
  std::uint64_t checksum = 0;
};

/// Trains the aggregate baseline and an RNN ensemble on one shared split and
/// scores both on the same validation clients.
BenchmarkResult benchmark_compare(std::span<const ClientHistory> dataset, const SplitResult& split,
                                  const RnnSetup& rnn, const BaselineOptions& baseline = {});

/// Benchmark report rows for already trained models.
BenchmarkResult benchmark_with_models(std::span<const ClientHistory> dataset,
                                      const SplitResult& split,
                                      std::span<const EtRnnModel* const> models,
                                      const BaselineOptions& baseline = {});

/// For each size, subsamples the training side `repeats` times and records the
/// validation AUC mean/std of the baseline and of a single RNN.
EvaluationReport learning_curve(std::span<const ClientHistory> dataset, const SplitResult& split,
                                std::span<const int> sizes, int repeats, const RnnSetup& rnn,
                                const BaselineOptions& baseline = {});

enum class CountMode { cumulative, buckets };

/// Cumulative mode: one group per threshold t holding clients with >= t raw
/// transactions. Bucket mode: groups [edges[i], edges[i+1]), the last open-ended.
/// Single-class groups are reported with a note and no AUC.
EvaluationReport auc_by_tx_count(std::span<const double> scores,
                                 std::span<const ClientHistory> dataset,
                                 std::span<const std::size_t> valid, std::span<const int> edges,
                                 CountMode mode);

/// Loss variants on one split: margins, BCE and margin + BCE.
EvaluationReport loss_grid(std::span<const ClientHistory> dataset, const SplitResult& split,
                           const RnnSetup& rnn, std::span<const double> margins);

/// Learning-rate decay gamma x restart cycles.
EvaluationReport schedule_grid(std::span<const ClientHistory> dataset, const SplitResult& split,
                               const RnnSetup& rnn, std::span<const double> gammas,
                               std::span<const int> cycles);

/// Transaction dropout, shuffle and post-embedding dropout against no regularization.
EvaluationReport regularization_grid(std::span<const ClientHistory> dataset,
                                     const SplitResult& split, const RnnSetup& rnn);

/// Single model, averaging ensemble, weight averaging and snapshot ensemble.
EvaluationReport ensemble_variants(std::span<const ClientHistory> dataset, const SplitResult& split,
                                   const RnnSetup& rnn, int snapshot_after);

struct TimingPoint {
  int clients = 0;
  double seconds = 0.0;  // best of the repeats
};

/// Wall time of ensemble scoring for each size. Clients are drawn cyclically
/// from `pool` (indices into `dataset`, each with at least one transaction).
std::vector<TimingPoint> scoring_timing_grid(std::span<const EtRnnModel* const> models,
                                             std::span<const ClientHistory> dataset,
                                             std::span<const std::size_t> pool,
                                             std::span<const int> sizes, int repeats = 3,
                                             int batch_size = 768);

struct SignalAudit {
  double baseline_auc = 0.0;
  double ceiling_auc = 0.0;
  double margin = 0.0;
  bool passed = false;
};

/// Fits the aggregate baseline on the training side and compares its
/// validation AUC with the latent-risk ceiling on the same clients.
SignalAudit signal_leak_audit(std::span<const ClientHistory> dataset, const GroundTruth& truth,
                              const SplitResult& split, double margin = 0.05,
                              const BaselineOptions& baseline = {});

}  // namespace etrnn
