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
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "etrnn/model.hpp"
#include "etrnn/transactions.hpp"

namespace etrnn {

// ---------------------------------------------------------------------------
// Losses. Gradients are with respect to the scores (probabilities).

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;
};

/// Mean binary cross-entropy. Throws if any p lies outside (0, 1).
LossResult bce_loss(std::span<const double> p, std::span<const int> y);

struct PairLossResult {
  double value = 0.0;
  std::vector<double> grad_pos;
  std::vector<double> grad_neg;
};

/// Mean over all positive x negative pairs of max(0, margin - (p_pos - p_neg)).
/// Throws if either side is empty.
PairLossResult margin_ranking_loss(std::span<const double> p_pos, std::span<const double> p_neg,
                                   double margin);

/// Batch form of the ranking loss. Empty when the batch lacks one of the classes.
std::optional<LossResult> margin_ranking_loss(std::span<const double> p, std::span<const int> y,
                                              double margin);

/// margin_ranking_loss + weight * bce_loss.
std::optional<LossResult> combined_loss(std::span<const double> p, std::span<const int> y,
                                        double margin, double weight);

enum class LossKind { bce, margin_rank, margin_rank_plus_bce };
std::string to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view name);

// ---------------------------------------------------------------------------
// Learning-rate schedule.

/// Epochs are split into `cycles` contiguous segments; inside a segment the
/// rate decays geometrically from base_lr by `gamma` per epoch.
double lr_schedule(int epoch, double base_lr, double gamma, int cycles, int total_epochs);

// ---------------------------------------------------------------------------
// Regularizers. All are pure functions of their inputs and seed.

/// Drops each real transaction with probability p and re-packs the survivors
/// as a suffix. At least one transaction (the most recent) always survives.
EncodedSequence transaction_dropout(const EncodedSequence& seq, double p, std::uint64_t seed);

/// Uniformly permutes the real positions; derived features are kept as encoded.
EncodedSequence transaction_shuffle(const EncodedSequence& seq, std::uint64_t seed);

/// Inverted dropout: kept entries are scaled by 1 / (1 - p).
Matrix embedding_dropout(const Matrix& x, double p, std::uint64_t seed);

enum class Regularization { none, tx_dropout, tx_shuffle, embed_dropout };
std::string to_string(Regularization reg);
Regularization regularization_from_string(std::string_view name);

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  LossKind loss = LossKind::margin_rank;
  double margin = 0.1;
  double bce_weight = 1.0;
  double base_lr = 0.01;
  double gamma = 0.5;
  int cycles = 1;
  int epochs = 6;
  int batch_size = 32;
  int valid_batch_size = 768;
  Regularization reg = Regularization::none;
  double reg_p = 0.1;
  int negative_ratio = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> valid_auc;
  double lr = 0.0;
  int skipped_batches = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// CSV columns: epoch, loss, valid_auc, lr, skipped_batches.
  void write_csv(std::ostream& out) const;
};

/// Training inputs. Indices refer into `dataset`.
struct TrainingData {
  std::span<const ClientHistory> dataset;
  SamplingPool pool;
  std::vector<std::size_t> valid;
};

using EpochHook = std::function<void(int epoch, const EtRnnModel& model)>;

struct TrainResult {
  EtRnnModel model;
  TrainHistory history;
};

/// Balanced-epoch mini-batch training with Adam. Deterministic per seed.
TrainResult train_model(const TrainingData& data, const SchemaSpec& schema,
                        const ModelConfig& model_config, const TrainConfig& train_config,
                        const EpochHook& hook = {});

struct EnsembleMember {
  EtRnnModel model;
  TrainHistory history;
  SamplingPool pool;
};

/// Trains `n` members, each on its own negative pool and seeds. Members are
/// independent, so `threads > 1` trains them concurrently without changing results.
std::vector<EnsembleMember> train_ensemble(std::span<const ClientHistory> dataset,
                                           std::span<const std::size_t> train,
                                           std::span<const std::size_t> valid,
                                           const SchemaSpec& schema,
                                           const ModelConfig& model_config,
                                           const TrainConfig& train_config, int n,
                                           int threads = 1);

/// Arithmetic mean of member scores. Per client the member scores are summed
/// in sorted order, so the result does not depend on member order.
std::vector<double> ensemble_predict(std::span<const EtRnnModel* const> models,
                                     std::span<const EncodedSequence* const> batch);

/// Parameter-wise mean of identically shaped models (weight averaging).
EtRnnModel average_weights(std::span<const EtRnnModel* const> models);

/// Epoch hook that keeps deep copies of the model from `after_epoch` onwards.
class SnapshotRecorder {
 public:
  explicit SnapshotRecorder(int after_epoch) : after_epoch_(after_epoch) {}

  void operator()(int epoch, const EtRnnModel& model) {
    if (epoch >= after_epoch_) snapshots_.push_back(model);
  }
  EpochHook hook() {
    return [this](int epoch, const EtRnnModel& m) { (*this)(epoch, m); };
  }
  const std::vector<EtRnnModel>& snapshots() const { return snapshots_; }

 private:
  int after_epoch_;
  std::vector<EtRnnModel> snapshots_;
};

/// Encodes and scores clients in chunks; returns the ensemble-mean score per index.
std::vector<double> score_clients(std::span<const EtRnnModel* const> models,
                                  std::span<const ClientHistory> dataset,
                                  std::span<const std::size_t> indices, int batch_size = 768);

std::vector<const EtRnnModel*> model_pointers(std::span<const EtRnnModel> models);
std::vector<const EtRnnModel*> model_pointers(std::span<const EnsembleMember> members);

}  // namespace etrnn
