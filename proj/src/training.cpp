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

#include "etrnn/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include "etrnn/common.hpp"
#include "etrnn/metrics.hpp"

namespace etrnn {

// ---------------------------------------------------------------------------
// Losses

LossResult bce_loss(std::span<const double> p, std::span<const int> y) {
  if (p.size() != y.size() || p.empty()) {
    throw std::invalid_argument("bce_loss: score/label size mismatch or empty batch");
  }
  const double n = static_cast<double>(p.size());
  LossResult out;
  out.grad.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    if (!(pi > 0.0 && pi < 1.0)) {
      throw NumericError("bce_loss: score " + std::to_string(pi) + " outside (0, 1)");
    }
    const double yi = static_cast<double>(y[i]);
    out.value -= yi * std::log(pi) + (1.0 - yi) * std::log1p(-pi);
    out.grad[i] = (pi - yi) / (pi * (1.0 - pi)) / n;
  }
  out.value /= n;
  return out;
}

PairLossResult margin_ranking_loss(std::span<const double> p_pos, std::span<const double> p_neg,
                                   double margin) {
  if (p_pos.empty() || p_neg.empty()) {
    throw std::invalid_argument("margin_ranking_loss needs at least one pair");
  }
  const double pairs = static_cast<double>(p_pos.size() * p_neg.size());
  PairLossResult out;
  out.grad_pos.assign(p_pos.size(), 0.0);
  out.grad_neg.assign(p_neg.size(), 0.0);
  for (std::size_t i = 0; i < p_pos.size(); ++i) {
    for (std::size_t j = 0; j < p_neg.size(); ++j) {
      const double gap = margin - (p_pos[i] - p_neg[j]);
      if (gap > 0.0) {
        out.value += gap;
        out.grad_pos[i] -= 1.0 / pairs;
        out.grad_neg[j] += 1.0 / pairs;
      }
    }
  }
  out.value /= pairs;
  return out;
}

std::optional<LossResult> margin_ranking_loss(std::span<const double> p, std::span<const int> y,
                                              double margin) {
  if (p.size() != y.size()) throw std::invalid_argument("margin_ranking_loss: size mismatch");
  std::vector<double> pos, neg;
  std::vector<std::size_t> pos_at, neg_at;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] == 1) {
      pos.push_back(p[i]);
      pos_at.push_back(i);
    } else {
      neg.push_back(p[i]);
      neg_at.push_back(i);
    }
  }
  if (pos.empty() || neg.empty()) return std::nullopt;
  const PairLossResult pair = margin_ranking_loss(pos, neg, margin);
  LossResult out;
  out.value = pair.value;
  out.grad.assign(p.size(), 0.0);
  for (std::size_t k = 0; k < pos_at.size(); ++k) out.grad[pos_at[k]] = pair.grad_pos[k];
  for (std::size_t k = 0; k < neg_at.size(); ++k) out.grad[neg_at[k]] = pair.grad_neg[k];
  return out;
}

std::optional<LossResult> combined_loss(std::span<const double> p, std::span<const int> y,
                                        double margin, double weight) {
  auto rank = margin_ranking_loss(p, y, margin);
  if (!rank) return std::nullopt;
  const LossResult bce = bce_loss(p, y);
  rank->value += weight * bce.value;
  for (std::size_t i = 0; i < p.size(); ++i) rank->grad[i] += weight * bce.grad[i];
  return rank;
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::bce: return "bce";
    case LossKind::margin_rank: return "margin_rank";
    case LossKind::margin_rank_plus_bce: return "margin_rank_plus_bce";
  }
  return "?";
}

LossKind loss_kind_from_string(std::string_view name) {
  if (name == "bce") return LossKind::bce;
  if (name == "margin_rank") return LossKind::margin_rank;
  if (name == "margin_rank_plus_bce") return LossKind::margin_rank_plus_bce;
  throw UsageError("unknown loss '" + std::string(name) +
                   "' (expected bce, margin_rank or margin_rank_plus_bce)");
}

// ---------------------------------------------------------------------------
// Schedule

double lr_schedule(int epoch, double base_lr, double gamma, int cycles, int total_epochs) {
  if (cycles < 1 || total_epochs < 1 || cycles > total_epochs) {
    throw UsageError("lr_schedule: need 1 <= cycles <= epochs (cycles=" + std::to_string(cycles) +
                     ", epochs=" + std::to_string(total_epochs) + ")");
  }
  if (epoch < 0 || epoch >= total_epochs) {
    throw std::out_of_range("lr_schedule: epoch " + std::to_string(epoch) + " out of range");
  }
  int start = 0;
  for (int k = 0; k < cycles; ++k) {
    const int s = static_cast<int>(static_cast<long long>(k) * total_epochs / cycles);
    if (s <= epoch) start = s;
  }
  return base_lr * std::pow(gamma, epoch - start);
}

// ---------------------------------------------------------------------------
// Regularizers

namespace {

EncodedSequence repack(const EncodedSequence& seq, const std::vector<int>& columns) {
  EncodedSequence out;
  const int L = seq.length();
  out.indices = EncodedSequence::IndexTracks::Zero(seq.indices.rows(), L);
  out.scalars = EncodedSequence::ScalarTracks::Zero(seq.scalars.rows(), L);
  const int keep = static_cast<int>(columns.size());
  for (int k = 0; k < keep; ++k) {
    out.indices.col(L - keep + k) = seq.indices.col(columns[k]);
    out.scalars.col(L - keep + k) = seq.scalars.col(columns[k]);
  }
  out.valid_length = keep;
  out.raw_transaction_count = seq.raw_transaction_count;
  return out;
}

}  // namespace

EncodedSequence transaction_dropout(const EncodedSequence& seq, double p, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw UsageError("transaction_dropout: p must lie in [0, 1)");
  if (seq.valid_length == 0) return seq;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(p);
  const int L = seq.length();
  std::vector<int> kept;
  for (int t = seq.padding(); t < L; ++t) {
    if (!drop(rng)) kept.push_back(t);
  }
  if (kept.empty()) kept.push_back(L - 1);
  return repack(seq, kept);
}

EncodedSequence transaction_shuffle(const EncodedSequence& seq, std::uint64_t seed) {
  std::vector<int> cols(seq.valid_length);
  std::iota(cols.begin(), cols.end(), seq.padding());
  std::mt19937_64 rng(seed);
  std::shuffle(cols.begin(), cols.end(), rng);
  return repack(seq, cols);
}

Matrix embedding_dropout(const Matrix& x, double p, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw UsageError("embedding_dropout: p must lie in [0, 1)");
  Matrix out = x;
  if (p == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out.data()[i] = keep(rng) ? out.data()[i] * scale : 0.0;
  }
  return out;
}

std::string to_string(Regularization reg) {
  switch (reg) {
    case Regularization::none: return "none";
    case Regularization::tx_dropout: return "tx_dropout";
    case Regularization::tx_shuffle: return "tx_shuffle";
    case Regularization::embed_dropout: return "embed_dropout";
  }
  return "?";
}

Regularization regularization_from_string(std::string_view name) {
  if (name == "none") return Regularization::none;
  if (name == "tx_dropout") return Regularization::tx_dropout;
  if (name == "tx_shuffle") return Regularization::tx_shuffle;
  if (name == "embed_dropout") return Regularization::embed_dropout;
  throw UsageError("unknown regularization '" + std::string(name) +
                   "' (expected none, tx_dropout, tx_shuffle or embed_dropout)");
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("train config: " + what); };
  if (epochs < 0) fail("epochs must be >= 0");
  if (cycles < 1 || (epochs > 0 && cycles > epochs)) fail("cycles must lie in [1, epochs]");
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (valid_batch_size < 1) fail("valid_batch_size must be >= 1");
  if (!(base_lr > 0.0)) fail("base_lr must be > 0");
  if (!(gamma > 0.0)) fail("gamma must be > 0");
  if (margin < 0.0) fail("margin must be >= 0");
  if (bce_weight < 0.0) fail("bce_weight must be >= 0");
  if (negative_ratio < 1) fail("negative_ratio must be >= 1");
  if (reg_p < 0.0 || reg_p >= 1.0) fail("reg_p must lie in [0, 1)");
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,loss,valid_auc,lr,skipped_batches\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.mean_loss << ',';
    if (e.valid_auc) out << *e.valid_auc;
    out << ',' << e.lr << ',' << e.skipped_batches << '\n';
  }
}

namespace {

std::optional<double> validation_auc(const EtRnnModel& model, std::span<const ClientHistory> dataset,
                                     std::span<const std::size_t> valid, int chunk) {
  if (valid.empty()) return std::nullopt;
  const EtRnnModel* m = &model;
  const std::vector<double> scores =
      score_clients(std::span<const EtRnnModel* const>(&m, 1), dataset, valid, chunk);
  std::vector<int> labels;
  labels.reserve(valid.size());
  bool pos = false, neg = false;
  for (std::size_t i : valid) {
    const int y = static_cast<int>(dataset[i].label);
    labels.push_back(y);
    (y == 1 ? pos : neg) = true;
  }
  if (!pos || !neg) return std::nullopt;
  return roc_auc(scores, labels);
}

}  // namespace

TrainResult train_model(const TrainingData& data, const SchemaSpec& schema,
                        const ModelConfig& model_config, const TrainConfig& cfg,
                        const EpochHook& hook) {
  cfg.validate();
  if (data.pool.positives.empty()) throw DataError("training pool has no positive clients");
  TrainResult result{EtRnnModel(schema, model_config), {}};
  EtRnnModel& model = result.model;
  std::vector<Parameter*> params = model.parameters().all();
  AdamState adam;
  ForwardCache cache;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.base_lr, cfg.gamma, cfg.cycles, cfg.epochs);
    adam.options.lr = lr;
    const std::vector<std::size_t> sample = epoch_sample(data.pool, epoch, cfg.seed);

    double loss_sum = 0.0;
    int counted = 0;
    int skipped = 0;
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0, batch = 0; start < sample.size(); start += bs, ++batch) {
      const std::size_t end = std::min(sample.size(), start + bs);
      std::vector<EncodedSequence> seqs;
      std::vector<int> labels;
      seqs.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const ClientHistory& client = data.dataset[sample[k]];
        EncodedSequence seq = derive_and_encode(client, schema);
        const std::uint64_t row_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                                                   batch, k - start);
        if (cfg.reg == Regularization::tx_dropout) {
          seq = transaction_dropout(seq, cfg.reg_p, row_seed);
        } else if (cfg.reg == Regularization::tx_shuffle) {
          seq = transaction_shuffle(seq, row_seed);
        }
        seqs.push_back(std::move(seq));
        labels.push_back(static_cast<int>(client.label));
      }
      std::vector<const EncodedSequence*> ptrs;
      for (const auto& s : seqs) ptrs.push_back(&s);

      ForwardOptions fopts;
      if (cfg.reg == Regularization::embed_dropout) {
        fopts.embedding_dropout = cfg.reg_p;
        fopts.dropout_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), batch);
      }
      const std::vector<double> scores = model.forward(ptrs, cache, fopts);

      std::optional<LossResult> loss;
      switch (cfg.loss) {
        case LossKind::bce: loss = bce_loss(scores, labels); break;
        case LossKind::margin_rank: loss = margin_ranking_loss(scores, labels, cfg.margin); break;
        case LossKind::margin_rank_plus_bce:
          loss = combined_loss(scores, labels, cfg.margin, cfg.bce_weight);
          break;
      }
      if (!loss) {
        ++skipped;
        continue;
      }
      if (!std::isfinite(loss->value)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch));
      }
      loss_sum += loss->value;
      ++counted;
      model.backward(cache, loss->grad);
      adam_step(params, adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = counted > 0 ? loss_sum / counted : 0.0;
    rec.lr = lr;
    rec.skipped_batches = skipped;
    rec.valid_auc = validation_auc(model, data.dataset, data.valid, cfg.valid_batch_size);
    result.history.epochs.push_back(rec);
    if (hook) hook(epoch, model);
  }
  return result;
}

namespace {
constexpr std::uint64_t kPoolTag = 0x706f6f6c;    // "pool"
constexpr std::uint64_t kTrainTag = 0x747261696e;  // "train"
}  // namespace

std::vector<EnsembleMember> train_ensemble(std::span<const ClientHistory> dataset,
                                           std::span<const std::size_t> train,
                                           std::span<const std::size_t> valid,
                                           const SchemaSpec& schema,
                                           const ModelConfig& model_config,
                                           const TrainConfig& train_config, int n, int threads) {
  if (n < 1) throw UsageError("ensemble size must be >= 1");
  train_config.validate();
  std::vector<std::optional<EnsembleMember>> slots(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));

  auto run_member = [&](int i) {
    try {
      const auto ui = static_cast<std::uint64_t>(i);
      TrainingData data{dataset,
                        build_negative_pool(dataset, train, train_config.negative_ratio,
                                            derive_seed(train_config.seed, kPoolTag, ui)),
                        std::vector<std::size_t>(valid.begin(), valid.end())};
      TrainConfig tcfg = train_config;
      tcfg.seed = derive_seed(train_config.seed, kTrainTag, ui);
      ModelConfig mcfg = model_config;
      mcfg.seed = derive_seed(model_config.seed, ui);
      TrainResult r = train_model(data, schema, mcfg, tcfg);
      slots[i].emplace(EnsembleMember{std::move(r.model), std::move(r.history),
                                      std::move(data.pool)});
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) run_member(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next++; i < n; i = next++) run_member(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<EnsembleMember> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::vector<double> ensemble_predict(std::span<const EtRnnModel* const> models,
                                     std::span<const EncodedSequence* const> batch) {
  if (models.empty()) throw UsageError("ensemble_predict needs at least one model");
  std::vector<std::vector<double>> member_scores;
  member_scores.reserve(models.size());
  for (const EtRnnModel* m : models) member_scores.push_back(m->predict(batch));
  std::vector<double> out(batch.size());
  std::vector<double> column(models.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t k = 0; k < models.size(); ++k) column[k] = member_scores[k][i];
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double s : column) sum += s;
    out[i] = sum / static_cast<double>(models.size());
  }
  return out;
}

EtRnnModel average_weights(std::span<const EtRnnModel* const> models) {
  if (models.empty()) throw UsageError("average_weights needs at least one model");
  EtRnnModel out = *models.front();
  std::vector<Parameter*> dst = out.parameters().all();
  for (std::size_t k = 1; k < models.size(); ++k) {
    if (!(models[k]->schema() == out.schema()) ||
        models[k]->config().encoder != out.config().encoder ||
        models[k]->config().bidirectional != out.config().bidirectional ||
        models[k]->config().hidden_size != out.config().hidden_size) {
      throw ShapeError("average_weights: model " + std::to_string(k) + " has a different shape");
    }
    std::vector<const Parameter*> src = models[k]->parameters().all();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j]->value += src[j]->value;
  }
  const double inv = 1.0 / static_cast<double>(models.size());
  for (Parameter* p : dst) {
    p->value *= inv;
    p->grad.setZero();
  }
  return out;
}

std::vector<double> score_clients(std::span<const EtRnnModel* const> models,
                                  std::span<const ClientHistory> dataset,
                                  std::span<const std::size_t> indices, int batch_size) {
  if (models.empty()) throw UsageError("score_clients needs at least one model");
  if (batch_size < 1) throw UsageError("score batch size must be >= 1");
  const SchemaSpec& schema = models.front()->schema();
  std::vector<double> out;
  out.reserve(indices.size());
  const std::size_t bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < indices.size(); start += bs) {
    const std::size_t end = std::min(indices.size(), start + bs);
    std::vector<EncodedSequence> seqs;
    seqs.reserve(end - start);
    for (std::size_t k = start; k < end; ++k) {
      seqs.push_back(derive_and_encode(dataset[indices[k]], schema));
    }
    std::vector<const EncodedSequence*> ptrs;
    for (const auto& s : seqs) ptrs.push_back(&s);
    const std::vector<double> scores = ensemble_predict(models, ptrs);
    out.insert(out.end(), scores.begin(), scores.end());
  }
  return out;
}

std::vector<const EtRnnModel*> model_pointers(std::span<const EtRnnModel> models) {
  std::vector<const EtRnnModel*> out;
  for (const auto& m : models) out.push_back(&m);
  return out;
}

std::vector<const EtRnnModel*> model_pointers(std::span<const EnsembleMember> members) {
  std::vector<const EtRnnModel*> out;
  for (const auto& m : members) out.push_back(&m.model);
  return out;
}

}  // namespace etrnn
