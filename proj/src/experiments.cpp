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

#include "etrnn/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <limits>
#include <random>

#include "etrnn/csv.hpp"
#include "etrnn/metrics.hpp"

namespace etrnn {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string join_meta(const std::vector<std::pair<std::string, std::string>>& meta) {
  std::string out;
  for (const auto& [k, v] : meta) {
    if (!out.empty()) out += ';';
    out += k + '=' + v;
  }
  return out;
}

bool has_both_classes(std::span<const int> y) {
  bool pos = false, neg = false;
  for (int v : y) (v == 1 ? pos : neg) = true;
  return pos && neg;
}

std::vector<double> validation_scores(std::span<const EtRnnModel* const> models,
                                      std::span<const ClientHistory> dataset,
                                      std::span<const std::size_t> valid, int batch) {
  return score_clients(models, dataset, valid, batch);
}

double models_auc(std::span<const EtRnnModel* const> models, std::span<const ClientHistory> dataset,
                  std::span<const std::size_t> valid, int batch) {
  return roc_auc(validation_scores(models, dataset, valid, batch), labels_of(dataset, valid));
}

double model_auc(const EtRnnModel& model, std::span<const ClientHistory> dataset,
                 std::span<const std::size_t> valid, int batch) {
  const EtRnnModel* m = &model;
  return models_auc(std::span<const EtRnnModel* const>(&m, 1), dataset, valid, batch);
}

std::vector<EnsembleMember> train_members(std::span<const ClientHistory> dataset,
                                          std::span<const std::size_t> train,
                                          std::span<const std::size_t> valid, const RnnSetup& rnn,
                                          const TrainConfig& tcfg, int n) {
  const std::span<const std::size_t> tracked =
      rnn.track_validation ? valid : std::span<const std::size_t>{};
  return train_ensemble(dataset, train, tracked, build_schema_for(dataset, train, rnn.embedding, rnn.encoding),
                        rnn.model, tcfg,
                        n, rnn.threads);
}

double single_auc(std::span<const ClientHistory> dataset, const SplitResult& split,
                  const RnnSetup& rnn, const TrainConfig& tcfg) {
  auto members = train_members(dataset, split.train, split.valid, rnn, tcfg, 1);
  return model_auc(members.front().model, dataset, split.valid, tcfg.valid_batch_size);
}

}  // namespace

SchemaSpec build_schema_for(std::span<const ClientHistory> dataset,
                            std::span<const std::size_t> train, const EmbeddingRule& rule,
                            const EncodingOptions& options) {
  return build_vocabularies(dataset, train, rule, options);
}

EvaluationReport::Row& EvaluationReport::add(std::string experiment, std::string label,
                                             std::optional<double> auc,
                                             std::optional<double> auc_std) {
  rows.push_back(Row{std::move(experiment), std::move(label), auc, auc_std, {}, {}});
  return rows.back();
}

void EvaluationReport::append(const EvaluationReport& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

void EvaluationReport::write_csv(std::ostream& out) const {
  csv::write_row(out, {"experiment", "label", "auc", "auc_std", "metadata", "note"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.experiment, r.label, r.auc ? fmt(*r.auc) : "",
                         r.auc_std ? fmt(*r.auc_std) : "", join_meta(r.meta), r.note});
  }
}

void EvaluationReport::write_table(std::ostream& out) const {
  std::vector<std::vector<std::string>> cells = {
      {"experiment", "label", "auc", "std", "metadata", "note"}};
  for (const auto& r : rows) {
    cells.push_back({r.experiment, r.label, r.auc ? fmt(*r.auc, "%.4f") : "-",
                     r.auc_std ? fmt(*r.auc_std, "%.4f") : "-", join_meta(r.meta), r.note});
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  for (std::size_t r = 0; r < cells.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      std::string cell = cells[r][c];
      cell.resize(width[c], ' ');
      line += cell;
      if (c + 1 < cells[r].size()) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
}

std::uint64_t split_checksum(std::span<const std::size_t> train, std::span<const std::size_t> valid) {
  Fnv1a h;
  h.update_u64(train.size());
  for (auto i : train) h.update_u64(i);
  h.update_u64(valid.size());
  for (auto i : valid) h.update_u64(i);
  return h.digest();
}

std::vector<int> labels_of(std::span<const ClientHistory> dataset, std::span<const std::size_t> indices) {
  std::vector<int> y;
  y.reserve(indices.size());
  for (std::size_t i : indices) y.push_back(label_value(dataset[i].label));
  return y;
}

// ---------------------------------------------------------------------------

BenchmarkResult benchmark_with_models(std::span<const ClientHistory> dataset,
                                      const SplitResult& split,
                                      std::span<const EtRnnModel* const> models,
                                      const BaselineOptions& baseline) {
  if (models.empty()) throw UsageError("benchmark needs at least one model");
  BenchmarkResult out;
  out.checksum = split_checksum(split.train, split.valid);
  const std::vector<int> y = labels_of(dataset, split.valid);

  const AggregateBaseline base = fit_baseline(dataset, split.train, baseline);
  out.baseline_auc = roc_auc(base.predict(dataset, split.valid), y);

  const int batch = 768;
  std::vector<std::vector<double>> member_scores;
  for (const EtRnnModel* m : models) {
    member_scores.push_back(
        score_clients(std::span<const EtRnnModel* const>(&m, 1), dataset, split.valid, batch));
    out.member_aucs.push_back(roc_auc(member_scores.back(), y));
  }
  // Same order-free mean as ensemble_predict, without rescoring.
  out.ensemble_scores.resize(split.valid.size());
  std::vector<double> column(models.size());
  for (std::size_t i = 0; i < split.valid.size(); ++i) {
    for (std::size_t k = 0; k < models.size(); ++k) column[k] = member_scores[k][i];
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double v : column) sum += v;
    out.ensemble_scores[i] = sum / static_cast<double>(models.size());
  }
  out.ensemble_auc = roc_auc(out.ensemble_scores, y);

  const std::string split_tag = hex64(out.checksum);
  auto& lr_row = out.report.add("benchmark", "logistic_woe_aggregates", out.baseline_auc);
  lr_row.meta = {{"n_features", std::to_string(base.registry.size())}, {"split", split_tag}};
  auto& gbm = out.report.add("benchmark", "gbm", std::nullopt);
  gbm.note = "not implemented";
  auto& rnn_row = out.report.add("benchmark", "et_rnn_ensemble", out.ensemble_auc);
  const int raw_fields =
      models.empty() ? 12
                     : static_cast<int>(models.front()->schema().categorical.size() +
                                        models.front()->schema().scalar_names.size());
  rnn_row.meta = {{"n_features", std::to_string(raw_fields)},
                  {"members", std::to_string(models.size())},
                  {"split", split_tag}};
  if (!out.member_aucs.empty()) {
    auto& mem = out.report.add("benchmark", "et_rnn_single_mean", mean(out.member_aucs),
                               stddev(out.member_aucs));
    mem.meta = {{"min", fmt(*std::min_element(out.member_aucs.begin(), out.member_aucs.end()))},
                {"split", split_tag}};
  }
  return out;
}

BenchmarkResult benchmark_compare(std::span<const ClientHistory> dataset, const SplitResult& split,
                                  const RnnSetup& rnn, const BaselineOptions& baseline) {
  std::vector<EnsembleMember> members =
      train_members(dataset, split.train, split.valid, rnn, rnn.train, rnn.ensemble_size);
  const auto ptrs = model_pointers(members);
  BenchmarkResult out = benchmark_with_models(dataset, split, ptrs, baseline);
  out.members = std::move(members);
  return out;
}

EvaluationReport learning_curve(std::span<const ClientHistory> dataset, const SplitResult& split,
                                std::span<const int> sizes, int repeats, const RnnSetup& rnn,
                                const BaselineOptions& baseline) {
  EvaluationReport report;
  const std::vector<int> y = labels_of(dataset, split.valid);
  for (int size : sizes) {
    if (size < 1 || static_cast<std::size_t>(size) > split.train.size()) {
      report.add("learning_curve", "size " + std::to_string(size), std::nullopt).note =
          "size exceeds the training side";
      continue;
    }
    std::vector<double> base_aucs, rnn_aucs;
    for (int rep = 0; rep < repeats; ++rep) {
      std::vector<std::size_t> subset;
      std::mt19937_64 rng(derive_seed(rnn.train.seed, static_cast<std::uint64_t>(size),
                                      static_cast<std::uint64_t>(rep), 0x6c63));
      std::sample(split.train.begin(), split.train.end(), std::back_inserter(subset), size, rng);
      if (!has_both_classes(labels_of(dataset, subset))) continue;
      const AggregateBaseline base = fit_baseline(dataset, subset, baseline);
      base_aucs.push_back(roc_auc(base.predict(dataset, split.valid), y));
      TrainConfig tcfg = rnn.train;
      tcfg.seed = derive_seed(rnn.train.seed, static_cast<std::uint64_t>(rep));
      auto members = train_members(dataset, subset, split.valid, rnn, tcfg, 1);
      rnn_aucs.push_back(model_auc(members.front().model, dataset, split.valid, tcfg.valid_batch_size));
    }
    const std::string label = std::to_string(size);
    if (rnn_aucs.empty()) {
      report.add("learning_curve", "logistic @" + label, std::nullopt).note = "no positives in subsample";
      report.add("learning_curve", "et_rnn @" + label, std::nullopt).note = "no positives in subsample";
      continue;
    }
    auto& b = report.add("learning_curve", "logistic @" + label, mean(base_aucs), stddev(base_aucs));
    b.meta = {{"model", "logistic"}, {"size", label}, {"repeats", std::to_string(base_aucs.size())}};
    auto& r = report.add("learning_curve", "et_rnn @" + label, mean(rnn_aucs), stddev(rnn_aucs));
    r.meta = {{"model", "et_rnn"}, {"size", label}, {"repeats", std::to_string(rnn_aucs.size())}};
  }
  return report;
}

EvaluationReport auc_by_tx_count(std::span<const double> scores,
                                 std::span<const ClientHistory> dataset,
                                 std::span<const std::size_t> valid, std::span<const int> edges,
                                 CountMode mode) {
  if (scores.size() != valid.size()) throw DataError("auc_by_tx_count: scores and clients differ");
  EvaluationReport report;
  const char* experiment = mode == CountMode::cumulative ? "tx_count_cumulative" : "tx_count_buckets";
  for (std::size_t g = 0; g < edges.size(); ++g) {
    const long lo = edges[g];
    const long hi = (mode == CountMode::buckets && g + 1 < edges.size()) ? edges[g + 1] : -1;
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t k = 0; k < valid.size(); ++k) {
      const long n = static_cast<long>(dataset[valid[k]].transactions.size());
      if (n >= lo && (hi < 0 || n < hi)) {
        s.push_back(scores[k]);
        y.push_back(label_value(dataset[valid[k]].label));
      }
    }
    const std::string label =
        mode == CountMode::cumulative
            ? ">=" + std::to_string(lo)
            : "[" + std::to_string(lo) + "," + (hi < 0 ? std::string("inf") : std::to_string(hi)) + ")";
    const bool ok = has_both_classes(y);
    auto& row = report.add(experiment, label, ok ? std::optional<double>(roc_auc(s, y)) : std::nullopt);
    row.meta = {{"clients", std::to_string(s.size())}, {"threshold", std::to_string(lo)}};
    if (!ok) row.note = s.empty() ? "no clients" : "single class";
  }
  return report;
}

EvaluationReport loss_grid(std::span<const ClientHistory> dataset, const SplitResult& split,
                           const RnnSetup& rnn, std::span<const double> margins) {
  EvaluationReport report;
  for (double m : margins) {
    TrainConfig t = rnn.train;
    t.loss = LossKind::margin_rank;
    t.margin = m;
    report.add("loss_grid", "hinge " + fmt(m, "%g"), single_auc(dataset, split, rnn, t)).meta = {
        {"loss", "margin_rank"}, {"margin", fmt(m, "%g")}};
  }
  TrainConfig bce = rnn.train;
  bce.loss = LossKind::bce;
  report.add("loss_grid", "bce", single_auc(dataset, split, rnn, bce)).meta = {{"loss", "bce"}};
  TrainConfig both = rnn.train;
  both.loss = LossKind::margin_rank_plus_bce;
  report.add("loss_grid", "hinge " + fmt(both.margin, "%g") + " + bce",
             single_auc(dataset, split, rnn, both))
      .meta = {{"loss", "margin_rank_plus_bce"}, {"margin", fmt(both.margin, "%g")},
               {"bce_weight", fmt(both.bce_weight, "%g")}};
  return report;
}

EvaluationReport schedule_grid(std::span<const ClientHistory> dataset, const SplitResult& split,
                               const RnnSetup& rnn, std::span<const double> gammas,
                               std::span<const int> cycles) {
  EvaluationReport report;
  for (double g : gammas) {
    for (int c : cycles) {
      TrainConfig t = rnn.train;
      t.gamma = g;
      t.cycles = c;
      auto& row = report.add("schedule_grid", "gamma " + fmt(g, "%g") + ", " + std::to_string(c) +
                                                  (c == 1 ? " cycle" : " cycles"),
                             single_auc(dataset, split, rnn, t));
      row.meta = {{"gamma", fmt(g, "%g")}, {"cycles", std::to_string(c)}};
    }
  }
  return report;
}

EvaluationReport regularization_grid(std::span<const ClientHistory> dataset,
                                     const SplitResult& split, const RnnSetup& rnn) {
  EvaluationReport report;
  for (Regularization reg : {Regularization::none, Regularization::tx_dropout,
                             Regularization::tx_shuffle, Regularization::embed_dropout}) {
    TrainConfig t = rnn.train;
    t.reg = reg;
    auto& row = report.add("regularization", to_string(reg), single_auc(dataset, split, rnn, t));
    row.meta = {{"p", fmt(t.reg_p, "%g")}};
  }
  return report;
}

EvaluationReport ensemble_variants(std::span<const ClientHistory> dataset, const SplitResult& split,
                                   const RnnSetup& rnn, int snapshot_after) {
  if (snapshot_after < 0 || snapshot_after >= rnn.train.epochs) {
    throw UsageError("snapshot_after must lie in [0, epochs)");
  }
  EvaluationReport report;
  const int batch = rnn.train.valid_batch_size;
  const SchemaSpec schema = build_schema_for(dataset, split.train, rnn.embedding, rnn.encoding);

  // Single run with snapshots, seeded like ensemble member 0.
  SnapshotRecorder recorder(snapshot_after);
  TrainingData data{dataset,
                    build_negative_pool(dataset, split.train, rnn.train.negative_ratio,
                                        derive_seed(rnn.train.seed, 0x736e6170)),
                    {}};
  const TrainResult single = train_model(data, schema, rnn.model, rnn.train, recorder.hook());
  report.add("ensemble_variants", "single", model_auc(single.model, dataset, split.valid, batch));
  const auto snaps = model_pointers(recorder.snapshots());
  report.add("ensemble_variants", "snapshot ensemble", models_auc(snaps, dataset, split.valid, batch))
      .meta = {{"snapshots", std::to_string(snaps.size())}};

  const auto members =
      train_members(dataset, split.train, split.valid, rnn, rnn.train, rnn.ensemble_size);
  const auto ptrs = model_pointers(members);
  report.add("ensemble_variants", "averaging ensemble", models_auc(ptrs, dataset, split.valid, batch))
      .meta = {{"members", std::to_string(ptrs.size())}};
  const EtRnnModel swa = average_weights(ptrs);
  report.add("ensemble_variants", "weight averaging", model_auc(swa, dataset, split.valid, batch))
      .meta = {{"members", std::to_string(ptrs.size())}};
  return report;
}

std::vector<TimingPoint> scoring_timing_grid(std::span<const EtRnnModel* const> models,
                                             std::span<const ClientHistory> dataset,
                                             std::span<const std::size_t> pool,
                                             std::span<const int> sizes, int repeats,
                                             int batch_size) {
  if (pool.empty()) throw DataError("timing grid needs at least one client with transactions");
  std::vector<TimingPoint> out;
  for (int size : sizes) {
    std::vector<std::size_t> indices(static_cast<std::size_t>(size));
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = pool[i % pool.size()];
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, repeats); ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto scores = score_clients(models, dataset, indices, batch_size);
      const auto t1 = std::chrono::steady_clock::now();
      if (scores.size() != indices.size()) throw std::logic_error("timing grid: score count mismatch");
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    out.push_back({size, best});
  }
  return out;
}

SignalAudit signal_leak_audit(std::span<const ClientHistory> dataset, const GroundTruth& truth,
                              const SplitResult& split, double margin,
                              const BaselineOptions& baseline) {
  SignalAudit out;
  out.margin = margin;
  const AggregateBaseline base = fit_baseline(dataset, split.train, baseline);
  out.baseline_auc = roc_auc(base.predict(dataset, split.valid), labels_of(dataset, split.valid));
  out.ceiling_auc = truth.ceiling_auc(split.valid);
  out.passed = out.baseline_auc <= out.ceiling_auc - margin;
  return out;
}

}  // namespace etrnn
