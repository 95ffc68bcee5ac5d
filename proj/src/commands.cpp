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

#include "etrnn/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <regex>

#include "etrnn/csv.hpp"
#include "etrnn/metrics.hpp"

namespace etrnn {

namespace fs = std::filesystem;

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".etrnn.lock") {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr) {
    throw UsageError("output directory " + dir.string() + " is locked by another run (remove " +
                     path_.string() + " if it is stale)");
  }
  std::fclose(f);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

class Logger {
 public:
  explicit Logger(std::ostream* out) : out_(out) {}
  template <class... Args>
  void operator()(const Args&... args) const {
    if (out_ == nullptr) return;
    ((*out_) << ... << args) << '\n';
    out_->flush();
  }

 private:
  std::ostream* out_;
};

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void echo_config(const CommandContext& ctx) {
  auto out = open_out(ctx.out_dir / "resolved_config.txt");
  out << ctx.config.resolved_text();
}

std::vector<ClientHistory> load_dataset(const RunConfig& config) {
  const std::string& path = config.get("data.path");
  if (path.empty()) throw UsageError("data.path is required (use --set data.path=FILE)");
  return ingest_csv(path);
}

std::vector<std::size_t> with_transactions(std::span<const ClientHistory> dataset,
                                           std::span<const std::size_t> indices) {
  std::vector<std::size_t> out;
  for (std::size_t i : indices) {
    if (!dataset[i].transactions.empty()) out.push_back(i);
  }
  return out;
}

SplitResult split_dataset(const CommandContext& ctx, std::span<const ClientHistory> dataset,
                          const Logger& log) {
  const CalendarDate boundary = resolve_boundary(ctx.config, dataset);
  SplitResult split = out_of_time_split(dataset, boundary);
  if (split.warning) log("warning: ", *split.warning);
  const std::size_t before = split.train.size() + split.valid.size();
  split.train = with_transactions(dataset, split.train);
  split.valid = with_transactions(dataset, split.valid);
  if (const std::size_t dropped = before - split.train.size() - split.valid.size(); dropped > 0) {
    log("note: ", dropped, " clients without transactions left out of the split");
  }
  log("split at ", format_date(boundary), ": ", split.train.size(), " train / ",
      split.valid.size(), " valid clients");
  if (split.train.empty()) throw DataError("the training side of the split is empty");
  return split;
}

std::string score_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_figure(const fs::path& path, const EvaluationReport& report, const std::string& x_key) {
  auto out = open_out(path);
  csv::write_row(out, {"x", "y", "std", "label"});
  for (const auto& row : report.rows) {
    std::string x = row.label;
    for (const auto& [k, v] : row.meta) {
      if (k == x_key) x = v;
    }
    csv::write_row(out, {x, row.auc ? score_text(*row.auc) : "", row.auc_std ? score_text(*row.auc_std) : "",
                         row.label});
  }
}

std::vector<const EtRnnModel*> pointers(const std::vector<ModelArtifact>& artifacts) {
  std::vector<const EtRnnModel*> out;
  for (const auto& a : artifacts) out.push_back(&a.model);
  return out;
}

fs::path artifact_dir(const CommandContext& ctx) {
  const std::string& dir = ctx.config.get("model.artifact_dir");
  return dir.empty() ? ctx.out_dir : fs::path(dir);
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {
      "benchmark", "tx_count", "tx_buckets", "learning_curve", "loss_grid", "schedule_grid", "regularization",
      "ensemble_variants"};
  return names;
}

CalendarDate resolve_boundary(const RunConfig& config, std::span<const ClientHistory> dataset) {
  const std::string& text = config.get("data.boundary");
  if (!text.empty()) {
    try {
      return parse_date(text);
    } catch (const DataError&) {
      throw UsageError("config key data.boundary: expected a YYYY-MM-DD date, got '" + text + "'");
    }
  }
  if (dataset.empty()) throw DataError("cannot derive a split boundary from an empty dataset");
  CalendarDate last = dataset.front().application_date;
  for (const auto& c : dataset) last = std::max(last, c.application_date);
  return add_months(last + std::chrono::days(1), -config.get_int("data.valid_months"));
}

std::vector<ModelArtifact> load_ensemble(const fs::path& dir) {
  static const std::regex pattern(R"(member_(\d+)\.etrnn)");
  std::vector<std::pair<int, fs::path>> found;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace_back(std::stoi(m[1]), entry.path());
  }
  if (ec) throw DataError("cannot read artifact directory " + dir.string() + ": " + ec.message());
  if (found.empty()) throw DataError("no member_*.etrnn artifacts in " + dir.string());
  std::sort(found.begin(), found.end());
  std::vector<ModelArtifact> out;
  for (const auto& [k, path] : found) {
    out.push_back(load_model(path));
    if (!(out.back().model.schema() == out.front().model.schema())) {
      throw DataError(path.string() + ": schema differs from " + found.front().second.string());
    }
  }
  return out;
}

void cmd_generate(const CommandContext& ctx) {
  const Logger log(ctx.log);
  const GenConfig g = ctx.config.gen_config();
  OutputLock lock(ctx.out_dir);
  echo_config(ctx);
  const GeneratedData data = generate_dataset(g);
  {
    auto out = open_out(ctx.out_dir / "dataset.csv", true);
    write_transactions(out, data.clients);
  }
  {
    auto out = open_out(ctx.out_dir / "ground_truth.csv", true);
    data.truth.write_csv(out);
  }
  int positives = 0;
  for (const auto& r : data.truth.rows) positives += r.label;
  char rate[32];
  std::snprintf(rate, sizeof rate, "%.4f", static_cast<double>(positives) / data.clients.size());
  char ceiling[32];
  std::snprintf(ceiling, sizeof ceiling, "%.4f", data.truth.ceiling_auc());
  log("generated ", data.clients.size(), " clients, positive rate ", rate,
      ", latent-risk ceiling AUC ", ceiling, " (", to_string(g.signal_mode), " signal)");
  log("wrote ", (ctx.out_dir / "dataset.csv").string(), " and ",
      (ctx.out_dir / "ground_truth.csv").string());
}

void cmd_train(const CommandContext& ctx) {
  const Logger log(ctx.log);
  RnnSetup rnn = ctx.config.rnn_setup();
  OutputLock lock(ctx.out_dir);
  echo_config(ctx);
  const std::vector<ClientHistory> dataset = load_dataset(ctx.config);
  const SplitResult split = split_dataset(ctx, dataset, log);
  if (split.valid.empty()) rnn.track_validation = false;

  const SchemaSpec schema = build_schema_for(dataset, split.train, rnn.embedding, rnn.encoding);
  {
    auto out = open_out(ctx.out_dir / "schema.json");
    out << schema.to_json().dump(2) << '\n';
  }
  log("training ", rnn.ensemble_size, " members, ", rnn.train.epochs, " epochs each");
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<EnsembleMember> members = train_ensemble(
      dataset, split.train, rnn.track_validation ? std::span<const std::size_t>(split.valid)
                                                 : std::span<const std::size_t>{},
      schema, rnn.model, rnn.train, rnn.ensemble_size, rnn.threads);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Provenance prov;
  prov.config_hash = hex64(ctx.config.hash());
  prov.seed = ctx.config.get_u64("seed");
  prov.data_fingerprint = hex64(dataset_fingerprint(dataset));
  for (std::size_t k = 0; k < members.size(); ++k) {
    prov.member = static_cast<int>(k);
    save_model(ModelArtifact{members[k].model, prov},
               ctx.out_dir / ("member_" + std::to_string(k) + ".etrnn"));
    auto out = open_out(ctx.out_dir / ("history_" + std::to_string(k) + ".csv"));
    members[k].history.write_csv(out);
    const auto& h = members[k].history.epochs;
    if (!h.empty() && h.back().valid_auc) {
      char auc[32];
      std::snprintf(auc, sizeof auc, "%.4f", *h.back().valid_auc);
      log("member ", k, ": final valid AUC ", auc);
    }
  }
  const std::vector<int> valid_labels = labels_of(dataset, split.valid);
  if (std::count(valid_labels.begin(), valid_labels.end(), 1) > 0 &&
      std::count(valid_labels.begin(), valid_labels.end(), 0) > 0) {
    const auto ptrs = model_pointers(members);
    const double auc = roc_auc(score_clients(ptrs, dataset, split.valid, rnn.train.valid_batch_size),
                               valid_labels);
    char text[32];
    std::snprintf(text, sizeof text, "%.4f", auc);
    log("ensemble valid AUC ", text);
  }
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.1f", seconds);
  log("trained in ", secs, " s; artifacts in ", ctx.out_dir.string());
}

void cmd_evaluate(const CommandContext& ctx) {
  const Logger log(ctx.log);
  const std::vector<std::string> experiments = ctx.config.get_list("eval.experiments");
  if (experiments.empty()) throw UsageError("eval.experiments is empty");
  for (const auto& e : experiments) {
    const auto& names = experiment_names();
    if (std::find(names.begin(), names.end(), e) == names.end()) {
      std::string valid;
      for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
      throw UsageError("unknown experiment '" + e + "'; valid: " + valid);
    }
  }
  const RnnSetup rnn = ctx.config.rnn_setup();
  const BaselineOptions baseline = ctx.config.baseline_options();
  OutputLock lock(ctx.out_dir);
  echo_config(ctx);
  const std::vector<ClientHistory> dataset = load_dataset(ctx.config);
  const SplitResult split = split_dataset(ctx, dataset, log);
  if (split.valid.empty()) throw DataError("the validation side of the split is empty");

  std::vector<ModelArtifact> artifacts;
  auto need_models = [&]() -> const std::vector<ModelArtifact>& {
    if (artifacts.empty()) artifacts = load_ensemble(artifact_dir(ctx));
    return artifacts;
  };

  EvaluationReport report;
  for (const auto& e : experiments) {
    log("running ", e);
    if (e == "benchmark") {
      const auto ptrs = pointers(need_models());
      report.append(benchmark_with_models(dataset, split, ptrs, baseline).report);
    } else if (e == "tx_count" || e == "tx_buckets") {
      const auto ptrs = pointers(need_models());
      const auto scores = score_clients(ptrs, dataset, split.valid, rnn.train.valid_batch_size);
      const auto thresholds = ctx.config.get_int_list("eval.tx_thresholds");
      const auto edges = ctx.config.get_int_list("eval.tx_buckets");
      const EvaluationReport cumulative =
          auc_by_tx_count(scores, dataset, split.valid, thresholds, CountMode::cumulative);
      const EvaluationReport buckets =
          auc_by_tx_count(scores, dataset, split.valid, edges, CountMode::buckets);
      write_figure(ctx.out_dir / "tx_count_cumulative.csv", cumulative, "threshold");
      write_figure(ctx.out_dir / "tx_count_buckets.csv", buckets, "threshold");
      report.append(cumulative);
      report.append(buckets);
    } else if (e == "learning_curve") {
      const auto sizes = ctx.config.get_int_list("eval.learning_sizes");
      const EvaluationReport curve =
          learning_curve(dataset, split, sizes, ctx.config.get_int("eval.repeats"), rnn, baseline);
      write_figure(ctx.out_dir / "learning_curve.csv", curve, "size");
      report.append(curve);
    } else if (e == "loss_grid") {
      report.append(loss_grid(dataset, split, rnn, ctx.config.get_double_list("eval.margins")));
    } else if (e == "schedule_grid") {
      report.append(schedule_grid(dataset, split, rnn, ctx.config.get_double_list("eval.gammas"),
                                  ctx.config.get_int_list("eval.cycles")));
    } else if (e == "regularization") {
      report.append(regularization_grid(dataset, split, rnn));
    } else if (e == "ensemble_variants") {
      report.append(ensemble_variants(dataset, split, rnn, ctx.config.get_int("eval.snapshot_after")));
    }
  }
  {
    auto out = open_out(ctx.out_dir / "report.csv", true);
    report.write_csv(out);
  }
  {
    auto out = open_out(ctx.out_dir / "report.txt");
    report.write_table(out);
  }
  if (ctx.log != nullptr) report.write_table(*ctx.log);
}

void cmd_score(const CommandContext& ctx) {
  const Logger log(ctx.log);
  OutputLock lock(ctx.out_dir);
  echo_config(ctx);
  const std::vector<ModelArtifact> artifacts = load_ensemble(artifact_dir(ctx));
  const auto ptrs = pointers(artifacts);
  const std::vector<ClientHistory> dataset = load_dataset(ctx.config);
  const int batch = ctx.config.get_int("train.valid_batch_size");

  std::vector<std::size_t> scorable;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!dataset[i].transactions.empty()) scorable.push_back(i);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> scores = score_clients(ptrs, dataset, scorable, batch);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    auto out = open_out(ctx.out_dir / "scores.csv", true);
    csv::write_row(out, {"client_id", "score", "status"});
    std::size_t k = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (k < scorable.size() && scorable[k] == i) {
        csv::write_row(out, {dataset[i].client_id, score_text(scores[k]), "ok"});
        ++k;
      } else {
        csv::write_row(out, {dataset[i].client_id, "", "no_data"});
      }
    }
  }
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.3f", seconds);
  log("scored ", scorable.size(), " clients (", dataset.size() - scorable.size(),
      " without transactions) with ", ptrs.size(), " members in ", secs, " s");

  if (ctx.timing_grid) {
    const std::vector<int> sizes = {1000, 2000, 4000};
    const auto grid = scoring_timing_grid(ptrs, dataset, scorable, sizes, 3, batch);
    auto out = open_out(ctx.out_dir / "timing.csv");
    csv::write_row(out, {"clients", "seconds", "ratio_to_previous"});
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const std::string ratio = i == 0 ? "" : score_text(grid[i].seconds / grid[i - 1].seconds);
      csv::write_row(out, {std::to_string(grid[i].clients), score_text(grid[i].seconds), ratio});
      char line[96];
      std::snprintf(line, sizeof line, "timing: %d clients %.3f s", grid[i].clients, grid[i].seconds);
      log(line);
    }
  }
}

}  // namespace etrnn
