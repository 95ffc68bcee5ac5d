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

#include "etrnn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace etrnn {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "20260101", "global seed for generation, initialization and sampling"},

      {"gen.n_clients", "20000", "number of synthetic clients"},
      {"gen.start_date", "2018-01-01", "first possible application date"},
      {"gen.months_span", "20", "application dates are spread over this many months"},
      {"gen.base_default_rate", "0.05", "population-average default probability"},
      {"gen.signal_mode", "sequential", "sequential | aggregate | mixed"},
      {"gen.signal_strength", "2.0", "log-odds per standard deviation of the planted score"},
      {"gen.tx_min", "20", "minimum transactions per client"},
      {"gen.tx_max", "600", "maximum transactions per client"},
      {"gen.tx_shape", "1.5", "count = min + floor((max - min + 1) * U^shape)"},
      {"gen.n_currencies", "5", "currency vocabulary size"},
      {"gen.n_countries", "20", "country vocabulary size"},
      {"gen.n_merchant_types", "30", "merchant type vocabulary size"},
      {"gen.n_card_types", "4", "card type vocabulary size"},
      {"gen.n_branches", "50", "issuing branch vocabulary size"},
      {"gen.n_risky_merchants", "2", "size of the risky merchant subset"},
      {"gen.risky_alpha", "2.0", "Beta alpha of a client's risky share"},
      {"gen.risky_beta", "14.0", "Beta beta of a client's risky share"},
      {"gen.history_days", "365", "typical history length before the application"},
      {"gen.recent_days", "60", "window of the sequential signal"},
      {"gen.gap_shape", "1.5", "gamma shape of inter-arrival times"},
      {"gen.tilt_sd", "1.0", "spread of the recent-window risky tilt"},
      {"gen.trend_sd", "0.3", "spread of the recent gap shrink"},
      {"gen.trend_weight", "0.25", "weight of the gap trend in the sequential score"},

      {"data.path", "", "transactions CSV for train, evaluate and score"},
      {"data.boundary", "", "out-of-time boundary date; empty: valid_months before the last application"},
      {"data.valid_months", "4", "validation months when data.boundary is empty"},
      {"data.max_sequence_length", "800", "most recent transactions kept per client"},
      {"data.include_days_since_issue", "false", "add the days_since_issue scalar track"},
      {"data.embedding_cap", "16", "embedding width is min(cap, ceil(cardinality / 2))"},
      {"data.embedding_overrides", "", "per-field widths, e.g. merchant_type:8,country:4"},
      {"data.negative_ratio", "10", "negatives kept per positive in each member's pool"},

      {"model.encoder", "gru", "gru | lstm"},
      {"model.bidirectional", "false", "run a second encoder backwards and concatenate"},
      {"model.hidden_size", "64", "recurrent state width"},
      {"model.artifact_dir", "", "directory holding member_*.etrnn; empty: the output directory"},

      {"train.loss", "margin_rank", "bce | margin_rank | margin_rank_plus_bce"},
      {"train.margin", "0.1", "ranking-loss margin"},
      {"train.bce_weight", "1.0", "BCE weight in margin_rank_plus_bce"},
      {"train.base_lr", "0.01", "learning rate at the start of each cycle"},
      {"train.gamma", "0.5", "per-epoch multiplicative decay"},
      {"train.cycles", "1", "restart the decay this many times"},
      {"train.epochs", "6", "epochs per model"},
      {"train.batch_size", "32", "training mini-batch size"},
      {"train.valid_batch_size", "768", "validation scoring chunk"},
      {"train.reg", "none", "none | tx_dropout | tx_shuffle | embed_dropout"},
      {"train.reg_p", "0.1", "probability used by the regularizer"},
      {"train.n_ensemble", "6", "independently trained members"},
      {"train.threads", "1", "members trained concurrently (results do not change)"},
      {"train.track_validation", "true", "record validation AUC after every epoch"},

      {"eval.experiments", "benchmark,tx_count", "comma list of benchmark, tx_count (alias tx_buckets), "
                                                  "learning_curve, loss_grid, schedule_grid, regularization, ensemble_variants"},
      {"eval.learning_sizes", "1000,4000,16000", "training sizes for learning_curve"},
      {"eval.repeats", "3", "repeats per learning-curve size"},
      {"eval.tx_thresholds", "1,25,100,350", "cumulative transaction-count thresholds"},
      {"eval.tx_buckets", "1,25,50,100,200,400", "bucket edges for the disjoint variant"},
      {"eval.margins", "0.5,0.1,0.01", "margins for loss_grid"},
      {"eval.gammas", "1,0.8,0.5", "decay factors for schedule_grid"},
      {"eval.cycles", "1,2,3", "cycle counts for schedule_grid"},
      {"eval.snapshot_after", "3", "first epoch kept by the snapshot ensemble"},
      {"eval.woe_bins", "10", "quantile bins per aggregate feature"},
      {"eval.top_merchants", "8", "merchant types with their own aggregate features"},
      {"eval.top_currencies", "5", "currencies with their own count feature"},
      {"eval.l2", "0.001", "logistic L2 penalty"},
      {"eval.logistic_epochs", "2000", "logistic gradient-descent epochs"},
      {"eval.logistic_lr", "0.5", "logistic gradient-descent step"},
  };
  return keys;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string valid_keys_text() {
  std::string out;
  for (const auto& k : config_keys()) {
    if (!out.empty()) out += ", ";
    out += k.name;
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, const std::string& value, const char* expected) {
  throw UsageError("config key " + std::string(key) + ": expected " + expected + ", got '" +
                   value + "'");
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_.emplace(std::string(k.name), std::string(k.default_value));
}

void RunConfig::set(std::string_view key, std::string_view value) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw UsageError("unknown config key '" + std::string(key) + "'; valid keys: " + valid_keys_text());
  }
  it->second = std::string(trim(value));
}

void RunConfig::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw UsageError("expected key=value, got '" + std::string(assignment) + "'");
  }
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::load(std::istream& in, std::string_view origin) {
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    try {
      set_assignment(view);
    } catch (const UsageError& e) {
      throw UsageError(std::string(origin) + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  load(in, path.string());
}

const std::string& RunConfig::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::logic_error("undocumented config key " + std::string(key));
  return it->second;
}

int RunConfig::get_int(std::string_view key) const {
  const std::string& v = get(key);
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t RunConfig::get_u64(std::string_view key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double RunConfig::get_double(std::string_view key) const {
  const std::string& v = get(key);
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool RunConfig::get_bool(std::string_view key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string> RunConfig::get_list(std::string_view key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string_view t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::vector<int> RunConfig::get_int_list(std::string_view key) const {
  std::vector<int> out;
  for (const auto& item : get_list(key)) {
    int v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) bad_value(key, get(key), "integers");
    out.push_back(v);
  }
  return out;
}

std::vector<double> RunConfig::get_double_list(std::string_view key) const {
  std::vector<double> out;
  for (const auto& item : get_list(key)) {
    double v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) bad_value(key, get(key), "numbers");
    out.push_back(v);
  }
  return out;
}

std::string RunConfig::resolved_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const {
  Fnv1a h;
  h.update(resolved_text());
  return h.digest();
}

GenConfig RunConfig::gen_config() const {
  GenConfig g;
  g.n_clients = get_int("gen.n_clients");
  try {
    g.start_date = parse_date(get("gen.start_date"));
  } catch (const DataError&) {
    bad_value("gen.start_date", get("gen.start_date"), "a YYYY-MM-DD date");
  }
  g.months_span = get_int("gen.months_span");
  g.base_default_rate = get_double("gen.base_default_rate");
  g.signal_mode = signal_mode_from_string(get("gen.signal_mode"));
  g.signal_strength = get_double("gen.signal_strength");
  g.tx_min = get_int("gen.tx_min");
  g.tx_max = get_int("gen.tx_max");
  g.tx_shape = get_double("gen.tx_shape");
  g.n_currencies = get_int("gen.n_currencies");
  g.n_countries = get_int("gen.n_countries");
  g.n_merchant_types = get_int("gen.n_merchant_types");
  g.n_card_types = get_int("gen.n_card_types");
  g.n_branches = get_int("gen.n_branches");
  g.n_risky_merchants = get_int("gen.n_risky_merchants");
  g.risky_alpha = get_double("gen.risky_alpha");
  g.risky_beta = get_double("gen.risky_beta");
  g.history_days = get_int("gen.history_days");
  g.recent_days = get_int("gen.recent_days");
  g.gap_shape = get_double("gen.gap_shape");
  g.tilt_sd = get_double("gen.tilt_sd");
  g.trend_sd = get_double("gen.trend_sd");
  g.trend_weight = get_double("gen.trend_weight");
  g.seed = get_u64("seed");
  g.validate();
  return g;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.encoder = encoder_kind_from_string(get("model.encoder"));
  m.bidirectional = get_bool("model.bidirectional");
  m.hidden_size = get_int("model.hidden_size");
  if (m.hidden_size < 1) bad_value("model.hidden_size", get("model.hidden_size"), "a positive integer");
  m.seed = get_u64("seed");
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.loss = loss_kind_from_string(get("train.loss"));
  t.margin = get_double("train.margin");
  t.bce_weight = get_double("train.bce_weight");
  t.base_lr = get_double("train.base_lr");
  t.gamma = get_double("train.gamma");
  t.cycles = get_int("train.cycles");
  t.epochs = get_int("train.epochs");
  t.batch_size = get_int("train.batch_size");
  t.valid_batch_size = get_int("train.valid_batch_size");
  t.reg = regularization_from_string(get("train.reg"));
  t.reg_p = get_double("train.reg_p");
  t.negative_ratio = get_int("data.negative_ratio");
  t.seed = get_u64("seed");
  t.validate();
  return t;
}

EmbeddingRule RunConfig::embedding_rule() const {
  EmbeddingRule r;
  r.cap = get_int("data.embedding_cap");
  if (r.cap < 1) bad_value("data.embedding_cap", get("data.embedding_cap"), "a positive integer");
  for (const auto& item : get_list("data.embedding_overrides")) {
    const auto colon = item.find(':');
    int dim = 0;
    if (colon == std::string::npos ||
        std::from_chars(item.data() + colon + 1, item.data() + item.size(), dim).ec != std::errc() ||
        dim < 1) {
      bad_value("data.embedding_overrides", get("data.embedding_overrides"), "field:dim pairs");
    }
    r.overrides[item.substr(0, colon)] = dim;
  }
  return r;
}

EncodingOptions RunConfig::encoding_options() const {
  EncodingOptions o;
  o.max_sequence_length = get_int("data.max_sequence_length");
  if (o.max_sequence_length < 1) {
    bad_value("data.max_sequence_length", get("data.max_sequence_length"), "a positive integer");
  }
  o.include_days_since_issue = get_bool("data.include_days_since_issue");
  return o;
}

BaselineOptions RunConfig::baseline_options() const {
  BaselineOptions b;
  b.top_merchants = get_int("eval.top_merchants");
  b.top_currencies = get_int("eval.top_currencies");
  b.woe_bins = get_int("eval.woe_bins");
  b.logistic.l2 = get_double("eval.l2");
  b.logistic.epochs = get_int("eval.logistic_epochs");
  b.logistic.lr = get_double("eval.logistic_lr");
  return b;
}

RnnSetup RunConfig::rnn_setup() const {
  RnnSetup r;
  r.embedding = embedding_rule();
  r.encoding = encoding_options();
  r.model = model_config();
  r.train = train_config();
  r.ensemble_size = get_int("train.n_ensemble");
  if (r.ensemble_size < 1) bad_value("train.n_ensemble", get("train.n_ensemble"), "a positive integer");
  r.threads = get_int("train.threads");
  r.track_validation = get_bool("train.track_validation");
  return r;
}

}  // namespace etrnn
