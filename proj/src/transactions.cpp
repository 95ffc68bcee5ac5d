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

#include "etrnn/transactions.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <fstream>
#include <mutex>
#include <random>
#include <shared_mutex>

#include "etrnn/csv.hpp"

namespace etrnn {
namespace {

class SymbolPool {
 public:
  SymbolPool() { strings_.emplace_back(); ids_.emplace(std::string_view(strings_.front()), 0); }

  std::uint32_t intern(std::string_view text) {
    {
      std::shared_lock lock(mu_);
      auto it = ids_.find(text);
      if (it != ids_.end()) return it->second;
    }
    std::unique_lock lock(mu_);
    auto it = ids_.find(text);
    if (it != ids_.end()) return it->second;
    auto id = static_cast<std::uint32_t>(strings_.size());
    strings_.emplace_back(text);
    ids_.emplace(std::string_view(strings_.back()), id);
    return id;
  }

  std::string_view lookup(std::uint32_t id) {
    std::shared_lock lock(mu_);
    return strings_[id];
  }

 private:
  std::shared_mutex mu_;
  std::deque<std::string> strings_;
  std::unordered_map<std::string_view, std::uint32_t> ids_;
};

SymbolPool& symbol_pool() {
  static SymbolPool pool;
  return pool;
}

std::string to_chars_shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view s, std::size_t line, std::string_view column) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw DataError("row " + std::to_string(line) + ": invalid " + std::string(column) + " '" +
                    std::string(s) + "'");
  }
  return v;
}

std::uint16_t parse_count(std::string_view s, std::size_t line, std::string_view column) {
  unsigned v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || v > 65535) {
    throw DataError("row " + std::to_string(line) + ": invalid " + std::string(column) + " '" +
                    std::string(s) + "'");
  }
  return static_cast<std::uint16_t>(v);
}

Label parse_label(std::string_view s, std::size_t line) {
  if (s == "1") return Label::defaulted;
  if (s == "0") return Label::non_default;
  if (s.empty() || s == "unknown") return Label::unknown;
  throw DataError("row " + std::to_string(line) + ": invalid label '" + std::string(s) + "'");
}

std::string label_text(Label l) {
  switch (l) {
    case Label::defaulted:
      return "1";
    case Label::non_default:
      return "0";
    case Label::unknown:
      break;
  }
  return "";
}

CategoricalField field_from_name(std::string_view name) {
  for (int i = 0; i < kNumCategoricalFields; ++i) {
    if (kCategoricalFieldNames[i] == name) return static_cast<CategoricalField>(i);
  }
  throw DataError("unknown categorical field '" + std::string(name) + "'");
}

template <typename Visit>
void for_each_client(std::span<const ClientHistory> dataset, std::span<const std::size_t> subset,
                     Visit visit) {
  if (subset.empty()) {
    for (const auto& c : dataset) visit(c);
  } else {
    for (std::size_t i : subset) visit(dataset[i]);
  }
}

}  // namespace

Symbol::Symbol(std::string_view text) : id_(symbol_pool().intern(text)) {}

std::string_view Symbol::str() const { return symbol_pool().lookup(id_); }

void ClientHistory::validate() const {
  const Timestamp cutoff{application_date};
  for (std::size_t i = 0; i < transactions.size(); ++i) {
    if (!std::isfinite(transactions[i].amount)) {
      throw DataError("client " + client_id + ": non-finite amount");
    }
    if (i > 0 && transactions[i].timestamp < transactions[i - 1].timestamp) {
      throw DataError("client " + client_id + ": transactions not sorted by timestamp");
    }
    if (transactions[i].timestamp >= cutoff) {
      throw DataError("client " + client_id + ": transaction at " +
                      format_timestamp(transactions[i].timestamp) +
                      " is not before application date " + format_date(application_date));
    }
  }
}

std::string categorical_code(const TransactionRecord& tx, CategoricalField field) {
  using namespace std::chrono;
  switch (field) {
    case CategoricalField::currency:
      return std::string(tx.currency.str());
    case CategoricalField::country:
      return std::string(tx.country.str());
    case CategoricalField::hour: {
      auto day_start = floor<days>(tx.timestamp);
      return std::to_string(duration_cast<hours>(tx.timestamp - day_start).count());
    }
    case CategoricalField::weekday:
      return std::to_string(weekday{floor<days>(tx.timestamp)}.c_encoding());
    case CategoricalField::month:
      return std::to_string(static_cast<unsigned>(year_month_day{floor<days>(tx.timestamp)}.month()));
    case CategoricalField::merchant_type:
      return std::string(tx.merchant_type.str());
    case CategoricalField::card_type:
      return std::string(tx.card_type.str());
    case CategoricalField::issuing_branch:
      return std::string(tx.issuing_branch.str());
    case CategoricalField::n_opened_debit_cards:
      return std::to_string(tx.n_opened_debit_cards);
    case CategoricalField::n_opened_credit_cards:
      return std::to_string(tx.n_opened_credit_cards);
  }
  throw std::logic_error("unhandled categorical field");
}

std::int32_t CategoricalVocabulary::add(const std::string& code) {
  auto [it, inserted] = index.emplace(code, static_cast<std::int32_t>(codes.size()) + 1);
  if (inserted) codes.push_back(code);
  return it->second;
}

int SchemaSpec::embedding_width() const {
  int w = 0;
  for (const auto& f : categorical) w += f.embedding_dim;
  return w;
}

bool SchemaSpec::has_days_since_issue() const {
  return std::find(scalar_names.begin(), scalar_names.end(), kScalarDaysSinceIssue) !=
         scalar_names.end();
}

nlohmann::json SchemaSpec::to_json() const {
  nlohmann::json fields = nlohmann::json::object();
  nlohmann::json order = nlohmann::json::array();
  for (const auto& f : categorical) {
    nlohmann::json vocab = nlohmann::json::object();
    for (std::size_t i = 0; i < f.codes.size(); ++i) vocab[f.codes[i]] = i + 1;
    fields[f.name] = {{"vocabulary", vocab},
                      {"cardinality", f.cardinality()},
                      {"embedding_dim", f.embedding_dim}};
    order.push_back(f.name);
  }
  return {{"fields", fields},
          {"field_order", order},
          {"scalars", scalar_names},
          {"max_sequence_length", max_sequence_length}};
}

SchemaSpec SchemaSpec::from_json(const nlohmann::json& doc) {
  SchemaSpec s;
  try {
    s.max_sequence_length = doc.at("max_sequence_length").get<int>();
    s.scalar_names = doc.at("scalars").get<std::vector<std::string>>();
    for (const auto& name_json : doc.at("field_order")) {
      auto name = name_json.get<std::string>();
      const auto& f = doc.at("fields").at(name);
      CategoricalVocabulary v;
      v.name = name;
      v.embedding_dim = f.at("embedding_dim").get<int>();
      const auto& vocab = f.at("vocabulary");
      v.codes.assign(vocab.size(), std::string());
      for (auto it = vocab.begin(); it != vocab.end(); ++it) {
        auto idx = it.value().get<std::int64_t>();
        if (idx < 1 || idx > static_cast<std::int64_t>(vocab.size()) || !v.codes[idx - 1].empty()) {
          throw DataError("schema field '" + name + "': vocabulary indices are not 1..K");
        }
        v.codes[idx - 1] = it.key();
        v.index.emplace(it.key(), static_cast<std::int32_t>(idx));
      }
      if (f.at("cardinality").get<int>() != v.cardinality()) {
        throw DataError("schema field '" + name + "': cardinality does not match vocabulary");
      }
      if (v.embedding_dim < 1) throw DataError("schema field '" + name + "': embedding_dim < 1");
      field_from_name(name);
      s.categorical.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed schema document: ") + e.what());
  }
  if (s.max_sequence_length < 1) throw DataError("schema max_sequence_length < 1");
  return s;
}

bool operator==(const SchemaSpec& a, const SchemaSpec& b) {
  if (a.max_sequence_length != b.max_sequence_length || a.scalar_names != b.scalar_names ||
      a.categorical.size() != b.categorical.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.categorical.size(); ++i) {
    const auto& x = a.categorical[i];
    const auto& y = b.categorical[i];
    if (x.name != y.name || x.codes != y.codes || x.embedding_dim != y.embedding_dim) return false;
  }
  return true;
}

int EmbeddingRule::dim(std::string_view field, int cardinality) const {
  if (auto it = overrides.find(field); it != overrides.end()) return std::max(1, it->second);
  return std::max(1, std::min(cap, (cardinality + 1) / 2));
}

SchemaSpec build_vocabularies(std::span<const ClientHistory> dataset, const EmbeddingRule& rule,
                              const EncodingOptions& options) {
  return build_vocabularies(dataset, {}, rule, options);
}

SchemaSpec build_vocabularies(std::span<const ClientHistory> dataset,
                              std::span<const std::size_t> subset, const EmbeddingRule& rule,
                              const EncodingOptions& options) {
  if (dataset.empty()) throw DataError("cannot build vocabularies from an empty dataset");
  SchemaSpec s;
  s.max_sequence_length = options.max_sequence_length;
  s.categorical.resize(kNumCategoricalFields);
  for (int f = 0; f < kNumCategoricalFields; ++f) {
    s.categorical[f].name = std::string(kCategoricalFieldNames[f]);
  }
  for_each_client(dataset, subset, [&](const ClientHistory& c) {
    for (const auto& tx : c.transactions) {
      for (int f = 0; f < kNumCategoricalFields; ++f) {
        s.categorical[f].add(categorical_code(tx, static_cast<CategoricalField>(f)));
      }
    }
  });
  for (auto& f : s.categorical) f.embedding_dim = rule.dim(f.name, f.cardinality());
  s.scalar_names = {std::string(kScalarAmount), std::string(kScalarDaysSincePrev)};
  if (options.include_days_since_issue) s.scalar_names.emplace_back(kScalarDaysSinceIssue);
  return s;
}

EncodedSequence derive_and_encode(const ClientHistory& client, const SchemaSpec& schema) {
  const auto n = static_cast<int>(client.transactions.size());
  if (n == 0) throw DataError("client " + client.client_id + " has no transactions");
  const int length = schema.max_sequence_length;
  const int keep = std::min(n, length);
  const int first = n - keep;
  const int offset = length - keep;

  EncodedSequence seq;
  seq.indices = EncodedSequence::IndexTracks::Zero(schema.categorical.size(), length);
  seq.scalars = EncodedSequence::ScalarTracks::Zero(schema.scalar_names.size(), length);
  seq.valid_length = keep;
  seq.raw_transaction_count = n;

  for (std::size_t f = 0; f < schema.categorical.size(); ++f) {
    const auto& vocab = schema.categorical[f];
    const CategoricalField field = field_from_name(vocab.name);
    for (int j = 0; j < keep; ++j) {
      seq.indices(f, offset + j) = vocab.lookup(categorical_code(client.transactions[first + j], field));
    }
  }
  for (std::size_t s = 0; s < schema.scalar_names.size(); ++s) {
    const auto& name = schema.scalar_names[s];
    for (int j = 0; j < keep; ++j) {
      const auto& tx = client.transactions[first + j];
      double value = 0.0;
      if (name == kScalarAmount) {
        value = compress_amount(tx.amount);
      } else if (name == kScalarDaysSincePrev) {
        if (j > 0) {
          auto gap = tx.timestamp - client.transactions[first + j - 1].timestamp;
          value = static_cast<double>(gap.count()) / kSecondsPerDay;
        }
      } else if (name == kScalarDaysSinceIssue) {
        auto it = client.card_issue_dates.find(tx.card_id);
        if (it != client.card_issue_dates.end()) {
          auto elapsed = tx.timestamp - Timestamp{it->second};
          value = std::floor(static_cast<double>(elapsed.count()) / kSecondsPerDay);
        }
      } else {
        throw DataError("unknown scalar track '" + name + "'");
      }
      seq.scalars(s, offset + j) = value;
    }
  }
  return seq;
}

EncodedSequence extend_padding(const EncodedSequence& seq, int extra) {
  EncodedSequence out;
  out.valid_length = seq.valid_length;
  out.raw_transaction_count = seq.raw_transaction_count;
  out.indices = EncodedSequence::IndexTracks::Zero(seq.indices.rows(), seq.length() + extra);
  out.scalars = EncodedSequence::ScalarTracks::Zero(seq.scalars.rows(), seq.length() + extra);
  out.indices.rightCols(seq.length()) = seq.indices;
  out.scalars.rightCols(seq.length()) = seq.scalars;
  return out;
}

SplitResult out_of_time_split(std::span<const ClientHistory> dataset, CalendarDate boundary) {
  SplitResult r;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].label == Label::unknown) {
      throw DataError("client " + dataset[i].client_id + " has no known label");
    }
    (dataset[i].application_date < boundary ? r.train : r.valid).push_back(i);
  }
  if (r.train.empty() || r.valid.empty()) {
    r.warning = "split boundary " + format_date(boundary) + " leaves the " +
                (r.train.empty() ? std::string("train") : std::string("validation")) +
                " side empty";
  }
  return r;
}

SamplingPool build_negative_pool(std::span<const ClientHistory> dataset,
                                 std::span<const std::size_t> train, int ratio,
                                 std::uint64_t seed) {
  SamplingPool pool;
  std::vector<std::size_t> negatives;
  for (std::size_t i : train) {
    switch (dataset[i].label) {
      case Label::defaulted:
        pool.positives.push_back(i);
        break;
      case Label::non_default:
        negatives.push_back(i);
        break;
      case Label::unknown:
        throw DataError("client " + dataset[i].client_id + " has no known label");
    }
  }
  if (pool.positives.empty()) throw DataError("training data contains no positive clients");
  const std::size_t want =
      std::min(negatives.size(), static_cast<std::size_t>(std::max(ratio, 0)) * pool.positives.size());
  std::mt19937_64 rng(seed);
  std::sample(negatives.begin(), negatives.end(), std::back_inserter(pool.negatives), want, rng);
  return pool;
}

std::vector<std::size_t> epoch_sample(const SamplingPool& pool, int epoch, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x65706f6368ULL, static_cast<std::uint64_t>(epoch)));
  std::vector<std::size_t> out(pool.positives);
  out.reserve(2 * pool.positives.size());
  std::sample(pool.negatives.begin(), pool.negatives.end(), std::back_inserter(out),
              pool.positives.size(), rng);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::string ColumnMapping::header_for(std::string_view logical) const {
  if (auto it = rename.find(logical); it != rename.end()) return it->second;
  return std::string(logical);
}

std::vector<ClientHistory> read_transactions(std::istream& in, const ColumnMapping& mapping) {
  csv::Reader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row)) throw DataError("missing CSV header");
  if (!row.empty() && row[0].starts_with("\xEF\xBB\xBF")) row[0].erase(0, 3);

  std::unordered_map<std::string, std::size_t> header;
  for (std::size_t i = 0; i < row.size(); ++i) header.emplace(row[i], i);
  std::array<std::size_t, kRequiredColumns.size()> col{};
  for (std::size_t k = 0; k < kRequiredColumns.size(); ++k) {
    auto name = mapping.header_for(kRequiredColumns[k]);
    auto it = header.find(name);
    if (it == header.end()) throw DataError("CSV header lacks required column '" + name + "'");
    col[k] = it->second;
  }
  std::optional<std::size_t> issue_col;
  if (auto it = header.find(mapping.header_for(kCardIssueDateColumn)); it != header.end()) {
    issue_col = it->second;
  }
  enum : std::size_t {
    kClient, kLabel, kAppDate, kCard, kTime, kAmount, kCurrency, kCountry,
    kMerchant, kCardType, kBranch, kDebit, kCredit
  };

  std::vector<ClientHistory> clients;
  std::unordered_map<std::string, std::size_t> by_id;
  const std::size_t width = header.size();
  while (reader.next(row)) {
    const std::size_t line = reader.record_line();
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != width) {
      throw DataError("row " + std::to_string(line) + ": expected " + std::to_string(width) +
                      " fields, found " + std::to_string(row.size()));
    }
    const std::string& id = row[col[kClient]];
    if (id.empty()) throw DataError("row " + std::to_string(line) + ": empty client_id");
    const Label label = parse_label(row[col[kLabel]], line);
    CalendarDate app_date;
    try {
      app_date = parse_date(row[col[kAppDate]]);
    } catch (const DataError& e) {
      throw DataError("row " + std::to_string(line) + ": " + e.what());
    }

    auto [it, inserted] = by_id.emplace(id, clients.size());
    if (inserted) {
      ClientHistory c;
      c.client_id = id;
      c.label = label;
      c.application_date = app_date;
      clients.push_back(std::move(c));
    }
    ClientHistory& client = clients[it->second];
    if (client.label != label) {
      throw DataError("row " + std::to_string(line) + ": inconsistent label for client " + id);
    }
    if (client.application_date != app_date) {
      throw DataError("row " + std::to_string(line) + ": inconsistent application_date for client " +
                      id);
    }
    if (row[col[kTime]].empty()) continue;  // client row without transactions

    TransactionRecord tx;
    try {
      tx.timestamp = parse_timestamp(row[col[kTime]]);
    } catch (const DataError& e) {
      throw DataError("row " + std::to_string(line) + ": " + e.what());
    }
    if (tx.timestamp >= Timestamp{app_date}) {
      throw DataError("row " + std::to_string(line) + ": client " + id + " has a transaction at " +
                      format_timestamp(tx.timestamp) + " on or after its application date " +
                      format_date(app_date));
    }
    tx.amount = parse_double(row[col[kAmount]], line, "amount");
    tx.currency = Symbol(row[col[kCurrency]]);
    tx.country = Symbol(row[col[kCountry]]);
    tx.merchant_type = Symbol(row[col[kMerchant]]);
    tx.card_type = Symbol(row[col[kCardType]]);
    tx.issuing_branch = Symbol(row[col[kBranch]]);
    tx.card_id = Symbol(row[col[kCard]]);
    tx.n_opened_debit_cards = parse_count(row[col[kDebit]], line, "n_opened_debit_cards");
    tx.n_opened_credit_cards = parse_count(row[col[kCredit]], line, "n_opened_credit_cards");
    if (issue_col && !row[*issue_col].empty()) {
      CalendarDate issued;
      try {
        issued = parse_date(row[*issue_col]);
      } catch (const DataError& e) {
        throw DataError("row " + std::to_string(line) + ": " + e.what());
      }
      auto [card, fresh] = client.card_issue_dates.emplace(tx.card_id, issued);
      if (!fresh && card->second != issued) {
        throw DataError("row " + std::to_string(line) + ": inconsistent card_issue_date for card " +
                        std::string(tx.card_id.str()));
      }
    }
    client.transactions.push_back(tx);
  }
  for (auto& c : clients) {
    std::stable_sort(c.transactions.begin(), c.transactions.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  }
  return clients;
}

std::vector<ClientHistory> ingest_csv(const std::filesystem::path& path,
                                      const ColumnMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_transactions(in, mapping);
}

void write_transactions(std::ostream& out, std::span<const ClientHistory> dataset) {
  std::vector<std::string> row(kRequiredColumns.begin(), kRequiredColumns.end());
  row.emplace_back(kCardIssueDateColumn);
  csv::write_row(out, row);
  for (const auto& c : dataset) {
    const std::string label = label_text(c.label);
    const std::string app = format_date(c.application_date);
    if (c.transactions.empty()) {
      row.assign(row.size(), std::string());
      row[0] = c.client_id;
      row[1] = label;
      row[2] = app;
      csv::write_row(out, row);
      continue;
    }
    for (const auto& tx : c.transactions) {
      auto issue = c.card_issue_dates.find(tx.card_id);
      row = {c.client_id,
             label,
             app,
             std::string(tx.card_id.str()),
             format_timestamp(tx.timestamp),
             to_chars_shortest(tx.amount),
             std::string(tx.currency.str()),
             std::string(tx.country.str()),
             std::string(tx.merchant_type.str()),
             std::string(tx.card_type.str()),
             std::string(tx.issuing_branch.str()),
             std::to_string(tx.n_opened_debit_cards),
             std::to_string(tx.n_opened_credit_cards),
             issue == c.card_issue_dates.end() ? std::string() : format_date(issue->second)};
      csv::write_row(out, row);
    }
  }
}

std::uint64_t dataset_fingerprint(std::span<const ClientHistory> dataset) {
  Fnv1a h;
  for (const auto& c : dataset) {
    h.update(c.client_id);
    h.update_u64(static_cast<std::uint64_t>(label_value(c.label)));
    h.update_u64(static_cast<std::uint64_t>(c.application_date.time_since_epoch().count()));
    h.update_u64(c.transactions.size());
    for (const auto& tx : c.transactions) {
      h.update_u64(static_cast<std::uint64_t>(tx.timestamp.time_since_epoch().count()));
      h.update(to_chars_shortest(tx.amount));
      for (Symbol s : {tx.currency, tx.country, tx.merchant_type, tx.card_type, tx.issuing_branch,
                       tx.card_id}) {
        h.update(s.str());
        h.update_u64(0);
      }
      h.update_u64(tx.n_opened_debit_cards);
      h.update_u64(tx.n_opened_credit_cards);
    }
  }
  return h.digest();
}

}  // namespace etrnn
