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

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "etrnn/common.hpp"
#include "json.hpp"

namespace etrnn {

/// Interned string handle. Categorical codes repeat millions of times across a
/// dataset, so records carry a 4-byte id into a process-wide append-only pool.
class Symbol {
 public:
  Symbol() = default;
  explicit Symbol(std::string_view text);

  std::string_view str() const;
  std::uint32_t id() const { return id_; }
  bool empty() const { return id_ == 0; }

  friend bool operator==(Symbol a, Symbol b) { return a.id_ == b.id_; }
  friend bool operator<(Symbol a, Symbol b) { return a.id_ < b.id_; }

 private:
  std::uint32_t id_ = 0;
};

struct TransactionRecord {
  double amount = 0.0;
  Timestamp timestamp{};
  Symbol currency;
  Symbol country;
  Symbol merchant_type;
  Symbol card_type;
  Symbol issuing_branch;
  Symbol card_id;
  std::uint16_t n_opened_debit_cards = 0;
  std::uint16_t n_opened_credit_cards = 0;
};

enum class Label : std::int8_t { non_default = 0, defaulted = 1, unknown = -1 };

inline int label_value(Label l) { return static_cast<int>(l); }

struct ClientHistory {
  std::string client_id;
  std::vector<TransactionRecord> transactions;  // ascending by timestamp
  CalendarDate application_date{};
  Label label = Label::unknown;
  std::map<Symbol, CalendarDate> card_issue_dates;

  bool is_positive() const { return label == Label::defaulted; }

  /// Throws DataError if ordering or the pre-application constraint is violated.
  void validate() const;
};

// Categorical tracks fed to the embedding layers, in model order. Hour, weekday
// and month are derived from the transaction timestamp (UTC).
enum class CategoricalField : int {
  currency,
  country,
  hour,
  weekday,
  month,
  merchant_type,
  card_type,
  issuing_branch,
  n_opened_debit_cards,
  n_opened_credit_cards,
};

inline constexpr int kNumCategoricalFields = 10;

inline constexpr std::array<std::string_view, kNumCategoricalFields> kCategoricalFieldNames = {
    "currency",     "country",   "hour",           "weekday",
    "month",        "merchant_type", "card_type",  "issuing_branch",
    "n_opened_debit_cards", "n_opened_credit_cards"};

/// Code string of one categorical track for a transaction.
std::string categorical_code(const TransactionRecord& tx, CategoricalField field);

inline constexpr std::string_view kScalarAmount = "log_amount";
inline constexpr std::string_view kScalarDaysSincePrev = "days_since_prev";
inline constexpr std::string_view kScalarDaysSinceIssue = "days_since_issue";

/// Signed log compression of transaction amounts.
inline double compress_amount(double amount) {
  return amount < 0 ? -std::log1p(-amount) : std::log1p(amount);
}

struct CategoricalVocabulary {
  std::string name;
  std::vector<std::string> codes;  // codes[i] owns index i + 1
  std::unordered_map<std::string, std::int32_t> index;
  int embedding_dim = 1;

  int cardinality() const { return static_cast<int>(codes.size()) + 1; }

  /// Index of `code`, or 0 for out-of-vocabulary values.
  std::int32_t lookup(const std::string& code) const {
    auto it = index.find(code);
    return it == index.end() ? 0 : it->second;
  }

  /// Appends `code` if unseen; returns its index.
  std::int32_t add(const std::string& code);
};

struct SchemaSpec {
  std::vector<CategoricalVocabulary> categorical;
  std::vector<std::string> scalar_names;
  int max_sequence_length = 800;

  int embedding_width() const;
  int input_width() const { return embedding_width() + static_cast<int>(scalar_names.size()); }
  bool has_days_since_issue() const;

  /// Canonical JSON form; keys are emitted in sorted order so the bytes are stable.
  nlohmann::json to_json() const;
  static SchemaSpec from_json(const nlohmann::json& doc);

  friend bool operator==(const SchemaSpec& a, const SchemaSpec& b);
};

/// Embedding width per categorical field: min(cap, ceil(cardinality / 2)),
/// unless an explicit per-field override is configured.
struct EmbeddingRule {
  int cap = 16;
  std::map<std::string, int, std::less<>> overrides;

  int dim(std::string_view field, int cardinality) const;
};

struct EncodingOptions {
  int max_sequence_length = 800;
  bool include_days_since_issue = false;
};

SchemaSpec build_vocabularies(std::span<const ClientHistory> dataset, const EmbeddingRule& rule = {},
                              const EncodingOptions& options = {});
SchemaSpec build_vocabularies(std::span<const ClientHistory> dataset,
                              std::span<const std::size_t> subset, const EmbeddingRule& rule = {},
                              const EncodingOptions& options = {});

/// Fixed-length encoding of one client. Real data occupies the last
/// `valid_length` columns; the prefix is padding (index 0, scalar 0.0).
struct EncodedSequence {
  using IndexTracks = Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ScalarTracks = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  IndexTracks indices;   // categorical fields x L
  ScalarTracks scalars;  // scalar tracks x L
  int valid_length = 0;
  int raw_transaction_count = 0;

  int length() const { return static_cast<int>(indices.cols()); }
  int padding() const { return length() - valid_length; }
};

EncodedSequence derive_and_encode(const ClientHistory& client, const SchemaSpec& schema);

/// Returns a copy with `extra` more padding columns prepended.
EncodedSequence extend_padding(const EncodedSequence& seq, int extra);

struct SplitResult {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::optional<std::string> warning;
};

/// Out-of-time split: application_date < boundary goes to train.
SplitResult out_of_time_split(std::span<const ClientHistory> dataset, CalendarDate boundary);

struct SamplingPool {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

/// All positives plus min(ratio * P, N) negatives drawn without replacement.
SamplingPool build_negative_pool(std::span<const ClientHistory> dataset,
                                 std::span<const std::size_t> train, int ratio,
                                 std::uint64_t seed);

/// Balanced epoch: every positive plus an equal number of pool negatives, shuffled.
std::vector<std::size_t> epoch_sample(const SamplingPool& pool, int epoch, std::uint64_t seed);

/// Header name for each logical column. Unmapped columns use their logical name.
struct ColumnMapping {
  std::map<std::string, std::string, std::less<>> rename;

  std::string header_for(std::string_view logical) const;
};

inline constexpr std::array<std::string_view, 13> kRequiredColumns = {
    "client_id",     "label",     "application_date",     "card_id",
    "timestamp",     "amount",    "currency",             "country",
    "merchant_type", "card_type", "issuing_branch",       "n_opened_debit_cards",
    "n_opened_credit_cards"};

/// Optional column: card issue date, used for days_since_issue.
inline constexpr std::string_view kCardIssueDateColumn = "card_issue_date";

std::vector<ClientHistory> read_transactions(std::istream& in, const ColumnMapping& mapping = {});
std::vector<ClientHistory> ingest_csv(const std::filesystem::path& path,
                                      const ColumnMapping& mapping = {});

/// Writes the ingestion format. Clients without transactions are written as a
/// single row with empty transaction fields.
void write_transactions(std::ostream& out, std::span<const ClientHistory> dataset);

/// Order-sensitive hash over client ids, labels, dates and transactions.
std::uint64_t dataset_fingerprint(std::span<const ClientHistory> dataset);

}  // namespace etrnn
