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


#include <set>
#include <sstream>

#include "doctest.h"
#include "etrnn/csv.hpp"
#include "etrnn/synth.hpp"
#include "etrnn/transactions.hpp"
#include "support.hpp"

namespace etrnn {
namespace {

using test::client_with;
using test::tx_at;

const char* kHeader =
    "client_id,label,application_date,card_id,timestamp,amount,currency,country,merchant_type,"
    "card_type,issuing_branch,n_opened_debit_cards,n_opened_credit_cards\n";

std::vector<ClientHistory> read_text(const std::string& text) {
  std::istringstream in(text);
  return read_transactions(in);
}

// Minimal labeled population: `pos` positives followed by `neg` negatives.
std::vector<ClientHistory> labeled(std::size_t pos, std::size_t neg) {
  std::vector<ClientHistory> out(pos + neg);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].client_id = "c" + std::to_string(i);
    out[i].label = i < pos ? Label::defaulted : Label::non_default;
  }
  return out;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST_CASE("dates and timestamps") {
  CHECK(format_date(parse_date("2019-02-28")) == "2019-02-28");
  CHECK_THROWS_AS(parse_date("2019-02-30"), DataError);
  CHECK_THROWS_AS(parse_date("19-2-3"), DataError);
  CHECK(parse_timestamp("1970-01-02T00:00:00Z").time_since_epoch().count() == 86400);
  CHECK(parse_timestamp("86400") == parse_timestamp("1970-01-02 00:00:00"));
  CHECK(format_date(add_months(parse_date("2019-01-31"), 1)) == "2019-02-28");
  CHECK(format_date(add_months(parse_date("2018-01-01"), 16)) == "2019-05-01");
  CHECK(format_date(add_months(parse_date("2018-03-15"), -3)) == "2017-12-15");
}

TEST_CASE("csv reader handles quoting") {
  std::istringstream in("a,\"b,c\",\"say \"\"hi\"\"\"\r\n\"multi\nline\",,x\n");
  csv::Reader r(in);
  std::vector<std::string> f;
  REQUIRE(r.next(f));
  CHECK(f == std::vector<std::string>{"a", "b,c", "say \"hi\""});
  REQUIRE(r.next(f));
  CHECK(f == std::vector<std::string>{"multi\nline", "", "x"});
  CHECK(r.record_line() == 2);
  CHECK_FALSE(r.next(f));
  CHECK(csv::escape("p,q") == "\"p,q\"");
  CHECK(csv::escape("plain") == "plain");
}

TEST_CASE("ingest sorts each client's transactions") {
  const std::string text = std::string(kHeader) +
                           "c1,0,2019-03-01,k1,2019-02-03T10:00:00,3.5,EUR,DE,5411,VISA,B1,1,0\n"
                           "c1,0,2019-03-01,k1,2019-02-01T10:00:00,1.5,EUR,DE,5411,VISA,B1,1,0\n"
                           "c1,0,2019-03-01,k1,2019-02-02T10:00:00,2.5,EUR,DE,5411,VISA,B1,1,0\n";
  const auto clients = read_text(text);
  REQUIRE(clients.size() == 1);
  const auto& txs = clients[0].transactions;
  REQUIRE(txs.size() == 3);
  CHECK(txs[0].amount == 1.5);
  CHECK(txs[1].amount == 2.5);
  CHECK(txs[2].amount == 3.5);
  CHECK(clients[0].label == Label::non_default);
  CHECK_NOTHROW(clients[0].validate());
}

TEST_CASE("ingest edge cases") {
  CHECK(read_text(kHeader).empty());
  CHECK_THROWS_AS(read_text(""), DataError);
  CHECK_THROWS_AS(read_text("client_id,label\n"), DataError);

  const std::string same_day = std::string(kHeader) +
                               "c1,1,2019-03-01,k1,2019-03-01T00:00:00,3.5,EUR,DE,5411,VISA,B1,1,0\n";
  CHECK_THROWS_WITH_AS(read_text(same_day), doctest::Contains("application date"), DataError);

  const std::string bad_amount = std::string(kHeader) +
                                 "c1,1,2019-03-01,k1,2019-02-01T00:00:00,abc,EUR,DE,5411,VISA,B1,1,0\n";
  CHECK_THROWS_WITH_AS(read_text(bad_amount), doctest::Contains("row 2"), DataError);

  const std::string conflict = std::string(kHeader) +
                               "c1,1,2019-03-01,k1,2019-02-01T00:00:00,1,EUR,DE,5411,VISA,B1,1,0\n"
                               "c1,0,2019-03-01,k1,2019-02-02T00:00:00,1,EUR,DE,5411,VISA,B1,1,0\n";
  CHECK_THROWS_AS(read_text(conflict), DataError);
}

TEST_CASE("ingest honours a column mapping") {
  std::string text = kHeader;
  text.replace(text.find("amount"), 6, "amt");
  text += "c1,1,2019-03-01,k1,2019-02-01T00:00:00,7,EUR,DE,5411,VISA,B1,1,0\n";
  CHECK_THROWS_AS(read_text(text), DataError);
  ColumnMapping m;
  m.rename["amount"] = "amt";
  std::istringstream in(text);
  const auto clients = read_transactions(in, m);
  REQUIRE(clients.size() == 1);
  CHECK(clients[0].transactions[0].amount == 7.0);
}

TEST_CASE("write and read round trip") {
  GenConfig g;
  g.n_clients = 40;
  g.tx_max = 60;
  const auto data = generate_dataset(g);
  std::stringstream buf;
  write_transactions(buf, data.clients);
  const auto back = read_transactions(buf);
  REQUIRE(back.size() == data.clients.size());
  CHECK(dataset_fingerprint(back) == dataset_fingerprint(data.clients));
  CHECK(back[3].card_issue_dates == data.clients[3].card_issue_dates);
}

TEST_CASE("vocabularies and embedding widths") {
  std::vector<ClientHistory> d = {
      client_with("a", Label::defaulted, "2019-03-01",
                  {tx_at("2019-01-01T00:00:00", 1, "M1", "EUR"), tx_at("2019-01-02T00:00:00", 1, "M1", "USD")}),
      client_with("b", Label::non_default, "2019-03-01", {tx_at("2019-01-03T00:00:00", 1, "M2", "EUR")})};
  const SchemaSpec s = build_vocabularies(d);
  REQUIRE(s.categorical.size() == kNumCategoricalFields);
  const auto& cur = s.categorical[static_cast<int>(CategoricalField::currency)];
  CHECK(cur.name == "currency");
  CHECK(cur.cardinality() == 3);
  CHECK(cur.lookup("EUR") >= 1);
  CHECK(cur.lookup("GBP") == 0);
  CHECK(s.scalar_names == std::vector<std::string>{"log_amount", "days_since_prev"});

  EmbeddingRule rule;
  CHECK(rule.dim("x", 2) == 1);
  CHECK(rule.dim("x", 3) == 2);
  CHECK(rule.dim("x", 1000) == 16);
  rule.overrides["x"] = 5;
  CHECK(rule.dim("x", 1000) == 5);
  CHECK(rule.dim("y", 1000) == 16);

  CHECK(SchemaSpec::from_json(s.to_json()) == s);
  CHECK(s.input_width() == s.embedding_width() + 2);
}

TEST_CASE("encoding truncates to the most recent transactions") {
  std::vector<TransactionRecord> txs;
  const auto t0 = parse_timestamp("2018-01-01T00:00:00");
  for (int i = 0; i < 900; ++i) {
    auto tx = tx_at("2018-01-01T00:00:00", i);
    tx.timestamp = t0 + std::chrono::hours(i);
    txs.push_back(tx);
  }
  const auto c = client_with("a", Label::defaulted, "2019-01-01", txs);
  const ClientHistory arr[] = {c};
  const SchemaSpec s = build_vocabularies(arr);
  const EncodedSequence e = derive_and_encode(c, s);
  CHECK(e.length() == 800);
  CHECK(e.valid_length == 800);
  CHECK(e.raw_transaction_count == 900);
  // Column 0 holds transaction 100 (amount 100); its predecessor is dropped.
  CHECK(e.scalars(0, 0) == std::log1p(100.0));
  CHECK(e.scalars(0, 799) == std::log1p(899.0));
  CHECK(e.scalars(1, 0) == 0.0);
  CHECK(e.scalars(1, 1) == doctest::Approx(1.0 / 24.0));
}

TEST_CASE("encoding pads the prefix") {
  const auto one = client_with("a", Label::defaulted, "2019-01-01", {tx_at("2018-06-01T10:00:00", 5.0)});
  const ClientHistory arr1[] = {one};
  const SchemaSpec s = build_vocabularies(arr1);
  const EncodedSequence e = derive_and_encode(one, s);
  CHECK(e.valid_length == 1);
  CHECK(e.padding() == 799);
  CHECK(e.indices.leftCols(799).isZero());
  CHECK(e.scalars.leftCols(799).isZero());
  CHECK((e.indices.col(799) > 0).all());
  CHECK(e.scalars(1, 799) == 0.0);

  const auto two = client_with("b", Label::defaulted, "2019-01-01",
                               {tx_at("2018-06-01T00:00:00", 5.0), tx_at("2018-06-02T12:00:00", 5.0)});
  const EncodedSequence e2 = derive_and_encode(two, s);
  CHECK(e2.scalars(1, 799) == 1.5);

  const EncodedSequence wide = extend_padding(e, 7);
  CHECK(wide.length() == 807);
  CHECK(wide.valid_length == 1);
  CHECK((wide.indices.rightCols(800) == e.indices).all());

  const ClientHistory empty = client_with("c", Label::defaulted, "2019-01-01", {});
  CHECK_THROWS_AS(derive_and_encode(empty, s), DataError);
}

TEST_CASE("days since issue is optional") {
  auto c = client_with("a", Label::defaulted, "2019-01-01", {tx_at("2018-06-11T10:00:00", 5.0)});
  c.card_issue_dates[Symbol("card1")] = parse_date("2018-06-01");
  const ClientHistory arr[] = {c};
  EncodingOptions opt;
  opt.include_days_since_issue = true;
  opt.max_sequence_length = 4;
  const SchemaSpec s = build_vocabularies(arr, {}, opt);
  REQUIRE(s.scalar_names.size() == 3);
  CHECK(s.has_days_since_issue());
  const EncodedSequence e = derive_and_encode(c, s);
  CHECK(e.length() == 4);
  CHECK(e.scalars(2, 3) == 10.0);
}

TEST_CASE("out of time split") {
  std::vector<ClientHistory> d = {client_with("a", Label::defaulted, "2019-01-01", {}),
                                  client_with("b", Label::non_default, "2019-06-01", {}),
                                  client_with("c", Label::non_default, "2019-03-01", {})};
  auto all_train = out_of_time_split(d, parse_date("2020-01-01"));
  CHECK(all_train.train.size() == 3);
  CHECK(all_train.valid.empty());
  CHECK(all_train.warning.has_value());
  auto all_valid = out_of_time_split(d, parse_date("2018-01-01"));
  CHECK(all_valid.train.empty());
  CHECK(all_valid.valid.size() == 3);
  auto mid = out_of_time_split(d, parse_date("2019-03-01"));
  CHECK(mid.train == std::vector<std::size_t>{0});
  CHECK(mid.valid == std::vector<std::size_t>{1, 2});
  CHECK_FALSE(mid.warning.has_value());
}

TEST_CASE("sixteen and four month split of a twenty month span") {
  GenConfig g;
  g.n_clients = 600;
  g.tx_max = 30;
  const auto data = generate_dataset(g);
  const CalendarDate boundary = default_boundary(g);
  CHECK(format_date(boundary) == "2019-05-01");
  const auto split = out_of_time_split(data.clients, boundary);
  CalendarDate train_max = g.start_date, valid_min = g.end_date();
  for (std::size_t i : split.train) train_max = std::max(train_max, data.clients[i].application_date);
  for (std::size_t i : split.valid) valid_min = std::min(valid_min, data.clients[i].application_date);
  CHECK(train_max < boundary);
  CHECK(valid_min >= boundary);
  CHECK(add_months(g.start_date, 16) == boundary);
  CHECK(add_months(boundary, 4) == g.end_date());
  // Uniform application dates: about a fifth of the clients fall in the last four months.
  const double share = static_cast<double>(split.valid.size()) / 600.0;
  CHECK(share == doctest::Approx(120.0 / 608.0).epsilon(0.25));
}

TEST_CASE("negative pool") {
  const auto big = labeled(1000, 100000);
  const auto idx = iota_n(big.size());
  const SamplingPool pool = build_negative_pool(big, idx, 10, 5);
  CHECK(pool.positives.size() == 1000);
  CHECK(pool.negatives.size() == 10000);
  std::set<std::size_t> uniq(pool.negatives.begin(), pool.negatives.end());
  CHECK(uniq.size() == 10000);
  CHECK(*uniq.begin() >= 1000);
  const SamplingPool again = build_negative_pool(big, idx, 10, 5);
  CHECK(again.negatives == pool.negatives);
  const SamplingPool other = build_negative_pool(big, idx, 10, 6);
  CHECK(other.negatives != pool.negatives);

  const auto small = labeled(1000, 5000);
  const SamplingPool clamp = build_negative_pool(small, iota_n(small.size()), 10, 5);
  CHECK(clamp.negatives.size() == 5000);

  const auto none = labeled(0, 10);
  CHECK_THROWS_AS(build_negative_pool(none, iota_n(10), 10, 5), DataError);
}

TEST_CASE("balanced epoch sampling") {
  const auto d = labeled(1000, 20000);
  const SamplingPool pool = build_negative_pool(d, iota_n(d.size()), 10, 1);
  const auto e0 = epoch_sample(pool, 0, 9);
  const auto e1 = epoch_sample(pool, 1, 9);
  CHECK(e0.size() == 2000);
  auto count_pos = [&](const std::vector<std::size_t>& e) {
    return std::count_if(e.begin(), e.end(), [&](std::size_t i) { return d[i].is_positive(); });
  };
  CHECK(count_pos(e0) == 1000);
  CHECK(count_pos(e1) == 1000);
  std::set<std::size_t> n0, n1;
  for (std::size_t i : e0) if (!d[i].is_positive()) n0.insert(i);
  for (std::size_t i : e1) if (!d[i].is_positive()) n1.insert(i);
  CHECK(n0.size() == 1000);
  CHECK(n0 != n1);
  CHECK(epoch_sample(pool, 1, 9) == e1);

  SamplingPool tight;
  tight.positives = {0, 1, 2};
  tight.negatives = {10, 11, 12};
  auto e = epoch_sample(tight, 4, 1);
  std::sort(e.begin(), e.end());
  CHECK(e == std::vector<std::size_t>{0, 1, 2, 10, 11, 12});
}

}  // namespace etrnn
