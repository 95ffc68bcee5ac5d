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


#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "etrnn/artifact.hpp"
#include "etrnn/commands.hpp"
#include "etrnn/config.hpp"
#include "etrnn/experiments.hpp"
#include "etrnn/metrics.hpp"
#include "support.hpp"

namespace etrnn {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ETRNN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

CommandContext context(const fs::path& out) {
  CommandContext ctx;
  ctx.out_dir = out;
  ctx.config.set("gen.n_clients", "400");
  ctx.config.set("gen.tx_max", "40");
  ctx.config.set("gen.base_default_rate", "0.2");
  ctx.config.set("model.hidden_size", "4");
  ctx.config.set("data.max_sequence_length", "32");
  ctx.config.set("train.track_validation", "false");
  return ctx;
}

// A generated dataset shared by the command tests.
const fs::path& generated() {
  static const fs::path dir = [] {
    const fs::path d = test::scratch_dir("generated");
    cmd_generate(context(d));
    return d;
  }();
  return dir;
}

struct TinyModel {
  std::vector<ClientHistory> clients;
  SchemaSpec schema;
  std::vector<EncodedSequence> encoded;
};

const TinyModel& tiny() {
  static const TinyModel t = [] {
    TinyModel out;
    GenConfig g;
    g.n_clients = 30;
    g.tx_max = 20;
    out.clients = generate_dataset(g).clients;
    EncodingOptions opt;
    opt.max_sequence_length = 20;
    out.schema = build_vocabularies(out.clients, {}, opt);
    for (const auto& c : out.clients) out.encoded.push_back(derive_and_encode(c, out.schema));
    return out;
  }();
  return t;
}

ModelArtifact tiny_artifact(std::uint64_t seed = 1) {
  ModelConfig m;
  m.hidden_size = 5;
  m.bidirectional = true;
  m.seed = seed;
  return ModelArtifact{EtRnnModel(tiny().schema, m), Provenance{"abc", 42, "def", 3}};
}

}  // namespace

TEST_CASE("config keys") {
  RunConfig c;
  CHECK(c.get_int("train.epochs") == 6);
  CHECK(c.get_int("train.n_ensemble") == 6);
  CHECK(c.get_int("gen.n_clients") == 20000);
  CHECK(c.get_u64("seed") == 20260101);
  CHECK_THROWS_WITH_AS(c.set("train.epoch", "3"), doctest::Contains("train.epochs"), UsageError);
  CHECK_THROWS_AS(c.set_assignment("train.epochs"), UsageError);
  c.set_assignment(" train.epochs = 3 ");
  CHECK(c.get_int("train.epochs") == 3);
  c.set("train.epochs", "three");
  CHECK_THROWS_AS(c.get_int("train.epochs"), UsageError);
  c.set("train.epochs", "3");
  c.set("eval.margins", "0.5, 0.1");
  CHECK(c.get_double_list("eval.margins") == std::vector<double>{0.5, 0.1});
  c.set("model.encoder", "cnn");
  CHECK_THROWS_AS(c.model_config(), UsageError);
}

TEST_CASE("config files and resolved text") {
  RunConfig a;
  std::istringstream file("# sweep\nseed = 7\n\ntrain.margin = 0.01  # narrow\ndata.embedding_overrides = country:4\n");
  a.load(file, "sweep.cfg");
  CHECK(a.get_u64("seed") == 7);
  CHECK(a.embedding_rule().overrides.at("country") == 4);
  RunConfig b;
  std::istringstream resolved(a.resolved_text());
  b.load(resolved, "resolved");
  CHECK(b.resolved_text() == a.resolved_text());
  CHECK(b.hash() == a.hash());
  CHECK(RunConfig().hash() != a.hash());
  std::istringstream bad("seed = 1\nnope = 2\n");
  CHECK_THROWS_WITH_AS(RunConfig().load(bad, "bad.cfg"), doctest::Contains("bad.cfg:2"), UsageError);
}

TEST_CASE("artifact round trip") {
  const ModelArtifact a = tiny_artifact();
  std::stringstream buf;
  save_model(a, buf);
  const ModelArtifact b = load_model(buf);
  CHECK(b.provenance.config_hash == "abc");
  CHECK(b.provenance.member == 3);
  CHECK(b.model.config() == a.model.config());
  CHECK(b.model.schema() == a.model.schema());
  const auto& enc = tiny().encoded;
  std::vector<const EncodedSequence*> batch;
  for (const auto& e : enc) batch.push_back(&e);
  const auto before = a.model.predict(batch), after = b.model.predict(batch);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(std::abs(before[i] - after[i]) <= 1e-6);

  EtRnnModel q = a.model;
  quantize_to_float32(q);
  CHECK(q.predict(batch) == after);
}

TEST_CASE("corrupt artifacts are rejected") {
  std::stringstream buf;
  save_model(tiny_artifact(), buf);
  const std::string bytes = buf.str();
  auto load = [](const std::string& s) {
    std::istringstream in(s);
    return load_model(in, "m.etrnn");
  };
  CHECK_THROWS_WITH_AS(load(bytes.substr(0, bytes.size() - 4)), doctest::Contains("truncated"), DataError);
  CHECK_THROWS_WITH_AS(load(bytes.substr(0, 10)), doctest::Contains("m.etrnn: header"), DataError);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_WITH_AS(load(magic), doctest::Contains("bad magic"), DataError);
  CHECK_THROWS_WITH_AS(load(bytes + "x"), doctest::Contains("trailing"), DataError);
  std::string version = bytes;
  const auto at = version.find("\"format_version\":1");
  REQUIRE(at != std::string::npos);
  version[at + 17] = '9';
  CHECK_THROWS_WITH_AS(load(version), doctest::Contains("version 9"), DataError);
  std::string shape = bytes;
  const auto h = shape.find("\"hidden_size\":5");
  REQUIRE(h != std::string::npos);
  shape[h + 14] = '6';
  CHECK_THROWS_AS(load(shape), DataError);
}

TEST_CASE("ensembles must share a schema") {
  const fs::path dir = test::scratch_dir("mixed");
  save_model(tiny_artifact(1), dir / "member_0.etrnn");
  save_model(tiny_artifact(2), dir / "member_1.etrnn");
  CHECK(load_ensemble(dir).size() == 2);
  GenConfig g;
  g.n_clients = 10;
  g.seed = 99;
  g.n_countries = 3;
  const auto other = generate_dataset(g).clients;
  ModelConfig m;
  m.hidden_size = 5;
  save_model(ModelArtifact{EtRnnModel(build_vocabularies(other), m), {}}, dir / "member_2.etrnn");
  CHECK_THROWS_WITH_AS(load_ensemble(dir), doctest::Contains("schema differs"), DataError);
  CHECK_THROWS_AS(load_ensemble(test::scratch_dir("none")), DataError);
}

TEST_CASE("report formats") {
  EvaluationReport r;
  r.add("benchmark", "gbm", std::nullopt).note = "not implemented";
  auto& row = r.add("benchmark", "a, b", 0.75, 0.01);
  row.meta = {{"n_features", "12"}};
  std::ostringstream csv, table;
  r.write_csv(csv);
  CHECK(csv.str() ==
        "experiment,label,auc,auc_std,metadata,note\n"
        "benchmark,gbm,,,,not implemented\n"
        "benchmark,\"a, b\",0.750000,0.010000,n_features=12,\n");
  r.write_table(table);
  CHECK(table.str().find("0.7500") != std::string::npos);
}

TEST_CASE("auc by transaction count") {
  const auto& t = tiny();
  std::vector<std::size_t> all;
  std::vector<double> scores;
  for (std::size_t i = 0; i < t.clients.size(); ++i) {
    all.push_back(i);
    scores.push_back(std::sin(static_cast<double>(i)));
  }
  std::vector<int> y = labels_of(t.clients, all);
  y[0] = 1 - y[0];  // ensure both classes even in tiny samples
  std::vector<ClientHistory> flipped = t.clients;
  flipped[0].label = y[0] ? Label::defaulted : Label::non_default;
  if (std::count(y.begin(), y.end(), 1) == 0) {
    flipped[1].label = Label::defaulted;
    y[1] = 1;
  }
  const int edges[] = {1, 100000};
  const EvaluationReport c = auc_by_tx_count(scores, flipped, all, edges, CountMode::cumulative);
  REQUIRE(c.rows.size() == 2);
  CHECK(*c.rows[0].auc == roc_auc(scores, y));
  CHECK_FALSE(c.rows[1].auc.has_value());
  CHECK(c.rows[1].note == "no clients");
  const int one[] = {0};
  const EvaluationReport b = auc_by_tx_count(scores, flipped, all, one, CountMode::buckets);
  CHECK(b.rows[0].label == "[0,inf)");
  CHECK(*b.rows[0].auc == roc_auc(scores, y));
}

TEST_CASE("output lock") {
  const fs::path dir = test::scratch_dir("lock");
  {
    OutputLock a(dir);
    CHECK_THROWS_AS(OutputLock{dir}, UsageError);
  }
  CHECK_NOTHROW(OutputLock{dir});
}

TEST_CASE("generate is reproducible") {
  const fs::path again = test::scratch_dir("generated_again");
  cmd_generate(context(again));
  CHECK(slurp(generated() / "dataset.csv") == slurp(again / "dataset.csv"));
  CHECK(slurp(generated() / "ground_truth.csv") == slurp(again / "ground_truth.csv"));
  CHECK(slurp(again / "resolved_config.txt").find("gen.n_clients = 400\n") != std::string::npos);
  CHECK(ingest_csv(again / "dataset.csv").size() == 400);
}

TEST_CASE("train with zero epochs writes the initialization") {
  const fs::path out = test::scratch_dir("train0");
  CommandContext ctx = context(out);
  ctx.config.set("data.path", (generated() / "dataset.csv").string());
  ctx.config.set("train.epochs", "0");
  cmd_train(ctx);
  const auto members = load_ensemble(out);
  REQUIRE(members.size() == 6);
  for (int k = 0; k < 6; ++k) {
    ModelConfig m = ctx.config.model_config();
    m.seed = derive_seed(m.seed, static_cast<std::uint64_t>(k));
    EtRnnModel init(members[k].model.schema(), m);
    quantize_to_float32(init);
    const auto a = init.parameters().all();
    const auto b = members[k].model.parameters().all();
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j]->value == b[j]->value);
    CHECK(members[k].provenance.member == k);
    CHECK(members[k].provenance.config_hash == hex64(ctx.config.hash()));
  }
}

TEST_CASE("train, score and evaluate") {
  const fs::path a = test::scratch_dir("train_a"), b = test::scratch_dir("train_b");
  for (const fs::path& out : {a, b}) {
    CommandContext ctx = context(out);
    ctx.config.set("data.path", (generated() / "dataset.csv").string());
    ctx.config.set("train.epochs", "1");
    ctx.config.set("train.n_ensemble", "2");
    cmd_train(ctx);
  }
  CHECK(slurp(a / "member_0.etrnn") == slurp(b / "member_0.etrnn"));
  CHECK(slurp(a / "member_1.etrnn") == slurp(b / "member_1.etrnn"));
  CHECK(slurp(a / "member_0.etrnn") != slurp(a / "member_1.etrnn"));
  CHECK(fs::exists(a / "schema.json"));
  CHECK(slurp(a / "history_0.csv").starts_with("epoch,loss,valid_auc,lr,skipped_batches\n"));

  // One client in, one row out; a second run writes the same bytes.
  const auto clients = ingest_csv(generated() / "dataset.csv");
  const fs::path one = a / "one.csv";
  {
    std::ofstream f(one);
    write_transactions(f, std::span<const ClientHistory>(clients.data(), 1));
  }
  for (const char* name : {"score_1", "score_2"}) {
    CommandContext ctx = context(test::scratch_dir(name));
    ctx.config.set("data.path", one.string());
    ctx.config.set("model.artifact_dir", a.string());
    cmd_score(ctx);
  }
  const std::string s1 = slurp(fs::temp_directory_path() / "etrnn_test_score_1" / "scores.csv");
  CHECK(s1 == slurp(fs::temp_directory_path() / "etrnn_test_score_2" / "scores.csv"));
  CHECK(s1.starts_with("client_id,score,status\n" + clients[0].client_id + ",0."));
  CHECK(std::count(s1.begin(), s1.end(), '\n') == 2);

  CommandContext ev = context(test::scratch_dir("evaluate"));
  ev.config.set("data.path", (generated() / "dataset.csv").string());
  ev.config.set("model.artifact_dir", a.string());
  ev.config.set("eval.experiments", "benchmark,tx_buckets");
  cmd_evaluate(ev);
  const std::string report = slurp(ev.out_dir / "report.csv");
  CHECK(report.find("benchmark,logistic_woe_aggregates,") != std::string::npos);
  CHECK(report.find("benchmark,gbm,,,,not implemented") != std::string::npos);
  CHECK(report.find("n_features=12") != std::string::npos);
  CHECK(report.find("tx_count_cumulative,>=25,") != std::string::npos);
  CHECK(slurp(ev.out_dir / "tx_count_buckets.csv").starts_with("x,y,std,label\n1,"));
  CHECK(fs::exists(ev.out_dir / "report.txt"));

  ev.config.set("eval.experiments", "benchmark,fig7");
  CHECK_THROWS_WITH_AS(cmd_evaluate(ev), doctest::Contains("valid: benchmark"), UsageError);
}

TEST_CASE("command line exit codes") {
  const fs::path out = test::scratch_dir("exit_codes");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("generate --out " + out.string() + " --set bogus.key=1") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("score --out " + out.string() + " --set data.path=/nonexistent.csv") == 2);
  CHECK(run_cli("generate --out " + out.string() + " --set gen.n_clients=25 --set gen.tx_max=30") == 0);
  CHECK(fs::exists(out / "dataset.csv"));
}

}  // namespace etrnn
