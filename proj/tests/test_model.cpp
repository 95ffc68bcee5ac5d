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


#include <random>

#include "doctest.h"
#include "etrnn/model.hpp"
#include "etrnn/synth.hpp"
#include "etrnn/training.hpp"
#include "support.hpp"

namespace etrnn {
namespace {

using test::gru_row;
using test::logistic;

struct Fixture {
  GeneratedData data;
  SchemaSpec schema;
  std::vector<EncodedSequence> encoded;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    GenConfig g;
    g.n_clients = 40;
    g.tx_min = 1;
    g.tx_max = 30;
    g.seed = 11;
    g.base_default_rate = 0.3;
    out.data = generate_dataset(g);
    EncodingOptions opt;
    opt.max_sequence_length = 12;
    EmbeddingRule rule;
    rule.cap = 3;
    out.schema = build_vocabularies(out.data.clients, rule, opt);
    for (const auto& c : out.data.clients) out.encoded.push_back(derive_and_encode(c, out.schema));
    return out;
  }();
  return f;
}

std::vector<const EncodedSequence*> pointers(const std::vector<EncodedSequence>& v, std::size_t n) {
  std::vector<const EncodedSequence*> out;
  for (std::size_t i = 0; i < n && i < v.size(); ++i) out.push_back(&v[i]);
  return out;
}

// Unbatched reference: walks one sequence position by position with plain loops.
double oracle_score(const EtRnnModel& m, const EncodedSequence& s) {
  const auto& p = m.parameters();
  const int H = m.config().hidden_size;
  std::vector<std::vector<double>> inputs;
  for (int t = s.padding(); t < s.length(); ++t) {
    std::vector<double> x;
    for (std::size_t f = 0; f < p.embeddings.size(); ++f) {
      const auto& row = p.embeddings[f].value.row(s.indices(static_cast<Eigen::Index>(f), t));
      x.insert(x.end(), row.data(), row.data() + row.size());
    }
    for (Eigen::Index k = 0; k < s.scalars.rows(); ++k) x.push_back(s.scalars(k, t));
    inputs.push_back(std::move(x));
  }
  std::vector<double> rep;
  for (int d = 0; d < m.config().directions(); ++d) {
    std::vector<double> h(H, 0.0);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const auto& x = d == 0 ? inputs[k] : inputs[inputs.size() - 1 - k];
      h = gru_row(x, h, p.gru[d]);
    }
    rep.insert(rep.end(), h.begin(), h.end());
  }
  double logit = p.classifier_bias.value(0, 0);
  for (std::size_t k = 0; k < rep.size(); ++k) logit += rep[k] * p.classifier_weights.value(k, 0);
  return logistic(logit);
}

// Combined ranking + BCE loss of a batch; a wide margin keeps every pair active.
double batch_loss(EtRnnModel& m, std::span<const EncodedSequence* const> batch,
                  std::span<const int> y, bool grad) {
  ForwardCache cache;
  const auto scores = m.forward(batch, cache);
  const auto loss = combined_loss(scores, y, 0.9, 0.5);
  if (grad) m.backward(cache, loss->grad);
  return loss->value;
}

ModelConfig small_config(EncoderKind kind, bool bidir, std::uint64_t seed = 3) {
  ModelConfig c;
  c.encoder = kind;
  c.bidirectional = bidir;
  c.hidden_size = 5;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("initialization") {
  const auto& f = fixture();
  const ModelConfig c = small_config(EncoderKind::gru, true);
  const ModelParameters a = init_parameters(f.schema, c);
  const ModelParameters b = init_parameters(f.schema, c);
  const auto pa = a.all(), pb = b.all();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) CHECK(pa[k]->value == pb[k]->value);
  for (const auto& e : a.embeddings) CHECK(e.value.row(0).isZero(0.0));
  CHECK(a.classifier_bias.value(0, 0) == 0.0);

  // Hand count: tables, then per direction I x 3H + H x 3H + 3H, then the classifier.
  std::size_t tables = 0;
  for (const auto& v : f.schema.categorical) tables += v.cardinality() * v.embedding_dim;
  const std::size_t I = f.schema.input_width(), H = 5;
  const std::size_t count = tables + 2 * (I * 3 * H + H * 3 * H + 3 * H) + 2 * H + 1;
  CHECK(a.scalar_count() == count);
  CHECK(expected_parameter_count(f.schema, c) == count);

  const ModelConfig lstm = small_config(EncoderKind::lstm, false);
  CHECK(init_parameters(f.schema, lstm).scalar_count() == tables + (I * 4 * H + H * 4 * H + 4 * H) + H + 1);

  const ModelParameters other = init_parameters(f.schema, small_config(EncoderKind::gru, true, 4));
  CHECK(other.gru[0].input_weights.value != a.gru[0].input_weights.value);
}

TEST_CASE("model config round trip") {
  const ModelConfig c = small_config(EncoderKind::lstm, true, 77);
  CHECK(ModelConfig::from_json(c.to_json()) == c);
  CHECK_THROWS_AS(encoder_kind_from_string("rnn"), UsageError);
}

TEST_CASE("zero weights score one half") {
  const auto& f = fixture();
  EtRnnModel m(f.schema, small_config(EncoderKind::gru, false));
  for (Parameter* p : m.parameters().all()) p->value.setZero();
  const auto batch = pointers(f.encoded, 5);
  for (double s : m.predict(batch)) CHECK(s == 0.5);

  EncodedSequence blank = f.encoded[0];
  blank.indices.setZero();
  blank.scalars.setZero();
  blank.valid_length = 0;
  EtRnnModel fresh(f.schema, small_config(EncoderKind::gru, false));
  const EncodedSequence* one[] = {&blank};
  CHECK(fresh.predict(one)[0] == 0.5);
}

TEST_CASE("identical clients score identically") {
  const auto& f = fixture();
  EtRnnModel m(f.schema, small_config(EncoderKind::lstm, true));
  const EncodedSequence* batch[] = {&f.encoded[2], &f.encoded[7], &f.encoded[2]};
  const auto s = m.predict(batch);
  CHECK(s[0] == s[2]);
  CHECK(s[0] != s[1]);
}

TEST_CASE("batched forward matches the unbatched oracle") {
  const auto& f = fixture();
  for (bool bidir : {false, true}) {
    CAPTURE(bidir);
    EtRnnModel m(f.schema, small_config(EncoderKind::gru, bidir));
    std::mt19937_64 rng(5);
    for (Parameter* p : m.parameters().all()) {
      test::randomize(*p, rng, 0.4);
      if (p->name.starts_with("embedding.")) p->value.row(0).setZero();
    }
    const auto batch = pointers(f.encoded, f.encoded.size());
    const auto scores = m.predict(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      CHECK(scores[i] == doctest::Approx(oracle_score(m, *batch[i])).epsilon(1e-12));
    }
  }
}

TEST_CASE("scores do not depend on batch composition or padding") {
  const auto& f = fixture();
  for (EncoderKind kind : {EncoderKind::gru, EncoderKind::lstm}) {
    EtRnnModel m(f.schema, small_config(kind, true));
    const auto batch = pointers(f.encoded, f.encoded.size());
    const auto together = m.predict(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const EncodedSequence* one[] = {batch[i]};
      CHECK(m.predict(one)[0] == together[i]);
      const EncodedSequence wide = extend_padding(*batch[i], 9);
      const EncodedSequence* padded[] = {&wide};
      CHECK(m.predict(padded)[0] == together[i]);
    }
  }
}

TEST_CASE("zero score gradients leave parameter gradients untouched") {
  const auto& f = fixture();
  EtRnnModel m(f.schema, small_config(EncoderKind::gru, true));
  const auto batch = pointers(f.encoded, 6);
  ForwardCache cache;
  m.forward(batch, cache);
  m.backward(cache, std::vector<double>(6, 0.0));
  for (const Parameter* p : m.parameters().all()) CHECK(p->grad.isZero(0.0));
  CHECK_THROWS_AS(m.backward(cache, std::vector<double>(5, 0.0)), ShapeError);
}

TEST_CASE("full model gradient check") {
  const auto& f = fixture();
  // Two positives and two negatives of mixed lengths.
  std::vector<const EncodedSequence*> batch;
  std::vector<int> y;
  for (std::size_t i = 0; i < f.encoded.size() && batch.size() < 4; ++i) {
    const int label = label_value(f.data.clients[i].label);
    if (std::count(y.begin(), y.end(), label) < 2) {
      batch.push_back(&f.encoded[i]);
      y.push_back(label);
    }
  }
  REQUIRE(batch.size() == 4);
  for (EncoderKind kind : {EncoderKind::gru, EncoderKind::lstm}) {
    for (bool bidir : {false, true}) {
      CAPTURE(to_string(kind));
      CAPTURE(bidir);
      EtRnnModel m(f.schema, small_config(kind, bidir));
      auto params = m.parameters().all();
      auto loss = [&](bool grad) { return batch_loss(m, batch, y, grad); };
      GradCheckOptions opt;
      opt.tolerance = 1e-4;
      // Loss roundoff is ~1e-14 here; a wider step keeps it below the tolerance.
      opt.step = 1e-4;
      const GradCheckReport r = finite_difference_check(params, loss, opt);
      CHECK_MESSAGE(r.passed, r.worst_coordinate << " rel " << r.max_relative_error << " abs " << r.max_abs_error);
    }
  }
}

TEST_CASE("padding prefix leaves gradients unchanged") {
  const auto& f = fixture();
  std::vector<EncodedSequence> wide;
  for (int i = 0; i < 4; ++i) wide.push_back(extend_padding(f.encoded[i], 5));
  const auto narrow = pointers(f.encoded, 4);
  const auto padded = pointers(wide, 4);
  const int y[] = {1, 0, 1, 0};
  EtRnnModel a(f.schema, small_config(EncoderKind::gru, true));
  EtRnnModel b = a;
  const double la = batch_loss(a, narrow, y, true);
  const double lb = batch_loss(b, padded, y, true);
  CHECK(la == lb);
  const auto pa = a.parameters().all(), pb = b.parameters().all();
  for (std::size_t k = 0; k < pa.size(); ++k) CHECK(pa[k]->grad == pb[k]->grad);
}

TEST_CASE("malformed batches are rejected") {
  const auto& f = fixture();
  EtRnnModel m(f.schema, small_config(EncoderKind::gru, false));
  const EncodedSequence wide = extend_padding(f.encoded[0], 1);
  const EncodedSequence* mixed[] = {&f.encoded[1], &wide};
  CHECK_THROWS_AS(m.predict(mixed), ShapeError);
  EncodedSequence bad = f.encoded[0];
  bad.indices(0, bad.length() - 1) = 10000;
  const EncodedSequence* one[] = {&bad};
  CHECK_THROWS_AS(m.predict(one), std::out_of_range);
}

}  // namespace etrnn
