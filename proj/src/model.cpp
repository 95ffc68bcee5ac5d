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

#include "etrnn/model.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace etrnn {
namespace {

int gate_count(EncoderKind kind) { return kind == EncoderKind::gru ? 3 : 4; }

void glorot_uniform(Parameter& p, double fan_in, double fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = u(rng);
}

}  // namespace

std::string to_string(EncoderKind kind) { return kind == EncoderKind::gru ? "gru" : "lstm"; }

EncoderKind encoder_kind_from_string(std::string_view name) {
  if (name == "gru") return EncoderKind::gru;
  if (name == "lstm") return EncoderKind::lstm;
  throw UsageError("unknown encoder kind '" + std::string(name) + "' (expected gru or lstm)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"encoder", to_string(encoder)},
          {"bidirectional", bidirectional},
          {"hidden_size", hidden_size},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  ModelConfig c;
  try {
    c.encoder = encoder_kind_from_string(doc.at("encoder").get<std::string>());
    c.bidirectional = doc.at("bidirectional").get<bool>();
    c.hidden_size = doc.at("hidden_size").get<int>();
    c.seed = doc.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model config: ") + e.what());
  }
  if (c.hidden_size < 1) throw DataError("model config: hidden_size < 1");
  return c;
}

std::vector<Parameter*> ModelParameters::all() {
  std::vector<Parameter*> out;
  for (auto& e : embeddings) out.push_back(&e);
  for (auto& cell : gru) {
    for (Parameter* p : cell.parameters()) out.push_back(p);
  }
  for (auto& cell : lstm) {
    for (Parameter* p : cell.parameters()) out.push_back(p);
  }
  out.push_back(&classifier_weights);
  out.push_back(&classifier_bias);
  return out;
}

std::vector<const Parameter*> ModelParameters::all() const {
  auto mutable_view = const_cast<ModelParameters*>(this)->all();
  return {mutable_view.begin(), mutable_view.end()};
}

std::size_t ModelParameters::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter* p : all()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

std::size_t expected_parameter_count(const SchemaSpec& schema, const ModelConfig& config) {
  std::size_t n = 0;
  for (const auto& f : schema.categorical) {
    n += static_cast<std::size_t>(f.cardinality()) * static_cast<std::size_t>(f.embedding_dim);
  }
  const std::size_t in = static_cast<std::size_t>(schema.input_width());
  const std::size_t h = static_cast<std::size_t>(config.hidden_size);
  const std::size_t gates = static_cast<std::size_t>(gate_count(config.encoder)) * h;
  n += static_cast<std::size_t>(config.directions()) * (in * gates + h * gates + gates);
  n += static_cast<std::size_t>(config.representation_width()) + 1;
  return n;
}

ModelParameters init_parameters(const SchemaSpec& schema, const ModelConfig& config) {
  if (config.hidden_size < 1) throw UsageError("hidden_size must be at least 1");
  std::mt19937_64 rng(config.seed);
  ModelParameters p;
  for (const auto& f : schema.categorical) {
    Parameter table("embedding." + f.name, f.cardinality(), f.embedding_dim);
    glorot_uniform(table, f.cardinality(), f.embedding_dim, rng);
    table.value.row(0).setZero();
    p.embeddings.push_back(std::move(table));
  }
  const int in = schema.input_width();
  const int h = config.hidden_size;
  const int gates = gate_count(config.encoder) * h;
  for (int d = 0; d < config.directions(); ++d) {
    const std::string prefix = d == 0 ? "encoder.forward" : "encoder.backward";
    if (config.encoder == EncoderKind::gru) {
      GruParameters cell(prefix, in, h);
      glorot_uniform(cell.input_weights, in, gates, rng);
      glorot_uniform(cell.recurrent_weights, h, gates, rng);
      p.gru.push_back(std::move(cell));
    } else {
      LstmParameters cell(prefix, in, h);
      glorot_uniform(cell.input_weights, in, gates, rng);
      glorot_uniform(cell.recurrent_weights, h, gates, rng);
      p.lstm.push_back(std::move(cell));
    }
  }
  p.classifier_weights = Parameter("classifier.W", config.representation_width(), 1);
  glorot_uniform(p.classifier_weights, config.representation_width(), 1, rng);
  p.classifier_bias = Parameter("classifier.b", 1, 1);
  return p;
}

EtRnnModel::EtRnnModel(SchemaSpec schema, ModelConfig config)
    : EtRnnModel(schema, config, init_parameters(schema, config)) {}

EtRnnModel::EtRnnModel(SchemaSpec schema, ModelConfig config, ModelParameters params)
    : schema_(std::move(schema)), config_(config), params_(std::move(params)) {
  int offset = 0;
  for (const auto& f : schema_.categorical) {
    field_offsets_.push_back(offset);
    offset += f.embedding_dim;
  }
  const std::size_t dirs = static_cast<std::size_t>(config_.directions());
  const bool cells_ok = config_.encoder == EncoderKind::gru
                            ? params_.gru.size() == dirs && params_.lstm.empty()
                            : params_.lstm.size() == dirs && params_.gru.empty();
  if (params_.embeddings.size() != schema_.categorical.size() || !cells_ok ||
      params_.scalar_count() != expected_parameter_count(schema_, config_)) {
    throw ShapeError("model parameters do not match the schema and model config");
  }
  for (std::size_t f = 0; f < schema_.categorical.size(); ++f) {
    const auto& e = params_.embeddings[f].value;
    if (e.rows() != schema_.categorical[f].cardinality() ||
        e.cols() != schema_.categorical[f].embedding_dim) {
      throw ShapeError("embedding table " + params_.embeddings[f].name +
                       " does not match schema field " + schema_.categorical[f].name);
    }
  }
  const int in = schema_.input_width();
  for (const auto& c : params_.gru) {
    if (c.input_size() != in || c.hidden_size() != config_.hidden_size) {
      throw ShapeError("GRU cell shape does not match the model config");
    }
  }
  for (const auto& c : params_.lstm) {
    if (c.input_size() != in || c.hidden_size() != config_.hidden_size) {
      throw ShapeError("LSTM cell shape does not match the model config");
    }
  }
  if (params_.classifier_weights.value.rows() != config_.representation_width()) {
    throw ShapeError("classifier width does not match the model config");
  }
}

void EtRnnModel::validate_batch(std::span<const EncodedSequence* const> batch) const {
  if (batch.empty()) return;
  const int length = batch.front()->length();
  for (const EncodedSequence* s : batch) {
    if (s->length() != length) throw ShapeError("batch sequences differ in length");
    if (s->indices.rows() != static_cast<Eigen::Index>(schema_.categorical.size()) ||
        s->scalars.rows() != static_cast<Eigen::Index>(schema_.scalar_names.size())) {
      throw ShapeError("encoded sequence tracks do not match the model schema");
    }
    if (s->valid_length < 0 || s->valid_length > length) {
      throw ShapeError("encoded sequence valid_length out of range");
    }
    for (std::size_t f = 0; f < schema_.categorical.size(); ++f) {
      const int card = schema_.categorical[f].cardinality();
      auto row = s->indices.row(static_cast<Eigen::Index>(f));
      if ((row < 0).any() || (row >= card).any()) {
        throw std::out_of_range("categorical index outside field " + schema_.categorical[f].name);
      }
    }
  }
}

std::vector<double> EtRnnModel::predict(std::span<const EncodedSequence* const> batch) const {
  return run(batch, nullptr, {});
}

std::vector<double> EtRnnModel::predict(std::span<const EncodedSequence> batch) const {
  std::vector<const EncodedSequence*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return predict(ptrs);
}

std::vector<double> EtRnnModel::forward(std::span<const EncodedSequence* const> batch,
                                        ForwardCache& cache, const ForwardOptions& options) const {
  return run(batch, &cache, options);
}

std::vector<double> EtRnnModel::run(std::span<const EncodedSequence* const> batch,
                                    ForwardCache* cache, const ForwardOptions& options) const {
  validate_batch(batch);
  if (cache) *cache = ForwardCache{};
  const auto batch_size = static_cast<Eigen::Index>(batch.size());
  if (batch_size == 0) return {};
  if (options.embedding_dropout < 0.0 || options.embedding_dropout >= 1.0) {
    throw UsageError("embedding dropout probability must be in [0, 1)");
  }

  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return batch[a]->valid_length > batch[b]->valid_length;
  });

  const int length = batch.front()->length();
  const int longest = batch[order.front()]->valid_length;
  const int first_step = length - longest;
  const int hidden = config_.hidden_size;
  const int fields = static_cast<int>(schema_.categorical.size());
  const int emb_width = schema_.embedding_width();
  const int scalars = static_cast<int>(schema_.scalar_names.size());
  const int in = schema_.input_width();

  // active[t - first_step]: rows (sorted order) holding real data at step t.
  std::vector<int> active(static_cast<std::size_t>(longest));
  {
    int n = 0;
    for (int t = first_step; t < length; ++t) {
      while (n < batch_size && batch[order[n]]->valid_length >= length - t) ++n;
      active[t - first_step] = n;
    }
  }

  const bool dropout = cache && options.embedding_dropout > 0.0;
  if (cache) {
    cache->length = length;
    cache->first_step = first_step;
    cache->order = order;
    cache->steps.resize(static_cast<std::size_t>(longest));
    cache->step_indices.resize(static_cast<std::size_t>(longest));
  }

  auto make_input = [&](int t, int n) {
    Matrix x(n, in);
    for (int j = 0; j < n; ++j) {
      const EncodedSequence& s = *batch[order[j]];
      for (int f = 0; f < fields; ++f) {
        x.row(j).segment(field_offsets_[f], schema_.categorical[f].embedding_dim) =
            params_.embeddings[f].value.row(s.indices(f, t));
      }
      for (int k = 0; k < scalars; ++k) x(j, emb_width + k) = s.scalars(k, t);
    }
    if (cache) {
      auto& step = cache->steps[t - first_step];
      if (dropout) {
        if (step.dropout_scale.size() == 0) {
          std::mt19937_64 rng(derive_seed(options.dropout_seed, static_cast<std::uint64_t>(t)));
          std::bernoulli_distribution keep(1.0 - options.embedding_dropout);
          const double scale = 1.0 / (1.0 - options.embedding_dropout);
          step.dropout_scale.resize(n, emb_width);
          for (Eigen::Index i = 0; i < step.dropout_scale.size(); ++i) {
            step.dropout_scale.data()[i] = keep(rng) ? scale : 0.0;
          }
        }
        x.leftCols(emb_width).array() *= step.dropout_scale.array();
      }
      auto& idx = cache->step_indices[t - first_step];
      if (idx.empty()) {
        idx.resize(static_cast<std::size_t>(n) * fields);
        for (int j = 0; j < n; ++j) {
          for (int f = 0; f < fields; ++f) idx[j * fields + f] = batch[order[j]]->indices(f, t);
        }
      }
    }
    return x;
  };

  Matrix representation(batch_size, config_.representation_width());
  for (int d = 0; d < config_.directions(); ++d) {
    Matrix h = Matrix::Zero(batch_size, hidden);
    Matrix c = Matrix::Zero(batch_size, hidden);
    for (int s = 0; s < longest; ++s) {
      const int t = d == 0 ? first_step + s : length - 1 - s;
      const int n = active[t - first_step];
      Matrix x = make_input(t, n);
      ForwardCache::Step* step = cache ? &cache->steps[t - first_step] : nullptr;
      if (step) step->active = n;
      if (config_.encoder == EncoderKind::gru) {
        GruStepCache* sc = nullptr;
        if (step) {
          step->gru.resize(static_cast<std::size_t>(config_.directions()));
          sc = &step->gru[d];
        }
        h.topRows(n) = gru_cell(x, h.topRows(n), params_.gru[d], sc);
      } else {
        LstmStepCache* sc = nullptr;
        if (step) {
          step->lstm.resize(static_cast<std::size_t>(config_.directions()));
          sc = &step->lstm[d];
        }
        LstmState next = lstm_cell(x, h.topRows(n), c.topRows(n), params_.lstm[d], sc);
        h.topRows(n) = next.h;
        c.topRows(n) = next.c;
      }
    }
    representation.middleCols(d * hidden, hidden) = h;
  }

  Matrix logits = Matrix::Constant(batch_size, 1, params_.classifier_bias.value(0, 0));
  add_product(logits, representation, params_.classifier_weights.value);

  std::vector<double> sorted_scores(batch.size());
  std::vector<double> scores(batch.size());
  for (Eigen::Index j = 0; j < batch_size; ++j) {
    const double s = std::clamp(sigmoid(logits(j, 0)), kScoreEpsilon, 1.0 - kScoreEpsilon);
    sorted_scores[j] = s;
    scores[order[j]] = s;
  }
  if (cache) {
    cache->representation = std::move(representation);
    cache->scores = std::move(sorted_scores);
    cache->valid = true;
  }
  return scores;
}

void EtRnnModel::backward(const ForwardCache& cache, std::span<const double> score_grads) {
  if (!cache.valid) throw std::logic_error("backward called without a cached forward pass");
  const auto batch_size = static_cast<Eigen::Index>(cache.order.size());
  if (score_grads.size() != cache.order.size()) {
    throw ShapeError("backward: expected " + std::to_string(cache.order.size()) +
                     " score gradients, got " + std::to_string(score_grads.size()));
  }
  const int hidden = config_.hidden_size;
  const int fields = static_cast<int>(schema_.categorical.size());
  const int emb_width = schema_.embedding_width();
  const int steps = static_cast<int>(cache.steps.size());

  Matrix dlogit(batch_size, 1);
  for (Eigen::Index j = 0; j < batch_size; ++j) {
    const double s = cache.scores[j];
    dlogit(j, 0) = score_grads[cache.order[j]] * s * (1.0 - s);
  }
  add_product_tn(params_.classifier_weights.grad, cache.representation, dlogit);
  for (Eigen::Index j = 0; j < batch_size; ++j) params_.classifier_bias.grad(0, 0) += dlogit(j, 0);
  Matrix drep = Matrix::Zero(batch_size, config_.representation_width());
  add_product_nt(drep, dlogit, params_.classifier_weights.value);

  auto scatter = [&](int s, Matrix& dx) {
    const auto& step = cache.steps[s];
    if (step.dropout_scale.size() != 0) dx.leftCols(emb_width).array() *= step.dropout_scale.array();
    const auto& idx = cache.step_indices[s];
    for (int j = 0; j < step.active; ++j) {
      for (int f = 0; f < fields; ++f) {
        params_.embeddings[f].grad.row(idx[j * fields + f]) +=
            dx.row(j).segment(field_offsets_[f], schema_.categorical[f].embedding_dim);
      }
    }
  };

  for (int d = 0; d < config_.directions(); ++d) {
    Matrix dh = drep.middleCols(d * hidden, hidden);
    Matrix dc = Matrix::Zero(batch_size, hidden);
    // Reverse of the order the direction was run in.
    for (int k = 0; k < steps; ++k) {
      const int s = d == 0 ? steps - 1 - k : k;
      const auto& step = cache.steps[s];
      const int n = step.active;
      CellGradients g;
      if (config_.encoder == EncoderKind::gru) {
        g = gru_cell_backward(step.gru[d], dh.topRows(n), params_.gru[d]);
      } else {
        g = lstm_cell_backward(step.lstm[d], dh.topRows(n), dc.topRows(n), params_.lstm[d]);
        dc.topRows(n) = g.dc_prev;
      }
      dh.topRows(n) = g.dh_prev;
      scatter(s, g.dx);
    }
  }
  for (auto& table : params_.embeddings) table.grad.row(0).setZero();
}

}  // namespace etrnn
