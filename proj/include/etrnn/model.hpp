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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "etrnn/numeric.hpp"
#include "etrnn/transactions.hpp"
#include "json.hpp"

namespace etrnn {

enum class EncoderKind { gru, lstm };

std::string to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(std::string_view name);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::gru;
  bool bidirectional = false;
  int hidden_size = 64;
  std::uint64_t seed = 0;

  int directions() const { return bidirectional ? 2 : 1; }
  int representation_width() const { return directions() * hidden_size; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelParameters {
  std::vector<Parameter> embeddings;  // one table per categorical field, row 0 is padding
  std::vector<GruParameters> gru;     // one per direction when encoder == gru
  std::vector<LstmParameters> lstm;   // one per direction when encoder == lstm
  Parameter classifier_weights;       // directions*H x 1
  Parameter classifier_bias;          // 1 x 1

  /// Fixed traversal order: embeddings, cells (forward then backward), classifier.
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t scalar_count() const;
};

/// Closed-form parameter count for a schema/config pair.
std::size_t expected_parameter_count(const SchemaSpec& schema, const ModelConfig& config);

/// Glorot-uniform weights, zero biases, zero padding rows. Deterministic per seed.
ModelParameters init_parameters(const SchemaSpec& schema, const ModelConfig& config);

struct ForwardOptions {
  double embedding_dropout = 0.0;  // inverted dropout on embedding outputs; 0 disables
  std::uint64_t dropout_seed = 0;
};

/// Activations kept by a training forward pass for the matching backward pass.
struct ForwardCache {
  struct Step {
    int active = 0;  // rows (in length-sorted order) that hold real data at this step
    std::vector<GruStepCache> gru;    // per direction
    std::vector<LstmStepCache> lstm;  // per direction
    Matrix dropout_scale;             // active x embedding width, empty when unused
  };

  bool valid = false;
  int length = 0;
  int first_step = 0;
  std::vector<std::size_t> order;      // sorted row -> batch position
  std::vector<Step> steps;             // indexed by t - first_step
  std::vector<std::vector<std::int32_t>> step_indices;  // per step: active x fields, flattened
  Matrix representation;               // batch x directions*H, sorted order
  std::vector<double> scores;          // sorted order
};

/// Embeddings -> recurrent encoder -> affine + sigmoid scorer over padded batches.
///
/// Padding positions are masked: the recurrent state passes through them
/// unchanged, so a sequence's score is the same for any padding prefix length.
class EtRnnModel {
 public:
  EtRnnModel(SchemaSpec schema, ModelConfig config);
  EtRnnModel(SchemaSpec schema, ModelConfig config, ModelParameters params);

  const SchemaSpec& schema() const { return schema_; }
  const ModelConfig& config() const { return config_; }
  ModelParameters& parameters() { return params_; }
  const ModelParameters& parameters() const { return params_; }

  /// Inference without caching; safe to call concurrently on a frozen model.
  std::vector<double> predict(std::span<const EncodedSequence* const> batch) const;
  std::vector<double> predict(std::span<const EncodedSequence> batch) const;

  std::vector<double> forward(std::span<const EncodedSequence* const> batch, ForwardCache& cache,
                              const ForwardOptions& options = {}) const;

  /// Backpropagation through time. `score_grads[i]` is dLoss/dscore for batch
  /// row i. Accumulates into parameter gradients; padding rows stay zero.
  void backward(const ForwardCache& cache, std::span<const double> score_grads);

 private:
  std::vector<double> run(std::span<const EncodedSequence* const> batch, ForwardCache* cache,
                          const ForwardOptions& options) const;
  void validate_batch(std::span<const EncodedSequence* const> batch) const;

  SchemaSpec schema_;
  ModelConfig config_;
  ModelParameters params_;
  std::vector<int> field_offsets_;
};

/// Scores strictly inside (0, 1): sigmoid clamped away from the endpoints.
inline constexpr double kScoreEpsilon = 1e-15;

}  // namespace etrnn
