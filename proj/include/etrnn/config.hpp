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
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "etrnn/experiments.hpp"

namespace etrnn {

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;
  std::string_view doc;
};

/// Every documented key with its default, in display order.
const std::vector<ConfigKey>& config_keys();

/// Flat key = value configuration. Keys carry a section prefix (gen., data.,
/// model., train., eval.) except the global `seed`. Unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  /// Throws UsageError for unknown keys, listing the valid ones.
  void set(std::string_view key, std::string_view value);
  /// Parses "key=value" as given to --set.
  void set_assignment(std::string_view assignment);
  /// Reads a config file: one assignment per line, '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  void load(std::istream& in, std::string_view origin);

  const std::string& get(std::string_view key) const;
  std::string get_string(std::string_view key) const { return get(key); }
  int get_int(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<int> get_int_list(std::string_view key) const;
  std::vector<double> get_double_list(std::string_view key) const;
  std::vector<std::string> get_list(std::string_view key) const;

  /// All keys in sorted order, "key = value" per line. Loading this text back
  /// reproduces the configuration.
  std::string resolved_text() const;
  std::uint64_t hash() const;

  GenConfig gen_config() const;
  ModelConfig model_config() const;
  TrainConfig train_config() const;
  EmbeddingRule embedding_rule() const;
  EncodingOptions encoding_options() const;
  BaselineOptions baseline_options() const;
  RnnSetup rnn_setup() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace etrnn
