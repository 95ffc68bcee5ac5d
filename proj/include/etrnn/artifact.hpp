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
#include <string>

#include "etrnn/model.hpp"

namespace etrnn {

inline constexpr char kArtifactMagic[8] = {'E', 'T', 'R', 'N', 'N', 'V', '0', '1'};
inline constexpr int kArtifactFormatVersion = 1;

struct Provenance {
  std::string config_hash;       // hex FNV-1a of the resolved config
  std::uint64_t seed = 0;
  std::string data_fingerprint;  // hex FNV-1a of the training dataset
  int member = 0;
};

struct ModelArtifact {
  EtRnnModel model;
  Provenance provenance;
};

/// Layout: 8-byte magic, uint64 little-endian metadata length, UTF-8 JSON
/// metadata (model config, schema, provenance, blob directory), then
/// parameter blobs as little-endian float32, row-major.
void save_model(const ModelArtifact& artifact, std::ostream& out);
void save_model(const ModelArtifact& artifact, const std::filesystem::path& path);

/// Validates magic, version, metadata and every blob's name and shape.
/// Throws DataError naming the offending section.
ModelArtifact load_model(std::istream& in, std::string_view origin = "artifact");
ModelArtifact load_model(const std::filesystem::path& path);

/// Rounds every parameter through float32, as a save/load round trip would.
void quantize_to_float32(EtRnnModel& model);

}  // namespace etrnn
