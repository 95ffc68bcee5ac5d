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

#include "etrnn/artifact.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace etrnn {

namespace {

static_assert(std::endian::native == std::endian::little,
              "artifact I/O assumes a little-endian host");

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

[[noreturn]] void corrupt(std::string_view origin, std::string_view section, const std::string& what) {
  throw DataError(std::string(origin) + ": " + std::string(section) + ": " + what);
}

}  // namespace

void save_model(const ModelArtifact& artifact, std::ostream& out) {
  const EtRnnModel& model = artifact.model;
  nlohmann::json blobs = nlohmann::json::array();
  std::string payload;
  for (const Parameter* p : model.parameters().all()) {
    blobs.push_back({{"name", p->name},
                     {"offset", payload.size()},
                     {"rows", p->value.rows()},
                     {"cols", p->value.cols()}});
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const float f = static_cast<float>(p->value.data()[i]);
      char bytes[4];
      std::memcpy(bytes, &f, 4);
      payload.append(bytes, 4);
    }
  }
  const nlohmann::json meta = {
      {"format_version", kArtifactFormatVersion},
      {"model_config", model.config().to_json()},
      {"schema", model.schema().to_json()},
      {"provenance",
       {{"config_hash", artifact.provenance.config_hash},
        {"seed", artifact.provenance.seed},
        {"data_fingerprint", artifact.provenance.data_fingerprint},
        {"member", artifact.provenance.member}}},
      {"blobs", blobs}};
  const std::string text = meta.dump();
  std::string header(kArtifactMagic, sizeof kArtifactMagic);
  put_u64(header, text.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("failed to write model artifact");
}

void save_model(const ModelArtifact& artifact, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  save_model(artifact, out);
}

ModelArtifact load_model(std::istream& in, std::string_view origin) {
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) corrupt(origin, "header", "file too short");
  if (std::memcmp(bytes.data(), kArtifactMagic, 8) != 0) corrupt(origin, "header", "bad magic");
  const std::uint64_t meta_len = get_u64(bytes.data() + 8);
  if (meta_len > bytes.size() - 16) corrupt(origin, "metadata", "length exceeds file size");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(meta_len));
  } catch (const nlohmann::json::exception& e) {
    corrupt(origin, "metadata", e.what());
  }

  ModelConfig config;
  SchemaSpec schema;
  Provenance prov;
  nlohmann::json blob_dir;
  int version = 0;
  try {
    version = meta.at("format_version").get<int>();
  } catch (const nlohmann::json::exception& e) {
    corrupt(origin, "metadata", e.what());
  }
  if (version != kArtifactFormatVersion) {
    corrupt(origin, "metadata", "unsupported format version " + std::to_string(version));
  }
  try {
    config = ModelConfig::from_json(meta.at("model_config"));
    schema = SchemaSpec::from_json(meta.at("schema"));
    const auto& p = meta.at("provenance");
    prov.config_hash = p.at("config_hash").get<std::string>();
    prov.seed = p.at("seed").get<std::uint64_t>();
    prov.data_fingerprint = p.at("data_fingerprint").get<std::string>();
    prov.member = p.at("member").get<int>();
    blob_dir = meta.at("blobs");
  } catch (const nlohmann::json::exception& e) {
    corrupt(origin, "metadata", e.what());
  } catch (const DataError& e) {
    corrupt(origin, "metadata", e.what());
  } catch (const UsageError& e) {
    corrupt(origin, "metadata", e.what());
  }

  ModelParameters params;
  try {
    params = init_parameters(schema, config);
  } catch (const std::exception& e) {
    corrupt(origin, "metadata", std::string("inconsistent model description: ") + e.what());
  }
  std::vector<Parameter*> slots = params.all();
  if (!blob_dir.is_array() || blob_dir.size() != slots.size()) {
    corrupt(origin, "blobs", "expected " + std::to_string(slots.size()) + " parameter blobs");
  }
  const std::size_t data_start = 16 + meta_len;
  const std::size_t data_len = bytes.size() - data_start;
  std::size_t expected_offset = 0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    Parameter& p = *slots[k];
    const auto& entry = blob_dir[k];
    std::string name;
    std::uint64_t offset = 0;
    Eigen::Index rows = 0, cols = 0;
    try {
      name = entry.at("name").get<std::string>();
      offset = entry.at("offset").get<std::uint64_t>();
      rows = entry.at("rows").get<Eigen::Index>();
      cols = entry.at("cols").get<Eigen::Index>();
    } catch (const nlohmann::json::exception& e) {
      corrupt(origin, "blob " + std::to_string(k), e.what());
    }
    const std::string section = "blob " + name;
    if (name != p.name) corrupt(origin, section, "expected parameter " + p.name);
    if (rows != p.value.rows() || cols != p.value.cols()) {
      corrupt(origin, section,
              "shape " + std::to_string(rows) + "x" + std::to_string(cols) + " does not match " +
                  std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()));
    }
    const std::size_t n = static_cast<std::size_t>(rows * cols);
    if (offset != expected_offset) corrupt(origin, section, "unexpected offset");
    if (offset + 4 * n > data_len) corrupt(origin, section, "truncated data");
    const char* src = bytes.data() + data_start + offset;
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, src + 4 * i, 4);
      p.value.data()[i] = static_cast<double>(f);
    }
    expected_offset = offset + 4 * n;
  }
  if (expected_offset != data_len) corrupt(origin, "blobs", "trailing bytes after the last blob");
  for (const Parameter* p : slots) {
    if (!p->value.allFinite()) corrupt(origin, "blob " + p->name, "non-finite values");
  }
  return ModelArtifact{EtRnnModel(std::move(schema), config, std::move(params)), prov};
}

ModelArtifact load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model artifact " + path.string());
  return load_model(in, path.string());
}

void quantize_to_float32(EtRnnModel& model) {
  for (Parameter* p : model.parameters().all()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      p->value.data()[i] = static_cast<double>(static_cast<float>(p->value.data()[i]));
    }
  }
}

}  // namespace etrnn
