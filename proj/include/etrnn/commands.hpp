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

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "etrnn/artifact.hpp"
#include "etrnn/config.hpp"

namespace etrnn {

struct CommandContext {
  RunConfig config;
  std::filesystem::path out_dir = ".";
  bool timing_grid = false;
  std::ostream* log = nullptr;  // progress and summaries; null silences them
};

/// Exclusive marker file in an output directory, removed on destruction.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// dataset.csv + ground_truth.csv.
void cmd_generate(const CommandContext& ctx);
/// member_<k>.etrnn + history_<k>.csv + schema.json.
void cmd_train(const CommandContext& ctx);
/// report.csv + report.txt + per-figure data files.
void cmd_evaluate(const CommandContext& ctx);
/// scores.csv (client_id, score, status); timing.csv with the timing grid.
void cmd_score(const CommandContext& ctx);

/// The experiment names accepted by eval.experiments.
const std::vector<std::string>& experiment_names();

/// Explicit data.boundary, or valid_months before the day after the latest application.
CalendarDate resolve_boundary(const RunConfig& config, std::span<const ClientHistory> dataset);

/// member_*.etrnn files of a directory in member order. Throws DataError if none.
std::vector<ModelArtifact> load_ensemble(const std::filesystem::path& dir);

}  // namespace etrnn
