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

// etrnn: generate | train | evaluate | score
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "etrnn/commands.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string keys_help() {
  std::string out = "Configuration keys (key = default: description):\n";
  for (const auto& k : etrnn::config_keys()) {
    out += "  " + std::string(k.name) + " = " + std::string(k.default_value) + ": " +
           std::string(k.doc) + "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transaction-sequence credit scoring: synthetic data, RNN ensembles, baselines"};
  app.footer(keys_help());
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> assignments;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool timing_grid = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", assignments, "override one key (repeatable), e.g. --set train.epochs=4");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "global seed (same as --set seed=N)");
  };
  CLI::App* generate = app.add_subcommand("generate", "write a synthetic dataset and its ground truth");
  CLI::App* train = app.add_subcommand("train", "train the ensemble and save member artifacts");
  CLI::App* evaluate = app.add_subcommand("evaluate", "run the experiments in eval.experiments");
  CLI::App* score = app.add_subcommand("score", "score every client of data.path");
  for (CLI::App* cmd : {generate, train, evaluate, score}) add_common(cmd);
  score->add_flag("--timing-grid", timing_grid, "also time scoring of 1k, 2k and 4k clients");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    etrnn::CommandContext ctx;
    if (!config_path.empty()) ctx.config.load_file(config_path);
    for (const auto& a : assignments) ctx.config.set_assignment(a);
    if (seed) ctx.config.set("seed", std::to_string(*seed));
    ctx.out_dir = out_dir;
    ctx.timing_grid = timing_grid;
    ctx.log = &std::cerr;

    if (generate->parsed()) etrnn::cmd_generate(ctx);
    if (train->parsed()) etrnn::cmd_train(ctx);
    if (evaluate->parsed()) etrnn::cmd_evaluate(ctx);
    if (score->parsed()) etrnn::cmd_score(ctx);
  } catch (const etrnn::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const etrnn::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
