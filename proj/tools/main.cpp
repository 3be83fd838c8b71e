/*
 * Copyright 2026 The noisefence Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "noisefence/cli.hpp"
#include "noisefence/core.hpp"

namespace {

constexpr const char* kAnalyzeHelp =
    "Closed-form curves per model and sigma.\n"
    "Writes curves.csv with columns:\n"
    "  model,sigma,sigma_z_sq,snr_exact,snr_db,snr_db_alt,qc_ratio,repeat_n\n"
    "and curves.svg (log-log qc_ratio vs sigma) unless [analyze] svg = false.";

constexpr const char* kTrainHelp =
    "Train the desk model from the [model] section.\n"
    "Writes model.json, train.csv, test.csv and stats.csv with columns:\n"
    "  acc,mean_ft,beta,mean_dft,median_dft,std_dft,lipschitz";

constexpr const char* kGridHelp =
    "Run every attack x noise x seed cell of the [grid] section.\n"
    "Writes outcomes.jsonl (one record per cell) and grid.csv with columns:\n"
    "  attack,noise,asr,mean_qc_success,mean_l2_success,n_seeds,asr_unfiltered\n"
    "NOISEFENCE_THREADS overrides [grid] parallelism.";

constexpr const char* kVerifyHelp =
    "Monte Carlo verification suites: all, factor_moments, factor_snr,\n"
    "repeat_failure, repeat_estimators, convergence, zoo_variance. Writes verify.json.";

}  // namespace

int main(int argc, char** argv) {
  namespace nc = noisefence::cli;
  CLI::App app{"noisefence: output-noise defense laboratory"};
  app.require_subcommand(1);

  std::optional<std::string> config;
  std::uint64_t seed = 1;
  std::string out = "out";
  std::vector<std::string> suites;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "base random seed")->capture_default_str();
    sub->add_option("--out", out, "output directory")->capture_default_str();
  };
  auto* analyze = app.add_subcommand("analyze", kAnalyzeHelp);
  auto* train = app.add_subcommand("train", kTrainHelp);
  auto* grid = app.add_subcommand("grid", kGridHelp);
  auto* verify = app.add_subcommand("verify", kVerifyHelp);
  for (auto* sub : {analyze, train, grid, verify}) add_common(sub);
  verify->add_option("--suite", suites, "suite name(s); default all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? nc::kExitOk : nc::kExitUsage;
  }

  std::optional<std::filesystem::path> cfg;
  if (config) cfg = *config;
  try {
    if (*analyze) return nc::cmd_analyze(cfg, seed, out);
    if (*train) return nc::cmd_train(cfg, seed, out);
    if (*grid) return nc::cmd_grid(cfg, seed, out);
    return nc::cmd_verify(suites, seed, out);
  } catch (const noisefence::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return nc::kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return nc::kExitFailure;
  }
}
