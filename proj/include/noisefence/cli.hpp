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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "noisefence/attack.hpp"
#include "noisefence/classifier.hpp"
#include "noisefence/oracle.hpp"

namespace noisefence::cli {

/// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// How the desk model is obtained: loaded from `path`, or generated and
/// trained from the remaining fields.
struct ModelSpec {
  std::optional<std::filesystem::path> path;
  ModelKind kind = ModelKind::mlp;
  std::size_t d = 32;
  std::size_t classes = 10;
  std::size_t hidden = 64;
  std::size_t n_per_class = 100;
  double spread = 0.3;
  double test_fraction = 0.2;
  TrainOptions train{0.5, 100, 32};
  double beta = 1e-3;
  std::size_t stats_trials = 2000;
  std::size_t lipschitz_samples = 2000;
};

struct NamedAttack {
  std::string name;
  AttackConfig config;
};

struct NamedNoise {
  std::string name;
  NoiseSpec spec;
};

struct ExperimentConfig {
  ModelSpec model;
  std::vector<NamedAttack> attacks;
  std::vector<NamedNoise> noises;
  std::vector<std::uint64_t> seeds;
  std::size_t parallelism = 0;  // 0 = hardware concurrency
};

/// Output statistics of one classifier, published or measured: mean target
/// probability and mean change of it over a probe step beta.
struct OutputRow {
  std::string name;
  double mean_ft = 0.0;
  double mean_dft = 0.0;
  double beta = 1e-3;
};

struct AnalyzeConfig {
  std::vector<OutputRow> rows;
  std::vector<double> sigmas;
  double a = 0.1;
  double lambda = 2.0;
  double eta = 0.01;
  double v0 = 1.0;
  double epsilon = 0.01;
  double repeat_a = 1.0;
  double repeat_epsilon = 0.3;
  bool svg = true;
};

/// Built-in rows for the three reference classifiers: mnist, cifar10, imagenet.
std::optional<OutputRow> preset_row(const std::string& name);

AnalyzeConfig default_analyze_config();
ExperimentConfig default_experiment_config();

/// INI readers. Missing sections fall back to the defaults above; any
/// malformed value throws ConfigError naming the section and key.
AnalyzeConfig load_analyze_config(const std::filesystem::path& path);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ModelSpec load_model_spec(const std::filesystem::path& path);

/// Parses "0-49", "1,2,5" or a mix such as "0-3,10".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

struct AnalyzeRow {
  std::string model;
  double sigma = 0.0;
  double sigma_z_sq = 0.0;
  double snr_exact = 0.0;
  double snr_db = 0.0;
  double snr_db_alt = 0.0;  // 10 log10(dF^2 / sigma^2)
  double qc_ratio = 1.0;
  std::optional<std::uint64_t> repeat_n;
};

std::vector<AnalyzeRow> analyze(const AnalyzeConfig& cfg);
std::string analyze_csv(const std::vector<AnalyzeRow>& rows);
/// Log-log plot of qc_ratio against sigma, one line per model.
std::string analyze_svg(const std::vector<AnalyzeRow>& rows);

struct DeskSetup {
  Model model;
  Dataset train;
  Dataset test;
  OutputStats stats;
  double lipschitz = 0.0;
};

/// Generates, splits and trains (or loads) the desk model, then measures
/// its output statistics. Deterministic in (spec, seed).
DeskSetup build_desk(const ModelSpec& spec, std::uint64_t seed);

std::string stats_csv(const DeskSetup& desk);

/// The attacked point and goal for one seed; shared by every grid cell
/// with that seed so cells differ only in attack and defense.
struct Instance {
  std::size_t index = 0;
  std::size_t clean_class = 0;
  std::size_t target_class = 0;
};

Instance pick_instance(const DeskSetup& desk, std::uint64_t base_seed, std::uint64_t seed);

struct CellRecord {
  std::string attack;
  std::string noise;
  AttackConfig attack_config;
  NoiseSpec noise_spec;
  std::uint64_t seed = 0;
  AttackOutcome outcome;
  std::optional<std::string> error;
};

struct GridRow {
  std::string attack;
  std::string noise;
  AttackMetrics metrics;
  std::size_t n_seeds = 0;
};

struct GridResult {
  std::vector<CellRecord> cells;  // attack-major, then noise, then seed
  std::vector<GridRow> rows;
  std::size_t failed_cells = 0;
};

/// Worker count: NOISEFENCE_THREADS if set, else `configured`, else the
/// hardware concurrency.
std::size_t resolve_threads(std::size_t configured);

/// Runs a single cell. Hard-proxy attacks always query a hard-label
/// oracle and the other kinds a soft one, whatever the noise entry says.
AttackOutcome run_cell(const DeskSetup& desk, const NamedAttack& attack, const NamedNoise& noise,
                       std::uint64_t base_seed, std::uint64_t seed);

GridResult run_grid(const ExperimentConfig& cfg, const DeskSetup& desk, std::uint64_t base_seed,
                    std::size_t threads);

std::string grid_csv(const GridResult& g);
std::string outcomes_jsonl(const GridResult& g);

// Command entry points. Each writes into `out_dir` (created if missing)
// and returns one of the exit codes above.
int cmd_analyze(const std::optional<std::filesystem::path>& config, std::uint64_t seed,
                const std::filesystem::path& out_dir);
int cmd_train(const std::optional<std::filesystem::path>& config, std::uint64_t seed,
              const std::filesystem::path& out_dir);
int cmd_grid(const std::optional<std::filesystem::path>& config, std::uint64_t seed,
             const std::filesystem::path& out_dir);
int cmd_verify(const std::vector<std::string>& suites, std::uint64_t seed,
               const std::filesystem::path& out_dir);

}  // namespace noisefence::cli
