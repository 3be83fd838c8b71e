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
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "noisefence/estimator.hpp"
#include "noisefence/oracle.hpp"

namespace noisefence {

enum class AttackKind { nes, zoo, hard_proxy };

std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view s);

struct AttackConfig {
  AttackKind kind = AttackKind::nes;
  bool targeted = true;
  std::optional<std::size_t> target_class;
  double learning_rate = 0.01;
  std::uint64_t qc_limit = 20000;
  /// Per-pixel threshold on ||x - x0||^2 / d.
  std::optional<double> max_distortion;
  EstimatorConfig estimator;
  std::size_t hard_proxy_R = 20;
  double hard_proxy_spread = 0.05;
  std::size_t repeat_N = 1;
  bool record_trajectory = false;

  /// Throws DomainError on inconsistent settings. `clean_class` is checked
  /// against the target for targeted attacks.
  void validate(std::size_t clean_class) const;
  /// Oracle queries one descent iteration consumes.
  std::uint64_t queries_per_iteration() const;
};

struct AttackOutcome {
  bool success = false;
  /// Label criterion only, ignoring max_distortion.
  bool success_unfiltered = false;
  std::uint64_t queries = 0;
  std::uint64_t iterations = 0;
  double l2_per_pixel = 0.0;
  std::size_t final_label = 0;
  Vec x_adv;
  std::vector<std::pair<std::uint64_t, double>> trajectory;
};

/// Iterative black-box attack from x0. Success is judged on the clean
/// model once per iteration (not charged to the budget); the loop stops
/// at the first iteration whose clean label meets the goal, or when the
/// next iteration would exceed qc_limit.
AttackOutcome run_attack(DefendedModel& dm, std::span<const double> x0, std::size_t clean_class,
                         const AttackConfig& cfg, RngStream& rng);

/// Fraction of R hard-label queries at x + N(0, spread^2 I) that return t.
double hard_proxy_score(DefendedModel& dm, std::span<const double> x, std::size_t t,
                        std::size_t R, double spread, RngStream& rng);

struct AttackMetrics {
  double asr = 0.0;
  double asr_unfiltered = 0.0;
  double mean_qc_success = 0.0;
  double mean_l2_success = 0.0;
  std::size_t n = 0;
};

struct FactorSnr {
  double signal_power = 0.0;  // mean a^2 over probes
  double noise_power = 0.0;   // mean (A - a)^2 over probes
  double snr = 0.0;
  /// Median over points of each point's own signal/noise ratio. Unlike the
  /// pooled `snr` it is not dominated by points whose F_t sits below sigma.
  double median_point_snr = 0.0;
  std::size_t probes = 0;
};

/// Measured SNR of NES multiplication factors at the given points: each
/// probe pairs the clean factor a with a noisy factor A on the same
/// direction. Soft-label noise only.
FactorSnr measure_factor_snr(const Model& model, const NoiseSpec& spec,
                             std::span<const Vec> points, std::span<const std::size_t> targets,
                             double beta, std::size_t dirs_per_point, RngStream& rng);

/// Aggregates outcomes; success-only means are 0 when nothing succeeded.
AttackMetrics compute_metrics(std::span<const AttackOutcome> outcomes);

}  // namespace noisefence
