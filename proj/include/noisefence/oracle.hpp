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
#include <span>
#include <string>
#include <string_view>

#include "noisefence/classifier.hpp"
#include "noisefence/core.hpp"

namespace noisefence {

enum class NoiseKind { none, white, quantization, correlated };
enum class LabelMode { soft, hard };

/// Output-perturbation defense configuration.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  double sigma = 0.0;      // white kind only
  int q_bits = 8;          // quantization kind only
  double alpha = 0.0;      // correlated kind only
  double eps_sigma = 1e-8; // residual std for the correlated kind
  bool preserve_top1 = false;
  LabelMode label_mode = LabelMode::soft;

  /// Throws DomainError on negative sigma/eps_sigma or q_bits < 1.
  void validate() const;
};

std::string_view to_string(NoiseKind kind);
std::string_view to_string(LabelMode mode);
NoiseKind parse_noise_kind(std::string_view s);
LabelMode parse_label_mode(std::string_view s);

/// Upper bound on top-1 preservation rounds before a query is flagged stuck.
inline constexpr int kPreserveRoundLimit = 10000;

/// Rounds every entry to the nearest of the 2^q_bits uniform levels on [0,1].
Vec quantize(std::span<const double> y, int q_bits);
double quantize_value(double y, int q_bits);

/// A model behind the defense. Every query draws fresh noise from the
/// instance's own stream and bumps the query counter by one.
class DefendedModel {
 public:
  DefendedModel(const Model& model, NoiseSpec spec, RngStream rng);

  const Model& model() const { return *model_; }
  const NoiseSpec& spec() const { return spec_; }
  std::uint64_t query_count() const { return queries_; }
  /// Number of soft queries whose top-1 preservation loop hit the round limit.
  std::uint64_t stuck_events() const { return stuck_; }

  /// Noisy softmax vector. Requires soft label mode.
  Vec query_soft(std::span<const double> x);
  /// Noisy top-1 label. Requires hard label mode; never preserves top-1.
  /// Exact ties among noisy entries are broken uniformly at random.
  std::size_t query_hard(std::span<const double> x);

 private:
  Vec perturb(const Vec& clean);

  const Model* model_;
  NoiseSpec spec_;
  RngStream rng_;
  std::uint64_t queries_ = 0;
  std::uint64_t stuck_ = 0;
};

}  // namespace noisefence
