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

#include "noisefence/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace noisefence {

void NoiseSpec::validate() const {
  if (sigma < 0.0) throw DomainError("NoiseSpec: sigma must be >= 0");
  if (q_bits < 1 || q_bits > 52) throw DomainError("NoiseSpec: q_bits must be in [1, 52]");
  if (eps_sigma < 0.0) throw DomainError("NoiseSpec: eps_sigma must be >= 0");
}

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::white: return "white";
    case NoiseKind::quantization: return "quantization";
    case NoiseKind::correlated: return "correlated";
  }
  return "none";
}

std::string_view to_string(LabelMode mode) { return mode == LabelMode::hard ? "hard" : "soft"; }

NoiseKind parse_noise_kind(std::string_view s) {
  if (s == "none") return NoiseKind::none;
  if (s == "white") return NoiseKind::white;
  if (s == "quantization") return NoiseKind::quantization;
  if (s == "correlated") return NoiseKind::correlated;
  throw ConfigError(fmt::format("unknown noise kind '{}'", s));
}

LabelMode parse_label_mode(std::string_view s) {
  if (s == "soft") return LabelMode::soft;
  if (s == "hard") return LabelMode::hard;
  throw ConfigError(fmt::format("unknown label mode '{}'", s));
}

double quantize_value(double y, int q_bits) {
  const double levels = std::ldexp(1.0, q_bits) - 1.0;
  return std::nearbyint(std::clamp(y, 0.0, 1.0) * levels) / levels;
}

Vec quantize(std::span<const double> y, int q_bits) {
  Vec out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = quantize_value(y[i], q_bits);
  return out;
}

DefendedModel::DefendedModel(const Model& model, NoiseSpec spec, RngStream rng)
    : model_(&model), spec_(spec), rng_(rng) {
  spec_.validate();
}

Vec DefendedModel::perturb(const Vec& clean) {
  Vec y = clean;
  switch (spec_.kind) {
    case NoiseKind::none:
      return y;
    case NoiseKind::quantization:
      return quantize(y, spec_.q_bits);
    case NoiseKind::white:
      if (spec_.sigma == 0.0) return y;
      for (double& v : y) v += spec_.sigma * rng_.gaussian();
      break;
    case NoiseKind::correlated:
      for (double& v : y) v += spec_.alpha * v + spec_.eps_sigma * rng_.gaussian();
      break;
  }
  // Negative entries are reflected, then everything is capped at 1.
  for (double& v : y) v = std::min(std::abs(v), 1.0);
  return y;
}

Vec DefendedModel::query_soft(std::span<const double> x) {
  if (spec_.label_mode != LabelMode::soft) {
    throw DomainError("query_soft called on a hard-label oracle");
  }
  ++queries_;
  const Vec clean = predict(*model_, x);
  Vec y = perturb(clean);

  const bool noisy = spec_.kind == NoiseKind::white || spec_.kind == NoiseKind::correlated;
  if (!spec_.preserve_top1 || !noisy) return y;

  const std::size_t top = argmax(clean);
  double rival = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (i != top) rival = std::max(rival, y[i]);
  }
  if (y[top] > rival) return y;

  // Boost the original winner with half-variance folded Gaussian draws.
  const double scale = (spec_.kind == NoiseKind::white ? spec_.sigma : spec_.eps_sigma) /
                       std::numbers::sqrt2;
  int rounds = 0;
  double boosted = y[top];
  while (!(std::min(boosted, 1.0) > rival)) {
    if (++rounds > kPreserveRoundLimit || scale == 0.0) {
      ++stuck_;
      break;
    }
    boosted += std::abs(scale * rng_.gaussian());
  }
  y[top] = std::min(boosted, 1.0);
  return y;
}

std::size_t DefendedModel::query_hard(std::span<const double> x) {
  if (spec_.label_mode != LabelMode::hard) {
    throw DomainError("query_hard called on a soft-label oracle");
  }
  ++queries_;
  const Vec y = perturb(predict(*model_, x));
  // Clipping at 1 creates exact ties under large noise; break them uniformly
  // so that no class is favoured by its index. Clean ties are kept as argmax.
  if (spec_.kind == NoiseKind::none) return argmax(y);
  const double top = *std::max_element(y.begin(), y.end());
  std::size_t ties = 0;
  for (double v : y) ties += v == top;
  if (ties == 1) return argmax(y);
  std::uint64_t pick = rng_.below(ties);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == top && pick-- == 0) return i;
  }
  return argmax(y);
}

}  // namespace noisefence
