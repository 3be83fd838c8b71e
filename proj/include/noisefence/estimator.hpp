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
#include <vector>

#include "noisefence/core.hpp"
#include "noisefence/oracle.hpp"

namespace noisefence {

enum class DirectionSource { gaussian_unit, coordinate };

struct EstimatorConfig {
  double beta = 1e-3;
  std::size_t J = 50;
  DirectionSource direction_source = DirectionSource::gaussian_unit;
};

/// Estimated gradient as sum_j factors[j] * directions[j] / J.
struct GradEstimate {
  Vec vector;
  Vec factors;
  std::vector<Vec> directions;
  std::uint64_t queries_used = 0;
};

/// Draws the J/2 (NES) or J-1 (ZOO) probe directions for one call.
std::vector<Vec> draw_directions(std::size_t d, std::size_t count, DirectionSource source,
                                 RngStream& rng);

/// Antithetic NES estimate of the gradient of -log F_t:
/// factor_j = log(F~_t(x - beta u_j) / F~_t(x + beta u_j)) / beta.
/// Each of the J/2 directions costs two queries.
GradEstimate nes_gradient(DefendedModel& dm, std::span<const double> x, std::size_t t,
                          const EstimatorConfig& cfg, RngStream& rng);

/// Same estimator over caller-supplied directions (J = 2 * directions.size()).
/// With `repeat_n` > 1 every pair is queried repeat_n times and the factor is
/// the repeated-query MLE, using the sample variance of the log-ratios as the
/// attacker's estimate of sigma_Z^2.
GradEstimate nes_gradient_with(DefendedModel& dm, std::span<const double> x, std::size_t t,
                               double beta, std::span<const Vec> directions,
                               std::size_t repeat_n = 1);

/// Zeroth-order finite-difference estimate of the C&W loss gradient.
/// Targeted loss is log(F_max / F_t) with F_max the largest noisy entry other
/// than t; untargeted loss (t = true class) is log(F_t / F_max). One base
/// query is shared by the J - 1 probes.
GradEstimate zoo_gradient(DefendedModel& dm, std::span<const double> x, std::size_t t,
                          const EstimatorConfig& cfg, RngStream& rng, bool targeted = true,
                          std::size_t repeat_n = 1);

/// C&W loss on a (possibly noisy) softmax vector, values floored before log.
double cw_loss(std::span<const double> y, std::size_t t, bool targeted);

/// NES with every probe pair centered at x + dx_j, dx_j ~ N(0, transform_sigma^2 I).
GradEstimate eot_gradient(DefendedModel& dm, std::span<const double> x, std::size_t J,
                          double transform_sigma, std::size_t t, const EstimatorConfig& cfg,
                          RngStream& rng);

/// Linearized maximum-likelihood estimate mean(y) - sigma_z_sq / beta.
double repeated_mle(std::span<const double> samples, double beta, double sigma_z_sq);

/// log(mean(f1) / mean(f2)) / beta. Throws EstimatorUndefined if a mean is <= 0.
double repeated_ratio(std::span<const double> f1_samples, std::span<const double> f2_samples,
                      double beta);

}  // namespace noisefence
