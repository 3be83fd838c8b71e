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

#include "noisefence/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace noisefence {
namespace {

double floored_log(double v) { return std::log(std::max(v, kLogFloor)); }

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

Vec offset(std::span<const double> x, std::span<const double> u, double scale) {
  Vec out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * u[i];
  return out;
}

void accumulate_estimate(GradEstimate& est, std::size_t d, double J) {
  est.vector.assign(d, 0.0);
  for (std::size_t j = 0; j < est.directions.size(); ++j) {
    const double w = est.factors[j] / J;
    for (std::size_t i = 0; i < d; ++i) est.vector[i] += w * est.directions[j][i];
  }
}

void check_even_j(std::size_t J) {
  if (J < 2 || J % 2 != 0) {
    throw DomainError(fmt::format("antithetic estimator needs an even J >= 2, got {}", J));
  }
}

// One antithetic factor at `center`, optionally repeated.
double pair_factor(DefendedModel& dm, std::span<const double> center, std::span<const double> u,
                   std::size_t t, double beta, std::size_t repeat_n) {
  const Vec xm = offset(center, u, -beta);
  const Vec xp = offset(center, u, beta);
  Vec ys(repeat_n);
  for (std::size_t k = 0; k < repeat_n; ++k) {
    const double fm = dm.query_soft(xm)[t];
    const double fp = dm.query_soft(xp)[t];
    ys[k] = (floored_log(fm) - floored_log(fp)) / beta;
  }
  if (repeat_n == 1) return ys[0];
  // Var(y) ~ sigma_Z^2 / beta^2 under the Gaussian factor model.
  return repeated_mle(ys, beta, beta * beta * sample_variance(ys));
}

}  // namespace

std::vector<Vec> draw_directions(std::size_t d, std::size_t count, DirectionSource source,
                                 RngStream& rng) {
  std::vector<Vec> dirs;
  dirs.reserve(count);
  if (source == DirectionSource::gaussian_unit) {
    for (std::size_t j = 0; j < count; ++j) dirs.push_back(rng.unit_vector(d));
    return dirs;
  }
  // Coordinate directions: a fresh random permutation is consumed in order,
  // so no axis repeats until all d have been used.
  std::vector<std::size_t> perm(d);
  std::size_t used = d;
  for (std::size_t j = 0; j < count; ++j) {
    if (used == d) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = d; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      used = 0;
    }
    Vec e(d, 0.0);
    e[perm[used++]] = 1.0;
    dirs.push_back(std::move(e));
  }
  return dirs;
}

GradEstimate nes_gradient(DefendedModel& dm, std::span<const double> x, std::size_t t,
                          const EstimatorConfig& cfg, RngStream& rng) {
  check_even_j(cfg.J);
  const auto dirs = draw_directions(x.size(), cfg.J / 2, cfg.direction_source, rng);
  return nes_gradient_with(dm, x, t, cfg.beta, dirs);
}

GradEstimate nes_gradient_with(DefendedModel& dm, std::span<const double> x, std::size_t t,
                               double beta, std::span<const Vec> directions,
                               std::size_t repeat_n) {
  if (beta <= 0.0) throw DomainError("beta must be > 0");
  if (repeat_n == 0) throw DomainError("repeat_n must be >= 1");
  const std::uint64_t before = dm.query_count();
  GradEstimate est;
  est.directions.assign(directions.begin(), directions.end());
  est.factors.reserve(directions.size());
  for (const Vec& u : directions) est.factors.push_back(pair_factor(dm, x, u, t, beta, repeat_n));
  accumulate_estimate(est, x.size(), 2.0 * static_cast<double>(directions.size()));
  est.queries_used = dm.query_count() - before;
  return est;
}

double cw_loss(std::span<const double> y, std::size_t t, bool targeted) {
  double fmax = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (i != t) fmax = std::max(fmax, y[i]);
  }
  const double r = floored_log(fmax) - floored_log(y[t]);
  return targeted ? r : -r;
}

GradEstimate zoo_gradient(DefendedModel& dm, std::span<const double> x, std::size_t t,
                          const EstimatorConfig& cfg, RngStream& rng, bool targeted,
                          std::size_t repeat_n) {
  if (cfg.J < 2) throw DomainError("ZOO needs J >= 2");
  if (cfg.beta <= 0.0) throw DomainError("beta must be > 0");
  if (repeat_n == 0) throw DomainError("repeat_n must be >= 1");
  const std::uint64_t before = dm.query_count();

  auto loss_at = [&](std::span<const double> p) {
    double s = 0.0;
    for (std::size_t k = 0; k < repeat_n; ++k) s += cw_loss(dm.query_soft(p), t, targeted);
    return s / static_cast<double>(repeat_n);
  };

  GradEstimate est;
  const double base = loss_at(x);
  est.directions = draw_directions(x.size(), cfg.J - 1, cfg.direction_source, rng);
  est.factors.reserve(est.directions.size());
  for (const Vec& u : est.directions) {
    est.factors.push_back((loss_at(offset(x, u, cfg.beta)) - base) / cfg.beta);
  }
  accumulate_estimate(est, x.size(), static_cast<double>(cfg.J));
  est.queries_used = dm.query_count() - before;
  return est;
}

GradEstimate eot_gradient(DefendedModel& dm, std::span<const double> x, std::size_t J,
                          double transform_sigma, std::size_t t, const EstimatorConfig& cfg,
                          RngStream& rng) {
  check_even_j(J);
  if (transform_sigma < 0.0) throw DomainError("transform_sigma must be >= 0");
  const std::uint64_t before = dm.query_count();
  GradEstimate est;
  est.directions = draw_directions(x.size(), J / 2, cfg.direction_source, rng);
  est.factors.reserve(est.directions.size());
  Vec center(x.size());
  for (const Vec& u : est.directions) {
    rng.fill_gaussian(center, transform_sigma);
    for (std::size_t i = 0; i < center.size(); ++i) center[i] += x[i];
    est.factors.push_back(pair_factor(dm, center, u, t, cfg.beta, 1));
  }
  accumulate_estimate(est, x.size(), static_cast<double>(J));
  est.queries_used = dm.query_count() - before;
  return est;
}

double repeated_mle(std::span<const double> samples, double beta, double sigma_z_sq) {
  if (samples.empty()) throw DomainError("repeated_mle needs at least one sample");
  if (beta <= 0.0) throw DomainError("beta must be > 0");
  return mean_of(samples) - sigma_z_sq / beta;
}

double repeated_ratio(std::span<const double> f1_samples, std::span<const double> f2_samples,
                      double beta) {
  if (f1_samples.empty() || f2_samples.empty()) {
    throw DomainError("repeated_ratio needs at least one sample per side");
  }
  if (beta <= 0.0) throw DomainError("beta must be > 0");
  const double m1 = mean_of(f1_samples);
  const double m2 = mean_of(f2_samples);
  if (!(m1 > 0.0) || !(m2 > 0.0)) {
    throw EstimatorUndefined(fmt::format("non-positive sample mean ({}, {})", m1, m2));
  }
  return std::log(m1 / m2) / beta;
}

}  // namespace noisefence
