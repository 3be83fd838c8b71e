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

#include "noisefence/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "noisefence/classifier.hpp"

namespace noisefence {
namespace {

double per_pixel_l2(std::span<const double> x, std::span<const double> x0) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - x0[i]) * (x[i] - x0[i]);
  return s / static_cast<double>(x.size());
}

bool label_goal(std::size_t label, std::size_t clean_class, const AttackConfig& cfg) {
  return cfg.targeted ? label == *cfg.target_class : label != clean_class;
}

// Loss the attacker descends, evaluated on the clean model for trajectories.
double clean_loss(const Model& m, std::span<const double> x, std::size_t clean_class,
                  const AttackConfig& cfg) {
  const Vec p = predict(m, x);
  if (cfg.kind == AttackKind::zoo) {
    return cw_loss(p, cfg.targeted ? *cfg.target_class : clean_class, cfg.targeted);
  }
  return cfg.targeted ? -std::log(std::max(p[*cfg.target_class], kLogFloor))
                      : std::log(std::max(p[clean_class], kLogFloor));
}

Vec hard_proxy_gradient(DefendedModel& dm, std::span<const double> x, std::size_t t, bool targeted,
                        const AttackConfig& cfg, RngStream& rng) {
  const auto& ec = cfg.estimator;
  const double floor = 1.0 / static_cast<double>(cfg.hard_proxy_R);
  auto objective = [&](std::span<const double> p) {
    const double s = std::max(hard_proxy_score(dm, p, t, cfg.hard_proxy_R, cfg.hard_proxy_spread, rng), floor);
    return targeted ? -std::log(s) : std::log(s);
  };
  const auto dirs = draw_directions(x.size(), ec.J / 2, ec.direction_source, rng);
  Vec g(x.size(), 0.0);
  Vec xp(x.size()), xm(x.size());
  for (const Vec& u : dirs) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + ec.beta * u[i];
      xm[i] = x[i] - ec.beta * u[i];
    }
    const double factor = (objective(xp) - objective(xm)) / ec.beta;
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += factor * u[i] / static_cast<double>(ec.J);
  }
  return g;
}

}  // namespace

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::nes: return "nes";
    case AttackKind::zoo: return "zoo";
    case AttackKind::hard_proxy: return "hard-proxy";
  }
  return "nes";
}

AttackKind parse_attack_kind(std::string_view s) {
  if (s == "nes") return AttackKind::nes;
  if (s == "zoo") return AttackKind::zoo;
  if (s == "hard-proxy" || s == "hard_proxy") return AttackKind::hard_proxy;
  throw ConfigError(fmt::format("unknown attack kind '{}'", s));
}

void AttackConfig::validate(std::size_t clean_class) const {
  if (targeted) {
    if (!target_class) throw DomainError("targeted attack needs a target class");
    if (*target_class == clean_class) throw DomainError("target class equals the clean class");
  }
  if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be > 0");
  if (!(estimator.beta > 0.0)) throw DomainError("beta must be > 0");
  if (repeat_N == 0) throw DomainError("repeat_N must be >= 1");
  if (kind == AttackKind::zoo) {
    if (estimator.J < 2) throw DomainError("ZOO needs J >= 2");
  } else if (estimator.J < 2 || estimator.J % 2 != 0) {
    throw DomainError("NES-type attacks need an even J >= 2");
  }
  if (kind == AttackKind::hard_proxy && hard_proxy_R == 0) {
    throw DomainError("hard_proxy_R must be >= 1");
  }
  if (max_distortion && *max_distortion < 0.0) throw DomainError("max_distortion must be >= 0");
}

std::uint64_t AttackConfig::queries_per_iteration() const {
  const std::uint64_t J = estimator.J;
  if (kind == AttackKind::hard_proxy) return J * hard_proxy_R;
  return J * repeat_N;
}

AttackOutcome run_attack(DefendedModel& dm, std::span<const double> x0, std::size_t clean_class,
                         const AttackConfig& cfg, RngStream& rng) {
  cfg.validate(clean_class);
  const Model& model = dm.model();
  if (classify(model, x0) != clean_class) {
    throw PreconditionError("x0 is not classified as clean_class by the clean model");
  }
  const std::uint64_t start = dm.query_count();
  const std::uint64_t cost = cfg.queries_per_iteration();
  const std::size_t t = cfg.targeted ? *cfg.target_class : clean_class;

  AttackOutcome out;
  Vec x(x0.begin(), x0.end());
  out.final_label = clean_class;
  if (cfg.record_trajectory) out.trajectory.emplace_back(0, clean_loss(model, x, clean_class, cfg));

  while (dm.query_count() - start + cost <= cfg.qc_limit) {
    Vec g;
    switch (cfg.kind) {
      case AttackKind::nes: {
        const auto dirs = draw_directions(x.size(), cfg.estimator.J / 2,
                                          cfg.estimator.direction_source, rng);
        g = nes_gradient_with(dm, x, t, cfg.estimator.beta, dirs, cfg.repeat_N).vector;
        // Untargeted descends log F_true, the negation of the NES objective.
        if (!cfg.targeted) {
          for (double& v : g) v = -v;
        }
        break;
      }
      case AttackKind::zoo:
        g = zoo_gradient(dm, x, t, cfg.estimator, rng, cfg.targeted, cfg.repeat_N).vector;
        break;
      case AttackKind::hard_proxy:
        g = hard_proxy_gradient(dm, x, t, cfg.targeted, cfg, rng);
        break;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = std::clamp(x[i] - cfg.learning_rate * g[i], 0.0, 1.0);
    }
    ++out.iterations;
    out.final_label = classify(model, x);
    if (cfg.record_trajectory) {
      out.trajectory.emplace_back(out.iterations, clean_loss(model, x, clean_class, cfg));
    }
    if (label_goal(out.final_label, clean_class, cfg)) {
      out.success_unfiltered = true;
      break;
    }
  }

  out.queries = dm.query_count() - start;
  out.l2_per_pixel = per_pixel_l2(x, x0);
  out.success = out.success_unfiltered &&
                (!cfg.max_distortion || out.l2_per_pixel <= *cfg.max_distortion);
  out.x_adv = std::move(x);
  return out;
}

double hard_proxy_score(DefendedModel& dm, std::span<const double> x, std::size_t t,
                        std::size_t R, double spread, RngStream& rng) {
  if (R == 0) throw DomainError("R must be >= 1");
  if (spread < 0.0) throw DomainError("spread must be >= 0");
  Vec p(x.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < R; ++r) {
    rng.fill_gaussian(p, spread);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += x[i];
    if (dm.query_hard(p) == t) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(R);
}

FactorSnr measure_factor_snr(const Model& model, const NoiseSpec& spec,
                             std::span<const Vec> points, std::span<const std::size_t> targets,
                             double beta, std::size_t dirs_per_point, RngStream& rng) {
  if (points.size() != targets.size()) throw DomainError("points and targets differ in length");
  NoiseSpec soft = spec;
  soft.label_mode = LabelMode::soft;
  DefendedModel dm(model, soft, rng.derive("oracle"));
  FactorSnr out;
  std::vector<double> point_snr;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto& x = points[k];
    double sig = 0.0, noise = 0.0;
    for (std::size_t j = 0; j < dirs_per_point; ++j) {
      const Vec u = rng.unit_vector(x.size());
      Vec xm(x), xp(x);
      for (std::size_t i = 0; i < x.size(); ++i) {
        xm[i] -= beta * u[i];
        xp[i] += beta * u[i];
      }
      const std::size_t t = targets[k];
      const double a = (std::log(std::max(predict(model, xm)[t], kLogFloor)) -
                        std::log(std::max(predict(model, xp)[t], kLogFloor))) / beta;
      const double noisy = (std::log(std::max(dm.query_soft(xm)[t], kLogFloor)) -
                            std::log(std::max(dm.query_soft(xp)[t], kLogFloor))) / beta;
      sig += a * a;
      noise += (noisy - a) * (noisy - a);
      ++out.probes;
    }
    out.signal_power += sig;
    out.noise_power += noise;
    if (dirs_per_point > 0) {
      point_snr.push_back(noise == 0.0 ? std::numeric_limits<double>::infinity() : sig / noise);
    }
  }
  if (out.probes == 0) throw DomainError("measure_factor_snr needs at least one probe");
  const auto mid = point_snr.begin() + static_cast<std::ptrdiff_t>(point_snr.size() / 2);
  std::nth_element(point_snr.begin(), mid, point_snr.end());
  out.median_point_snr = *mid;
  if (point_snr.size() % 2 == 0) {
    out.median_point_snr = 0.5 * (*mid + *std::max_element(point_snr.begin(), mid));
  }
  out.signal_power /= static_cast<double>(out.probes);
  out.noise_power /= static_cast<double>(out.probes);
  out.snr = out.noise_power == 0.0 ? std::numeric_limits<double>::infinity()
                                   : out.signal_power / out.noise_power;
  return out;
}

AttackMetrics compute_metrics(std::span<const AttackOutcome> outcomes) {
  if (outcomes.empty()) throw DomainError("compute_metrics needs at least one outcome");
  AttackMetrics m;
  m.n = outcomes.size();
  std::size_t wins = 0, raw_wins = 0;
  for (const auto& o : outcomes) {
    if (o.success_unfiltered) ++raw_wins;
    if (!o.success) continue;
    ++wins;
    m.mean_qc_success += static_cast<double>(o.queries);
    m.mean_l2_success += o.l2_per_pixel;
  }
  const double n = static_cast<double>(m.n);
  m.asr = static_cast<double>(wins) / n;
  m.asr_unfiltered = static_cast<double>(raw_wins) / n;
  if (wins > 0) {
    m.mean_qc_success /= static_cast<double>(wins);
    m.mean_l2_success /= static_cast<double>(wins);
  }
  return m;
}

}  // namespace noisefence
