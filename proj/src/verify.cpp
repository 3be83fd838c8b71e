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

#include "noisefence/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

namespace noisefence {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // unbiased
};

// Welford accumulation; stable for the 1e6-sample runs.
class RunningMoments {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  Moments get() const {
    return {mean_, n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0};
  }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

double rel_err(double emp, double ref) {
  if (ref == 0.0) return std::abs(emp);
  return std::abs(emp - ref) / std::abs(ref);
}

// |deviation| in units of the standard error; 0/0 counts as no deviation.
double in_std_errors(double deviation, double se) {
  if (se == 0.0) return deviation == 0.0 ? 0.0 : kInf;
  return std::abs(deviation) / se;
}

double log_ratio_term(double f, double v) { return std::log(std::max(1.0 + v / f, kLogFloor)); }

void require_small_noise(double sigma, double min_f) {
  const auto m = small_noise_ok(sigma, min_f);
  if (!m.ok()) {
    throw PreconditionError(fmt::format(
        "outside the small-noise regime: sigma/min_f = {:.4g} > {}", m.ratio, m.threshold));
  }
}

double ks_distance_normal(Vec& samples, double mean, double sd) {
  if (sd == 0.0) return 0.0;
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double c = normal_cdf((samples[i] - mean) / sd);
    d = std::max({d, std::abs(c - static_cast<double>(i) / n),
                  std::abs(static_cast<double>(i + 1) / n - c)});
  }
  return d;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(z)); }
double logistic_deriv(double z) {
  const double f = logistic(z);
  return -f * (1.0 - f);
}

}  // namespace

void VerificationReport::gate(const std::string& key, double error, double limit) {
  rel_error[key] = error;
  limits[key] = limit;
}

void VerificationReport::finalize() {
  passed = true;
  for (const auto& [k, e] : rel_error) {
    const auto it = limits.find(k);
    if (it == limits.end() || !(e <= it->second)) passed = false;
  }
}

std::string report_to_json(const VerificationReport& r, int indent) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["n_samples"] = r.n_samples;
  j["passed"] = r.passed;
  j["tolerance"] = r.tolerance;
  j["empirical"] = r.empirical;
  j["analytic"] = r.analytic;
  j["rel_error"] = r.rel_error;
  j["limits"] = r.limits;
  return j.dump(indent);
}

VerificationReport verify_factor_moments(const NesNoiseParams& p, double a, std::uint64_t n_samples,
                                   RngStream& rng) {
  p.validate();
  if (n_samples < 2) throw DomainError("n_samples must be >= 2");
  require_small_noise(p.sigma, std::min(p.f_minus, p.f_plus));

  Vec samples(n_samples);
  RunningMoments acc;
  for (auto& s : samples) {
    const double v1 = p.sigma * rng.gaussian();
    const double v2 = p.sigma * rng.gaussian();
    s = a + (log_ratio_term(p.f_minus, v1) - log_ratio_term(p.f_plus, v2)) / p.beta;
    acc.add(s);
  }
  const auto m = acc.get();
  const double var_theory = sigma_z_sq(p) / (p.beta * p.beta);

  VerificationReport r;
  r.name = "factor_moments";
  r.n_samples = n_samples;
  r.tolerance = 0.05;
  r.empirical["mean"] = m.mean;
  r.empirical["variance"] = m.var;
  r.empirical["ks_distance"] = ks_distance_normal(samples, a, std::sqrt(var_theory));
  r.analytic["mean"] = a;
  r.analytic["variance"] = var_theory;
  r.gate("mean_std_errors", in_std_errors(m.mean - a, std::sqrt(m.var / n_samples)), 3.0);
  r.gate("variance", rel_err(m.var, var_theory), r.tolerance);
  r.finalize();
  return r;
}

VerificationReport verify_factor_snr(const NesNoiseParams& p, std::uint64_t n_samples,
                                 RngStream& rng) {
  p.validate();
  if (p.f_minus == p.f_plus) throw PreconditionError("factor_snr needs f_minus != f_plus");
  if (p.sigma == 0.0) throw PreconditionError("factor_snr needs sigma > 0");
  require_small_noise(p.sigma, std::min(p.f_minus, p.f_plus));

  const double a = nes_factor(p);
  double sq = 0.0;
  for (std::uint64_t i = 0; i < n_samples; ++i) {
    const double v1 = p.sigma * rng.gaussian();
    const double v2 = p.sigma * rng.gaussian();
    const double dev = (log_ratio_term(p.f_minus, v1) - log_ratio_term(p.f_plus, v2)) / p.beta;
    sq += dev * dev;
  }
  const double snr_emp = a * a / (sq / static_cast<double>(n_samples));
  const auto snr = snr_nes(p);

  VerificationReport r;
  r.name = "factor_snr";
  r.n_samples = n_samples;
  r.tolerance = 0.10;
  r.empirical["snr"] = snr_emp;
  r.empirical["snr_db"] = to_db(snr_emp);
  r.analytic["snr_exact"] = snr.exact;
  r.analytic["snr_bound"] = snr.bound;
  r.gate("snr", rel_err(snr_emp, snr.exact), r.tolerance);
  if (p.lipschitz > 0.0) r.gate("snr_over_bound", snr_emp / snr.bound, 1.0);
  r.finalize();
  return r;
}

VerificationReport verify_repeat_failure(const RepeatParams& p, std::uint64_t trials, RngStream& rng,
                                   std::optional<std::uint64_t> n_override) {
  const auto rq = repeated_query_n(p);
  if (!rq.feasible) {
    throw PreconditionError(fmt::format(
        "no feasible repeat count: sigma_Z^2 = {:.4g} >= a*beta = {:.4g}", rq.sigma_z_sq,
        p.a * p.beta));
  }
  if (trials == 0) throw DomainError("trials must be >= 1");
  const std::uint64_t n = n_override.value_or(*rq.n);
  if (n == 0) throw DomainError("n must be >= 1");
  const double sz = std::sqrt(rq.sigma_z_sq);

  std::uint64_t fail_mean = 0, fail_mle = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    double sum = 0.0;
    for (std::uint64_t k = 0; k < n; ++k) {
      const double z = 1.0 + sz * rng.gaussian();
      sum += p.a + std::log(std::max(z, kLogFloor)) / p.beta;
    }
    const double mean = sum / static_cast<double>(n);
    if (mean < 0.0) ++fail_mean;
    if (mean - rq.sigma_z_sq / p.beta < 0.0) ++fail_mle;
  }
  const double tr = static_cast<double>(trials);
  const double rate = static_cast<double>(fail_mean) / tr;
  const double bound = p.epsilon + 2.0 * std::sqrt(p.epsilon * (1.0 - p.epsilon) / tr);

  VerificationReport r;
  r.name = "repeat_failure";
  r.n_samples = trials;
  r.tolerance = bound - p.epsilon;
  r.empirical["failure_rate"] = rate;
  r.empirical["failure_rate_mle"] = static_cast<double>(fail_mle) / tr;
  r.empirical["n"] = static_cast<double>(n);
  r.analytic["epsilon"] = p.epsilon;
  r.analytic["n"] = static_cast<double>(*rq.n);
  r.analytic["sigma_z_sq"] = rq.sigma_z_sq;
  r.gate("failure_rate_excess", rate - bound, 0.0);
  r.finalize();
  return r;
}

VerificationReport verify_repeat_estimators(double a, const NesNoiseParams& p, std::uint64_t n,
                                  std::uint64_t trials, RngStream& rng) {
  p.validate();
  if (n == 0 || trials < 2) throw DomainError("repeat_estimators needs n >= 1 and trials >= 2");
  require_small_noise(p.sigma, std::min(p.f_minus, p.f_plus));
  const double szsq = sigma_z_sq(p);

  RunningMoments mle, ratio;
  double abs_diff = 0.0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    double sum_y = 0.0, sum_f1 = 0.0, sum_f2 = 0.0;
    for (std::uint64_t k = 0; k < n; ++k) {
      const double f1 = p.f_minus + p.sigma * rng.gaussian();
      const double f2 = p.f_plus + p.sigma * rng.gaussian();
      sum_y += (std::log(std::max(f1, kLogFloor)) - std::log(std::max(f2, kLogFloor))) / p.beta;
      sum_f1 += f1;
      sum_f2 += f2;
    }
    const double nd = static_cast<double>(n);
    const double a_mle = sum_y / nd - szsq / p.beta;
    if (!(sum_f1 > 0.0 && sum_f2 > 0.0)) throw EstimatorUndefined("non-positive sample mean");
    const double a_ratio = std::log(sum_f1 / sum_f2) / p.beta;
    mle.add(a_mle);
    ratio.add(a_ratio);
    abs_diff += std::abs(a_mle - a_ratio);
  }
  const double tr = static_cast<double>(trials);
  const auto m = mle.get();
  const auto q = ratio.get();
  const double s1 = p.sigma / p.f_minus;
  const double s2 = p.sigma / p.f_plus;

  VerificationReport r;
  r.name = "repeat_estimators";
  r.n_samples = n * trials;
  r.tolerance = 0.05;
  r.empirical["mle_bias"] = m.mean - a;
  r.empirical["mle_stderr"] = std::sqrt(m.var / tr);
  r.empirical["ratio_bias"] = q.mean - a;
  r.empirical["mean_abs_diff"] = abs_diff / tr;
  r.analytic["a"] = a;
  r.analytic["mle_correction"] = szsq / p.beta;
  // Second-order bias of the linearized MLE: -(3 s1^2 + s2^2) / (2 beta).
  r.analytic["mle_bias_second_order"] = -(3.0 * s1 * s1 + s2 * s2) / (2.0 * p.beta);
  r.gate("mle_bias_std_errors", in_std_errors(m.mean - a, std::sqrt(m.var / tr)), 3.0);
  r.gate("mean_abs_diff", a == 0.0 ? abs_diff / tr : abs_diff / tr / std::abs(a), r.tolerance);
  r.finalize();
  return r;
}

void ConvergenceSpec::validate() const {
  if (!(w > 0.0)) throw DomainError("w must be > 0");
  if (x0 == x_star) throw DomainError("x0 must differ from x_star");
  if (!(a > 0.0)) throw DomainError("a must be > 0");
  if (!(snr > 0.0)) throw DomainError("snr must be > 0");
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw DomainError("epsilon must be in (0, 0.5)");
  if (!(eta > 0.0 && eta < w * std::abs(x_star - x0))) {
    throw DomainError("eta must be in (0, v0)");
  }
  if (trials == 0 || max_iters == 0) throw DomainError("trials and max_iters must be >= 1");
}

ConvergenceResult simulate_convergence(const ConvergenceSpec& s, RngStream& rng) {
  s.validate();
  const double target = s.w * s.x_star;
  const double f_star = logistic(target);
  const double z0 = s.w * s.x0;

  ConvergenceResult r;
  r.v0 = std::abs(target - z0);
  const double secant = std::abs(logistic(z0) - f_star) / r.v0;
  r.lambda = secant * s.w * s.w * std::abs(logistic_deriv(z0));
  r.n_clean_theory = (1.0 - s.eta / r.v0) / (s.a * r.lambda);

  // Iterations until |w x* - w x| <= eta with per-step rates from `rate`.
  auto run = [&](auto&& rate) -> std::uint64_t {
    double x = s.x0;
    for (std::uint64_t n = 0; n < s.max_iters; ++n) {
      if (std::abs(target - s.w * x) <= s.eta) return n;
      const double z = s.w * x;
      x -= rate() * s.w * logistic_deriv(z) * (logistic(z) - f_star);
    }
    return s.max_iters;
  };

  r.n_clean = run([&] { return s.a; });
  if (r.n_clean >= s.max_iters) {
    throw PreconditionError("clean run did not converge within max_iters");
  }
  r.r_theory = qc_ratio({s.a * r.lambda, s.eta / r.v0, s.epsilon, s.snr});
  if (std::isinf(s.snr)) {
    r.n_noisy_q = r.n_clean;
    r.r_emp = 1.0;
    return r;
  }

  const double rel_sd = 1.0 / std::sqrt(s.snr);
  std::vector<std::uint64_t> counts(s.trials);
  for (std::uint64_t t = 0; t < s.trials; ++t) {
    RngStream tr = rng.derive(fmt::format("trial-{}", t));
    counts[t] = run([&] { return s.a * (1.0 + rel_sd * tr.gaussian()); });
    if (counts[t] >= s.max_iters) ++r.capped_trials;
  }
  std::sort(counts.begin(), counts.end());
  const auto idx = static_cast<std::size_t>(
      std::ceil((1.0 - s.epsilon) * static_cast<double>(s.trials))) - 1;
  r.n_noisy_q = counts[std::min(idx, counts.size() - 1)];
  r.r_emp = static_cast<double>(r.n_noisy_q) / static_cast<double>(r.n_clean);
  return r;
}

VerificationReport verify_zoo_variance(const AutozoomNoiseParams& p, std::uint64_t n_samples,
                                   RngStream& rng) {
  p.validate();
  if (n_samples < 2) throw DomainError("n_samples must be >= 2");
  require_small_noise(p.sigma, std::min({p.f_max_x, p.f_max_xb, p.f_t_x, p.f_t_xb}));

  const double a = (std::log(p.f_max_xb / p.f_t_xb) - std::log(p.f_max_x / p.f_t_x)) / p.beta;
  RunningMoments acc;
  double sq = 0.0;
  for (std::uint64_t i = 0; i < n_samples; ++i) {
    const double v1 = p.sigma * rng.gaussian();
    const double v2 = p.sigma * rng.gaussian();
    const double v3 = p.sigma * rng.gaussian();
    const double v4 = p.sigma * rng.gaussian();
    // log Z1 Z2 with Z1 from the probe point and Z2 from the base point.
    const double dev = (log_ratio_term(p.f_max_xb, v1) - log_ratio_term(p.f_t_xb, v2) -
                        log_ratio_term(p.f_max_x, v3) + log_ratio_term(p.f_t_x, v4)) /
                       p.beta;
    acc.add(a + dev);
    sq += dev * dev;
  }
  const auto m = acc.get();
  const auto th = autozoom_variance(p);
  const double snr_emp = a * a / (sq / static_cast<double>(n_samples));

  VerificationReport r;
  r.name = "zoo_variance";
  r.n_samples = n_samples;
  r.tolerance = 0.20;
  r.empirical["variance"] = m.var;
  r.empirical["mean"] = m.mean;
  r.empirical["snr"] = snr_emp;
  r.analytic["variance"] = th.var_a;
  r.analytic["a"] = a;
  r.analytic["snr_bound"] = th.snr_bound;
  r.gate("variance", rel_err(m.var, th.var_a), r.tolerance);
  if (p.lipschitz > 0.0 && p.sigma > 0.0) r.gate("snr_over_bound", snr_emp / th.snr_bound, 1.0);
  r.finalize();
  return r;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"factor_moments", "factor_snr",      "repeat_failure",
                                                 "repeat_estimators",  "convergence", "zoo_variance"};
  return names;
}

VerificationReport run_suite(const std::string& name, std::uint64_t seed) {
  RngStream rng = RngStream(seed).derive(name);
  if (name == "factor_moments") {
    NesNoiseParams p{1e-3, 1e-3, 0.105, 0.095, 0.0};
    return verify_factor_moments(p, nes_factor(p), 1'000'000, rng);
  }
  if (name == "factor_snr") {
    // Lipschitz constant set to |df| / beta, twice the smallest consistent value.
    NesNoiseParams p{5e-4, 1e-3, 0.1005, 0.0995, 1.0};
    return verify_factor_snr(p, 1'000'000, rng);
  }
  if (name == "repeat_failure") {
    RepeatParams p{5e-6, 4e-4, 1e-3, 1.0, 0.3};
    return verify_repeat_failure(p, 10'000, rng);
  }
  if (name == "repeat_estimators") {
    NesNoiseParams p{1e-3, 1e-3, 0.105, 0.095, 0.0};
    return verify_repeat_estimators(nes_factor(p), p, 100'000, 100, rng);
  }
  if (name == "convergence") {
    ConvergenceSpec s;
    const auto c = simulate_convergence(s, rng);
    VerificationReport r;
    r.name = "convergence";
    r.n_samples = s.trials;
    r.tolerance = 3.0;
    r.empirical["n_clean"] = static_cast<double>(c.n_clean);
    r.empirical["n_noisy_q"] = static_cast<double>(c.n_noisy_q);
    r.empirical["r_emp"] = c.r_emp;
    r.analytic["r_theory"] = c.r_theory;
    r.analytic["lambda"] = c.lambda;
    r.analytic["n_clean_theory"] = c.n_clean_theory;
    r.gate("ratio_factor", std::max(c.r_emp / c.r_theory, c.r_theory / c.r_emp), 3.0);
    r.finalize();
    return r;
  }
  if (name == "zoo_variance") {
    AutozoomNoiseParams p{1e-3, 1e-3, 0.1, 0.1, 0.1, 0.1, 1.0};
    return verify_zoo_variance(p, 1'000'000, rng);
  }
  throw ConfigError(fmt::format("unknown verification suite '{}'", name));
}

}  // namespace noisefence
