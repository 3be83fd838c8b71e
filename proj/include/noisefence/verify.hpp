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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "noisefence/analytic.hpp"
#include "noisefence/core.hpp"

namespace noisefence {

/// Result of one Monte Carlo check.
///
/// `rel_error` holds the gated quantities and `limits` their thresholds;
/// `passed` is true iff rel_error[k] <= limits[k] for every key. `tolerance`
/// is the headline relative tolerance of the check. Anything in `empirical`
/// or `analytic` without a rel_error entry is reported only.
struct VerificationReport {
  std::string name;
  std::uint64_t n_samples = 0;
  std::map<std::string, double> empirical;
  std::map<std::string, double> analytic;
  std::map<std::string, double> rel_error;
  std::map<std::string, double> limits;
  double tolerance = 0.0;
  bool passed = false;

  void gate(const std::string& key, double error, double limit);
  /// Recomputes `passed` from rel_error and limits.
  void finalize();
};

std::string report_to_json(const VerificationReport& r, int indent = -1);

/// Samples A = a + log(Z)/beta with Z = (1 + v1/f_minus) / (1 + v2/f_plus),
/// v ~ N(0, sigma^2). Gates the mean at 3 standard errors and the variance
/// at 5%; the Kolmogorov-Smirnov distance to N(a, sigma_Z^2/beta^2) is
/// reported only. Throws PreconditionError outside the small-noise regime.
VerificationReport verify_factor_moments(const NesNoiseParams& p, double a, std::uint64_t n_samples,
                                   RngStream& rng);

/// Empirical SNR a^2 / mean((A - a)^2) against the closed form (10%), and
/// against the Lipschitz bound when p.lipschitz > 0.
VerificationReport verify_factor_snr(const NesNoiseParams& p, std::uint64_t n_samples,
                                 RngStream& rng);

/// Failure rate P[a_hat < 0] of the repeated-query estimator with n draws
/// per trial. The gate uses the sample mean of y; the linearized MLE rate is
/// reported as `failure_rate_mle`. `n_override` replaces the analytic n.
VerificationReport verify_repeat_failure(const RepeatParams& p, std::uint64_t trials, RngStream& rng,
                                   std::optional<std::uint64_t> n_override = std::nullopt);

/// MLE and ratio estimators from the same n noisy output pairs per trial.
/// Gates |mean MLE bias| <= 3 stderr and mean |mle - ratio| <= 0.05 |a|.
VerificationReport verify_repeat_estimators(double a, const NesNoiseParams& p, std::uint64_t n,
                                  std::uint64_t trials, RngStream& rng);

/// Scalar descent on f(x) = (F(w x) - F(w x*))^2 / 2 with F(z) = 1/(1+e^z).
struct ConvergenceSpec {
  double w = 1.0;
  double x0 = 0.0;
  double x_star = 0.5;
  double a = 0.016;
  double snr = 1e-2;  // +inf for a noiseless run
  double eta = 0.4;
  double epsilon = 0.01;
  std::uint64_t trials = 2000;
  std::uint64_t max_iters = 10'000'000;

  void validate() const;
};

struct ConvergenceResult {
  std::uint64_t n_clean = 0;
  std::uint64_t n_noisy_q = 0;
  double r_emp = 1.0;
  double r_theory = 1.0;
  double lambda = 0.0;
  double v0 = 0.0;
  /// (1 - eta/v0) / (a lambda), the linearized clean iteration count.
  double n_clean_theory = 0.0;
  std::uint64_t capped_trials = 0;
};

/// Noisy runs use A_i = a (1 + g_i / sqrt(snr)), so Var(A)/a^2 = 1/snr.
/// lambda = L w^2 |F'(w x0)| with L the secant slope of F between w x0 and
/// w x*. Throws PreconditionError if the clean run does not converge.
ConvergenceResult simulate_convergence(const ConvergenceSpec& spec, RngStream& rng);

/// ZOO factor variance against the four-term closed form (20%), and the
/// empirical SNR against L^2 beta^2 / (2 sigma^2) when p.lipschitz > 0.
VerificationReport verify_zoo_variance(const AutozoomNoiseParams& p, std::uint64_t n_samples,
                                   RngStream& rng);

/// Names accepted by run_suite, in execution order.
const std::vector<std::string>& suite_names();

/// Runs one named suite with its built-in parameters. Throws ConfigError
/// for an unknown name.
VerificationReport run_suite(const std::string& name, std::uint64_t seed);

}  // namespace noisefence
