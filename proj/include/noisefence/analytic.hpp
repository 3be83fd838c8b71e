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

namespace noisefence {

/// Inputs for the antithetic NES factor under white output noise.
struct NesNoiseParams {
  double sigma = 0.0;
  double beta = 1e-3;
  double f_minus = 0.0;  // F_t(x - beta u)
  double f_plus = 0.0;   // F_t(x + beta u)
  double lipschitz = 0.0;

  void validate() const;
};

/// Noiseless factor a = log(f_minus / f_plus) / beta.
double nes_factor(const NesNoiseParams& p);

/// Variance of the ratio noise Z: sigma^2/f_minus^2 + sigma^2/f_plus^2.
double sigma_z_sq(const NesNoiseParams& p);

struct SnrResult {
  double exact = 0.0;
  double bound = 0.0;
  double exact_db = 0.0;
  double bound_db = 0.0;
};

/// SNR of the noisy factor A. sigma = 0 gives +inf everywhere.
SnrResult snr_nes(const NesNoiseParams& p);

/// 10 log10(v); +inf maps to +inf and 0 to -inf.
double to_db(double v);

/// Density of A = a + log(Z) / beta with Z ~ N(1, sigma_z^2).
double pdf_a(double x, double a, double beta, double sigma_z);

enum class ProbMethod { exact, gaussian };

/// P[A < 0]. `exact` uses Z < exp(-beta a); `gaussian` uses Phi(-a beta / sigma_z).
double prob_a_negative(double a, double beta, double sigma_z, ProbMethod method);

struct RatioParams {
  double a_lambda = 0.2;
  double eta_over_v0 = 0.01;
  double epsilon = 0.01;
  double snr = 1.0;  // may be +inf

  void validate() const;
};

/// K = Phi^-1(eps) sqrt(a lambda) / sqrt(snr (1 - eta/v0)).
double qc_k(const RatioParams& p);

/// Ratio of noisy to noiseless query counts, R = (sqrt(K^2 + 4) - K)^2 / 4.
double qc_ratio(const RatioParams& p);

struct RepeatParams {
  double sigma = 0.0;
  double f_t = 4e-4;
  double beta = 1e-3;
  double a = 1.0;
  double epsilon = 0.3;

  void validate() const;
};

struct RepeatResult {
  bool feasible = false;
  std::optional<std::uint64_t> n;
  double sigma_z_sq = 0.0;
};

/// Number of repeated queries that keeps P[a_hat < 0] below epsilon.
/// Infeasible when sigma_Z^2 >= a beta. Returns n >= 1 when feasible.
RepeatResult repeated_query_n(const RepeatParams& p);

struct AutozoomNoiseParams {
  double sigma = 0.0;
  double beta = 1e-3;
  double f_max_x = 0.0;
  double f_max_xb = 0.0;
  double f_t_x = 0.0;
  double f_t_xb = 0.0;
  double lipschitz = 0.0;

  void validate() const;
};

struct AutozoomResult {
  double var_a = 0.0;
  double snr_bound = 0.0;
};

AutozoomResult autozoom_variance(const AutozoomNoiseParams& p);

/// Z2 = (2 - Q/f_t_x) / (2 - Q/f_t_xb) with Q the shared quantized level.
/// Throws PreconditionError if the two values quantize to different levels.
double quantized_z2(double f_t_x, double f_t_xb, int q_bits);

}  // namespace noisefence
