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

#include "noisefence/analytic.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "noisefence/core.hpp"
#include "noisefence/oracle.hpp"

namespace noisefence {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_prob(double f, const char* name) {
  if (!(f > 0.0 && f <= 1.0)) throw DomainError(fmt::format("{} must lie in (0, 1], got {}", name, f));
}

}  // namespace

void NesNoiseParams::validate() const {
  if (sigma < 0.0) throw DomainError("sigma must be >= 0");
  if (beta <= 0.0) throw DomainError("beta must be > 0");
  if (lipschitz < 0.0) throw DomainError("lipschitz must be >= 0");
  require_prob(f_minus, "f_minus");
  require_prob(f_plus, "f_plus");
}

double nes_factor(const NesNoiseParams& p) {
  p.validate();
  return std::log(p.f_minus / p.f_plus) / p.beta;
}

double sigma_z_sq(const NesNoiseParams& p) {
  p.validate();
  const double s2 = p.sigma * p.sigma;
  return s2 / (p.f_minus * p.f_minus) + s2 / (p.f_plus * p.f_plus);
}

double to_db(double v) {
  if (v == 0.0) return -kInf;
  return 10.0 * std::log10(v);
}

SnrResult snr_nes(const NesNoiseParams& p) {
  p.validate();
  SnrResult r;
  if (p.sigma == 0.0) {
    r.exact = r.bound = r.exact_db = r.bound_db = kInf;
    return r;
  }
  const double s2 = p.sigma * p.sigma;
  const double df = p.f_minus - p.f_plus;
  const double fm2 = p.f_minus * p.f_minus;
  r.exact = df * df * fm2 / (s2 * (fm2 + p.f_plus * p.f_plus));
  r.bound = 2.0 * p.lipschitz * p.lipschitz * p.beta * p.beta / s2;
  r.exact_db = to_db(r.exact);
  r.bound_db = to_db(r.bound);
  return r;
}

double pdf_a(double x, double a, double beta, double sigma_z) {
  if (beta <= 0.0) throw DomainError("beta must be > 0");
  if (sigma_z <= 0.0) throw DomainError("sigma_z must be > 0");
  const double z = std::exp(beta * (x - a));
  const double u = (z - 1.0) / sigma_z;
  return beta * z * std::exp(-0.5 * u * u) / (std::sqrt(2.0 * std::numbers::pi) * sigma_z);
}

double prob_a_negative(double a, double beta, double sigma_z, ProbMethod method) {
  if (beta <= 0.0) throw DomainError("beta must be > 0");
  if (sigma_z < 0.0) throw DomainError("sigma_z must be >= 0");
  if (sigma_z == 0.0) return a > 0.0 ? 0.0 : (a < 0.0 ? 1.0 : 0.5);
  if (method == ProbMethod::gaussian) return normal_cdf(-a * beta / sigma_z);
  // expm1 keeps the threshold accurate when beta a is tiny.
  return normal_cdf(std::expm1(-beta * a) / sigma_z);
}

void RatioParams::validate() const {
  if (!(a_lambda > 0.0)) throw DomainError("a_lambda must be > 0");
  if (!(eta_over_v0 >= 0.0 && eta_over_v0 < 1.0)) throw DomainError("eta_over_v0 must be in [0, 1)");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("epsilon must be in (0, 1)");
  if (!(snr > 0.0)) throw DomainError("snr must be > 0");
}

double qc_k(const RatioParams& p) {
  p.validate();
  if (std::isinf(p.snr)) return 0.0;
  return inverse_normal_cdf(p.epsilon) * std::sqrt(p.a_lambda) /
         std::sqrt(p.snr * (1.0 - p.eta_over_v0));
}

double qc_ratio(const RatioParams& p) {
  const double k = qc_k(p);
  const double root = std::sqrt(k * k + 4.0);
  // For K > 0 the difference root - K cancels; use its conjugate instead.
  const double diff = k <= 0.0 ? root - k : 4.0 / (root + k);
  return 0.25 * diff * diff;
}

void RepeatParams::validate() const {
  if (sigma < 0.0) throw DomainError("sigma must be >= 0");
  if (!(f_t > 0.0)) throw DomainError("f_t must be > 0");
  if (!(beta > 0.0)) throw DomainError("beta must be > 0");
  if (!(a > 0.0)) throw DomainError("a must be > 0");
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw DomainError("epsilon must be in (0, 0.5)");
}

RepeatResult repeated_query_n(const RepeatParams& p) {
  p.validate();
  RepeatResult r;
  r.sigma_z_sq = 2.0 * p.sigma * p.sigma / (p.f_t * p.f_t);
  const double gap = r.sigma_z_sq - p.a * p.beta;
  if (gap >= 0.0) return r;
  r.feasible = true;
  const double q = inverse_normal_cdf(p.epsilon) / std::expm1(gap);
  const double n = std::ceil(r.sigma_z_sq * q * q);
  r.n = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(n));
  return r;
}

void AutozoomNoiseParams::validate() const {
  if (sigma < 0.0) throw DomainError("sigma must be >= 0");
  if (!(beta > 0.0)) throw DomainError("beta must be > 0");
  if (lipschitz < 0.0) throw DomainError("lipschitz must be >= 0");
  require_prob(f_max_x, "f_max_x");
  require_prob(f_max_xb, "f_max_xb");
  require_prob(f_t_x, "f_t_x");
  require_prob(f_t_xb, "f_t_xb");
}

AutozoomResult autozoom_variance(const AutozoomNoiseParams& p) {
  p.validate();
  auto inv2 = [](double f) { return 1.0 / (f * f); };
  AutozoomResult r;
  r.var_a = p.sigma * p.sigma / (p.beta * p.beta) *
            (inv2(p.f_max_x) + inv2(p.f_max_xb) + inv2(p.f_t_x) + inv2(p.f_t_xb));
  r.snr_bound = p.sigma == 0.0 ? kInf
                               : p.lipschitz * p.lipschitz * p.beta * p.beta /
                                     (2.0 * p.sigma * p.sigma);
  return r;
}

double quantized_z2(double f_t_x, double f_t_xb, int q_bits) {
  require_prob(f_t_x, "f_t_x");
  require_prob(f_t_xb, "f_t_xb");
  const double q = quantize_value(f_t_x, q_bits);
  if (q != quantize_value(f_t_xb, q_bits)) {
    throw PreconditionError(
        fmt::format("{} and {} quantize to different {}-bit levels", f_t_x, f_t_xb, q_bits));
  }
  return (2.0 - q / f_t_x) / (2.0 - q / f_t_xb);
}

}  // namespace noisefence
