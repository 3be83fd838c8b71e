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

#include <doctest.h>

#include <cmath>
#include <limits>

#include "noisefence/analytic.hpp"
#include "noisefence/core.hpp"

using namespace noisefence;

namespace {

RatioParams ratio(double snr) { return {0.2, 0.01, 0.01, snr}; }

RepeatParams mnist_repeat(double sigma) { return {sigma, 4e-4, 1e-3, 1.0, 0.3}; }

}  // namespace

TEST_CASE("sigma_z_sq") {
  CHECK(sigma_z_sq({0.0, 1e-3, 0.1, 0.1, 0.0}) == 0.0);
  CHECK(sigma_z_sq({0.01, 1e-3, 1e-3, 1e-3, 0.0}) == doctest::Approx(200.0));
  CHECK(sigma_z_sq({1e-3, 1e-3, 0.105, 0.095, 0.0}) == doctest::Approx(2.015e-4).epsilon(1e-3));
  CHECK_THROWS_AS(sigma_z_sq({1e-3, 1e-3, 0.0, 0.1, 0.0}), DomainError);
  CHECK_THROWS_AS(sigma_z_sq({1e-3, 0.0, 0.1, 0.1, 0.0}), DomainError);
}

TEST_CASE("nes_factor") {
  CHECK(nes_factor({0.0, 1e-3, 0.105, 0.095, 0.0}) == doctest::Approx(100.08).epsilon(1e-4));
  CHECK(nes_factor({0.0, 1e-3, 0.2, 0.2, 0.0}) == 0.0);
}

TEST_CASE("snr_nes") {
  CHECK(snr_nes({0.01, 1e-3, 0.3, 0.3, 1.0}).exact == 0.0);

  const double f = 4e-4;
  const auto mnist = snr_nes({0.01, 1e-3, f + 2.5e-6, f - 2.5e-6, 0.0});
  CHECK(mnist.exact == doctest::Approx(1.25e-7).epsilon(0.01));
  CHECK(mnist.exact_db == doctest::Approx(-69.0).epsilon(0.01));

  // dF = 2e-4 with F_minus ~ F_plus gives dF^2 / (2 sigma^2).
  const auto close = snr_nes({0.01, 1e-3, 0.05 + 1e-4, 0.05 - 1e-4, 0.0});
  CHECK(close.exact == doctest::Approx(2.0e-4).epsilon(0.01));
  CHECK(close.exact_db == doctest::Approx(-37.0).epsilon(0.01));
  CHECK(qc_ratio(ratio(close.exact)) == doctest::Approx(5.5e3).epsilon(0.05));

  const auto inf = snr_nes({0.0, 1e-3, 0.2, 0.1, 1.0});
  CHECK(std::isinf(inf.exact));
  CHECK(std::isinf(inf.bound));
}

TEST_CASE("snr_nes exact stays below the Lipschitz bound") {
  RngStream rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double beta = 1e-3, L = 0.1 + rng.uniform();
    const double f = 0.05 + 0.5 * rng.uniform();
    const double df = (2.0 * rng.uniform() - 1.0) * 2.0 * beta * L;
    const double sigma = 1e-4 * (1.0 + rng.uniform());
    const auto r = snr_nes({sigma, beta, f + df / 2, f - df / 2, L});
    CHECK(r.exact <= r.bound * (1.0 + 1e-12));
  }
}

TEST_CASE("to_db") {
  CHECK(to_db(1.0) == 0.0);
  CHECK(to_db(1e-3) == doctest::Approx(-30.0));
  CHECK(std::isinf(to_db(0.0)));
}

TEST_CASE("pdf_a integrates to one with its mode near a") {
  const double a = 3.0, beta = 1e-3, sz = 0.01;
  const double half = 20.0 * sz / beta;
  const int n = 200000;
  const double h = 2.0 * half / n;
  double integral = 0.0, best = -1.0, mode = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = a - half + i * h;
    const double p = pdf_a(x, a, beta, sz);
    integral += (i == 0 || i == n ? 0.5 : 1.0) * p * h;
    if (p > best) {
      best = p;
      mode = x;
    }
  }
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(std::abs(mode - a) <= sz / beta);
  CHECK_THROWS_AS(pdf_a(0.0, 0.0, 1e-3, 0.0), DomainError);
}

TEST_CASE("pdf_a agrees with a histogram of sampled factors") {
  const double a = 1.0, beta = 1e-3, sz = 0.02;
  const double w = sz / beta;
  RngStream rng(2);
  const int n = 1000000, bins = 40;
  const double lo = a - 3.0 * w, hi = a + 3.0 * w, bw = (hi - lo) / bins;
  std::vector<double> counts(bins, 0.0);
  int inside = 0;
  for (int i = 0; i < n; ++i) {
    const double x = a + std::log(1.0 + sz * rng.gaussian()) / beta;
    if (x < lo || x >= hi) continue;
    counts[static_cast<int>((x - lo) / bw)] += 1.0;
    ++inside;
  }
  double chi2 = 0.0;
  for (int b = 0; b < bins; ++b) {
    // Simpson's rule over the bin.
    const double x0 = lo + b * bw;
    const double mass = bw / 6.0 * (pdf_a(x0, a, beta, sz) + 4.0 * pdf_a(x0 + bw / 2, a, beta, sz) +
                                     pdf_a(x0 + bw, a, beta, sz));
    const double expected = mass * n;
    chi2 += (counts[b] - expected) * (counts[b] - expected) / expected;
  }
  CHECK(inside > 0.99 * n);
  // 39 degrees of freedom; the 0.99 quantile is 62.4.
  CHECK(chi2 < 62.4);
}

TEST_CASE("prob_a_negative") {
  CHECK(prob_a_negative(0.0, 1e-3, 0.1, ProbMethod::exact) == doctest::Approx(0.5));
  CHECK(prob_a_negative(0.0, 1e-3, 0.1, ProbMethod::gaussian) == doctest::Approx(0.5));
  const double sz = std::sqrt(2e-4);
  CHECK(prob_a_negative(1.0, 1e-3, sz, ProbMethod::exact) == doctest::Approx(0.472).epsilon(1e-3));
  CHECK(prob_a_negative(1.0, 1e-3, sz, ProbMethod::gaussian) == doctest::Approx(0.4718).epsilon(1e-3));
  CHECK(prob_a_negative(1.0, 1e-3, std::sqrt(2.0) * 1e-6 / 0.1, ProbMethod::exact) < 1e-300);
  CHECK(prob_a_negative(2.0, 1e-3, 0.0, ProbMethod::exact) == 0.0);
  CHECK(prob_a_negative(-2.0, 1e-3, 0.0, ProbMethod::exact) == 1.0);
  CHECK(prob_a_negative(0.0, 1e-3, 0.0, ProbMethod::gaussian) == 0.5);
}

TEST_CASE("prob_a_negative methods agree for small noise") {
  for (double a : {-50.0, -1.0, 0.5, 10.0, 80.0}) {
    for (double sz : {1e-4, 1e-3, 1e-2, 0.1}) {
      const double beta = 1e-3;
      if (sz * std::max(1.0, std::abs(a) * beta) > 0.1) continue;
      const double e = prob_a_negative(a, beta, sz, ProbMethod::exact);
      const double g = prob_a_negative(a, beta, sz, ProbMethod::gaussian);
      CHECK(std::abs(e - g) <= 0.01);
    }
  }
}

TEST_CASE("qc_ratio reproduces the reference ratios") {
  CHECK(qc_ratio(ratio(std::numeric_limits<double>::infinity())) == 1.0);
  CHECK(qc_ratio(ratio(1e30)) == doctest::Approx(1.0));
  CHECK(qc_ratio(ratio(1.25e-7)) == doctest::Approx(8.7e6).epsilon(0.02));
  CHECK(qc_ratio(ratio(2.0e-4)) == doctest::Approx(5.5e3).epsilon(0.02));
  CHECK(qc_ratio(ratio(1.25e-11)) == doctest::Approx(8.7e10).epsilon(0.02));
  CHECK(qc_k(ratio(1.0)) < 0.0);
  CHECK_THROWS_AS(qc_ratio({0.2, 1.0, 0.01, 1.0}), DomainError);
  CHECK_THROWS_AS(qc_ratio({0.2, 0.01, 0.01, 0.0}), DomainError);
}

TEST_CASE("qc_ratio is at least one and decreasing in snr") {
  double prev = std::numeric_limits<double>::infinity();
  for (double lg = -14.0; lg <= 6.0; lg += 0.25) {
    const double r = qc_ratio(ratio(std::pow(10.0, lg)));
    CHECK(r >= 1.0);
    CHECK(r < prev);
    prev = r;
  }
  for (double eps : {0.001, 0.1, 0.3, 0.49}) CHECK(qc_ratio({0.2, 0.01, eps, 1e-3}) >= 1.0);
}

TEST_CASE("log qc_ratio grows with slope 2 in log sigma") {
  const double df = 5e-6, f = 4e-4;
  std::vector<double> xs, ys;
  for (double sigma : {1e-3, 2e-3, 5e-3, 1e-2, 2e-2}) {
    const double snr = snr_nes({sigma, 1e-3, f + df / 2, f - df / 2, 0.0}).exact;
    xs.push_back(std::log(sigma));
    ys.push_back(std::log(qc_ratio(ratio(snr))));
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope == doctest::Approx(2.0).epsilon(0.05));
  CHECK(ys[3] - ys[1] == doctest::Approx(2.0 * std::log(5.0)).epsilon(0.01));
}

TEST_CASE("repeated_query_n") {
  auto r = repeated_query_n(mnist_repeat(1e-6));
  REQUIRE(r.feasible);
  CHECK(*r.n == 4);
  r = repeated_query_n(mnist_repeat(5e-6));
  REQUIRE(r.feasible);
  CHECK(*r.n == 182);
  for (double s : {1e-4, 1e-3, 1e-2, 0.1}) {
    r = repeated_query_n(mnist_repeat(s));
    CHECK_FALSE(r.feasible);
    CHECK_FALSE(r.n.has_value());
  }
  r = repeated_query_n(mnist_repeat(0.0));
  REQUIRE(r.feasible);
  CHECK(*r.n == 1);
  CHECK_THROWS_AS(repeated_query_n({1e-6, 4e-4, 1e-3, 1.0, 0.5}), DomainError);
}

TEST_CASE("repeated_query_n grows with sigma while feasible") {
  std::uint64_t prev = 0;
  for (double s = 1e-7; s < 1e-4; s *= 1.2) {
    const auto r = repeated_query_n(mnist_repeat(s));
    if (!r.feasible) break;
    CHECK(*r.n >= prev);
    prev = *r.n;
  }
  CHECK(prev > 182);
}

TEST_CASE("autozoom_variance") {
  CHECK(autozoom_variance({0.0, 1e-3, 0.5, 0.5, 0.1, 0.1, 1.0}).var_a == 0.0);
  const auto r = autozoom_variance({0.01, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 2.0});
  CHECK(r.var_a == doctest::Approx(4e8));
  CHECK(r.snr_bound == doctest::Approx(4.0 * 1e-6 / (2.0 * 1e-4)));
  CHECK(std::isinf(autozoom_variance({0.0, 1e-3, 0.5, 0.5, 0.1, 0.1, 1.0}).snr_bound));
}

TEST_CASE("quantized_z2") {
  CHECK(quantized_z2(0.3, 0.3, 2) == 1.0);
  CHECK(quantized_z2(0.30, 0.31, 2) == doctest::Approx(0.96124).epsilon(1e-3));
  const double first = quantized_z2(0.42, 0.44, 3);
  for (int k = 0; k < 100; ++k) CHECK(quantized_z2(0.42, 0.44, 3) == first);
  CHECK_THROWS_AS(quantized_z2(0.1, 0.5, 2), PreconditionError);
}
