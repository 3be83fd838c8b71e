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

#include "noisefence/core.hpp"

using namespace noisefence;

TEST_CASE("inverse_normal_cdf reference values") {
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(inverse_normal_cdf(0.01) == doctest::Approx(-2.3263478740).epsilon(1e-9));
  CHECK(inverse_normal_cdf(0.3) == doctest::Approx(-0.5244005127).epsilon(1e-9));
}

TEST_CASE("inverse_normal_cdf round-trips through the CDF") {
  for (double lp = -6.0; lp <= -0.31; lp += 0.05) {
    const double p = std::pow(10.0, lp);
    CHECK(std::abs(normal_cdf(inverse_normal_cdf(p)) - p) <= 1e-8);
    CHECK(std::abs(normal_cdf(inverse_normal_cdf(1.0 - p)) - (1.0 - p)) <= 1e-8);
  }
}

TEST_CASE("inverse_normal_cdf rejects p outside (0,1)") {
  CHECK_THROWS_AS(inverse_normal_cdf(0.0), DomainError);
  CHECK_THROWS_AS(inverse_normal_cdf(1.0), DomainError);
  CHECK_THROWS_AS(inverse_normal_cdf(-0.2), DomainError);
  CHECK_THROWS_AS(inverse_normal_cdf(std::nan("")), DomainError);
}

TEST_CASE("derived streams are reproducible and separated") {
  const RngStream a(1), b(2);
  auto c0 = derive_stream(a, "cell-0");
  auto c0_again = derive_stream(a, "cell-0");
  auto c1 = derive_stream(a, "cell-1");
  auto other_seed = derive_stream(b, "x");
  auto same_label = derive_stream(a, "x");

  bool all_equal = true, any_equal = false, seed_differs = false;
  for (int i = 0; i < 100; ++i) {
    const double g0 = c0.gaussian();
    all_equal = all_equal && g0 == c0_again.gaussian();
    any_equal = any_equal || g0 == c1.gaussian();
    seed_differs = seed_differs || same_label.gaussian() != other_seed.gaussian();
  }
  CHECK(all_equal);
  CHECK_FALSE(any_equal);
  CHECK(seed_differs);
}

TEST_CASE("copied streams replay the same sequence") {
  RngStream r(42);
  r.next_u64();
  RngStream copy = r;
  for (int i = 0; i < 10; ++i) CHECK(r.uniform() == copy.uniform());
}

TEST_CASE("uniform draws stay inside (0,1) and gaussians have unit moments") {
  RngStream r(3);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    const double g = r.gaussian();
    s += g;
    s2 += g * g;
  }
  CHECK(std::abs(s / n) < 5.0 / std::sqrt(n));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("below stays in range") {
  RngStream r(9);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[r.below(7)];
  for (int h : hits) CHECK(h > 800);
}

TEST_CASE("unit_vector has unit norm") {
  RngStream r(5);
  for (int i = 0; i < 20; ++i) CHECK(norm2(r.unit_vector(17)) == doctest::Approx(1.0));
}

TEST_CASE("small_noise_ok follows the 0.1 ratio rule") {
  auto m = small_noise_ok(0.0, 0.1);
  CHECK(m.ratio == 0.0);
  CHECK(m.ok());
  m = small_noise_ok(0.01, 0.1);
  CHECK(m.ratio == doctest::Approx(0.1));
  CHECK(m.ok());
  m = small_noise_ok(0.01, 0.001);
  CHECK(m.ratio == doctest::Approx(10.0));
  CHECK_FALSE(m.ok());
  CHECK_THROWS_AS(small_noise_ok(0.01, 0.0), DomainError);
}

TEST_CASE("vector helpers") {
  const Vec a{1.0, 0.0, 0.0}, b{0.0, 2.0, 0.0};
  CHECK(dot(a, b) == 0.0);
  CHECK(norm2(b) == 2.0);
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(argmax(Vec{0.1, 0.7, 0.2}) == 1);
}
