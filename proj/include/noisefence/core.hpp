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
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace noisefence {

using Vec = std::vector<double>;

/// Floor applied to softmax values before taking a logarithm.
inline constexpr double kLogFloor = 1e-30;

/// Default ratio threshold for the small-noise regime.
inline constexpr double kSmallNoiseThreshold = 0.1;

// Error types. Everything derives from std::runtime_error or
// std::domain_error so callers can catch broadly.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct PreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EstimatorUndefined : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Counter-based random stream.
///
/// Each draw is `mix(key + counter * golden)`, where `mix` is the SplitMix64
/// finalizer. Streams are cheap to copy; a copy replays the same sequence.
/// Child streams are keyed by hashing (key, label), so any cell of a
/// parallel experiment can be reconstructed without touching its siblings.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in the open interval (0, 1).
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double gaussian();
  void fill_gaussian(std::span<double> out, double stddev = 1.0);

  /// Random vector of unit Euclidean norm in R^d.
  Vec unit_vector(std::size_t d);

  RngStream derive(std::string_view label) const;

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Child stream of `base` for `label`. Equal inputs give equal streams.
RngStream derive_stream(const RngStream& base, std::string_view label);

/// Standard normal CDF.
double normal_cdf(double z);

/// Standard normal quantile. Throws DomainError unless 0 < p < 1.
double inverse_normal_cdf(double p);

struct SmallNoiseMargin {
  double ratio = 0.0;
  double threshold = kSmallNoiseThreshold;
  bool ok() const { return ratio <= threshold; }
};

/// Checks that sigma is small next to the smallest softmax value that
/// enters a log-ratio, which is where log(1+v) ~ v stays accurate.
SmallNoiseMargin small_noise_ok(double sigma, double min_f,
                                double threshold = kSmallNoiseThreshold);

// Small vector helpers shared by the other modules.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double cosine_similarity(std::span<const double> a, std::span<const double> b);
std::size_t argmax(std::span<const double> v);

}  // namespace noisefence
