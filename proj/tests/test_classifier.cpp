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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "noisefence/classifier.hpp"

using namespace noisefence;

namespace {

Model trained_linear(const Dataset& data, std::size_t epochs, std::uint64_t seed = 11) {
  RngStream rng(seed);
  return train(Model::linear(data.d, data.classes), data, {0.5, epochs, 0}, rng);
}

}  // namespace

TEST_CASE("gen_blobs shapes, range and determinism") {
  RngStream r1(4), r2(4);
  const auto a = gen_blobs(5, 3, 20, 0.1, r1);
  const auto b = gen_blobs(5, 3, 20, 0.1, r2);
  CHECK(a.size() == 60);
  CHECK(a.inputs.size() == 300);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  for (double v : a.inputs) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (auto l : a.labels) CHECK(l < 3);
  RngStream bad(1);
  CHECK_THROWS_AS(gen_blobs(1, 3, 5, 0.1, bad), DomainError);
  CHECK_THROWS_AS(gen_blobs(3, 1, 5, 0.1, bad), DomainError);
  CHECK_THROWS_AS(gen_blobs(3, 3, 5, 0.0, bad), DomainError);
}

TEST_CASE("separable blobs are learned, overlapping ones are not") {
  RngStream r(21);
  const auto easy = gen_blobs(2, 2, 50, 0.05, r);
  CHECK(accuracy(trained_linear(easy, 300), easy) >= 0.99);
  const auto hard = gen_blobs(2, 2, 50, 10.0, r);
  CHECK(accuracy(trained_linear(hard, 300), hard) <= 0.8);
}

TEST_CASE("linear model on separable 8-d, 10-class blobs") {
  RngStream r(5);
  const auto data = gen_blobs(8, 10, 40, 0.05, r);
  const Model m = trained_linear(data, 500);
  CHECK(accuracy(m, data) >= 0.95);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < data.size(); ++i) agree += classify(m, data.input(i)) == data.labels[i];
  CHECK(agree >= data.size() * 95 / 100);
}

TEST_CASE("training with zero epochs or zero lr is the identity") {
  RngStream r(2);
  const auto data = gen_blobs(4, 3, 10, 0.2, r);
  RngStream init(3);
  const Model m = Model::mlp(4, 3, 5, init);
  RngStream t1(1), t2(1);
  CHECK(train(m, data, {0.1, 0, 0}, t1) == m);
  CHECK(train(m, data, {0.0, 10, 0}, t2) == m);
}

TEST_CASE("training loss is non-increasing within 5% jitter") {
  RngStream r(8);
  const auto data = gen_blobs(6, 4, 30, 0.3, r);
  RngStream init(1), tr(2);
  std::vector<double> hist;
  train(Model::mlp(6, 4, 8, init), data, {0.1, 60, 16}, tr, &hist);
  REQUIRE(hist.size() == 61);
  for (std::size_t i = 1; i < hist.size(); ++i) CHECK(hist[i] <= hist[i - 1] * 1.05);
  CHECK(hist.back() < hist.front());
}

TEST_CASE("divergent training throws") {
  // Overlapping classes keep the gradient from vanishing, so the weights overflow.
  RngStream r(8);
  const auto data = gen_blobs(6, 4, 30, 5.0, r);
  RngStream init(1), tr(2);
  CHECK_THROWS_AS(train(Model::linear(6, 4), data, {1e308, 200, 0}, tr), TrainingDiverged);
}

TEST_CASE("predict returns a normalized distribution") {
  const Model zero = Model::linear(5, 4);
  const Vec p0 = predict(zero, Vec(5, 0.3));
  for (double v : p0) CHECK(v == doctest::Approx(0.25));

  RngStream init(6), xs(7);
  const Model m = Model::mlp(5, 4, 7, init);
  Vec x(5);
  for (int k = 0; k < 1000; ++k) {
    for (auto& v : x) v = xs.uniform();
    const Vec p = predict(m, x);
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    REQUIRE(std::abs(s - 1.0) <= 1e-9);
    for (double v : p) REQUIRE(v > 0.0);
  }
}

TEST_CASE("softmax is stable for large logits") {
  const Vec p = softmax(Vec{1000.0, 1000.0, -1000.0});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[2] == 0.0);
}

TEST_CASE("analytic parameter gradient matches central differences") {
  RngStream r(12);
  const auto data = gen_blobs(5, 3, 8, 0.3, r);
  RngStream init(13);
  Model m = Model::mlp(5, 3, 6, init);
  Vec grad(m.params().size());
  loss_and_gradient(m, data, grad);
  RngStream pick(14);
  for (int k = 0; k < 20; ++k) {
    const std::size_t i = pick.below(grad.size());
    const double h = 1e-5;
    const double orig = m.params()[i];
    m.params()[i] = orig + h;
    const double lp = mean_loss(m, data);
    m.params()[i] = orig - h;
    const double lm = mean_loss(m, data);
    m.params()[i] = orig;
    const double fd = (lp - lm) / (2 * h);
    CHECK(std::abs(fd - grad[i]) <= 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("input gradient of -log F_t matches central differences") {
  RngStream init(3);
  const Model m = Model::mlp(6, 4, 5, init);
  const Vec x{0.2, 0.4, 0.6, 0.8, 0.1, 0.9};
  const Vec g = input_gradient_neg_log(m, x, 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += 1e-6;
    xm[i] -= 1e-6;
    const double fd = (-std::log(predict(m, xp)[2]) + std::log(predict(m, xm)[2])) / 2e-6;
    CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("estimate_lipschitz") {
  RngStream r1(1);
  CHECK(estimate_lipschitz(Model::linear(4, 3), 50, r1) == 0.0);

  RngStream init(2);
  const Model m = Model::mlp(4, 3, 6, init);
  RngStream a(5), b(5);
  // Same stream prefix, so the longer run sees a superset of pairs.
  CHECK(estimate_lipschitz(m, 200, b) >= estimate_lipschitz(m, 50, a));
  RngStream c(1);
  CHECK_THROWS(estimate_lipschitz(m, 1, c));
}

TEST_CASE("estimate_lipschitz is within 2x of the linear-softmax Jacobian bound") {
  Model m = Model::linear(3, 2);
  auto w = m.w2();
  // Row 0 = (4, 0, 0), row 1 = 0: F_0 = sigmoid(4 x_0).
  w[0] = 4.0;
  RngStream r(9);
  const double est = estimate_lipschitz(m, 5000, r);
  // ||dF/dx|| = sqrt(2) * 4 * s(1-s) <= sqrt(2).
  const double bound = std::sqrt(2.0) * 4.0 * 0.25;
  CHECK(est <= bound * 1.0001);
  CHECK(est >= bound / 2.0);
}

TEST_CASE("output_stats on a constant model and on a trained one") {
  RngStream r(30);
  const auto data = gen_blobs(8, 10, 30, 0.2, r);
  RngStream s0(1);
  const auto zero = output_stats(Model::linear(8, 10), data, 1e-3, 200, s0);
  CHECK(zero.mean_dft == 0.0);
  CHECK(zero.mean_ft == doctest::Approx(0.1).epsilon(1e-12));

  RngStream init(2), tr(3);
  const Model m = train(Model::mlp(8, 10, 16, init), data, {0.5, 150, 32}, tr);
  RngStream s1(4), s2(4), lr(5);
  const auto st = output_stats(m, data, 1e-3, 500, s1);
  const auto again = output_stats(m, data, 1e-3, 500, s2);
  CHECK(st.mean_dft == again.mean_dft);
  CHECK(st.mean_ft > 0.0);
  CHECK(st.mean_ft < 0.5);
  CHECK(st.median_dft <= st.mean_dft);
  CHECK(st.mean_dft <= 2.0 * 1e-3 * estimate_lipschitz(m, 5000, lr));
  CHECK(st.beta == 1e-3);
}

TEST_CASE("model and dataset persistence round-trip") {
  RngStream init(2);
  const Model m = Model::mlp(3, 4, 5, init);
  CHECK(model_from_json(model_to_json(m)) == m);
  CHECK(model_from_json(model_to_json(Model::linear(3, 2))) == Model::linear(3, 2));

  const auto dir = std::filesystem::temp_directory_path() / "noisefence_persist_test";
  std::filesystem::create_directories(dir);
  save_model(m, dir / "m.json");
  CHECK(load_model(dir / "m.json") == m);

  RngStream r(3);
  const auto data = gen_blobs(3, 4, 5, 0.1, r);
  save_dataset(data, dir / "d.csv");
  const auto back = load_dataset(dir / "d.csv", 4);
  CHECK(back.labels == data.labels);
  REQUIRE(back.inputs.size() == data.inputs.size());
  for (std::size_t i = 0; i < data.inputs.size(); ++i) CHECK(back.inputs[i] == data.inputs[i]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed model JSON is rejected") {
  CHECK_THROWS(model_from_json("{\"kind\": \"mlp\"}"));
  CHECK_THROWS(model_from_json("not json"));
}
