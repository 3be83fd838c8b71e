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

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "noisefence/core.hpp"

namespace noisefence {

/// Row-major feature matrix plus integer labels.
struct Dataset {
  std::size_t d = 0;
  std::size_t classes = 0;
  std::vector<double> inputs;  // n * d
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> input(std::size_t i) const { return {inputs.data() + i * d, d}; }
};

enum class ModelKind { linear, mlp };

/// Softmax classifier: either z = W x + b, or z = W2 tanh(W1 x + b1) + b2.
///
/// All parameters live in one flat vector so optimizers and finite-difference
/// checks can treat them uniformly. For the linear kind only the output
/// layer (`W2`, `b2`) is present.
class Model {
 public:
  Model() = default;

  /// Zero-initialized linear-softmax model.
  static Model linear(std::size_t d, std::size_t classes);
  /// One-hidden-layer tanh model with Glorot-uniform weights and zero biases.
  static Model mlp(std::size_t d, std::size_t classes, std::size_t hidden, RngStream& rng);

  ModelKind kind() const { return kind_; }
  std::size_t d() const { return d_; }
  std::size_t classes() const { return classes_; }
  std::size_t hidden() const { return hidden_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::span<const double> w1() const { return {params_.data() + off_w1_, hidden_ * d_}; }
  std::span<const double> b1() const { return {params_.data() + off_b1_, hidden_}; }
  std::span<const double> w2() const { return {params_.data() + off_w2_, classes_ * in2()}; }
  std::span<const double> b2() const { return {params_.data() + off_b2_, classes_}; }
  std::span<double> w1() { return {params_.data() + off_w1_, hidden_ * d_}; }
  std::span<double> b1() { return {params_.data() + off_b1_, hidden_}; }
  std::span<double> w2() { return {params_.data() + off_w2_, classes_ * in2()}; }
  std::span<double> b2() { return {params_.data() + off_b2_, classes_}; }

  bool operator==(const Model&) const = default;

 private:
  Model(ModelKind kind, std::size_t d, std::size_t classes, std::size_t hidden);
  std::size_t in2() const { return kind_ == ModelKind::mlp ? hidden_ : d_; }

  ModelKind kind_ = ModelKind::linear;
  std::size_t d_ = 0;
  std::size_t classes_ = 0;
  std::size_t hidden_ = 0;
  std::size_t off_w1_ = 0, off_b1_ = 0, off_w2_ = 0, off_b2_ = 0;
  std::vector<double> params_;
};

struct TrainOptions {
  double lr = 0.1;
  std::size_t epochs = 50;
  /// 0 means full-batch gradient descent.
  std::size_t batch_size = 0;
};

struct OutputStats {
  double acc = 0.0;
  double mean_ft = 0.0;
  double mean_dft = 0.0;
  double median_dft = 0.0;
  double std_dft = 0.0;
  double beta = 0.0;
};

/// C Gaussian clusters around random unit-norm centers, mapped to [0,1]^d
/// by x -> (x + 1) / 2 and clipped. Samples are ordered class by class.
Dataset gen_blobs(std::size_t d, std::size_t classes, std::size_t n_per_class, double spread,
                  RngStream& rng);

/// Random split; the second dataset receives round(test_fraction * n) points.
std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction,
                                             RngStream& rng);

/// Numerically stable softmax.
Vec softmax(std::span<const double> z);

Vec predict(const Model& model, std::span<const double> x);
std::size_t classify(const Model& model, std::span<const double> x);
double accuracy(const Model& model, const Dataset& data);

/// Mean cross-entropy over the dataset and its gradient w.r.t. the flat
/// parameter vector.
double loss_and_gradient(const Model& model, const Dataset& data, std::span<double> grad);
double mean_loss(const Model& model, const Dataset& data);

/// Gradient descent on mean cross-entropy. Throws TrainingDiverged when the
/// loss becomes non-finite. `loss_history`, when given, receives the loss
/// before the first epoch and after each one.
Model train(Model model, const Dataset& data, const TrainOptions& opts, RngStream& rng,
            std::vector<double>* loss_history = nullptr);

/// Gradient of -log F_t(x) with respect to the input x.
Vec input_gradient_neg_log(const Model& model, std::span<const double> x, std::size_t t);

/// Largest ||F(x) - F(y)|| / ||x - y|| over `region_samples` nearby pairs
/// drawn in [0,1]^d. A lower bound on the local Lipschitz constant.
double estimate_lipschitz(const Model& model, std::size_t region_samples, RngStream& rng);

OutputStats output_stats(const Model& model, const Dataset& data, double beta,
                         std::size_t trials, RngStream& rng);

// Persistence. Models are JSON documents, datasets are CSV with one column
// per feature followed by a `label` column.
std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path, std::size_t classes = 0);

}  // namespace noisefence
