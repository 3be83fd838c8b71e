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

#include "noisefence/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace noisefence {

Model::Model(ModelKind kind, std::size_t d, std::size_t classes, std::size_t hidden)
    : kind_(kind), d_(d), classes_(classes), hidden_(kind == ModelKind::mlp ? hidden : 0) {
  if (d == 0 || classes < 2) throw DomainError("Model: need d >= 1 and at least 2 classes");
  if (kind == ModelKind::mlp && hidden == 0) throw DomainError("Model: mlp needs hidden > 0");
  off_w1_ = 0;
  off_b1_ = off_w1_ + hidden_ * d_;
  off_w2_ = off_b1_ + hidden_;
  off_b2_ = off_w2_ + classes_ * in2();
  params_.assign(off_b2_ + classes_, 0.0);
}

Model Model::linear(std::size_t d, std::size_t classes) {
  return Model(ModelKind::linear, d, classes, 0);
}

Model Model::mlp(std::size_t d, std::size_t classes, std::size_t hidden, RngStream& rng) {
  Model m(ModelKind::mlp, d, classes, hidden);
  const double r1 = std::sqrt(6.0 / static_cast<double>(d + hidden));
  for (double& w : m.w1()) w = r1 * (2.0 * rng.uniform() - 1.0);
  const double r2 = std::sqrt(6.0 / static_cast<double>(hidden + classes));
  for (double& w : m.w2()) w = r2 * (2.0 * rng.uniform() - 1.0);
  return m;
}

namespace {

// Forward pass keeping the hidden activations for backprop.
struct Forward {
  Vec hidden;  // tanh activations (mlp only)
  Vec probs;
};

Forward forward(const Model& m, std::span<const double> x) {
  Forward f;
  std::span<const double> feat = x;
  if (m.kind() == ModelKind::mlp) {
    const auto w1 = m.w1();
    const auto b1 = m.b1();
    f.hidden.resize(m.hidden());
    for (std::size_t j = 0; j < m.hidden(); ++j) {
      f.hidden[j] = std::tanh(b1[j] + dot(w1.subspan(j * m.d(), m.d()), x));
    }
    feat = f.hidden;
  }
  const auto w2 = m.w2();
  const auto b2 = m.b2();
  Vec z(m.classes());
  for (std::size_t c = 0; c < m.classes(); ++c) {
    z[c] = b2[c] + dot(w2.subspan(c * feat.size(), feat.size()), feat);
  }
  f.probs = softmax(z);
  return f;
}

// Accumulates d(-log p_y)/d(theta) into grad, scaled by `scale`.
void backward(const Model& m, std::span<const double> x, const Forward& f, std::size_t y,
              double scale, std::span<double> grad) {
  const std::size_t C = m.classes();
  Vec dz(f.probs);
  dz[y] -= 1.0;
  // Offsets into the flat gradient mirror Model's layout.
  const std::size_t off_w1 = 0;
  const std::size_t off_b1 = m.hidden() * m.d();
  const std::size_t off_w2 = off_b1 + m.hidden();
  const bool mlp = m.kind() == ModelKind::mlp;
  const std::span<const double> feat = mlp ? std::span<const double>(f.hidden) : x;
  const std::size_t nf = feat.size();
  const std::size_t off_b2 = off_w2 + C * nf;

  for (std::size_t c = 0; c < C; ++c) {
    const double g = scale * dz[c];
    double* row = grad.data() + off_w2 + c * nf;
    for (std::size_t k = 0; k < nf; ++k) row[k] += g * feat[k];
    grad[off_b2 + c] += g;
  }
  if (!mlp) return;

  const auto w2 = m.w2();
  for (std::size_t j = 0; j < m.hidden(); ++j) {
    double dh = 0.0;
    for (std::size_t c = 0; c < C; ++c) dh += w2[c * nf + j] * dz[c];
    const double dpre = scale * dh * (1.0 - f.hidden[j] * f.hidden[j]);
    double* row = grad.data() + off_w1 + j * m.d();
    for (std::size_t k = 0; k < m.d(); ++k) row[k] += dpre * x[k];
    grad[off_b1 + j] += dpre;
  }
}

void check_shapes(const Model& m, const Dataset& data) {
  if (m.d() != data.d || m.classes() < data.classes) {
    throw DomainError(fmt::format("shape mismatch: model d={} C={}, data d={} C={}", m.d(),
                                  m.classes(), data.d, data.classes));
  }
}

}  // namespace

Dataset gen_blobs(std::size_t d, std::size_t classes, std::size_t n_per_class, double spread,
                  RngStream& rng) {
  if (d < 2 || classes < 2 || !(spread > 0.0)) {
    throw DomainError("gen_blobs: need d >= 2, classes >= 2, spread > 0");
  }
  std::vector<Vec> centers;
  centers.reserve(classes);
  for (std::size_t c = 0; c < classes; ++c) centers.push_back(rng.unit_vector(d));

  Dataset data;
  data.d = d;
  data.classes = classes;
  data.inputs.reserve(classes * n_per_class * d);
  data.labels.reserve(classes * n_per_class);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        const double raw = centers[c][k] + spread * rng.gaussian();
        data.inputs.push_back(std::clamp(0.5 * (raw + 1.0), 0.0, 1.0));
      }
      data.labels.push_back(c);
    }
  }
  return data;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction,
                                             RngStream& rng) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * data.size()));

  Dataset train{data.d, data.classes, {}, {}};
  Dataset test{data.d, data.classes, {}, {}};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    Dataset& dst = r < n_test ? test : train;
    const auto x = data.input(idx[r]);
    dst.inputs.insert(dst.inputs.end(), x.begin(), x.end());
    dst.labels.push_back(data.labels[idx[r]]);
  }
  return {std::move(train), std::move(test)};
}

Vec softmax(std::span<const double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  Vec p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

Vec predict(const Model& model, std::span<const double> x) { return forward(model, x).probs; }

std::size_t classify(const Model& model, std::span<const double> x) {
  return argmax(predict(model, x));
}

double accuracy(const Model& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (classify(model, data.input(i)) == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double loss_and_gradient(const Model& model, const Dataset& data, std::span<double> grad) {
  check_shapes(model, data);
  std::fill(grad.begin(), grad.end(), 0.0);
  const double scale = 1.0 / static_cast<double>(data.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.input(i);
    const Forward f = forward(model, x);
    loss -= std::log(std::max(f.probs[data.labels[i]], kLogFloor));
    backward(model, x, f, data.labels[i], scale, grad);
  }
  return loss * scale;
}

double mean_loss(const Model& model, const Dataset& data) {
  check_shapes(model, data);
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    loss -= std::log(std::max(predict(model, data.input(i))[data.labels[i]], kLogFloor));
  }
  return loss / static_cast<double>(data.size());
}

Model train(Model model, const Dataset& data, const TrainOptions& opts, RngStream& rng,
            std::vector<double>* loss_history) {
  check_shapes(model, data);
  if (loss_history) loss_history->assign(1, mean_loss(model, data));
  if (opts.epochs == 0 || opts.lr == 0.0 || data.size() == 0) return model;

  const std::size_t n = data.size();
  const std::size_t batch = (opts.batch_size == 0 || opts.batch_size > n) ? n : opts.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Vec grad(model.params().size());

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    if (batch < n) {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = 0.0;
      for (std::size_t r = start; r < stop; ++r) {
        const std::size_t i = order[r];
        const auto x = data.input(i);
        const Forward f = forward(model, x);
        loss -= std::log(std::max(f.probs[data.labels[i]], kLogFloor));
        backward(model, x, f, data.labels[i], scale, grad);
      }
      if (!std::isfinite(loss)) {
        throw TrainingDiverged(fmt::format("training diverged at epoch {}", epoch));
      }
      auto theta = model.params();
      for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= opts.lr * grad[k];
    }
    if (loss_history) {
      const double l = mean_loss(model, data);
      if (!std::isfinite(l)) {
        throw TrainingDiverged(fmt::format("training diverged at epoch {}", epoch));
      }
      loss_history->push_back(l);
    }
  }
  for (double v : model.params()) {
    if (!std::isfinite(v)) throw TrainingDiverged("training produced non-finite parameters");
  }
  return model;
}

Vec input_gradient_neg_log(const Model& model, std::span<const double> x, std::size_t t) {
  const Forward f = forward(model, x);
  Vec dz(f.probs);
  dz[t] -= 1.0;
  const bool mlp = model.kind() == ModelKind::mlp;
  const std::size_t nf = mlp ? model.hidden() : model.d();
  const auto w2 = model.w2();
  Vec dfeat(nf, 0.0);
  for (std::size_t c = 0; c < model.classes(); ++c) {
    for (std::size_t k = 0; k < nf; ++k) dfeat[k] += w2[c * nf + k] * dz[c];
  }
  if (!mlp) return dfeat;

  const auto w1 = model.w1();
  Vec dx(model.d(), 0.0);
  for (std::size_t j = 0; j < model.hidden(); ++j) {
    const double dpre = dfeat[j] * (1.0 - f.hidden[j] * f.hidden[j]);
    for (std::size_t k = 0; k < model.d(); ++k) dx[k] += w1[j * model.d() + k] * dpre;
  }
  return dx;
}

double estimate_lipschitz(const Model& model, std::size_t region_samples, RngStream& rng) {
  if (region_samples < 2) throw DomainError("estimate_lipschitz: need at least 2 samples");
  constexpr double radius = 1e-4;
  const std::size_t d = model.d();
  Vec x(d), y(d);
  double best = 0.0;
  for (std::size_t s = 0; s < region_samples; ++s) {
    for (double& v : x) v = rng.uniform();
    const Vec u = rng.unit_vector(d);
    for (std::size_t k = 0; k < d; ++k) y[k] = x[k] + radius * u[k];
    const Vec fx = predict(model, x);
    const Vec fy = predict(model, y);
    double diff = 0.0;
    for (std::size_t c = 0; c < fx.size(); ++c) diff += (fx[c] - fy[c]) * (fx[c] - fy[c]);
    best = std::max(best, std::sqrt(diff) / radius);
  }
  return best;
}

OutputStats output_stats(const Model& model, const Dataset& data, double beta,
                         std::size_t trials, RngStream& rng) {
  if (!(beta > 0.0) || trials == 0) throw DomainError("output_stats: need beta > 0, trials >= 1");
  if (data.size() == 0) throw DomainError("output_stats: empty dataset");
  OutputStats st;
  st.beta = beta;
  st.acc = accuracy(model, data);

  const std::size_t d = model.d();
  const std::size_t C = model.classes();
  std::vector<double> dft;
  dft.reserve(trials);
  double sum_ft = 0.0;
  Vec lo(d), hi(d);
  for (std::size_t s = 0; s < trials; ++s) {
    const auto x = data.input(rng.below(data.size()));
    const Vec u = rng.unit_vector(d);
    const Vec fx = predict(model, x);
    const std::size_t top = argmax(fx);
    std::size_t t = rng.below(C - 1);
    if (t >= top) ++t;
    for (std::size_t k = 0; k < d; ++k) {
      lo[k] = x[k] - beta * u[k];
      hi[k] = x[k] + beta * u[k];
    }
    dft.push_back(std::abs(predict(model, lo)[t] - predict(model, hi)[t]));
    sum_ft += fx[t];
  }
  const double n = static_cast<double>(trials);
  st.mean_ft = sum_ft / n;
  st.mean_dft = std::accumulate(dft.begin(), dft.end(), 0.0) / n;
  double var = 0.0;
  for (double v : dft) var += (v - st.mean_dft) * (v - st.mean_dft);
  st.std_dft = std::sqrt(var / n);
  std::vector<double> sorted = dft;
  std::sort(sorted.begin(), sorted.end());
  st.median_dft = (trials % 2 == 1)
                      ? sorted[trials / 2]
                      : 0.5 * (sorted[trials / 2 - 1] + sorted[trials / 2]);
  return st;
}

std::string model_to_json(const Model& model) {
  nlohmann::json j;
  j["kind"] = model.kind() == ModelKind::mlp ? "mlp" : "linear";
  j["d"] = model.d();
  j["C"] = model.classes();
  j["h"] = model.hidden();
  if (model.kind() == ModelKind::mlp) {
    j["W1"] = std::vector<double>(model.w1().begin(), model.w1().end());
    j["b1"] = std::vector<double>(model.b1().begin(), model.b1().end());
  }
  j["W2"] = std::vector<double>(model.w2().begin(), model.w2().end());
  j["b2"] = std::vector<double>(model.b2().begin(), model.b2().end());
  return j.dump(1);
}

Model model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("model JSON: {}", e.what()));
  }
  auto copy_into = [&](const char* key, std::span<double> dst) {
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != dst.size()) {
      throw ConfigError(fmt::format("model JSON: '{}' has {} values, expected {}", key, v.size(),
                                    dst.size()));
    }
    std::copy(v.begin(), v.end(), dst.begin());
  };
  try {
    const std::string kind = j.at("kind").get<std::string>();
    const auto d = j.at("d").get<std::size_t>();
    const auto C = j.at("C").get<std::size_t>();
    Model m;
    if (kind == "mlp") {
      RngStream unused(0);
      m = Model::mlp(d, C, j.at("h").get<std::size_t>(), unused);
      copy_into("W1", m.w1());
      copy_into("b1", m.b1());
    } else if (kind == "linear") {
      m = Model::linear(d, C);
    } else {
      throw ConfigError(fmt::format("model JSON: unknown kind '{}'", kind));
    }
    copy_into("W2", m.w2());
    copy_into("b2", m.b2());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("model JSON: {}", e.what()));
  }
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("cannot write {}", path.string()));
  out << model_to_json(model) << '\n';
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("cannot write {}", path.string()));
  for (std::size_t k = 0; k < data.d; ++k) out << 'x' << k << ',';
  out << "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.input(i)) out << fmt::format("{},", v);
    out << data.labels[i] << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& path, std::size_t classes) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset CSV: missing header");
  const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols < 2) throw ConfigError("dataset CSV: need at least one feature column");

  Dataset data;
  data.d = cols - 1;
  std::size_t lineno = 1;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        if (col < data.d) {
          const double v = std::stod(cell);
          if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
          data.inputs.push_back(v);
        } else {
          const auto lab = static_cast<std::size_t>(std::stoul(cell));
          data.labels.push_back(lab);
          max_label = std::max(max_label, lab);
        }
      } catch (const std::exception&) {
        throw ConfigError(fmt::format("dataset CSV line {}: bad value '{}'", lineno, cell));
      }
      ++col;
    }
    if (col != cols) {
      throw ConfigError(fmt::format("dataset CSV line {}: {} columns, expected {}", lineno, col,
                                    cols));
    }
  }
  data.classes = classes != 0 ? classes : max_label + 1;
  if (max_label >= data.classes) throw ConfigError("dataset CSV: label out of range");
  return data;
}

}  // namespace noisefence
