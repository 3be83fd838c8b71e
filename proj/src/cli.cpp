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

#include "noisefence/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "noisefence/analytic.hpp"
#include "noisefence/verify.hpp"

namespace noisefence::cli {
namespace {

namespace pt = boost::property_tree;

// ---------------------------------------------------------------------------
// INI helpers

struct Section {
  std::string name;
  const pt::ptree* tree = nullptr;
};

pt::ptree read_ini_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError(fmt::format("{}: file not found", path.string()));
  }
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", path.string(), e.line(), e.message()));
  }
  return tree;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Reader {
 public:
  Reader(Section s, std::set<std::string> allowed) : s_(std::move(s)) {
    for (const auto& [key, child] : *s_.tree) {
      if (!child.empty()) {
        throw ConfigError(fmt::format("[{}] {}: unexpected nested value", s_.name, key));
      }
      if (!allowed.contains(key)) {
        throw ConfigError(fmt::format("[{}] unknown key '{}'", s_.name, key));
      }
    }
  }

  std::optional<std::string> raw(const std::string& key) const {
    const auto it = s_.tree->find(key);
    if (it == s_.tree->not_found()) return std::nullopt;
    return trim(it->second.data());
  }

  std::string str(const std::string& key, const std::string& def) const {
    return raw(key).value_or(def);
  }

  double real(const std::string& key, double def) const {
    const auto v = raw(key);
    if (!v) return def;
    try {
      std::size_t used = 0;
      const double d = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument("trailing characters");
      return d;
    } catch (const std::exception&) {
      throw bad(key, *v, "a number");
    }
  }

  std::size_t count(const std::string& key, std::size_t def) const {
    const auto v = raw(key);
    if (!v) return def;
    try {
      std::size_t used = 0;
      if (!v->empty() && (*v)[0] == '-') throw std::invalid_argument("negative");
      const unsigned long long n = std::stoull(*v, &used);
      if (used != v->size()) throw std::invalid_argument("trailing characters");
      return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw bad(key, *v, "a non-negative integer");
    }
  }

  bool boolean(const std::string& key, bool def) const {
    const auto v = raw(key);
    if (!v) return def;
    if (*v == "true" || *v == "yes" || *v == "on" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "off" || *v == "0") return false;
    throw bad(key, *v, "a boolean");
  }

  std::vector<double> reals(const std::string& key, std::vector<double> def) const {
    const auto v = raw(key);
    if (!v) return def;
    std::vector<double> out;
    for (const auto& item : split_list(*v)) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw bad(key, item, "a number");
      }
    }
    return out;
  }

  ConfigError bad(const std::string& key, const std::string& value, const char* what) const {
    return ConfigError(fmt::format("[{}] {}: '{}' is not {}", s_.name, key, value, what));
  }

 private:
  Section s_;
};

std::vector<Section> sections(const pt::ptree& tree) {
  std::vector<Section> out;
  for (const auto& [name, child] : tree) {
    if (child.empty() && !child.data().empty()) {
      throw ConfigError(fmt::format("key '{}' appears outside any section", name));
    }
    out.push_back({name, &child});
  }
  return out;
}

const Section* find_section(const std::vector<Section>& all, const std::string& name) {
  for (const auto& s : all) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

ModelSpec read_model_section(const Section* s) {
  ModelSpec m;
  if (!s) return m;
  Reader r(*s, {"path", "kind", "d", "classes", "hidden", "n_per_class", "spread",
                "test_fraction", "lr", "epochs", "batch_size", "beta", "stats_trials",
                "lipschitz_samples"});
  if (auto p = r.raw("path"); p && !p->empty()) m.path = *p;
  const auto kind = r.str("kind", "mlp");
  if (kind == "mlp") {
    m.kind = ModelKind::mlp;
  } else if (kind == "linear") {
    m.kind = ModelKind::linear;
  } else {
    throw r.bad("kind", kind, "'mlp' or 'linear'");
  }
  m.d = r.count("d", m.d);
  m.classes = r.count("classes", m.classes);
  m.hidden = r.count("hidden", m.hidden);
  m.n_per_class = r.count("n_per_class", m.n_per_class);
  m.spread = r.real("spread", m.spread);
  m.test_fraction = r.real("test_fraction", m.test_fraction);
  m.train.lr = r.real("lr", m.train.lr);
  m.train.epochs = r.count("epochs", m.train.epochs);
  m.train.batch_size = r.count("batch_size", m.train.batch_size);
  m.beta = r.real("beta", m.beta);
  m.stats_trials = r.count("stats_trials", m.stats_trials);
  m.lipschitz_samples = r.count("lipschitz_samples", m.lipschitz_samples);
  if (!(m.test_fraction > 0.0 && m.test_fraction < 1.0)) {
    throw r.bad("test_fraction", fmt::format("{}", m.test_fraction), "in (0, 1)");
  }
  return m;
}

DirectionSource parse_direction_source(const Reader& r) {
  const auto v = r.str("direction_source", "gaussian_unit");
  if (v == "gaussian_unit" || v == "gaussian-unit") return DirectionSource::gaussian_unit;
  if (v == "coordinate") return DirectionSource::coordinate;
  throw r.bad("direction_source", v, "'gaussian_unit' or 'coordinate'");
}

AttackConfig read_attack_section(const Section& s, const AttackConfig& base) {
  Reader r(s, {"kind", "targeted", "learning_rate", "qc_limit", "max_distortion", "beta", "J",
               "direction_source", "hard_proxy_R", "hard_proxy_spread", "repeat_N"});
  AttackConfig a = base;
  try {
    a.kind = parse_attack_kind(r.str("kind", "nes"));
  } catch (const ConfigError&) {
    throw r.bad("kind", r.str("kind", ""), "one of nes, zoo, hard-proxy");
  }
  a.targeted = r.boolean("targeted", a.targeted);
  a.learning_rate = r.real("learning_rate", a.learning_rate);
  a.qc_limit = r.count("qc_limit", a.qc_limit);
  if (auto v = r.raw("max_distortion")) {
    if (*v == "none" || v->empty()) {
      a.max_distortion.reset();
    } else {
      a.max_distortion = r.real("max_distortion", 0.0);
    }
  }
  a.estimator.beta = r.real("beta", a.estimator.beta);
  a.estimator.J = r.count("J", a.estimator.J);
  a.estimator.direction_source = parse_direction_source(r);
  a.hard_proxy_R = r.count("hard_proxy_R", a.hard_proxy_R);
  a.hard_proxy_spread = r.real("hard_proxy_spread", a.hard_proxy_spread);
  a.repeat_N = r.count("repeat_N", a.repeat_N);
  return a;
}

NoiseSpec read_noise_section(const Section& s) {
  Reader r(s, {"kind", "sigma", "q_bits", "alpha", "eps_sigma", "preserve_top1", "label_mode"});
  NoiseSpec n;
  try {
    n.kind = parse_noise_kind(r.str("kind", "none"));
    n.label_mode = parse_label_mode(r.str("label_mode", "soft"));
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("[{}] {}", s.name, e.what()));
  }
  n.sigma = r.real("sigma", n.sigma);
  n.q_bits = static_cast<int>(r.count("q_bits", static_cast<std::size_t>(n.q_bits)));
  n.alpha = r.real("alpha", n.alpha);
  n.eps_sigma = r.real("eps_sigma", n.eps_sigma);
  n.preserve_top1 = r.boolean("preserve_top1", n.preserve_top1);
  try {
    n.validate();
  } catch (const DomainError& e) {
    throw ConfigError(fmt::format("[{}] {}", s.name, e.what()));
  }
  return n;
}

// ---------------------------------------------------------------------------
// Output helpers

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << text;
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return fmt::format("{}", v);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

std::optional<OutputRow> preset_row(const std::string& name) {
  if (name == "mnist") return OutputRow{"mnist", 4e-4, 5e-6, 1e-3};
  if (name == "cifar10") return OutputRow{"cifar10", 1e-3, 2e-4, 1e-3};
  if (name == "imagenet") return OutputRow{"imagenet", 3e-4, 5e-8, 1e-5};
  return std::nullopt;
}

AnalyzeConfig default_analyze_config() {
  AnalyzeConfig c;
  for (const char* n : {"mnist", "cifar10", "imagenet"}) c.rows.push_back(*preset_row(n));
  for (int e = -6; e <= -1; ++e) {
    for (double m : {1.0, 2.0, 5.0}) c.sigmas.push_back(m * std::pow(10.0, e));
  }
  return c;
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  AttackConfig nes;
  nes.kind = AttackKind::nes;
  nes.targeted = true;
  nes.learning_rate = 0.01;
  nes.qc_limit = 20000;
  nes.max_distortion = 0.05;
  c.attacks.push_back({"nes", nes});
  c.noises.push_back({"none", NoiseSpec{}});
  for (double s : {1e-4, 1e-3, 1e-2}) {
    NoiseSpec n;
    n.kind = NoiseKind::white;
    n.sigma = s;
    n.preserve_top1 = true;
    c.noises.push_back({fmt::format("white-{}", s), n});
  }
  for (std::uint64_t s = 0; s < 50; ++s) c.seeds.push_back(s);
  return c;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(text)) {
    const auto dash = item.find('-', 1);
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoull(item));
      } else {
        const auto lo = std::stoull(item.substr(0, dash));
        const auto hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw std::invalid_argument("descending range");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
      }
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("bad seed list entry '{}'", item));
    }
  }
  if (out.empty()) throw ConfigError("seed list is empty");
  return out;
}

ModelSpec load_model_spec(const std::filesystem::path& path) {
  const auto tree = read_ini_file(path);
  const auto all = sections(tree);
  return read_model_section(find_section(all, "model"));
}

AnalyzeConfig load_analyze_config(const std::filesystem::path& path) {
  const auto tree = read_ini_file(path);
  const auto all = sections(tree);
  AnalyzeConfig c = default_analyze_config();
  const Section* s = find_section(all, "analyze");
  if (!s) return c;
  Reader r(*s, {"models", "sigmas", "a", "lambda", "eta", "v0", "epsilon", "repeat_a",
                "repeat_epsilon", "svg"});
  if (auto models = r.raw("models")) {
    c.rows.clear();
    for (const auto& name : split_list(*models)) {
      if (const Section* ms = find_section(all, "output." + name)) {
        Reader mr(*ms, {"mean_ft", "mean_dft", "beta"});
        OutputRow row{name, mr.real("mean_ft", 0.0), mr.real("mean_dft", 0.0),
                      mr.real("beta", 1e-3)};
        if (!(row.mean_ft > 0.0) || row.mean_dft < 0.0 || !(row.beta > 0.0)) {
          throw ConfigError(fmt::format("[output.{}] needs mean_ft > 0, mean_dft >= 0, beta > 0",
                                        name));
        }
        c.rows.push_back(row);
      } else if (auto p = preset_row(name)) {
        c.rows.push_back(*p);
      } else {
        throw ConfigError(fmt::format(
            "[analyze] models: '{}' is neither a preset nor an [output.{}] section", name, name));
      }
    }
  }
  c.sigmas = r.reals("sigmas", c.sigmas);
  c.a = r.real("a", c.a);
  c.lambda = r.real("lambda", c.lambda);
  c.eta = r.real("eta", c.eta);
  c.v0 = r.real("v0", c.v0);
  c.epsilon = r.real("epsilon", c.epsilon);
  c.repeat_a = r.real("repeat_a", c.repeat_a);
  c.repeat_epsilon = r.real("repeat_epsilon", c.repeat_epsilon);
  c.svg = r.boolean("svg", c.svg);
  if (c.rows.empty() || c.sigmas.empty()) {
    throw ConfigError("[analyze] needs at least one model and one sigma");
  }
  for (double s : c.sigmas) {
    if (s < 0.0) throw ConfigError(fmt::format("[analyze] sigmas: negative value {}", s));
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  const auto tree = read_ini_file(path);
  const auto all = sections(tree);
  ExperimentConfig c = default_experiment_config();
  c.model = read_model_section(find_section(all, "model"));

  const Section* g = find_section(all, "grid");
  if (!g) return c;
  Reader r(*g, {"attacks", "noises", "seeds", "qc_limit", "max_distortion", "parallelism"});
  c.seeds = parse_seed_list(r.str("seeds", "0-49"));
  c.parallelism = r.count("parallelism", 0);

  AttackConfig base;
  base.learning_rate = 0.01;
  base.qc_limit = r.count("qc_limit", 20000);
  base.max_distortion = 0.05;
  if (auto v = r.raw("max_distortion")) {
    if (*v == "none" || v->empty()) {
      base.max_distortion.reset();
    } else {
      base.max_distortion = r.real("max_distortion", 0.0);
    }
  }

  if (auto names = r.raw("attacks")) {
    c.attacks.clear();
    for (const auto& name : split_list(*names)) {
      const Section* s = find_section(all, "attack." + name);
      if (!s) throw ConfigError(fmt::format("[grid] attacks: no [attack.{}] section", name));
      c.attacks.push_back({name, read_attack_section(*s, base)});
    }
  } else {
    for (auto& a : c.attacks) {
      a.config.qc_limit = base.qc_limit;
      a.config.max_distortion = base.max_distortion;
    }
  }
  if (auto names = r.raw("noises")) {
    c.noises.clear();
    for (const auto& name : split_list(*names)) {
      const Section* s = find_section(all, "noise." + name);
      if (!s) throw ConfigError(fmt::format("[grid] noises: no [noise.{}] section", name));
      c.noises.push_back({name, read_noise_section(*s)});
    }
  }
  if (c.attacks.empty() || c.noises.empty()) {
    throw ConfigError("[grid] needs at least one attack and one noise entry");
  }
  return c;
}

// ---------------------------------------------------------------------------
// analyze

std::vector<AnalyzeRow> analyze(const AnalyzeConfig& cfg) {
  std::vector<AnalyzeRow> out;
  for (const auto& m : cfg.rows) {
    for (double sigma : cfg.sigmas) {
      NesNoiseParams p{sigma, m.beta, m.mean_ft + 0.5 * m.mean_dft, m.mean_ft - 0.5 * m.mean_dft,
                       0.0};
      AnalyzeRow row;
      row.model = m.name;
      row.sigma = sigma;
      row.sigma_z_sq = sigma_z_sq(p);
      const auto snr = snr_nes(p);
      row.snr_exact = snr.exact;
      row.snr_db = snr.exact_db;
      row.snr_db_alt = sigma == 0.0 ? std::numeric_limits<double>::infinity()
                                    : to_db(m.mean_dft * m.mean_dft / (sigma * sigma));
      row.qc_ratio = row.snr_exact == 0.0
                         ? std::numeric_limits<double>::infinity()
                         : qc_ratio({cfg.a * cfg.lambda, cfg.eta / cfg.v0, cfg.epsilon,
                                     row.snr_exact});
      const auto rq = repeated_query_n({sigma, m.mean_ft, m.beta, cfg.repeat_a, cfg.repeat_epsilon});
      row.repeat_n = rq.n;
      out.push_back(row);
    }
  }
  return out;
}

std::string analyze_csv(const std::vector<AnalyzeRow>& rows) {
  std::string s = "model,sigma,sigma_z_sq,snr_exact,snr_db,snr_db_alt,qc_ratio,repeat_n\n";
  for (const auto& r : rows) {
    s += fmt::format("{},{},{},{},{},{},{},{}\n", r.model, num(r.sigma), num(r.sigma_z_sq),
                     num(r.snr_exact), num(r.snr_db), num(r.snr_db_alt), num(r.qc_ratio),
                     r.repeat_n ? fmt::format("{}", *r.repeat_n) : std::string("inf"));
  }
  return s;
}

std::string analyze_svg(const std::vector<AnalyzeRow>& rows) {
  constexpr double W = 640, H = 420, L = 70, R = 20, T = 20, B = 50;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  std::vector<std::string> order;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& r : rows) {
    if (!(r.sigma > 0.0) || !std::isfinite(r.qc_ratio) || r.qc_ratio <= 0.0) continue;
    const double x = std::log10(r.sigma), y = std::log10(r.qc_ratio);
    if (!series.contains(r.model)) order.push_back(r.model);
    series[r.model].emplace_back(x, y);
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      W, H);
  if (order.empty()) return s + "</svg>\n";
  xmin = std::floor(xmin);
  xmax = std::max(std::ceil(xmax), xmin + 1);
  ymin = std::floor(ymin);
  ymax = std::max(std::ceil(ymax), ymin + 1);
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" "
                   "stroke=\"black\"/>\n",
                   L, T, W - L - R, H - T - B);
  for (double x = xmin; x <= xmax; x += 1.0) {
    s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">1e{}</text>\n", px(x),
                     H - B + 18, static_cast<int>(x));
  }
  const double ystep = std::max(1.0, std::ceil((ymax - ymin) / 8.0));
  for (double y = ymin; y <= ymax; y += ystep) {
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">1e{}</text>\n", L - 6,
                     py(y) + 4, static_cast<int>(y));
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">sigma</text>\n",
                   L + (W - L - R) / 2, H - 10);
  s += fmt::format("<text x=\"16\" y=\"{}\" text-anchor=\"middle\" "
                   "transform=\"rotate(-90 16 {})\">query-count ratio R</text>\n",
                   T + (H - T - B) / 2, T + (H - T - B) / 2);

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  for (std::size_t k = 0; k < order.size(); ++k) {
    const char* c = colors[k % 5];
    std::string pts;
    for (const auto& [x, y] : series[order[k]]) pts += fmt::format("{:.1f},{:.1f} ", px(x), py(y));
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
                     c, pts);
    s += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", L + 10, T + 16 + 14 * k, c,
                     order[k]);
  }
  return s + "</svg>\n";
}

// ---------------------------------------------------------------------------
// Desk model

DeskSetup build_desk(const ModelSpec& spec, std::uint64_t seed) {
  const RngStream root(seed);
  DeskSetup desk;
  RngStream data_rng = root.derive("data");
  const Dataset all = gen_blobs(spec.d, spec.classes, spec.n_per_class, spec.spread, data_rng);
  RngStream split_rng = root.derive("split");
  std::tie(desk.train, desk.test) = train_test_split(all, spec.test_fraction, split_rng);

  if (spec.path) {
    desk.model = load_model(*spec.path);
    if (desk.model.d() != spec.d || desk.model.classes() != spec.classes) {
      throw ConfigError(fmt::format("{}: model shape {}x{} does not match [model] d={} classes={}",
                                    spec.path->string(), desk.model.d(), desk.model.classes(),
                                    spec.d, spec.classes));
    }
  } else {
    RngStream init_rng = root.derive("init");
    Model m = spec.kind == ModelKind::mlp ? Model::mlp(spec.d, spec.classes, spec.hidden, init_rng)
                                          : Model::linear(spec.d, spec.classes);
    RngStream train_rng = root.derive("train");
    desk.model = train(std::move(m), desk.train, spec.train, train_rng);
  }
  RngStream stats_rng = root.derive("stats");
  desk.stats = output_stats(desk.model, desk.test, spec.beta, spec.stats_trials, stats_rng);
  RngStream lip_rng = root.derive("lipschitz");
  desk.lipschitz = estimate_lipschitz(desk.model, spec.lipschitz_samples, lip_rng);
  return desk;
}

std::string stats_csv(const DeskSetup& desk) {
  const auto& s = desk.stats;
  return fmt::format("acc,mean_ft,beta,mean_dft,median_dft,std_dft,lipschitz\n{},{},{},{},{},{},{}\n",
                     num(s.acc), num(s.mean_ft), num(s.beta), num(s.mean_dft), num(s.median_dft),
                     num(s.std_dft), num(desk.lipschitz));
}

Instance pick_instance(const DeskSetup& desk, std::uint64_t base_seed, std::uint64_t seed) {
  RngStream rng = RngStream(base_seed).derive(fmt::format("instance-{}", seed));
  const std::size_t n = desk.test.size();
  const std::size_t C = desk.model.classes();
  if (n == 0) throw PreconditionError("test set is empty");
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const std::size_t i = rng.below(n);
    const std::size_t label = desk.test.labels[i];
    if (classify(desk.model, desk.test.input(i)) != label) continue;
    return {i, label, (label + 1 + rng.below(C - 1)) % C};
  }
  throw PreconditionError("no correctly classified test point found");
}

// ---------------------------------------------------------------------------
// grid

std::size_t resolve_threads(std::size_t configured) {
  if (const char* env = std::getenv("NOISEFENCE_THREADS"); env && *env) {
    try {
      const auto n = std::stoul(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError(fmt::format("NOISEFENCE_THREADS='{}' is not a positive integer", env));
  }
  if (configured > 0) return configured;
  return std::max(1u, std::thread::hardware_concurrency());
}

AttackOutcome run_cell(const DeskSetup& desk, const NamedAttack& attack, const NamedNoise& noise,
                       std::uint64_t base_seed, std::uint64_t seed) {
  const Instance inst = pick_instance(desk, base_seed, seed);
  const RngStream root(base_seed);
  NoiseSpec spec = noise.spec;
  spec.label_mode =
      attack.config.kind == AttackKind::hard_proxy ? LabelMode::hard : LabelMode::soft;
  DefendedModel dm(desk.model, spec, root.derive(fmt::format("oracle-{}", seed)));
  AttackConfig cfg = attack.config;
  if (cfg.targeted) {
    cfg.target_class = inst.target_class;
  } else {
    cfg.target_class.reset();
  }
  RngStream arng = root.derive(fmt::format("attack-{}", seed));
  return run_attack(dm, desk.test.input(inst.index), inst.clean_class, cfg, arng);
}

GridResult run_grid(const ExperimentConfig& cfg, const DeskSetup& desk, std::uint64_t base_seed,
                    std::size_t threads) {
  GridResult g;
  for (const auto& a : cfg.attacks) {
    for (const auto& n : cfg.noises) {
      for (auto s : cfg.seeds) {
        CellRecord c;
        c.attack = a.name;
        c.noise = n.name;
        c.attack_config = a.config;
        c.noise_spec = n.spec;
        c.seed = s;
        g.cells.push_back(std::move(c));
      }
    }
  }

  // Cells are independent and write only their own slot, so the result is
  // the same for any worker count.
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < g.cells.size(); i = next++) {
      auto& c = g.cells[i];
      try {
        c.outcome = run_cell(desk, {c.attack, c.attack_config}, {c.noise, c.noise_spec},
                             base_seed, c.seed);
      } catch (const std::exception& e) {
        c.error = e.what();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, g.cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::size_t k = 0;
  for (const auto& a : cfg.attacks) {
    for (const auto& n : cfg.noises) {
      std::vector<AttackOutcome> ok;
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s, ++k) {
        if (g.cells[k].error) {
          ++g.failed_cells;
        } else {
          ok.push_back(g.cells[k].outcome);
        }
      }
      GridRow row{a.name, n.name, {}, ok.size()};
      if (!ok.empty()) row.metrics = compute_metrics(ok);
      g.rows.push_back(row);
    }
  }
  return g;
}

std::string grid_csv(const GridResult& g) {
  std::string s = "attack,noise,asr,mean_qc_success,mean_l2_success,n_seeds,asr_unfiltered\n";
  for (const auto& r : g.rows) {
    s += fmt::format("{},{},{},{},{},{},{}\n", r.attack, r.noise, num(r.metrics.asr),
                     num(r.metrics.mean_qc_success), num(r.metrics.mean_l2_success), r.n_seeds,
                     num(r.metrics.asr_unfiltered));
  }
  return s;
}

std::string outcomes_jsonl(const GridResult& g) {
  std::string s;
  for (const auto& c : g.cells) {
    nlohmann::ordered_json j;
    j["attack"] = c.attack;
    j["targeted"] = c.attack_config.targeted;
    j["noise_kind"] = std::string(to_string(c.noise_spec.kind));
    j["sigma"] = c.noise_spec.sigma;
    j["q_bits"] = c.noise_spec.q_bits;
    j["alpha"] = c.noise_spec.alpha;
    j["repeat_N"] = c.attack_config.repeat_N;
    j["seed"] = c.seed;
    if (c.error) {
      j["error"] = *c.error;
    } else {
      j["success"] = c.outcome.success;
      j["queries"] = c.outcome.queries;
      j["iterations"] = c.outcome.iterations;
      j["l2_per_pixel"] = c.outcome.l2_per_pixel;
      j["final_label"] = c.outcome.final_label;
    }
    s += j.dump();
    s += '\n';
  }
  return s;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_analyze(const std::optional<std::filesystem::path>& config, std::uint64_t /*seed*/,
                const std::filesystem::path& out_dir) {
  const AnalyzeConfig cfg = config ? load_analyze_config(*config) : default_analyze_config();
  const auto rows = analyze(cfg);
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "curves.csv", analyze_csv(rows));
  if (cfg.svg) write_text(out_dir / "curves.svg", analyze_svg(rows));
  fmt::print("wrote {} rows to {}\n", rows.size(), (out_dir / "curves.csv").string());
  return kExitOk;
}

int cmd_train(const std::optional<std::filesystem::path>& config, std::uint64_t seed,
              const std::filesystem::path& out_dir) {
  const ModelSpec spec = config ? load_model_spec(*config) : ModelSpec{};
  const DeskSetup desk = build_desk(spec, seed);
  std::filesystem::create_directories(out_dir);
  save_model(desk.model, out_dir / "model.json");
  save_dataset(desk.train, out_dir / "train.csv");
  save_dataset(desk.test, out_dir / "test.csv");
  write_text(out_dir / "stats.csv", stats_csv(desk));
  fmt::print("test accuracy {:.4f}, mean F_t {:.3g}, mean dF_t {:.3g}\n", desk.stats.acc,
             desk.stats.mean_ft, desk.stats.mean_dft);
  return kExitOk;
}

int cmd_grid(const std::optional<std::filesystem::path>& config, std::uint64_t seed,
             const std::filesystem::path& out_dir) {
  const ExperimentConfig cfg =
      config ? load_experiment_config(*config) : default_experiment_config();
  const std::size_t threads = resolve_threads(cfg.parallelism);
  const DeskSetup desk = build_desk(cfg.model, seed);
  const GridResult g = run_grid(cfg, desk, seed, threads);
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "outcomes.jsonl", outcomes_jsonl(g));
  write_text(out_dir / "grid.csv", grid_csv(g));
  for (const auto& r : g.rows) {
    fmt::print("{:<16} {:<20} asr={:.3f} qc={:.0f} l2={:.4g}\n", r.attack, r.noise, r.metrics.asr,
               r.metrics.mean_qc_success, r.metrics.mean_l2_success);
  }
  if (g.failed_cells > 0) {
    for (const auto& c : g.cells) {
      if (c.error) {
        fmt::print(stderr, "cell {}/{}/seed {} failed: {}\n", c.attack, c.noise, c.seed, *c.error);
      }
    }
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_verify(const std::vector<std::string>& suites, std::uint64_t seed,
               const std::filesystem::path& out_dir) {
  std::vector<std::string> names;
  for (const auto& s : suites) {
    if (s == "all") {
      for (const auto& n : suite_names()) names.push_back(n);
      continue;
    }
    if (std::find(suite_names().begin(), suite_names().end(), s) == suite_names().end()) {
      throw ConfigError(fmt::format("unknown suite '{}' (expected all or one of {})", s,
                                    fmt::join(suite_names(), ", ")));
    }
    names.push_back(s);
  }
  if (names.empty()) names = suite_names();

  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  bool all_passed = true;
  for (const auto& n : names) {
    const auto r = run_suite(n, seed);
    all_passed = all_passed && r.passed;
    arr.push_back(nlohmann::ordered_json::parse(report_to_json(r)));
    fmt::print("{:<12} {}\n", r.name, r.passed ? "passed" : "FAILED");
  }
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "verify.json", arr.dump(2) + "\n");
  return all_passed ? kExitOk : kExitFailure;
}

}  // namespace noisefence::cli
