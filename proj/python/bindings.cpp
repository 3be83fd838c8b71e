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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fmt/format.h>

#include "noisefence/analytic.hpp"
#include "noisefence/cli.hpp"
#include "noisefence/oracle.hpp"
#include "noisefence/verify.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
namespace nf = noisefence;

namespace {

py::dict report_dict(const nf::VerificationReport& r) {
  return py::module_::import("json").attr("loads")(nf::report_to_json(r));
}

py::dict row_dict(const nf::cli::AnalyzeRow& r) {
  py::dict d;
  d["model"] = r.model;
  d["sigma"] = r.sigma;
  d["sigma_z_sq"] = r.sigma_z_sq;
  d["snr_exact"] = r.snr_exact;
  d["snr_db"] = r.snr_db;
  d["snr_db_alt"] = r.snr_db_alt;
  d["qc_ratio"] = r.qc_ratio;
  d["repeat_n"] = r.repeat_n ? py::object(py::int_(*r.repeat_n)) : py::object(py::none());
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Closed forms and checks for output-noise defenses against score-based attacks.";

  auto base = py::register_exception<nf::DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<nf::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<nf::PreconditionError>(m, "PreconditionError", PyExc_RuntimeError);
  py::register_exception<nf::EstimatorUndefined>(m, "EstimatorUndefined", PyExc_ArithmeticError);
  (void)base;

  m.def(
      "nes_factor",
      [](double beta, double f_minus, double f_plus) {
        return nf::nes_factor({0.0, beta, f_minus, f_plus, 0.0});
      },
      "beta"_a, "f_minus"_a, "f_plus"_a);

  m.def(
      "sigma_z_sq",
      [](double sigma, double f_minus, double f_plus, double beta) {
        return nf::sigma_z_sq({sigma, beta, f_minus, f_plus, 0.0});
      },
      "sigma"_a, "f_minus"_a, "f_plus"_a, "beta"_a = 1e-3);

  m.def(
      "snr_nes",
      [](double sigma, double f_minus, double f_plus, double beta, double lipschitz) {
        const auto r = nf::snr_nes({sigma, beta, f_minus, f_plus, lipschitz});
        return py::dict("exact"_a = r.exact, "bound"_a = r.bound, "exact_db"_a = r.exact_db,
                        "bound_db"_a = r.bound_db);
      },
      "sigma"_a, "f_minus"_a, "f_plus"_a, "beta"_a = 1e-3, "lipschitz"_a = 0.0);

  m.def("pdf_a", &nf::pdf_a, "x"_a, "a"_a, "beta"_a, "sigma_z"_a);

  m.def(
      "prob_a_negative",
      [](double a, double beta, double sigma_z, const std::string& method) {
        nf::ProbMethod pm;
        if (method == "exact") {
          pm = nf::ProbMethod::exact;
        } else if (method == "gaussian") {
          pm = nf::ProbMethod::gaussian;
        } else {
          throw nf::DomainError(fmt::format("method must be 'exact' or 'gaussian', got '{}'", method));
        }
        return nf::prob_a_negative(a, beta, sigma_z, pm);
      },
      "a"_a, "beta"_a, "sigma_z"_a, "method"_a = "exact");

  m.def(
      "qc_ratio",
      [](double snr, double a_lambda, double eta_over_v0, double epsilon) {
        return nf::qc_ratio({a_lambda, eta_over_v0, epsilon, snr});
      },
      "snr"_a, "a_lambda"_a = 0.2, "eta_over_v0"_a = 0.01, "epsilon"_a = 0.01,
      "Ratio of noisy to noiseless query counts; snr may be inf.");

  m.def(
      "repeated_query_n",
      [](double sigma, double f_t, double beta, double a, double epsilon) -> std::optional<std::uint64_t> {
        return nf::repeated_query_n({sigma, f_t, beta, a, epsilon}).n;
      },
      "sigma"_a, "f_t"_a = 4e-4, "beta"_a = 1e-3, "a"_a = 1.0, "epsilon"_a = 0.3,
      "Repeat count for the MLE estimator, or None when no count suffices.");

  m.def(
      "autozoom_variance",
      [](double sigma, double beta, double f_max_x, double f_max_xb, double f_t_x, double f_t_xb,
         double lipschitz) {
        const auto r = nf::autozoom_variance({sigma, beta, f_max_x, f_max_xb, f_t_x, f_t_xb, lipschitz});
        return py::dict("var_a"_a = r.var_a, "snr_bound"_a = r.snr_bound);
      },
      "sigma"_a, "beta"_a, "f_max_x"_a, "f_max_xb"_a, "f_t_x"_a, "f_t_xb"_a, "lipschitz"_a = 0.0);

  m.def("quantized_z2", &nf::quantized_z2, "f_t_x"_a, "f_t_xb"_a, "q_bits"_a);

  m.def(
      "quantize", [](const std::vector<double>& y, int q_bits) { return nf::quantize(y, q_bits); },
      "y"_a, "q_bits"_a);

  m.def("suite_names", &nf::suite_names);
  m.def(
      "run_suite",
      [](const std::string& name, std::uint64_t seed) {
        nf::VerificationReport r;
        {
          py::gil_scoped_release release;
          r = nf::run_suite(name, seed);
        }
        return report_dict(r);
      },
      "name"_a, "seed"_a = 1);

  m.def(
      "analyze",
      [](const std::vector<double>& sigmas, const std::vector<std::string>& models) {
        auto cfg = nf::cli::default_analyze_config();
        cfg.sigmas = sigmas;
        cfg.rows.clear();
        for (const auto& name : models) {
          const auto row = nf::cli::preset_row(name);
          if (!row) throw nf::ConfigError(fmt::format("unknown preset '{}'", name));
          cfg.rows.push_back(*row);
        }
        py::list out;
        for (const auto& r : nf::cli::analyze(cfg)) out.append(row_dict(r));
        return out;
      },
      "sigmas"_a, "models"_a = std::vector<std::string>{"mnist", "cifar10", "imagenet"},
      "Analytic rows for the preset output statistics at each sigma.");
}
