// Python bindings for the main operations: synthetic data generation,
// training objectives, the eigen-penalty pipeline, evaluation metrics and
// end-to-end training, mirroring the CLI surface.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "invbasin/cli.hpp"
#include "invbasin/data.hpp"
#include "invbasin/evaluate.hpp"
#include "invbasin/metrics.hpp"
#include "invbasin/objectives.hpp"
#include "invbasin/training.hpp"
#include "invbasin/ubl.hpp"

namespace py = pybind11;
using namespace invbasin;

namespace {

Tensor matrix_from(const std::vector<std::vector<double>>& rows,
                   const char* what) {
  if (rows.empty() || rows.front().empty()) {
    throw ContractError(std::string(what) + ": empty matrix");
  }
  std::size_t cols = rows.front().size();
  Tensor t({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) {
      throw ContractError(std::string(what) + ": ragged rows");
    }
    for (std::size_t j = 0; j < cols; ++j) t.at(i, j) = rows[i][j];
  }
  return t;
}

std::vector<std::vector<double>> matrix_to(const Tensor& t) {
  std::vector<std::vector<double>> rows(t.rows(),
                                        std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) rows[i][j] = t.at(i, j);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(invbasin, m) {
  m.doc() = "Probabilistic inverse modeling of river-basin characteristics";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<NumericError>(m, "NumericError");
  py::register_exception<ContractError>(m, "ContractError");

  m.def(
      "generate_synthetic",
      [](std::size_t entities, std::size_t days, std::uint64_t seed,
         const std::string& out_dir) {
        EntityDataset ds = generate_synthetic(entities, days, seed);
        if (!out_dir.empty()) save_csv(ds, out_dir);
        py::dict d;
        py::list ids;
        for (const Entity& e : ds.entities) ids.append(e.id);
        d["entity_ids"] = ids;
        d["days"] = ds.days();
        d["driver_names"] = ds.driver_names;
        d["static_names"] = ds.static_names;
        d["statics"] = matrix_to(ds.static_matrix());
        return d;
      },
      py::arg("entities"), py::arg("days"), py::arg("seed"),
      py::arg("out_dir") = "",
      "Generate a synthetic basin dataset; optionally write the CSV trio.");

  m.def(
      "contrastive_loss",
      [](const std::vector<std::vector<double>>& embeddings, double tau,
         bool verbatim) {
        return objectives::contrastive_loss(
            matrix_from(embeddings, "embeddings"), tau, verbatim);
      },
      py::arg("embeddings"), py::arg("tau") = 0.1, py::arg("verbatim") = false,
      "NT-Xent loss over a (2N, d) embedding matrix (anchors then positives).");

  m.def(
      "inverse_loss",
      [](const std::vector<std::vector<double>>& zhat,
         const std::vector<std::vector<double>>& z) {
        return objectives::inverse_loss(matrix_from(zhat, "zhat"),
                                        matrix_from(z, "z"));
      },
      py::arg("zhat"), py::arg("z"));

  m.def(
      "penalized_inverse_loss",
      [](const std::vector<std::vector<double>>& zhat,
         const std::vector<std::vector<double>>& z,
         const std::vector<double>& w, double t_scale) {
        PenaltyWeights pw;
        pw.w = w;
        return objectives::penalized_inverse_loss(
            matrix_from(zhat, "zhat"), matrix_from(z, "z"), pw, t_scale);
      },
      py::arg("zhat"), py::arg("z"), py::arg("w"), py::arg("t_scale") = 1.0);

  m.def(
      "free_energy",
      [](double kl, double nll, std::size_t num_batches) {
        return objectives::free_energy(kl, nll, num_batches);
      },
      py::arg("kl"), py::arg("nll"), py::arg("num_batches"));

  m.def(
      "uncertainty_gram",
      [](const std::vector<std::vector<double>>& sigma) {
        return matrix_to(uncertainty_gram(matrix_from(sigma, "sigma")));
      },
      py::arg("sigma"));

  m.def(
      "top_eigenvector",
      [](const std::vector<std::vector<double>>& gram) {
        EigenResult r = top_eigenvector(matrix_from(gram, "gram"));
        std::vector<double> v(r.v.data(), r.v.data() + r.v.size());
        return py::make_tuple(r.lambda1, v);
      },
      py::arg("gram"),
      "Dominant eigenpair of a symmetric PSD matrix via power iteration.");

  m.def(
      "penalty_weights",
      [](const std::vector<double>& v) {
        Tensor t({v.size()});
        for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i];
        return penalty_weights(t).w;
      },
      py::arg("v"), "Simplex penalty coefficients w = v * v.");

  m.def(
      "nse",
      [](const std::vector<double>& pred,
         const std::vector<double>& obs) -> std::optional<double> {
        return nse(pred, obs);
      },
      py::arg("pred"), py::arg("obs"),
      "Nash-Sutcliffe efficiency; None when observations are constant.");

  m.def(
      "coverage_rate",
      [](const std::vector<std::vector<double>>& z,
         const std::vector<std::vector<double>>& mean,
         const std::vector<std::vector<double>>& sigma, double multiplier) {
        return coverage_rate(matrix_from(z, "z"), matrix_from(mean, "mean"),
                             matrix_from(sigma, "sigma"), multiplier);
      },
      py::arg("z"), py::arg("mean"), py::arg("sigma"),
      py::arg("multiplier") = 1.0);

  m.def(
      "unc_over_time",
      [](const std::vector<std::vector<std::vector<double>>>& windows) {
        std::vector<Tensor> tensors;
        tensors.reserve(windows.size());
        for (const auto& w : windows) {
          tensors.push_back(matrix_from(w, "window"));
        }
        return matrix_to(unc_over_time(tensors));
      },
      py::arg("window_predictions"),
      "Per-entity, per-feature std of window-wise static predictions.");

  m.def(
      "run_command",
      [](const std::vector<std::string>& args) { return run_command(args); },
      py::arg("args"),
      "Run a CLI subcommand in-process; returns the exit code.");

  m.attr("__version__") = "0.1.0";
}
