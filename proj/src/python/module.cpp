#include "heterospectra/error.hpp"
#include "heterospectra/estimators.hpp"
#include "heterospectra/inference.hpp"
#include "heterospectra/io.hpp"
#include "heterospectra/mcharness.hpp"
#include "heterospectra/synthgen.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
namespace hs = heterospectra;

namespace {

py::dict estimate_dict(const hs::SubspaceEstimate& est) {
  py::dict d;
  d["U"] = est.frame.cols();
  d["eigenvalues"] = est.eigenvalues;
  d["iterations"] = est.iterations;
  d["converged"] = est.converged;
  d["gap_warning"] = est.gap_warning;
  return d;
}

hs::Truncation truncation_from(const std::string& name) {
  if (name == "algebraic") return hs::Truncation::algebraic;
  if (name == "magnitude") return hs::Truncation::magnitude;
  throw hs::ParameterError("truncation must be 'algebraic' or 'magnitude'");
}

hs::PresetOptions preset_options(std::optional<hs::Index> n, std::optional<hs::Index> d, double theta) {
  hs::PresetOptions o;
  o.n = n;
  o.d = d;
  o.theta = theta;
  return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Heteroskedastic PCA estimators, entrywise inference and mixture simulations";
  m.attr("__version__") = HETEROSPECTRA_VERSION;

  py::register_exception<hs::Error>(m, "Error");
  py::register_exception<hs::ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<hs::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<hs::DegenerateError>(m, "DegenerateError");

  m.def("gram", &hs::gram, py::arg("mhat"));
  m.def(
      "hetero_pca",
      [](const hs::Mat& ahat, hs::Index rank, hs::Index max_iter, double tol, const std::string& truncation) {
        return estimate_dict(hs::hetero_pca(ahat, hs::HeteroPcaConfig{rank, max_iter, tol, truncation_from(truncation)}));
      },
      py::arg("ahat"), py::arg("rank"), py::arg("max_iter") = 100, py::arg("tol") = 1e-8,
      py::arg("truncation") = "algebraic");
  m.def(
      "diagonal_deletion_pca",
      [](const hs::Mat& ahat, hs::Index rank) { return estimate_dict(hs::diagonal_deletion_pca(ahat, rank)); },
      py::arg("ahat"), py::arg("rank"));
  m.def(
      "vanilla_pca", [](const hs::Mat& ahat, hs::Index rank) { return estimate_dict(hs::vanilla_pca(ahat, rank)); },
      py::arg("ahat"), py::arg("rank"));
  m.def(
      "sin_theta", [](const hs::Mat& a, const hs::Mat& b) { return hs::sin_theta(hs::Frame(a), hs::Frame(b)); },
      py::arg("u1"), py::arg("u2"));
  m.def(
      "procrustes", [](const hs::Mat& a, const hs::Mat& b) { return hs::procrustes(hs::Frame(a), hs::Frame(b)); },
      py::arg("uhat"), py::arg("u"));
  m.def("two_inf_norm", &hs::two_inf_norm, py::arg("a"));
  m.def("chi2_quantile", &hs::chi2_quantile, py::arg("df"), py::arg("level"));
  m.def(
      "ks_stat", [](const std::vector<double>& x) { return hs::ks_stat(x); }, py::arg("samples"));

  m.def(
      "preset_json",
      [](const std::string& name, std::optional<hs::Index> n, std::optional<hs::Index> d, double theta) {
        return hs::to_json(hs::preset(name, preset_options(n, d, theta))).dump();
      },
      py::arg("name"), py::arg("n") = py::none(), py::arg("d") = py::none(), py::arg("theta") = 0.5);
  m.def(
      "generate",
      [](const std::string& name, std::uint64_t seed, std::optional<hs::Index> n, std::optional<hs::Index> d,
         double theta, double noise_scale) {
        const hs::Dataset ds = hs::generate(hs::preset(name, preset_options(n, d, theta)), seed, noise_scale);
        py::dict out;
        out["Mhat"] = ds.mhat;
        out["M"] = ds.signal.m;
        out["U"] = ds.signal.u.cols();
        out["V"] = ds.signal.v.cols();
        out["lambdas"] = ds.signal.lambdas;
        out["labels"] = ds.signal.labels;
        return out;
      },
      py::arg("preset"), py::arg("seed"), py::arg("n") = py::none(), py::arg("d") = py::none(),
      py::arg("theta") = 0.5, py::arg("noise_scale") = 1.0);
}
