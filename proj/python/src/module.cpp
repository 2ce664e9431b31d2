#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "luq/clustering.hpp"
#include "luq/density.hpp"
#include "luq/experiments.hpp"
#include "luq/kpca.hpp"
#include "luq/models.hpp"
#include "luq/pipeline.hpp"
#include "luq/spline_filter.hpp"
#include "luq/svm.hpp"
#include "luq/timeseries.hpp"

#include <sstream>

namespace py = pybind11;
using namespace luq;

namespace {

KernelSpec make_kernel(const std::string& name, std::optional<double> gamma, int degree, double coef0) {
  KernelSpec k;
  k.kind = kernel_kind_from_string(name);
  k.gamma = gamma;
  k.degree = degree;
  k.coef0 = coef0;
  k.validate();
  return k;
}

// {"kernel": name, "gamma": ..., "degree": ..., "coef0": ...}
KernelSpec kernel_from_dict(const py::dict& d, double default_coef0) {
  if (!d.contains("kernel")) throw ConfigError("kernel proposal needs a 'kernel' field");
  std::optional<double> gamma;
  if (d.contains("gamma") && !d["gamma"].is_none()) gamma = d["gamma"].cast<double>();
  const int degree = d.contains("degree") ? d["degree"].cast<int>() : 3;
  const double coef0 = d.contains("coef0") ? d["coef0"].cast<double>() : default_coef0;
  return make_kernel(d["kernel"].cast<std::string>(), gamma, degree, coef0);
}

py::dict kernel_dict(const KernelSpec& k) {
  py::dict d;
  d["kernel"] = to_string(k.kind);
  d["gamma"] = k.gamma ? py::cast(*k.gamma) : py::none();
  d["degree"] = k.degree;
  d["coef0"] = k.coef0;
  return d;
}

FilterConfig filter_config(std::size_t start, std::size_t end, std::size_t num_filter_obs, double tol, int min_knots,
                           int max_knots) {
  FilterConfig cfg;
  cfg.time_start_idx = start;
  cfg.time_end_idx = end;
  cfg.num_filter_obs = num_filter_obs;
  cfg.tol = tol;
  cfg.min_knots = min_knots;
  cfg.max_knots = max_knots;
  return cfg;
}

py::dict experiment_dict(const Experiment& ex) {
  py::dict d;
  d["name"] = ex.name;
  d["times"] = ex.grid.times();
  d["predicted"] = ex.predicted.values();
  d["observed"] = ex.observed.values();
  d["predicted_params"] = ex.predicted_params.samples();
  d["observed_params"] = ex.observed_params.samples();
  d["parameter_names"] = ex.predicted_params.names();
  d["sigma"] = ex.sigma;
  return d;
}

std::string run_config(const std::filesystem::path& config, const std::optional<std::string>& stage,
                       const std::optional<std::filesystem::path>& out) {
  PipelineConfig cfg = load_config(config);
  if (out) cfg.output_dir = *out;
  std::ostringstream log;
  {
    py::gil_scoped_release release;
    if (stage) run_stage(stage_from_string(*stage), cfg, log);
    else run_all(cfg, log);
  }
  return log.str();
}

}  // namespace

PYBIND11_MODULE(_luq, m) {
  m.doc() = "Learning-based data-consistent inversion of time-series data";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", error.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", error.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", error.ptr());

  m.def("set_warnings_enabled", &set_warnings_enabled, py::arg("enabled"));

  // timeseries
  m.def("uniform_grid", [](double t0, double t1, std::size_t n) { return TimeGrid::uniform(t0, t1, n).times(); },
        py::arg("t0"), py::arg("t1"), py::arg("n"));
  m.def("add_noise", [](const Matrix& values, double sigma, std::uint64_t seed) { return add_noise(values, {sigma, seed}); },
        py::arg("values"), py::arg("sigma"), py::arg("seed"));
  m.def("load_ensemble",
        [](const std::filesystem::path& path) {
          const auto ens = load_ensemble(path, SeriesKind::observed);
          return py::make_tuple(ens.grid().times(), ens.values());
        },
        py::arg("path"), "Returns (times, values) with one series per row.");
  m.def("save_ensemble",
        [](const std::filesystem::path& path, const std::vector<double>& times, const Matrix& values) {
          save_ensemble(path, TimeGrid(times), values);
        },
        py::arg("path"), py::arg("times"), py::arg("values"));

  // splinefilter
  m.def("eval_spline",
        [](const std::vector<double>& knot_times, const std::vector<double>& knot_values, double t) {
          SplineModel s{knot_times, knot_values};
          s.validate();
          return eval_spline(s, t);
        },
        py::arg("knot_times"), py::arg("knot_values"), py::arg("t"));
  m.def("fit_spline",
        [](const std::vector<double>& times, const std::vector<double>& values, int m) {
          const SplineFit fit = fit_spline(times, values, m);
          py::dict d;
          d["knot_times"] = fit.spline.knot_times;
          d["knot_values"] = fit.spline.knot_values;
          d["sse"] = fit.sse;
          return d;
        },
        py::arg("times"), py::arg("values"), py::arg("m"));
  m.def("filter_series",
        [](const std::vector<double>& times, const std::vector<double>& values, std::size_t time_start_idx,
           std::size_t time_end_idx, std::size_t num_filter_obs, double tol, int min_knots, int max_knots) {
          const FilterConfig cfg = filter_config(time_start_idx, time_end_idx, num_filter_obs, tol, min_knots, max_knots);
          const FilteredSeries f = filter_series(times, values, cfg);
          py::dict d;
          d["times"] = filter_times(TimeGrid(times), cfg);
          d["values"] = f.values;
          d["knots_used"] = f.knots_used;
          d["converged"] = f.converged;
          d["error"] = f.error;
          return d;
        },
        py::arg("times"), py::arg("values"), py::arg("time_start_idx"), py::arg("time_end_idx"),
        py::arg("num_filter_obs") = 20, py::arg("tol") = 5e-2, py::arg("min_knots") = 3, py::arg("max_knots") = 12);
  m.def("filter_ensemble",
        [](const std::vector<double>& times, const Matrix& values, std::size_t time_start_idx, std::size_t time_end_idx,
           std::size_t num_filter_obs, double tol, int min_knots, int max_knots) {
          const FilterConfig cfg = filter_config(time_start_idx, time_end_idx, num_filter_obs, tol, min_knots, max_knots);
          const TimeSeriesEnsemble ens(TimeGrid(times), values, SeriesKind::observed);
          FilteredEnsemble f;
          {
            py::gil_scoped_release release;
            f = filter_ensemble(ens, cfg);
          }
          py::dict d;
          d["times"] = f.filter_times;
          d["values"] = f.values;
          d["knots_used"] = f.knots_used;
          d["converged"] = std::vector<bool>(f.converged.begin(), f.converged.end());
          return d;
        },
        py::arg("times"), py::arg("values"), py::arg("time_start_idx"), py::arg("time_end_idx"),
        py::arg("num_filter_obs") = 20, py::arg("tol") = 5e-2, py::arg("min_knots") = 3, py::arg("max_knots") = 12);

  // clustering
  m.def("kmeans_fit",
        [](const Matrix& data, int k, int n_init, std::uint64_t seed) {
          const ClusterModel cm = kmeans_fit(data, {k, n_init, 300}, seed);
          py::dict d;
          d["labels"] = cm.labels;
          d["centroids"] = cm.centroids;
          d["inertia"] = cm.inertia;
          return d;
        },
        py::arg("data"), py::arg("k"), py::arg("n_init") = 10, py::arg("seed") = 0);

  // svm
  py::class_<ClassifierModel>(m, "Classifier")
      .def_property_readonly("kernel", [](const ClassifierModel& c) { return kernel_dict(c.kernel); })
      .def_property_readonly("num_classes", [](const ClassifierModel& c) { return c.num_classes; })
      .def_property_readonly("cv_misclassification", [](const ClassifierModel& c) { return c.cv_misclassification; })
      .def("classify", [](const ClassifierModel& c, const Matrix& x) { return classify(c, x); }, py::arg("features"))
      .def("to_json", [](const ClassifierModel& c) { return classifier_to_json(c).dump(); })
      .def_static("from_json", [](const std::string& s) { return classifier_from_json(nlohmann::json::parse(s)); });
  m.def("svm_train",
        [](const Matrix& x, const Labels& y, const py::dict& kernel, double c, double tol) {
          SvmOptions opt;
          opt.C = c;
          opt.tol = tol;
          return svm_train(x, y, kernel_from_dict(kernel, 0.0), opt);
        },
        py::arg("features"), py::arg("labels"), py::arg("kernel"), py::arg("C") = 1.0, py::arg("tol") = 1e-3);
  m.def("select_classifier",
        [](const Matrix& x, const Labels& y, const std::vector<py::dict>& proposals, int k_folds, std::uint64_t seed) {
          std::vector<KernelSpec> specs;
          for (const auto& p : proposals) specs.push_back(kernel_from_dict(p, 0.0));
          const ClassifierSelection sel = select_classifier(x, y, specs, k_folds, seed);
          return py::make_tuple(sel.model, sel.selected, sel.cv_rates);
        },
        py::arg("features"), py::arg("labels"), py::arg("proposals"), py::arg("k_folds") = 10, py::arg("seed") = 0,
        "Returns (classifier, selected index, cross-validated misclassification per proposal).");

  // kpca
  py::class_<QoiMap>(m, "QoiMap")
      .def_property_readonly("kernel", [](const QoiMap& q) { return kernel_dict(q.kernel); })
      .def_property_readonly("n_qoi", [](const QoiMap& q) { return q.n_qoi; })
      .def_property_readonly("eigenvalues", [](const QoiMap& q) { return q.eigenvalues; })
      .def_property_readonly("variance_explained", [](const QoiMap& q) { return q.variance_explained; })
      .def("transform",
           [](const QoiMap& q, const Matrix& y) {
             return kpca_transform(q, q.scaler.means.size() > 0 ? q.scaler.apply(y) : y);
           },
           py::arg("rows"))
      .def("to_json", [](const QoiMap& q) { return qoi_map_to_json(q).dump(); })
      .def_static("from_json", [](const std::string& s) { return qoi_map_from_json(nlohmann::json::parse(s)); });
  m.def("kpca_fit",
        [](const Matrix& y, const py::dict& kernel, int n_components, bool standardize) {
          if (!standardize) return kpca_fit(y, kernel_from_dict(kernel, 1.0), n_components);
          const Standardizer s = Standardizer::fit(y);
          return kpca_fit(s.apply(y), kernel_from_dict(kernel, 1.0), n_components, s);
        },
        py::arg("rows"), py::arg("kernel"), py::arg("n_components"), py::arg("standardize") = true);

  // density
  py::class_<Kde>(m, "Kde")
      .def(py::init([](const Matrix& samples, std::optional<Vector> weights) { return Kde(samples, std::move(weights)); }),
           py::arg("samples"), py::arg("weights") = std::nullopt)
      .def("__call__", [](const Kde& k, const Matrix& points) { return k.evaluate(points); }, py::arg("points"))
      .def_property_readonly("bandwidth", &Kde::bandwidth)
      .def_property_readonly("effective_size", &Kde::effective_size);
  m.def("compute_ratios",
        [](const Matrix& predicted_qoi, const Matrix& observed_qoi) {
          const RatioResult r = compute_ratios(predicted_qoi, observed_qoi);
          return py::make_tuple(r.ratios, r.diagnostic);
        },
        py::arg("predicted_qoi"), py::arg("observed_qoi"), "Returns (ratios, mean ratio).");
  m.def("cluster_weights", &cluster_weights, py::arg("observed_labels"), py::arg("num_clusters"));
  m.def("update_weights", &update_weights, py::arg("predicted_labels"), py::arg("ratios"), py::arg("weights"));
  m.def("rejection_sample", &rejection_sample, py::arg("update_weights"), py::arg("seed"));
  m.def("tv_distance",
        [](const Density1D& p, const Density1D& q, double lo, double hi, std::size_t grid_n, double extend) {
          return tv_distance(p, q, {lo, hi}, grid_n, extend);
        },
        py::arg("p"), py::arg("q"), py::arg("lo"), py::arg("hi"), py::arg("grid_n") = 1000, py::arg("extend") = 0.0,
        "Half the L1 distance between two densities on [lo - extend, hi + extend].");

  // models
  m.def("oscillator_series",
        [](double c, double omega0, const std::vector<double>& times) { return oscillator_series({c, omega0}, times); },
        py::arg("c"), py::arg("omega0"), py::arg("times"));
  m.def("selkov_series",
        [](double a, double b, const std::vector<double>& times, double rtol, double atol) {
          Rk45Options opt;
          opt.rtol = rtol;
          opt.atol = atol;
          return selkov_series({a, b}, times, opt);
        },
        py::arg("a"), py::arg("b"), py::arg("times"), py::arg("rtol") = 1e-6, py::arg("atol") = 1e-9);
  m.def("burgers_series",
        [](double a, double probe_x, const std::vector<double>& times) {
          BurgersSetup s;
          s.a = a;
          return burgers_series(s, probe_x, times);
        },
        py::arg("a"), py::arg("probe_x"), py::arg("times"));
  m.def("generate_experiment",
        [](const std::string& name, std::uint64_t seed, std::optional<std::size_t> num_obs,
           std::optional<std::size_t> num_pred, std::optional<double> sigma, double probe_x,
           const std::string& observed_law) {
          ExperimentConfig cfg;
          cfg.name = name;
          cfg.seed = seed;
          cfg.num_obs = num_obs;
          cfg.num_pred = num_pred;
          cfg.sigma = sigma;
          cfg.probe_x = probe_x;
          if (observed_law == "initial") cfg.observed_law = ObservedLaw::initial;
          else if (observed_law != "data_generating") throw ConfigError("observed_law must be data_generating or initial");
          Experiment ex;
          {
            py::gil_scoped_release release;
            ex = generate_experiment(cfg);
          }
          return experiment_dict(ex);
        },
        py::arg("name"), py::arg("seed") = 0, py::arg("num_obs") = std::nullopt, py::arg("num_pred") = std::nullopt,
        py::arg("sigma") = std::nullopt, py::arg("probe_x") = 6.5, py::arg("observed_law") = "data_generating");

  // pipeline
  m.def("run", &run_config, py::arg("config"), py::arg("stage") = std::nullopt, py::arg("output_dir") = std::nullopt,
        "Runs one stage (or all of them) of a config file; returns the log.");
  m.def("stages", [] {
    std::vector<std::string> out;
    for (Stage s : all_stages()) out.push_back(to_string(s));
    return out;
  });
  m.def("config_hash", [](const std::filesystem::path& path) { return load_config(path).hash(); }, py::arg("config"));
  m.def("file_hash", &file_hash, py::arg("path"));
}
