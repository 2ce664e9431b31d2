#include "luq/pipeline.hpp"

#include "luq/csv.hpp"
#include "luq/density.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace luq {
namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---- config parsing -------------------------------------------------------

class FieldReader {
 public:
  explicit FieldReader(std::vector<std::string>& missing) : missing_(missing) {}

  const json* require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) {
      missing_.push_back(path);
      return nullptr;
    }
    return &obj.at(key);
  }

 private:
  std::vector<std::string>& missing_;
};

template <typename T>
T get_as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + path + "' has the wrong type");
  }
}

template <typename T>
T optional_field(const json& obj, const std::string& key, T fallback, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) return fallback;
  return get_as<T>(obj.at(key), path + "." + key);
}

ParameterDistribution parse_law(const json& j, const std::string& name, Interval bounds, const std::string& path) {
  const std::string kind = optional_field<std::string>(j, "kind", "uniform", path);
  if (kind == "uniform") return ParameterDistribution::uniform(name, bounds);
  if (kind == "beta") {
    const double a = optional_field<double>(j, "alpha", 2.0, path);
    const double b = optional_field<double>(j, "beta", 2.0, path);
    if (!(a > 0.0 && b > 0.0)) throw ConfigError(path + ": beta shape parameters must be positive");
    return ParameterDistribution::beta_on(name, bounds, a, b);
  }
  throw ConfigError(path + ": unknown distribution kind '" + kind + "'");
}

json law_json(const ParameterDistribution& d) {
  json j{{"kind", d.kind == ParameterDistribution::Kind::uniform ? "uniform" : "beta"}};
  if (d.kind == ParameterDistribution::Kind::beta) {
    j["alpha"] = d.alpha;
    j["beta"] = d.beta;
  }
  return j;
}

std::vector<KernelSpec> parse_proposals(const json& obj, const std::string& path, double default_coef0,
                                        std::vector<KernelSpec> fallback) {
  if (!obj.is_object() || !obj.contains("proposals")) return fallback;
  const json& list = obj.at("proposals");
  if (!list.is_array() || list.empty()) throw ConfigError(path + ".proposals must be a non-empty array");
  std::vector<KernelSpec> out;
  for (const auto& p : list) out.push_back(kernel_from_proposal(p, default_coef0));
  return out;
}

std::vector<KernelSpec> default_svm_proposals() {
  std::vector<KernelSpec> out;
  for (auto kind : {KernelKind::linear, KernelKind::rbf, KernelKind::poly, KernelKind::sigmoid}) {
    KernelSpec k;
    k.kind = kind;
    out.push_back(k);
  }
  return out;
}

json proposals_json(const std::vector<KernelSpec>& proposals) {
  json out = json::array();
  for (const auto& p : proposals) out.push_back(p);
  return out;
}

// ---- artifacts ------------------------------------------------------------

struct Paths {
  fs::path dir;
  fs::path at(const std::string& name) const { return dir / name; }
};

void require_artifact(const Paths& p, const std::string& name, Stage producer) {
  if (!fs::exists(p.at(name))) {
    throw MissingArtifactError("missing artifact '" + p.at(name).string() + "'; run the '" + to_string(producer) +
                               "' stage first");
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open '" + path.string() + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void record_stage(const PipelineConfig& cfg, const Paths& p, Stage stage, const std::vector<std::string>& outputs) {
  const fs::path manifest_path = p.at("manifest.json");
  json manifest = fs::exists(manifest_path) ? read_json(manifest_path) : json::object();
  if (manifest.value("config_hash", "") != cfg.hash()) manifest["stages"] = json::object();
  const StageSeeds s = stage_seeds(cfg.seed);
  manifest["config_hash"] = cfg.hash();
  manifest["seed"] = cfg.seed;
  manifest["seeds"] = {{"data", s.data}, {"clustering", s.clustering}, {"folds", s.folds}, {"rejection", s.rejection}};
  json files = json::object();
  for (const auto& name : outputs) files[name] = file_hash(p.at(name));
  manifest["stages"][to_string(stage)] = {{"outputs", files}};
  write_json(manifest_path, manifest);
}

json distributions_json(const std::vector<ParameterDistribution>& initial,
                        const std::vector<ParameterDistribution>& dg) {
  json params = json::array();
  for (std::size_t i = 0; i < initial.size(); ++i) {
    json entry{{"name", initial[i].name},
               {"bounds", {initial[i].bounds.lo, initial[i].bounds.hi}},
               {"initial", law_json(initial[i])}};
    if (i < dg.size()) entry["data_generating"] = law_json(dg[i]);
    params.push_back(entry);
  }
  return {{"parameters", params}};
}

struct Laws {
  std::vector<ParameterDistribution> initial;
  std::vector<ParameterDistribution> dg;
};

Laws read_distributions(const fs::path& path) {
  const json j = read_json(path);
  Laws laws;
  try {
    for (const auto& e : j.at("parameters")) {
      const std::string name = e.at("name").get<std::string>();
      const Interval b{e.at("bounds").at(0).get<double>(), e.at("bounds").at(1).get<double>()};
      laws.initial.push_back(parse_law(e.at("initial"), name, b, path.string()));
      if (e.contains("data_generating")) laws.dg.push_back(parse_law(e.at("data_generating"), name, b, path.string()));
    }
  } catch (const json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
  return laws;
}

std::vector<Interval> bounds_of(const std::vector<ParameterDistribution>& laws) {
  std::vector<Interval> out;
  for (const auto& l : laws) out.push_back(l.bounds);
  return out;
}

std::string cluster_file(const std::string& stem, int k, const std::string& ext) {
  return stem + "_" + std::to_string(k) + ext;
}

// ---- stages ---------------------------------------------------------------

void stage_generate(const PipelineConfig& cfg, const Paths& p, std::ostream& log) {
  std::vector<std::string> outputs{"predicted.csv", "observed.csv", "predicted_params.csv", "distributions.json"};
  if (cfg.experiment) {
    ExperimentConfig ec = *cfg.experiment;
    ec.seed = stage_seeds(cfg.seed).data;
    const Experiment ex = generate_experiment(ec);
    save_ensemble(p.at("predicted.csv"), ex.predicted);
    save_ensemble(p.at("observed.csv"), ex.observed);
    save_parameters(p.at("predicted_params.csv"), ex.predicted_params);
    save_parameters(p.at("observed_params.csv"), ex.observed_params);
    outputs.push_back("observed_params.csv");
    write_json(p.at("distributions.json"), distributions_json(ex.initial, ex.data_generating));
    log << "Generated " << ex.predicted.num_series() << " predicted and " << ex.observed.num_series() << " observed "
        << ex.name << " series on " << ex.grid.size() << " times\n";
  } else {
    const InputFiles& in = *cfg.inputs;
    const auto pred = load_ensemble(in.predicted, SeriesKind::predicted);
    const auto obs = load_ensemble(in.observed, SeriesKind::observed);
    if (!(pred.grid() == obs.grid())) throw ValidationError("predicted and observed series use different time grids");
    const auto bounds = bounds_of(in.initial);
    const auto pred_params = load_parameters(in.predicted_params, bounds);
    if (pred_params.size() != pred.num_series()) {
      throw ValidationError("predicted parameter count differs from the predicted series count");
    }
    if (pred_params.dimension() != static_cast<Eigen::Index>(in.initial.size())) {
      throw ConfigError("inputs.parameters must describe every parameter column");
    }
    save_ensemble(p.at("predicted.csv"), pred);
    save_ensemble(p.at("observed.csv"), obs);
    save_parameters(p.at("predicted_params.csv"), pred_params);
    if (in.observed_params) {
      save_parameters(p.at("observed_params.csv"), load_parameters(*in.observed_params, bounds));
      outputs.push_back("observed_params.csv");
    } else if (fs::exists(p.at("observed_params.csv"))) {
      fs::remove(p.at("observed_params.csv"));
    }
    write_json(p.at("distributions.json"), distributions_json(in.initial, in.data_generating));
    log << "Loaded " << pred.num_series() << " predicted and " << obs.num_series() << " observed series\n";
  }
  record_stage(cfg, p, Stage::generate, outputs);
}

void stage_filter(const PipelineConfig& cfg, const Paths& p, std::ostream& log) {
  require_artifact(p, "predicted.csv", Stage::generate);
  require_artifact(p, "observed.csv", Stage::generate);
  const auto pred = load_ensemble(p.at("predicted.csv"), SeriesKind::predicted);
  const auto obs = load_ensemble(p.at("observed.csv"), SeriesKind::observed);
  const FilteredEnsemble fp = filter_ensemble(pred, cfg.filter);
  const FilteredEnsemble fo = filter_ensemble(obs, cfg.filter);
  save_filtered(p.at("filtered_predicted.csv"), fp);
  save_filtered(p.at("filtered_observed.csv"), fo);
  log << "Filtered " << fp.values.rows() << " predicted series (" << fp.num_converged() << " converged) and "
      << fo.values.rows() << " observed series (" << fo.num_converged() << " converged) at "
      << fp.filter_times.size() << " filter times\n";
  record_stage(cfg, p, Stage::filter,
               {"filtered_predicted.csv", "filtered_predicted.knots.csv", "filtered_observed.csv",
                "filtered_observed.knots.csv"});
}

void stage_dynamics(const PipelineConfig& cfg, const Paths& p, std::ostream& log) {
  require_artifact(p, "filtered_predicted.csv", Stage::filter);
  require_artifact(p, "filtered_observed.csv", Stage::filter);
  const FilteredEnsemble fp = load_filtered(p.at("filtered_predicted.csv"));
  const FilteredEnsemble fo = load_filtered(p.at("filtered_observed.csv"));
  const StageSeeds seeds = stage_seeds(cfg.seed);

  const ClusterModel clusters = kmeans_fit(fp.values, cfg.clustering, seeds.clustering);
  save_labels(p.at("labels_predicted.csv"), clusters.labels);

  const ClassifierSelection sel =
      select_classifier(fp.values, clusters.labels, cfg.svm_proposals, cfg.k_folds, seeds.folds, cfg.svm);
  for (std::size_t i = 0; i < cfg.svm_proposals.size(); ++i) {
    if (std::isnan(sel.cv_rates[i])) {
      log << "skipped " << cfg.svm_proposals[i].describe() << '\n';
    } else {
      log << csv::format_double(sel.cv_rates[i]) << " misclassification rate for  " << cfg.svm_proposals[i].describe()
          << '\n';
    }
  }
  log << "Best classifier is  " << cfg.svm_proposals[sel.selected].describe() << '\n';
  log << "Misclassification rate is  " << csv::format_double(sel.model.cv_misclassification) << '\n';
  save_classifier(p.at("classifier.json"), sel.model);

  const Labels obs_labels = classify(sel.model, fo.values);
  save_labels(p.at("labels_observed.csv"), obs_labels);

  json summary;
  summary["num_clusters"] = cfg.clustering.n_clusters;
  summary["inertia"] = clusters.inertia;
  std::vector<int> pred_counts(static_cast<std::size_t>(cfg.clustering.n_clusters), 0);
  std::vector<int> obs_counts(pred_counts.size(), 0);
  for (int l : clusters.labels) ++pred_counts[static_cast<std::size_t>(l)];
  for (int l : obs_labels) ++obs_counts[static_cast<std::size_t>(l)];
  summary["predicted_counts"] = pred_counts;
  summary["observed_counts"] = obs_counts;
  json rates = json::array();
  for (std::size_t i = 0; i < cfg.svm_proposals.size(); ++i) {
    rates.push_back({{"kernel", cfg.svm_proposals[i]},
                     {"cv_misclassification", std::isnan(sel.cv_rates[i]) ? json(nullptr) : json(sel.cv_rates[i])}});
  }
  summary["proposals"] = rates;
  summary["selected"] = sel.selected;
  summary["selected_kernel"] = cfg.svm_proposals[sel.selected];
  summary["cv_misclassification"] = sel.model.cv_misclassification;
  summary["converged"] = sel.model.converged();
  write_json(p.at("dynamics.json"), summary);
  record_stage(cfg, p, Stage::dynamics, {"labels_predicted.csv", "classifier.json", "labels_observed.csv", "dynamics.json"});
}

void stage_qoi(const PipelineConfig& cfg, const Paths& p, std::ostream& log) {
  require_artifact(p, "labels_predicted.csv", Stage::dynamics);
  require_artifact(p, "labels_observed.csv", Stage::dynamics);
  require_artifact(p, "filtered_predicted.csv", Stage::filter);
  require_artifact(p, "filtered_observed.csv", Stage::filter);
  const FilteredEnsemble fp = load_filtered(p.at("filtered_predicted.csv"));
  const FilteredEnsemble fo = load_filtered(p.at("filtered_observed.csv"));
  const Labels pl = load_labels(p.at("labels_predicted.csv"));
  const Labels ol = load_labels(p.at("labels_observed.csv"));
  const int k = cfg.clustering.n_clusters;

  const auto result = learn_qois_and_transform(fp.values, pl, fo.values, ol, k, cfg.qoi_mode, cfg.qoi_proposals);
  std::vector<std::string> outputs;
  json summary = json::array();
  for (const auto& cq : result) {
    for (const auto& s : cq.scores) {
      if (s.usable) {
        log << "cluster " << cq.cluster + 1 << ": " << s.n_qoi << " PCs of " << s.kernel.describe() << " explain "
            << fixed(100.0 * s.variance, 4) << "% of variance\n";
      } else {
        log << "cluster " << cq.cluster + 1 << ": " << s.kernel.describe() << " not usable (" << s.reason << ")\n";
      }
    }
    log << "Best kPCA for cluster  " << cq.cluster + 1 << "  is  " << cq.scores[cq.selected].kernel.describe() << '\n';
    log << cq.map.n_qoi << " PCs explain " << fixed(100.0 * cq.map.variance_explained, 4) << "% of variance\n";

    const std::string map_name = cluster_file("qoi_map", cq.cluster, ".json");
    const std::string pred_name = cluster_file("qoi_predicted", cq.cluster, ".csv");
    const std::string obs_name = cluster_file("qoi_observed", cq.cluster, ".csv");
    save_qoi_map(p.at(map_name), cq.map);
    save_qoi_samples(p.at(pred_name), cq.pred_qoi, cq.pred_index);
    save_qoi_samples(p.at(obs_name), cq.obs_qoi, cq.obs_index);
    outputs.insert(outputs.end(), {map_name, pred_name, obs_name});

    json scores = json::array();
    for (const auto& s : cq.scores) {
      scores.push_back({{"kernel", s.kernel}, {"usable", s.usable}, {"n_qoi", s.n_qoi}, {"variance", s.variance}});
    }
    summary.push_back({{"cluster", cq.cluster},
                       {"selected", cq.selected},
                       {"kernel", cq.scores[cq.selected].kernel},
                       {"n_qoi", cq.map.n_qoi},
                       {"variance_explained", cq.map.variance_explained},
                       {"spectral_gap", cq.map.spectral_gap()},
                       {"n_predicted", cq.pred_index.size()},
                       {"n_observed", cq.obs_index.size()},
                       {"proposals", scores}});
  }
  write_json(p.at("qoi.json"), {{"clusters", summary}});
  outputs.push_back("qoi.json");
  record_stage(cfg, p, Stage::qoi, outputs);
}

Labels labels_checked(const fs::path& path, std::size_t expected, int k) {
  Labels l = load_labels(path);
  if (l.size() != expected) throw FormatError(path.string() + ": label count does not match the ensemble");
  for (int v : l) {
    if (v < 0 || v >= k) throw FormatError(path.string() + ": label out of range");
  }
  return l;
}

void stage_invert(const PipelineConfig& cfg, const Paths& p, std::ostream& log) {
  require_artifact(p, "predicted_params.csv", Stage::generate);
  require_artifact(p, "labels_predicted.csv", Stage::dynamics);
  require_artifact(p, "labels_observed.csv", Stage::dynamics);
  const int k = cfg.clustering.n_clusters;
  for (int c = 0; c < k; ++c) {
    require_artifact(p, cluster_file("qoi_predicted", c, ".csv"), Stage::qoi);
    require_artifact(p, cluster_file("qoi_observed", c, ".csv"), Stage::qoi);
  }
  const ParameterSampleSet params = load_parameters(p.at("predicted_params.csv"));
  const auto n = static_cast<std::size_t>(params.size());
  const Labels pl = labels_checked(p.at("labels_predicted.csv"), n, k);
  const Labels ol = load_labels(p.at("labels_observed.csv"));
  const Vector w = cluster_weights(ol, k);

  Vector ratios = Vector::Zero(static_cast<Eigen::Index>(n));
  json clusters = json::array();
  for (int c = 0; c < k; ++c) {
    std::vector<Eigen::Index> pred_index, obs_index;
    const Matrix qp = load_qoi_samples(p.at(cluster_file("qoi_predicted", c, ".csv")), &pred_index);
    const Matrix qo = load_qoi_samples(p.at(cluster_file("qoi_observed", c, ".csv")), &obs_index);
    json entry{{"cluster", c}, {"n_predicted", qp.rows()}, {"n_observed", qo.rows()}, {"weight", w(c)}};
    if (qo.rows() == 0) {
      entry["diagnostic"] = nullptr;
      entry["underflows"] = 0;
      log << "cluster " << c + 1 << " has no observed samples; weight 0\n";
    } else {
      if (qo.rows() < 2) {
        throw NumericalError("cluster " + std::to_string(c + 1) + " holds a single observed sample; its density cannot be estimated");
      }
      const RatioResult rr = compute_ratios(qp, qo);
      for (std::size_t i = 0; i < pred_index.size(); ++i) {
        const auto id = pred_index[i];
        if (id < 0 || static_cast<std::size_t>(id) >= n || pl[static_cast<std::size_t>(id)] != c) {
          throw FormatError("QoI sample ids of cluster " + std::to_string(c) + " do not match the labels");
        }
        ratios(id) = rr.ratios(static_cast<Eigen::Index>(i));
      }
      entry["diagnostic"] = rr.diagnostic;
      entry["underflows"] = rr.underflows;
      log << "E(r) for cluster " << c + 1 << " is " << fixed(rr.diagnostic, 4) << '\n';
    }
    clusters.push_back(entry);
  }
  const Vector u = update_weights(pl, ratios, w);
  const auto accepted = rejection_sample(u, stage_seeds(cfg.seed).rejection);

  std::vector<csv::Row> rows{{"sample_id", "cluster", "ratio", "update_weight"}};
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    rows.push_back({std::to_string(i), std::to_string(pl[i]), csv::format_double(ratios(r)), csv::format_double(u(r))});
  }
  csv::write(p.at("ratios.csv"), rows);
  std::vector<csv::Row> acc{{"sample_id"}};
  for (auto i : accepted) acc.push_back({std::to_string(i)});
  csv::write(p.at("accepted.csv"), acc);
  log << "Accepted " << accepted.size() << " of " << n << " initial samples\n";

  write_json(p.at("inversion.json"), {{"clusters", clusters}, {"accepted", accepted.size()}, {"num_initial", n}});
  record_stage(cfg, p, Stage::invert, {"ratios.csv", "accepted.csv", "inversion.json"});
}

Vector load_update_weights(const fs::path& path, std::size_t n) {
  const auto rows = csv::read(path);
  if (rows.size() != n + 1 || rows.front().size() != 4) throw FormatError(path.string() + ": unexpected layout");
  Vector u(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) u(static_cast<Eigen::Index>(i)) = csv::parse_double(rows[i + 1][3], path.string());
  return u;
}

void stage_metrics(const PipelineConfig& cfg, const Paths& p, std::ostream& log) {
  require_artifact(p, "distributions.json", Stage::generate);
  require_artifact(p, "predicted_params.csv", Stage::generate);
  require_artifact(p, "ratios.csv", Stage::invert);
  require_artifact(p, "inversion.json", Stage::invert);
  require_artifact(p, "labels_predicted.csv", Stage::dynamics);
  const Laws laws = read_distributions(p.at("distributions.json"));
  const ParameterSampleSet init = load_parameters(p.at("predicted_params.csv"), bounds_of(laws.initial));
  const auto n = static_cast<std::size_t>(init.size());
  const Vector u = load_update_weights(p.at("ratios.csv"), n);
  const int k = cfg.clustering.n_clusters;
  const Labels pl = labels_checked(p.at("labels_predicted.csv"), n, k);
  std::optional<ParameterSampleSet> dg_samples;
  if (fs::exists(p.at("observed_params.csv"))) {
    dg_samples = load_parameters(p.at("observed_params.csv"), bounds_of(laws.initial));
    if (dg_samples->dimension() != init.dimension()) throw FormatError("observed parameters have the wrong width");
  }
  const bool have_exact = laws.dg.size() == laws.initial.size();
  const std::size_t grid_n = cfg.grid_n;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  auto cell = [](double v) { return std::isnan(v) ? std::string() : csv::format_double(v); };

  std::vector<csv::Row> dens{{"parameter", "x", "initial", "updated", "data_generating", "exact"}};
  std::vector<csv::Row> table{{"parameter", "tv_initial", "tv_update", "tv_dg_exact"}};
  json tv = json::array();
  for (Eigen::Index j = 0; j < init.dimension(); ++j) {
    const auto& law = laws.initial[static_cast<std::size_t>(j)];
    const Interval b = law.bounds;
    const Kde updated = updated_marginal(init, j, u);
    const Density1D f_init = [&](double x) { return law.pdf(x); };
    const Density1D f_upd = [&](double x) { return updated(x); };
    std::optional<Kde> dg_kde;
    if (dg_samples) dg_kde.emplace(dg_samples->samples().col(j));
    const Density1D f_dg = [&](double x) { return dg_kde ? (*dg_kde)(x) : nan; };
    const Density1D f_exact = [&](double x) { return have_exact ? laws.dg[static_cast<std::size_t>(j)].pdf(x) : nan; };

    for (std::size_t g = 0; g < grid_n; ++g) {
      const double x = g + 1 == grid_n ? b.hi : b.lo + b.width() * static_cast<double>(g) / static_cast<double>(grid_n - 1);
      dens.push_back({law.name, csv::format_double(x), csv::format_double(f_init(x)), csv::format_double(f_upd(x)),
                      cell(f_dg(x)), cell(f_exact(x))});
    }
    const double t_init = dg_kde ? table_distance(f_init, f_dg, b, grid_n) : nan;
    const double t_upd = dg_kde ? table_distance(f_upd, f_dg, b, grid_n) : nan;
    const double t_exact = dg_kde && have_exact ? table_distance(f_dg, f_exact, b, grid_n) : nan;
    table.push_back({law.name, cell(t_init), cell(t_upd), cell(t_exact)});

    json entry{{"parameter", law.name}, {"initial", num(t_init)}, {"update", num(t_upd)}, {"dg_exact", num(t_exact)}};
    const Kde init_kde(init.samples().col(j));
    entry["update_initial_kde"] = table_distance(f_upd, [&](double x) { return init_kde(x); }, b, grid_n);
    if (dg_kde) {
      const double ext = 3.0 * std::max(updated.bandwidth()(0), dg_kde->bandwidth()(0));
      entry["half_l1_update"] = tv_distance(f_upd, f_dg, b, grid_n, ext);
    }
    if (have_exact) {
      const double ext = 3.0 * updated.bandwidth()(0);
      entry["half_l1_update_exact"] = tv_distance(f_upd, f_exact, b, grid_n, ext);
    }
    tv.push_back(entry);
    log << law.name << ": TV(initial, DG) " << (std::isnan(t_init) ? "n/a" : fixed(t_init, 4)) << "  TV(update, DG) "
        << (std::isnan(t_upd) ? "n/a" : fixed(t_upd, 4)) << "  TV(DG, exact) "
        << (std::isnan(t_exact) ? "n/a" : fixed(t_exact, 4)) << '\n';
  }
  csv::write(p.at("densities.csv"), dens);
  csv::write(p.at("tv_table.csv"), table);

  // Probability of the parameter region of each cluster.
  json events = json::array();
  std::vector<double> dg_mass(static_cast<std::size_t>(k), 0.0);
  if (dg_samples) {
    std::vector<double> scale;
    for (const auto& l : laws.initial) scale.push_back(l.bounds.width() > 0.0 ? l.bounds.width() : 1.0);
    const Matrix& ps = init.samples();
    const Matrix& ds = dg_samples->samples();
    for (Eigen::Index r = 0; r < ds.rows(); ++r) {
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < ps.rows(); ++i) {
        double d = 0.0;
        for (Eigen::Index c = 0; c < ps.cols(); ++c) {
          const double z = (ds(r, c) - ps(i, c)) / scale[static_cast<std::size_t>(c)];
          d += z * z;
        }
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      dg_mass[static_cast<std::size_t>(pl[static_cast<std::size_t>(best)])] += 1.0 / static_cast<double>(ds.rows());
    }
  }
  const double u_total = u.sum();
  for (int c = 0; c < k; ++c) {
    double upd = 0.0;
    double cnt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pl[i] != c) continue;
      upd += u(static_cast<Eigen::Index>(i));
      cnt += 1.0;
    }
    events.push_back({{"cluster", c},
                      {"initial", cnt / static_cast<double>(n)},
                      {"updated", upd / u_total},
                      {"data_generating", dg_samples ? json(dg_mass[static_cast<std::size_t>(c)]) : json(nullptr)}});
    log << "P(cluster " << c + 1 << " region): updated " << fixed(upd / u_total, 4);
    if (dg_samples) log << ", data-generating " << fixed(dg_mass[static_cast<std::size_t>(c)], 4);
    log << '\n';
  }

  const json inversion = read_json(p.at("inversion.json"));
  json diag;
  diag["clusters"] = inversion.at("clusters");
  diag["tv_table"] = tv;
  diag["events"] = events;
  diag["accepted"] = inversion.at("accepted");
  diag["num_initial"] = inversion.at("num_initial");
  write_json(p.at("diagnostics.json"), diag);
  record_stage(cfg, p, Stage::metrics, {"densities.csv", "tv_table.csv", "diagnostics.json"});
}

}  // namespace

// ---- config ---------------------------------------------------------------

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object; missing fields: seed, experiment, filter, clustering, qoi");
  std::vector<std::string> missing;
  FieldReader reader(missing);
  PipelineConfig cfg;

  if (const json* s = reader.require(j, "seed", "seed")) cfg.seed = get_as<std::uint64_t>(*s, "seed");
  if (j.contains("output_dir")) {
    fs::path out = get_as<std::string>(j.at("output_dir"), "output_dir");
    cfg.output_dir = out.is_relative() && !base_dir.empty() ? base_dir / out : out;
  }

  if (j.contains("experiment") && j.contains("inputs")) throw ConfigError("config must set only one of experiment, inputs");
  if (j.contains("experiment")) {
    const json& e = j.at("experiment");
    ExperimentConfig ec;
    if (const json* name = reader.require(e, "name", "experiment.name")) ec.name = get_as<std::string>(*name, "experiment.name");
    if (e.contains("num_obs")) ec.num_obs = get_as<std::size_t>(e.at("num_obs"), "experiment.num_obs");
    if (e.contains("num_pred")) ec.num_pred = get_as<std::size_t>(e.at("num_pred"), "experiment.num_pred");
    if (e.contains("sigma")) ec.sigma = get_as<double>(e.at("sigma"), "experiment.sigma");
    ec.probe_x = optional_field<double>(e, "probe_x", ec.probe_x, "experiment");
    ec.ode.rtol = optional_field<double>(e, "rtol", ec.ode.rtol, "experiment");
    ec.ode.atol = optional_field<double>(e, "atol", ec.ode.atol, "experiment");
    const std::string law = optional_field<std::string>(e, "observed_law", "data_generating", "experiment");
    if (law == "data_generating") ec.observed_law = ObservedLaw::data_generating;
    else if (law == "initial") ec.observed_law = ObservedLaw::initial;
    else throw ConfigError("experiment.observed_law must be data_generating or initial");
    if (!missing.empty() || ec.name.empty()) {
      // reported below
    } else {
      experiment_grid(ec.name);  // rejects unknown names
    }
    cfg.experiment = ec;
  } else if (j.contains("inputs")) {
    const json& in = j.at("inputs");
    InputFiles f;
    auto path_field = [&](const char* key) -> fs::path {
      const json* v = reader.require(in, key, std::string("inputs.") + key);
      if (!v) return {};
      fs::path path = get_as<std::string>(*v, std::string("inputs.") + key);
      return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    f.predicted = path_field("predicted");
    f.observed = path_field("observed");
    f.predicted_params = path_field("predicted_params");
    if (in.contains("observed_params")) f.observed_params = path_field("observed_params");
    if (const json* params = reader.require(in, "parameters", "inputs.parameters")) {
      if (!params->is_array() || params->empty()) throw ConfigError("inputs.parameters must be a non-empty array");
      bool all_dg = true;
      for (std::size_t i = 0; i < params->size(); ++i) {
        const json& pj = params->at(i);
        const std::string path = "inputs.parameters[" + std::to_string(i) + "]";
        const json* name = reader.require(pj, "name", path + ".name");
        const json* bounds = reader.require(pj, "bounds", path + ".bounds");
        if (!name || !bounds) continue;
        const auto bv = get_as<std::vector<double>>(*bounds, path + ".bounds");
        if (bv.size() != 2 || !(bv[1] > bv[0])) throw ConfigError(path + ".bounds must be [lo, hi] with lo < hi");
        const std::string nm = get_as<std::string>(*name, path + ".name");
        f.initial.push_back(parse_law(pj.value("initial", json::object()), nm, {bv[0], bv[1]}, path + ".initial"));
        if (pj.contains("data_generating")) {
          f.data_generating.push_back(parse_law(pj.at("data_generating"), nm, {bv[0], bv[1]}, path + ".data_generating"));
        } else {
          all_dg = false;
        }
      }
      if (!all_dg) f.data_generating.clear();
    }
    cfg.inputs = f;
  } else {
    missing.push_back("experiment (or inputs)");
  }

  if (const json* f = reader.require(j, "filter", "filter")) {
    if (const json* v = reader.require(*f, "time_start_idx", "filter.time_start_idx")) {
      cfg.filter.time_start_idx = get_as<std::size_t>(*v, "filter.time_start_idx");
    }
    if (const json* v = reader.require(*f, "time_end_idx", "filter.time_end_idx")) {
      cfg.filter.time_end_idx = get_as<std::size_t>(*v, "filter.time_end_idx");
    }
    cfg.filter.num_filter_obs = optional_field<std::size_t>(*f, "num_filter_obs", cfg.filter.num_filter_obs, "filter");
    cfg.filter.tol = optional_field<double>(*f, "tol", cfg.filter.tol, "filter");
    cfg.filter.min_knots = optional_field<int>(*f, "min_knots", cfg.filter.min_knots, "filter");
    cfg.filter.max_knots = optional_field<int>(*f, "max_knots", cfg.filter.max_knots, "filter");
  }
  if (const json* c = reader.require(j, "clustering", "clustering")) {
    if (const json* v = reader.require(*c, "K", "clustering.K")) cfg.clustering.n_clusters = get_as<int>(*v, "clustering.K");
    cfg.clustering.n_init = optional_field<int>(*c, "n_init", cfg.clustering.n_init, "clustering");
    cfg.clustering.max_iterations = optional_field<int>(*c, "max_iterations", cfg.clustering.max_iterations, "clustering");
    if (cfg.clustering.n_clusters < 1 || cfg.clustering.n_init < 1) throw ConfigError("clustering.K and n_init must be >= 1");
  }

  const json svm = j.value("svm", json::object());
  cfg.svm_proposals = parse_proposals(svm, "svm", 0.0, default_svm_proposals());
  cfg.k_folds = optional_field<int>(svm, "k_folds", 10, "svm");
  cfg.svm.C = optional_field<double>(svm, "C", 1.0, "svm");
  cfg.svm.tol = optional_field<double>(svm, "tol", 1e-3, "svm");
  if (cfg.k_folds < 2) throw ConfigError("svm.k_folds must be >= 2");
  if (!(cfg.svm.C > 0.0) || !(cfg.svm.tol > 0.0)) throw ConfigError("svm.C and svm.tol must be positive");

  if (const json* q = reader.require(j, "qoi", "qoi")) {
    if (const json* m = reader.require(*q, "mode", "qoi.mode")) {
      const std::string mode = get_as<std::string>(*m, "qoi.mode");
      if (mode == "fixed") {
        if (const json* v = reader.require(*q, "n", "qoi.n")) cfg.qoi_mode = QoiMode::fixed(get_as<int>(*v, "qoi.n"));
        if (cfg.qoi_mode.n < 1) throw ConfigError("qoi.n must be >= 1");
      } else if (mode == "rate") {
        if (const json* v = reader.require(*q, "rate", "qoi.rate")) cfg.qoi_mode = QoiMode::variance(get_as<double>(*v, "qoi.rate"));
        if (!(cfg.qoi_mode.rate >= 0.0 && cfg.qoi_mode.rate <= 1.0)) throw ConfigError("qoi.rate must lie in [0, 1]");
      } else {
        throw ConfigError("qoi.mode must be 'fixed' or 'rate'");
      }
    }
    cfg.qoi_proposals = parse_proposals(*q, "qoi", 1.0, default_kpca_proposals());
  }

  const json density = j.value("density", json::object());
  cfg.grid_n = optional_field<std::size_t>(density, "grid_n", cfg.grid_n, "density");
  if (cfg.grid_n < 2) throw ConfigError("density.grid_n must be >= 2");

  if (!missing.empty()) {
    std::string msg = "config is missing required fields:";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg);
  }
  if (cfg.experiment) {
    try {
      cfg.filter.validate(experiment_grid(cfg.experiment->name).size());
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("filter: ") + e.what());
    }
  }
  return cfg;
}

json PipelineConfig::semantic_json() const {
  json j;
  j["seed"] = seed;
  if (experiment) {
    const auto& e = *experiment;
    j["experiment"] = {{"name", e.name},
                       {"num_obs", e.num_obs.value_or(default_num_obs(e.name))},
                       {"num_pred", e.num_pred.value_or(default_num_pred(e.name))},
                       {"sigma", e.sigma.value_or(default_sigma(e.name))},
                       {"observed_law", e.observed_law == ObservedLaw::initial ? "initial" : "data_generating"}};
    if (e.name == "shock") j["experiment"]["probe_x"] = e.probe_x;
    if (e.name == "hopf") {
      j["experiment"]["rtol"] = e.ode.rtol;
      j["experiment"]["atol"] = e.ode.atol;
    }
  }
  if (inputs) {
    json params = json::array();
    for (std::size_t i = 0; i < inputs->initial.size(); ++i) {
      const auto& d = inputs->initial[i];
      json pj{{"name", d.name}, {"bounds", {d.bounds.lo, d.bounds.hi}}, {"initial", law_json(d)}};
      if (i < inputs->data_generating.size()) pj["data_generating"] = law_json(inputs->data_generating[i]);
      params.push_back(pj);
    }
    j["inputs"] = {{"predicted", inputs->predicted.string()},
                   {"observed", inputs->observed.string()},
                   {"predicted_params", inputs->predicted_params.string()},
                   {"observed_params", inputs->observed_params ? json(inputs->observed_params->string()) : json(nullptr)},
                   {"parameters", params}};
  }
  j["filter"] = {{"time_start_idx", filter.time_start_idx}, {"time_end_idx", filter.time_end_idx},
                 {"num_filter_obs", filter.num_filter_obs}, {"tol", filter.tol},
                 {"min_knots", filter.min_knots},           {"max_knots", filter.max_knots}};
  j["clustering"] = {{"K", clustering.n_clusters}, {"n_init", clustering.n_init}, {"max_iterations", clustering.max_iterations}};
  j["svm"] = {{"proposals", proposals_json(svm_proposals)}, {"k_folds", k_folds}, {"C", svm.C}, {"tol", svm.tol}};
  j["qoi"] = {{"mode", qoi_mode.kind == QoiMode::Kind::fixed_count ? "fixed" : "rate"},
              {"proposals", proposals_json(qoi_proposals)}};
  if (qoi_mode.kind == QoiMode::Kind::fixed_count) j["qoi"]["n"] = qoi_mode.n;
  else j["qoi"]["rate"] = qoi_mode.rate;
  j["density"] = {{"grid_n", grid_n}};
  return j;
}

std::string PipelineConfig::hash() const { return hex64(fnv1a(semantic_json().dump())); }

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json j;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    j = json::object();
  } else {
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return PipelineConfig::from_json(j, path.parent_path());
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages{Stage::generate, Stage::filter, Stage::dynamics,
                                         Stage::qoi,      Stage::invert, Stage::metrics};
  return stages;
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::generate: return "generate";
    case Stage::filter: return "filter";
    case Stage::dynamics: return "dynamics";
    case Stage::qoi: return "qoi";
    case Stage::invert: return "invert";
    case Stage::metrics: return "metrics";
  }
  return "unknown";
}

Stage stage_from_string(const std::string& name) {
  for (Stage s : all_stages()) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + name + "'");
}

StageSeeds stage_seeds(std::uint64_t seed) {
  return {derive_seed(seed, 100), derive_seed(seed, 101), derive_seed(seed, 102), derive_seed(seed, 103)};
}

void run_stage(Stage stage, const PipelineConfig& cfg, std::ostream& log) {
  if (cfg.output_dir.empty()) throw ConfigError("no output directory: set output_dir or pass --out");
  fs::create_directories(cfg.output_dir);
  const Paths p{cfg.output_dir};
  switch (stage) {
    case Stage::generate: stage_generate(cfg, p, log); break;
    case Stage::filter: stage_filter(cfg, p, log); break;
    case Stage::dynamics: stage_dynamics(cfg, p, log); break;
    case Stage::qoi: stage_qoi(cfg, p, log); break;
    case Stage::invert: stage_invert(cfg, p, log); break;
    case Stage::metrics: stage_metrics(cfg, p, log); break;
  }
}

void run_all(const PipelineConfig& cfg, std::ostream& log) {
  for (Stage s : all_stages()) run_stage(s, cfg, log);
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open '" + path.string() + "'");
  std::uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return hex64(h);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const MissingArtifactError*>(&e) || dynamic_cast<const FormatError*>(&e)) return 4;
  return 3;
}

}  // namespace luq
