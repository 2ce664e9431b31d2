#include "luq/experiments.hpp"

#include "luq/rng.hpp"

namespace luq {
namespace {

void require_known(const std::string& name) {
  if (name != "oscillator" && name != "hopf" && name != "shock") {
    throw ConfigError("unknown experiment '" + name + "' (expected oscillator, hopf or shock)");
  }
}

struct Bounds {
  std::vector<std::string> names;
  std::vector<Interval> intervals;
};

Bounds experiment_bounds(const std::string& name) {
  require_known(name);
  if (name == "oscillator") return {{"c", "omega0"}, {{0.1, 1.0}, {0.5, 1.0}}};
  if (name == "hopf") return {{"a", "b"}, {{0.01, 0.124}, {0.05, 1.5}}};
  return {{"a"}, {{0.75, 3.0}}};
}

}  // namespace

std::vector<ParameterDistribution> initial_distribution(const std::string& name) {
  const Bounds b = experiment_bounds(name);
  std::vector<ParameterDistribution> out;
  for (std::size_t i = 0; i < b.names.size(); ++i) out.push_back(ParameterDistribution::uniform(b.names[i], b.intervals[i]));
  return out;
}

std::vector<ParameterDistribution> data_generating_distribution(const std::string& name) {
  const Bounds b = experiment_bounds(name);
  std::vector<ParameterDistribution> out;
  for (std::size_t i = 0; i < b.names.size(); ++i) {
    out.push_back(ParameterDistribution::beta_on(b.names[i], b.intervals[i], 2.0, 2.0));
  }
  return out;
}

TimeGrid experiment_grid(const std::string& name) {
  require_known(name);
  if (name == "oscillator") return TimeGrid::uniform(1.0, 6.0, 501);
  if (name == "hopf") return TimeGrid::uniform(0.0, 6.5, 651);
  return TimeGrid::uniform(0.0, 10.0, 1000);
}

std::size_t default_num_obs(const std::string& name) {
  require_known(name);
  return name == "oscillator" ? 300 : 500;
}

std::size_t default_num_pred(const std::string& name) {
  require_known(name);
  if (name == "oscillator") return 2000;
  return name == "hopf" ? 3000 : 1000;
}

double default_sigma(const std::string& name) {
  require_known(name);
  if (name == "oscillator") return 0.25;
  return name == "hopf" ? 0.0125 : 0.025;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return Rng(seed, 0x6578700000ull + stream).next_u64(); }

Matrix simulate(const std::string& name, const Matrix& params, const TimeGrid& grid, const ExperimentConfig& cfg) {
  require_known(name);
  const auto& times = grid.times();
  Matrix out(params.rows(), static_cast<Eigen::Index>(times.size()));
  parallel_for(static_cast<std::size_t>(params.rows()), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (name == "oscillator") {
      out.row(r) = oscillator_series({params(r, 0), params(r, 1)}, times).transpose();
    } else if (name == "hopf") {
      out.row(r) = selkov_series({params(r, 0), params(r, 1)}, times, cfg.ode).transpose();
    } else {
      BurgersSetup setup;
      setup.a = params(r, 0);
      out.row(r) = burgers_series(setup, cfg.probe_x, times).transpose();
    }
  });
  return out;
}

Experiment generate_experiment(const ExperimentConfig& cfg) {
  require_known(cfg.name);
  Experiment ex;
  ex.name = cfg.name;
  ex.grid = experiment_grid(cfg.name);
  ex.initial = initial_distribution(cfg.name);
  ex.data_generating = data_generating_distribution(cfg.name);
  ex.sigma = cfg.sigma.value_or(default_sigma(cfg.name));
  if (ex.sigma < 0.0) throw ConfigError("noise sigma must be nonnegative");
  const std::size_t n_obs = cfg.num_obs.value_or(default_num_obs(cfg.name));
  const std::size_t n_pred = cfg.num_pred.value_or(default_num_pred(cfg.name));
  if (n_obs < 2 || n_pred < 2) throw ConfigError("experiments need at least two observed and two predicted samples");

  ex.predicted_params = sample_parameters(ex.initial, n_pred, derive_seed(cfg.seed, 1));
  const auto& obs_law = cfg.observed_law == ObservedLaw::data_generating ? ex.data_generating : ex.initial;
  ex.observed_params = sample_parameters(obs_law, n_obs, derive_seed(cfg.seed, 2));

  Matrix pred = simulate(cfg.name, ex.predicted_params.samples(), ex.grid, cfg);
  Matrix obs = simulate(cfg.name, ex.observed_params.samples(), ex.grid, cfg);
  obs = add_noise(obs, {ex.sigma, derive_seed(cfg.seed, 4)});
  if (cfg.name == "shock") pred = add_noise(pred, {ex.sigma, derive_seed(cfg.seed, 3)});
  ex.predicted = TimeSeriesEnsemble(ex.grid, std::move(pred), SeriesKind::predicted);
  ex.observed = TimeSeriesEnsemble(ex.grid, std::move(obs), SeriesKind::observed);
  return ex;
}

}  // namespace luq
