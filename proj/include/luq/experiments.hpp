#pragma once

#include "luq/models.hpp"
#include "luq/timeseries.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace luq {

enum class ObservedLaw { data_generating, initial };

struct ExperimentConfig {
  std::string name = "oscillator";  ///< oscillator | hopf | shock
  std::optional<std::size_t> num_obs;
  std::optional<std::size_t> num_pred;
  std::optional<double> sigma;
  double probe_x = 6.5;              ///< shock only
  ObservedLaw observed_law = ObservedLaw::data_generating;
  Rk45Options ode;                   ///< hopf only
  std::uint64_t seed = 0;
};

struct Experiment {
  std::string name;
  TimeGrid grid;
  TimeSeriesEnsemble predicted;
  TimeSeriesEnsemble observed;
  ParameterSampleSet predicted_params;
  ParameterSampleSet observed_params;
  std::vector<ParameterDistribution> initial;
  std::vector<ParameterDistribution> data_generating;
  double sigma = 0.0;
};

/// Uniform initial and Beta(2,2) data-generating laws of an experiment.
std::vector<ParameterDistribution> initial_distribution(const std::string& name);
std::vector<ParameterDistribution> data_generating_distribution(const std::string& name);
TimeGrid experiment_grid(const std::string& name);

/// Counts and noise level used when the config leaves them unset.
std::size_t default_num_obs(const std::string& name);
std::size_t default_num_pred(const std::string& name);
double default_sigma(const std::string& name);

/// Noise-free model output for each parameter row.
Matrix simulate(const std::string& name, const Matrix& params, const TimeGrid& grid, const ExperimentConfig& cfg);

/// Draws parameters, runs the model and adds measurement noise (observed
/// ensemble always; predicted ensemble for the shock problem only).
Experiment generate_experiment(const ExperimentConfig& cfg);

/// Seed for an independent sub-stream of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace luq
