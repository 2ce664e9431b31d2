#pragma once

#include "luq/common.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace luq {

/// Strictly increasing observation times, at least two of them.
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> times);

  /// n points t_0 + k * (t_1 - t_0) / (n - 1); the last point is exactly t_1.
  static TimeGrid uniform(double t0, double t1, std::size_t n);

  const std::vector<double>& times() const { return times_; }
  std::size_t size() const { return times_.size(); }
  double operator[](std::size_t i) const { return times_[i]; }
  double front() const { return times_.front(); }
  double back() const { return times_.back(); }

  bool operator==(const TimeGrid&) const = default;

 private:
  std::vector<double> times_;
};

enum class SeriesKind { predicted, observed };

/// N series sampled on a shared grid; row i is series i.
class TimeSeriesEnsemble {
 public:
  TimeSeriesEnsemble() = default;
  TimeSeriesEnsemble(TimeGrid grid, Matrix values, SeriesKind kind);

  const TimeGrid& grid() const { return grid_; }
  const Matrix& values() const { return values_; }
  SeriesKind kind() const { return kind_; }
  Eigen::Index num_series() const { return values_.rows(); }
  Eigen::Index num_times() const { return values_.cols(); }

 private:
  TimeGrid grid_;
  Matrix values_;
  SeriesKind kind_ = SeriesKind::predicted;
};

/// N draws of p named parameters, each inside its bounds.
class ParameterSampleSet {
 public:
  ParameterSampleSet() = default;
  ParameterSampleSet(std::vector<std::string> names, Matrix samples, std::vector<Interval> bounds);

  const std::vector<std::string>& names() const { return names_; }
  const Matrix& samples() const { return samples_; }
  const std::vector<Interval>& bounds() const { return bounds_; }
  Eigen::Index size() const { return samples_.rows(); }
  Eigen::Index dimension() const { return samples_.cols(); }

 private:
  std::vector<std::string> names_;
  Matrix samples_;
  std::vector<Interval> bounds_;
};

struct NoiseModel {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Marginal law of one parameter: uniform, or Beta(alpha, beta) mapped
/// affinely onto the bounds.
struct ParameterDistribution {
  enum class Kind { uniform, beta };

  std::string name;
  Interval bounds;
  Kind kind = Kind::uniform;
  double alpha = 1.0;
  double beta = 1.0;

  static ParameterDistribution uniform(std::string name, Interval bounds) {
    return {std::move(name), bounds, Kind::uniform, 1.0, 1.0};
  }
  static ParameterDistribution beta_on(std::string name, Interval bounds, double a, double b) {
    return {std::move(name), bounds, Kind::beta, a, b};
  }

  /// Exact density at x (zero outside the bounds).
  double pdf(double x) const;
};

/// Header `t,<t_1>,...,<t_n>`; each row holds an optional series id and n values.
TimeSeriesEnsemble load_ensemble(const std::filesystem::path& path, SeriesKind kind);
void save_ensemble(const std::filesystem::path& path, const TimeGrid& grid, const Matrix& values);
inline void save_ensemble(const std::filesystem::path& path, const TimeSeriesEnsemble& ens) {
  save_ensemble(path, ens.grid(), ens.values());
}

/// Adds i.i.d. N(0, sigma^2) to every entry. Row i draws from its own stream,
/// so the perturbation of a row does not depend on the other rows.
TimeSeriesEnsemble add_noise(const TimeSeriesEnsemble& ens, const NoiseModel& noise);
Matrix add_noise(const Matrix& values, const NoiseModel& noise);

ParameterSampleSet sample_parameters(const std::vector<ParameterDistribution>& spec, std::size_t count,
                                     std::uint64_t seed);

/// Reads a parameter CSV. Bounds default to the sample range when not given.
ParameterSampleSet load_parameters(const std::filesystem::path& path,
                                   const std::vector<Interval>& bounds = {});
void save_parameters(const std::filesystem::path& path, const ParameterSampleSet& params);

}  // namespace luq
