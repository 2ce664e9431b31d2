#pragma once

#include "luq/common.hpp"
#include "luq/timeseries.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace luq {

/// Piecewise-linear spline through (knot_times[k], knot_values[k]).
struct SplineModel {
  std::vector<double> knot_times;
  std::vector<double> knot_values;

  std::size_t num_knots() const { return knot_times.size(); }
  void validate() const;
};

/// Linear interpolation of the knot values; throws ValidationError when t is
/// outside [first knot, last knot].
double eval_spline(const SplineModel& s, double t);

struct FitOptions {
  double rel_tol = 1e-8;   ///< stop when the relative residual change drops below this
  int max_iterations = 400;
};

struct SplineFit {
  SplineModel spline;
  double sse = 0.0;
  int iterations = 0;
};

/// Least-squares free-knot fit with m knots; the end knots sit on the first
/// and last sample time, interior knot times stay inside the window.
/// Levenberg-Marquardt with projection onto the bounds, started from
/// uniformly spaced knots and values interpolated from the data. Given a
/// fit with m - 1 knots, a second start inserts a knot into its worst
/// segment and the fit with the smaller residual wins.
SplineFit fit_spline(std::span<const double> times, std::span<const double> values, int m,
                     const FitOptions& options = {}, const SplineModel* previous = nullptr);

/// Indices are 0-based and inclusive: the window is times[start..end].
struct FilterConfig {
  std::size_t time_start_idx = 0;
  std::size_t time_end_idx = 1;
  std::size_t num_filter_obs = 20;
  double tol = 5e-2;
  int min_knots = 3;
  int max_knots = 12;
  FitOptions fit;

  void validate(std::size_t grid_size) const;
};

struct FilteredSeries {
  std::vector<double> values;
  int knots_used = 0;
  bool converged = false;
  double error = 0.0;  ///< last normalized 1-norm difference between successive knot counts
  SplineModel spline;
};

/// Uniform filter times spanning the configured window.
std::vector<double> filter_times(const TimeGrid& grid, const FilterConfig& cfg);

/// Adaptive knot-count refinement: fits m_min and m_min + 1 knots, then adds
/// one knot at a time while the normalized 1-norm change of the sampled
/// spline exceeds tol and m < m_max.
FilteredSeries filter_series(std::span<const double> raw_times, std::span<const double> raw_values,
                             const FilterConfig& cfg);

struct FilteredEnsemble {
  std::vector<double> filter_times;
  Matrix values;  ///< N x n_filter
  std::vector<int> knots_used;
  std::vector<bool> converged;

  std::size_t num_converged() const;
};

FilteredEnsemble filter_ensemble(const TimeSeriesEnsemble& ens, const FilterConfig& cfg);

void save_filtered(const std::filesystem::path& path, const FilteredEnsemble& filtered);
FilteredEnsemble load_filtered(const std::filesystem::path& path);

}  // namespace luq
