#include "luq/timeseries.hpp"

#include "luq/csv.hpp"
#include "luq/rng.hpp"

#include <cmath>

namespace luq {

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.size() < 2) throw ValidationError("time grid needs at least two points");
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (!std::isfinite(times_[i])) throw ValidationError("time grid contains a non-finite value");
    if (i > 0 && !(times_[i] > times_[i - 1])) {
      throw ValidationError("time grid is not strictly increasing at index " + std::to_string(i));
    }
  }
}

TimeGrid TimeGrid::uniform(double t0, double t1, std::size_t n) {
  if (n < 2) throw ValidationError("uniform grid needs n >= 2");
  std::vector<double> t(n);
  const double dt = (t1 - t0) / static_cast<double>(n - 1);
  for (std::size_t k = 0; k < n; ++k) t[k] = t0 + static_cast<double>(k) * dt;
  t.back() = t1;
  return TimeGrid(std::move(t));
}

TimeSeriesEnsemble::TimeSeriesEnsemble(TimeGrid grid, Matrix values, SeriesKind kind)
    : grid_(std::move(grid)), values_(std::move(values)), kind_(kind) {
  if (static_cast<std::size_t>(values_.cols()) != grid_.size()) {
    throw FormatError("ensemble has " + std::to_string(values_.cols()) + " columns but the grid has " +
                      std::to_string(grid_.size()) + " times");
  }
  if (!values_.allFinite()) throw ValidationError("ensemble contains non-finite entries");
}

ParameterSampleSet::ParameterSampleSet(std::vector<std::string> names, Matrix samples,
                                       std::vector<Interval> bounds)
    : names_(std::move(names)), samples_(std::move(samples)), bounds_(std::move(bounds)) {
  const auto p = static_cast<std::size_t>(samples_.cols());
  if (p < 1) throw ValidationError("parameter set needs at least one parameter");
  if (names_.size() != p || bounds_.size() != p) {
    throw ValidationError("parameter names/bounds do not match the sample dimension");
  }
  for (std::size_t j = 0; j < p; ++j) {
    if (!(bounds_[j].lo <= bounds_[j].hi)) throw ValidationError("invalid bounds for " + names_[j]);
    for (Eigen::Index i = 0; i < samples_.rows(); ++i) {
      const double v = samples_(i, static_cast<Eigen::Index>(j));
      if (!std::isfinite(v) || !bounds_[j].contains(v)) {
        throw ValidationError("sample " + std::to_string(i) + " of " + names_[j] + " lies outside its bounds");
      }
    }
  }
}

double ParameterDistribution::pdf(double x) const {
  if (!bounds.contains(x)) return 0.0;
  const double w = bounds.width();
  if (kind == Kind::uniform) return 1.0 / w;
  const double u = (x - bounds.lo) / w;
  const double log_norm = std::lgamma(alpha + beta) - std::lgamma(alpha) - std::lgamma(beta);
  if ((u <= 0.0 && alpha < 1.0) || (u >= 1.0 && beta < 1.0)) return INFINITY;
  if ((u <= 0.0 && alpha > 1.0) || (u >= 1.0 && beta > 1.0)) return 0.0;
  double log_pdf = log_norm;
  if (alpha != 1.0) log_pdf += (alpha - 1.0) * std::log(u);
  if (beta != 1.0) log_pdf += (beta - 1.0) * std::log1p(-u);
  return std::exp(log_pdf) / w;
}

TimeSeriesEnsemble load_ensemble(const std::filesystem::path& path, SeriesKind kind) {
  const auto rows = csv::read(path);
  const std::string where = path.string();
  if (rows.empty()) throw FormatError(where + ": empty ensemble file");
  const auto& header = rows.front();
  if (header.empty() || header.front() != "t") throw FormatError(where + ": header must start with 't'");
  std::vector<double> times;
  for (std::size_t j = 1; j < header.size(); ++j) times.push_back(csv::parse_double(header[j], where + " header"));
  TimeGrid grid(std::move(times));

  const std::size_t n = grid.size();
  Matrix values(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(n));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    // The leading series id is optional.
    if (row.size() != n + 1 && row.size() != n) {
      throw FormatError(where + ": row " + std::to_string(i) + " has " + std::to_string(row.size()) +
                        " fields, expected " + std::to_string(n + 1));
    }
    const std::size_t first = row.size() - n;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = csv::parse_double(row[j + first], where + " row " + std::to_string(i));
      if (!std::isfinite(v)) throw ValidationError(where + ": non-finite value in row " + std::to_string(i));
      values(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return TimeSeriesEnsemble(std::move(grid), std::move(values), kind);
}

void save_ensemble(const std::filesystem::path& path, const TimeGrid& grid, const Matrix& values) {
  std::vector<csv::Row> rows;
  rows.reserve(static_cast<std::size_t>(values.rows()) + 1);
  csv::Row header{"t"};
  for (double t : grid.times()) header.push_back(csv::format_double(t));
  rows.push_back(std::move(header));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    csv::Row row{std::to_string(i)};
    for (Eigen::Index j = 0; j < values.cols(); ++j) row.push_back(csv::format_double(values(i, j)));
    rows.push_back(std::move(row));
  }
  csv::write(path, rows);
}

Matrix add_noise(const Matrix& values, const NoiseModel& noise) {
  if (!(noise.sigma >= 0.0)) throw ValidationError("noise sigma must be non-negative");
  Matrix out = values;
  if (noise.sigma == 0.0) return out;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    Rng rng(noise.seed, static_cast<std::uint64_t>(i));
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += noise.sigma * rng.normal();
  }
  return out;
}

TimeSeriesEnsemble add_noise(const TimeSeriesEnsemble& ens, const NoiseModel& noise) {
  return TimeSeriesEnsemble(ens.grid(), add_noise(ens.values(), noise), ens.kind());
}

ParameterSampleSet sample_parameters(const std::vector<ParameterDistribution>& spec, std::size_t count,
                                     std::uint64_t seed) {
  if (spec.empty()) throw ValidationError("no parameters to sample");
  const auto p = static_cast<Eigen::Index>(spec.size());
  Matrix samples(static_cast<Eigen::Index>(count), p);
  std::vector<std::string> names;
  std::vector<Interval> bounds;
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& d = spec[static_cast<std::size_t>(j)];
    if (!(d.bounds.lo < d.bounds.hi)) throw ValidationError("invalid bounds for " + d.name);
    if (d.kind == ParameterDistribution::Kind::beta && !(d.alpha > 0.0 && d.beta > 0.0)) {
      throw ValidationError("beta shape parameters must be positive for " + d.name);
    }
    names.push_back(d.name);
    bounds.push_back(d.bounds);
    Rng rng(seed, static_cast<std::uint64_t>(j));
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      const double u = d.kind == ParameterDistribution::Kind::uniform ? rng.uniform() : rng.beta(d.alpha, d.beta);
      samples(i, j) = std::clamp(d.bounds.lo + d.bounds.width() * u, d.bounds.lo, d.bounds.hi);
    }
  }
  return ParameterSampleSet(std::move(names), std::move(samples), std::move(bounds));
}

ParameterSampleSet load_parameters(const std::filesystem::path& path, const std::vector<Interval>& bounds) {
  const auto rows = csv::read(path);
  const std::string where = path.string();
  if (rows.empty()) throw FormatError(where + ": empty parameter file");
  const auto& names = rows.front();
  const std::size_t p = names.size();
  Matrix samples(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(p));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != p) throw FormatError(where + ": row " + std::to_string(i) + " has the wrong field count");
    for (std::size_t j = 0; j < p; ++j) {
      samples(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j)) =
          csv::parse_double(rows[i][j], where + " row " + std::to_string(i));
    }
  }
  std::vector<Interval> b = bounds;
  if (b.empty()) {
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
      b.push_back(samples.rows() ? Interval{samples.col(j).minCoeff(), samples.col(j).maxCoeff()} : Interval{});
    }
  }
  return ParameterSampleSet(names, std::move(samples), std::move(b));
}

void save_parameters(const std::filesystem::path& path, const ParameterSampleSet& params) {
  std::vector<csv::Row> rows;
  rows.push_back(params.names());
  for (Eigen::Index i = 0; i < params.samples().rows(); ++i) {
    csv::Row row;
    for (Eigen::Index j = 0; j < params.samples().cols(); ++j) row.push_back(csv::format_double(params.samples()(i, j)));
    rows.push_back(std::move(row));
  }
  csv::write(path, rows);
}

}  // namespace luq
