#include "luq/spline_filter.hpp"

#include "luq/csv.hpp"

#include <array>
#include <cmath>
#include <numeric>

namespace luq {

void SplineModel::validate() const {
  if (knot_times.size() < 2 || knot_times.size() != knot_values.size()) {
    throw ValidationError("spline needs at least two knots with matching values");
  }
  if (!(knot_times.front() < knot_times.back())) throw ValidationError("spline end knots are not ordered");
  for (std::size_t k = 1; k < knot_times.size(); ++k) {
    if (knot_times[k] < knot_times[k - 1]) throw ValidationError("spline knot times are not sorted");
  }
}

double eval_spline(const SplineModel& s, double t) {
  const auto& kt = s.knot_times;
  if (kt.size() < 2) throw ValidationError("spline needs at least two knots");
  if (!(t >= kt.front() && t <= kt.back())) throw ValidationError("spline evaluated outside its knot range");
  auto it = std::upper_bound(kt.begin(), kt.end(), t);
  std::size_t k = it == kt.end() ? kt.size() - 2 : static_cast<std::size_t>(it - kt.begin()) - 1;
  k = std::min(k, kt.size() - 2);
  const double h = kt[k + 1] - kt[k];
  if (h <= 0.0) return s.knot_values[k];
  const double w = (t - kt[k]) / h;
  return s.knot_values[k] * (1.0 - w) + s.knot_values[k + 1] * w;
}

namespace {

// Parameter layout: [interior knot times (m - 2) | knot values (m)].
class FreeKnotProblem {
 public:
  FreeKnotProblem(std::span<const double> t, std::span<const double> y, int m)
      : t_(t), y_(y), m_(m), t0_(t.front()), t1_(t.back()) {
    spacing_ = (t1_ - t0_) / static_cast<double>(t.size() - 1);
    knot_t_.resize(static_cast<std::size_t>(m));
    knot_f_.resize(static_cast<std::size_t>(m));
  }

  int num_params() const { return 2 * m_ - 2; }

  // Interior knot times moved to the nearest sample time.
  Vector snapped(const Vector& x) const {
    Vector out = x;
    for (int k = 0; k < num_interior(); ++k) {
      auto it = std::lower_bound(t_.begin(), t_.end(), x(k));
      if (it == t_.end()) --it;
      if (it != t_.begin() && x(k) - *(it - 1) <= *it - x(k)) --it;
      out(k) = *it;
    }
    return out;
  }
  int num_interior() const { return m_ - 2; }

  Vector initial_guess() const {
    Vector x(num_params());
    const double len = t1_ - t0_;
    for (int k = 0; k < m_; ++k) {
      const double tk = k == m_ - 1 ? t1_ : t0_ + len * k / (m_ - 1);
      if (k > 0 && k < m_ - 1) x(k - 1) = tk;
      x(num_interior() + k) = interpolate_data(tk);
    }
    return x;
  }

  // Previous (m - 1)-knot fit with one knot added at the middle of the
  // segment carrying the largest squared residual.
  Vector refined_guess(const SplineModel& prev) const {
    const auto& pt = prev.knot_times;
    std::vector<double> seg_sse(pt.size() - 1, 0.0);
    std::size_t seg = 0;
    for (std::size_t j = 0; j < t_.size(); ++j) {
      while (seg + 2 < pt.size() && t_[j] > pt[seg + 1]) ++seg;
      const double r = eval_spline(prev, t_[j]) - y_[j];
      seg_sse[seg] += r * r;
    }
    const auto worst = static_cast<std::size_t>(std::max_element(seg_sse.begin(), seg_sse.end()) - seg_sse.begin());
    std::vector<double> kt = pt;
    std::vector<double> kf = prev.knot_values;
    const double mid = 0.5 * (pt[worst] + pt[worst + 1]);
    kt.insert(kt.begin() + static_cast<std::ptrdiff_t>(worst) + 1, mid);
    kf.insert(kf.begin() + static_cast<std::ptrdiff_t>(worst) + 1, eval_spline(prev, mid));
    Vector x(num_params());
    for (int k = 0; k < m_; ++k) {
      if (k > 0 && k < m_ - 1) x(k - 1) = kt[static_cast<std::size_t>(k)];
      x(num_interior() + k) = kf[static_cast<std::size_t>(k)];
    }
    return x;
  }

  // Clamps interior times into the window, sorts the (time, value) pairs and
  // separates coincident knots by one grid spacing.
  void normalize(Vector& x) const {
    const int ni = num_interior();
    if (ni == 0) return;
    std::vector<std::pair<double, double>> pairs(static_cast<std::size_t>(ni));
    for (int k = 0; k < ni; ++k) {
      pairs[static_cast<std::size_t>(k)] = {std::clamp(x(k), t0_, t1_), x(ni + 1 + k)};
    }
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    const double eps = 1e-12 * (t1_ - t0_);
    double prev = t0_;
    for (auto& p : pairs) {
      if (p.first - prev < eps) p.first = prev + spacing_;
      prev = p.first;
    }
    double next = t1_;
    for (auto it = pairs.rbegin(); it != pairs.rend(); ++it) {
      if (next - it->first < eps) it->first = next - spacing_;
      next = it->first;
    }
    for (int k = 0; k < ni; ++k) {
      x(k) = pairs[static_cast<std::size_t>(k)].first;
      x(ni + 1 + k) = pairs[static_cast<std::size_t>(k)].second;
    }
  }

  // Returns 0.5 * ||r||^2; fills J^T J and J^T r when requested.
  double evaluate(const Vector& x, Matrix* jtj, Vector* jtr) {
    unpack(x);
    const int ni = num_interior();
    if (jtj) {
      jtj->setZero(num_params(), num_params());
      jtr->setZero(num_params());
    }
    double cost = 0.0;
    std::size_t seg = 0;
    const std::size_t last_seg = static_cast<std::size_t>(m_) - 2;
    for (std::size_t j = 0; j < t_.size(); ++j) {
      const double tj = t_[j];
      while (seg < last_seg && tj > knot_t_[seg + 1]) ++seg;
      const double h = knot_t_[seg + 1] - knot_t_[seg];
      const double s = h > 0.0 ? (tj - knot_t_[seg]) / h : 0.0;
      const double fa = knot_f_[seg];
      const double fb = knot_f_[seg + 1];
      const double r = fa * (1.0 - s) + fb * s - y_[j];
      cost += r * r;
      if (!jtj) continue;

      std::array<int, 4> idx{};
      std::array<double, 4> d{};
      int nnz = 0;
      idx[nnz] = ni + static_cast<int>(seg);
      d[nnz++] = 1.0 - s;
      idx[nnz] = ni + static_cast<int>(seg) + 1;
      d[nnz++] = s;
      if (h > 0.0) {
        const double slope = (fb - fa) / h;
        if (seg >= 1) {
          idx[nnz] = static_cast<int>(seg) - 1;
          d[nnz++] = slope * (s - 1.0);
        }
        if (seg + 1 <= last_seg) {
          idx[nnz] = static_cast<int>(seg);
          d[nnz++] = -slope * s;
        }
      }
      for (int a = 0; a < nnz; ++a) {
        (*jtr)(idx[a]) += d[a] * r;
        for (int b = 0; b < nnz; ++b) (*jtj)(idx[a], idx[b]) += d[a] * d[b];
      }
    }
    return 0.5 * cost;
  }

  SplineModel to_spline(const Vector& x) {
    unpack(x);
    return SplineModel{knot_t_, knot_f_};
  }

 private:
  void unpack(const Vector& x) {
    const int ni = num_interior();
    knot_t_.front() = t0_;
    knot_t_.back() = t1_;
    for (int k = 0; k < ni; ++k) knot_t_[static_cast<std::size_t>(k) + 1] = x(k);
    for (int k = 0; k < m_; ++k) knot_f_[static_cast<std::size_t>(k)] = x(ni + k);
  }

  double interpolate_data(double tk) const {
    auto it = std::lower_bound(t_.begin(), t_.end(), tk);
    if (it == t_.begin()) return y_.front();
    if (it == t_.end()) return y_.back();
    const auto j = static_cast<std::size_t>(it - t_.begin());
    const double w = (tk - t_[j - 1]) / (t_[j] - t_[j - 1]);
    return y_[j - 1] * (1.0 - w) + y_[j] * w;
  }

  std::span<const double> t_;
  std::span<const double> y_;
  int m_;
  double t0_, t1_, spacing_;
  std::vector<double> knot_t_;
  std::vector<double> knot_f_;
};

// Knot values are linear given the knot times: one exact least-squares
// solve for them, kept when it lowers the cost.
void polish_values(FreeKnotProblem& problem, Vector& x, double& cost) {
  const int ni = problem.num_interior();
  const int m = ni + 2;
  Matrix jtj;
  Vector jtr;
  problem.evaluate(x, &jtj, &jtr);
  const Matrix a = jtj.bottomRightCorner(m, m);
  const Eigen::LDLT<Matrix> ldlt(a);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return;
  Vector trial = x;
  trial.tail(m) -= ldlt.solve(jtr.tail(m));
  if (!trial.allFinite()) return;
  const double c = problem.evaluate(trial, nullptr, nullptr);
  if (c < cost) {
    x = trial;
    cost = c;
  }
}

SplineFit optimize(FreeKnotProblem& problem, Vector x, std::span<const double> values, const FitOptions& options) {
  const int p = problem.num_params();
  problem.normalize(x);

  Matrix jtj(p, p);
  Vector jtr(p);
  double cost = problem.evaluate(x, &jtj, &jtr);
  const double scale = std::max(1e-300, values.size() ? Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())).squaredNorm() : 1.0);

  double mu = 1e-3;
  double nu = 2.0;
  int it = 0;
  Vector trial(p);
  for (; it < options.max_iterations; ++it) {
    if (cost <= 1e-28 * scale) break;
    if (jtr.lpNorm<Eigen::Infinity>() <= 1e-15 * std::sqrt(scale)) break;

    const Vector damping = jtj.diagonal().cwiseMax(1e-12 * jtj.diagonal().maxCoeff() + 1e-300);
    Matrix lhs = jtj;
    lhs.diagonal() += mu * damping;
    const Vector step = lhs.ldlt().solve(-jtr);
    if (!step.allFinite()) throw NumericalError("spline optimizer produced a non-finite step");

    trial = x + step;
    problem.normalize(trial);
    const double trial_cost = problem.evaluate(trial, nullptr, nullptr);
    if (!std::isfinite(trial_cost)) throw NumericalError("spline optimizer produced a non-finite iterate");

    const double predicted = 0.5 * step.dot(mu * damping.cwiseProduct(step) - jtr);
    if (!(predicted > 1e-14 * cost)) break;
    if (trial_cost < cost * (1.0 - 1e-13)) {
      const double rel = (cost - trial_cost) / cost;
      const double rho = predicted > 0.0 ? (cost - trial_cost) / predicted : 1.0;
      x = trial;
      cost = problem.evaluate(x, &jtj, &jtr);
      mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
      if (rel < options.rel_tol) {
        ++it;
        break;
      }
    } else {
      mu *= nu;
      nu *= 2.0;
      if (mu > 1e30) break;
    }
  }
  polish_values(problem, x, cost);
  // Optima usually sit on a sample time, where the cost has a kink.
  Vector snap = problem.snapped(x);
  problem.normalize(snap);
  double snap_cost = problem.evaluate(snap, nullptr, nullptr);
  polish_values(problem, snap, snap_cost);
  if (snap_cost <= cost * (1.0 + 1e-12)) {
    x = snap;
    cost = snap_cost;
  }

  SplineFit fit;
  fit.spline = problem.to_spline(x);
  fit.sse = 2.0 * cost;
  fit.iterations = it;
  return fit;
}

}  // namespace

SplineFit fit_spline(std::span<const double> times, std::span<const double> values, int m,
                     const FitOptions& options, const SplineModel* previous) {
  if (m < 2) throw ValidationError("spline fit needs m >= 2 knots");
  if (times.size() != values.size()) throw ValidationError("time and value windows differ in length");
  if (times.size() < 2 * static_cast<std::size_t>(m)) {
    throw ValidationError("window of " + std::to_string(times.size()) + " samples is too short for " +
                          std::to_string(m) + " knots");
  }

  FreeKnotProblem problem(times, values, m);
  SplineFit best = optimize(problem, problem.initial_guess(), values, options);
  if (previous && static_cast<int>(previous->knot_times.size()) == m - 1 &&
      previous->knot_times.front() == times.front() && previous->knot_times.back() == times.back()) {
    SplineFit warm = optimize(problem, problem.refined_guess(*previous), values, options);
    if (warm.sse < best.sse * (1.0 - 1e-10)) best = std::move(warm);
  }
  return best;
}

void FilterConfig::validate(std::size_t grid_size) const {
  if (!(time_start_idx < time_end_idx)) throw ValidationError("filter window needs time_start_idx < time_end_idx");
  if (time_end_idx >= grid_size) throw ValidationError("filter window end index lies beyond the time grid");
  if (num_filter_obs < 2) throw ValidationError("num_filter_obs must be at least 2");
  if (!(tol > 0.0)) throw ValidationError("filter tolerance must be positive");
  if (min_knots < 2) throw ValidationError("min_knots must be at least 2");
  if (max_knots < min_knots) throw ValidationError("max_knots must be >= min_knots");
}

std::vector<double> filter_times(const TimeGrid& grid, const FilterConfig& cfg) {
  cfg.validate(grid.size());
  return TimeGrid::uniform(grid[cfg.time_start_idx], grid[cfg.time_end_idx], cfg.num_filter_obs).times();
}

namespace {

std::vector<double> sample(const SplineModel& s, const std::vector<double>& at) {
  std::vector<double> out(at.size());
  for (std::size_t k = 0; k < at.size(); ++k) out[k] = eval_spline(s, at[k]);
  return out;
}

double one_norm_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += std::abs(a[k] - b[k]);
  return d;
}

}  // namespace

FilteredSeries filter_series(std::span<const double> raw_times, std::span<const double> raw_values,
                             const FilterConfig& cfg) {
  if (raw_times.size() != raw_values.size()) throw ValidationError("time and value arrays differ in length");
  cfg.validate(raw_times.size());
  const std::size_t js = cfg.time_start_idx;
  const std::size_t je = cfg.time_end_idx;
  const auto t = raw_times.subspan(js, je - js + 1);
  const auto y = raw_values.subspan(js, je - js + 1);

  // Mean absolute level of the window, normalized by (j_f - j_i).
  double yp = 0.0;
  for (double v : y) yp += std::abs(v);
  yp /= static_cast<double>(je - js);
  if (yp == 0.0) yp = 1.0;

  std::vector<double> ft = TimeGrid::uniform(t.front(), t.back(), cfg.num_filter_obs).times();

  FilteredSeries out;
  SplineFit fit = fit_spline(t, y, cfg.min_knots, cfg.fit);
  std::vector<double> current = sample(fit.spline, ft);
  int m = cfg.min_knots;
  if (cfg.max_knots == cfg.min_knots) {
    out.values = std::move(current);
    out.knots_used = m;
    out.converged = false;
    out.error = INFINITY;
    out.spline = std::move(fit.spline);
    return out;
  }

  std::vector<double> old = std::move(current);
  fit = fit_spline(t, y, m + 1, cfg.fit, &fit.spline);
  current = sample(fit.spline, ft);
  double error = one_norm_diff(old, current) / yp;
  m = m + 1;
  while (error > cfg.tol && m < cfg.max_knots) {
    ++m;
    old = std::move(current);
    fit = fit_spline(t, y, m, cfg.fit, &fit.spline);
    current = sample(fit.spline, ft);
    error = one_norm_diff(old, current) / yp;
  }

  out.values = std::move(current);
  out.knots_used = m;
  out.converged = error <= cfg.tol;
  out.error = error;
  out.spline = std::move(fit.spline);
  return out;
}

std::size_t FilteredEnsemble::num_converged() const {
  return static_cast<std::size_t>(std::count(converged.begin(), converged.end(), true));
}

FilteredEnsemble filter_ensemble(const TimeSeriesEnsemble& ens, const FilterConfig& cfg) {
  const auto& grid = ens.grid();
  FilteredEnsemble out;
  out.filter_times = filter_times(grid, cfg);
  const auto n = static_cast<std::size_t>(ens.num_series());
  out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.num_filter_obs));
  out.knots_used.assign(n, 0);
  std::vector<char> converged(n, 0);

  // Row-major copy so each series is a contiguous span.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = ens.values();
  parallel_for(n, [&](std::size_t i) {
    try {
      std::span<const double> yi(rows.data() + i * static_cast<std::size_t>(rows.cols()),
                                 static_cast<std::size_t>(rows.cols()));
      FilteredSeries fs = filter_series(grid.times(), yi, cfg);
      for (std::size_t k = 0; k < fs.values.size(); ++k) {
        out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = fs.values[k];
      }
      out.knots_used[i] = fs.knots_used;
      converged[i] = fs.converged ? 1 : 0;
    } catch (const NumericalError& e) {
      throw NumericalError("series " + std::to_string(i) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("series " + std::to_string(i) + ": " + e.what());
    }
  });
  out.converged.assign(converged.begin(), converged.end());
  return out;
}

void save_filtered(const std::filesystem::path& path, const FilteredEnsemble& filtered) {
  save_ensemble(path, TimeGrid(filtered.filter_times), filtered.values);
  std::vector<csv::Row> rows{{"series_id", "knots_used", "converged"}};
  for (std::size_t i = 0; i < filtered.knots_used.size(); ++i) {
    rows.push_back({std::to_string(i), std::to_string(filtered.knots_used[i]), filtered.converged[i] ? "1" : "0"});
  }
  auto knots_path = path;
  knots_path.replace_extension(".knots.csv");
  csv::write(knots_path, rows);
}

FilteredEnsemble load_filtered(const std::filesystem::path& path) {
  const auto ens = load_ensemble(path, SeriesKind::predicted);
  FilteredEnsemble out;
  out.filter_times = ens.grid().times();
  out.values = ens.values();
  auto knots_path = path;
  knots_path.replace_extension(".knots.csv");
  if (std::filesystem::exists(knots_path)) {
    const auto rows = csv::read(knots_path);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != 3) throw FormatError(knots_path.string() + ": malformed row");
      out.knots_used.push_back(static_cast<int>(csv::parse_int(rows[i][1], knots_path.string())));
      out.converged.push_back(rows[i][2] == "1");
    }
  } else {
    out.knots_used.assign(static_cast<std::size_t>(out.values.rows()), 0);
    out.converged.assign(static_cast<std::size_t>(out.values.rows()), false);
  }
  return out;
}

}  // namespace luq
