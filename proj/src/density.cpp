#include "luq/density.hpp"

#include "luq/rng.hpp"

#include <cmath>
#include <numbers>

namespace luq {

Kde::Kde(Matrix samples, std::optional<Vector> weights) : samples_(std::move(samples)) {
  const Eigen::Index n = samples_.rows();
  const Eigen::Index d = samples_.cols();
  if (n < 2) throw ValidationError("KDE needs at least two samples");
  if (d < 1) throw ValidationError("KDE needs at least one dimension");
  if (!samples_.allFinite()) throw NumericalError("KDE samples contain non-finite values");
  if (weights) {
    if (weights->size() != n) throw ValidationError("KDE weight count differs from sample count");
    if ((weights->array() < 0.0).any() || !weights->allFinite()) throw ValidationError("KDE weights must be nonnegative");
    const double total = weights->sum();
    if (!(total > 0.0)) throw ValidationError("KDE weights sum to zero");
    weights_ = *weights / total;
  } else {
    weights_ = Vector::Constant(n, 1.0 / static_cast<double>(n));
  }
  const double sum_sq = weights_.squaredNorm();
  n_eff_ = 1.0 / sum_sq;
  const double factor = std::pow(n_eff_, -1.0 / static_cast<double>(d + 4));

  bandwidth_.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double mean = weights_.dot(samples_.col(j));
    const double var = weights_.dot((samples_.col(j).array() - mean).square().matrix()) / (1.0 - sum_sq);
    const double h = std::sqrt(std::max(var, 0.0)) * factor;
    const double range = samples_.col(j).maxCoeff() - samples_.col(j).minCoeff();
    const double floor = 1e-6 * (range > 0.0 ? range : 1.0);
    bandwidth_(j) = h > floor ? h : floor;
  }
  norm_ = 1.0 / (std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(d)) * bandwidth_.prod());
}

double Kde::operator()(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != samples_.cols()) throw ValidationError("KDE evaluated at a point of the wrong dimension");
  const Eigen::Index n = samples_.rows();
  const Eigen::Index d = samples_.cols();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double q = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double z = (x(j) - samples_(i, j)) / bandwidth_(j);
      q += z * z;
    }
    acc += weights_(i) * std::exp(-0.5 * q);
  }
  return norm_ * acc;
}

double Kde::operator()(double x) const {
  Vector p(1);
  p(0) = x;
  return (*this)(p);
}

Vector Kde::evaluate(const Matrix& points) const {
  if (points.cols() != samples_.cols()) throw ValidationError("KDE evaluated at points of the wrong dimension");
  Vector out(points.rows());
  parallel_for(static_cast<std::size_t>(points.rows()), [&](std::size_t r) {
    out(static_cast<Eigen::Index>(r)) = (*this)(points.row(static_cast<Eigen::Index>(r)).transpose());
  });
  return out;
}

RatioResult compute_ratios(const Matrix& predicted_qoi, const Matrix& observed_qoi) {
  if (predicted_qoi.rows() < 2) throw ValidationError("density ratio needs at least two predicted QoI samples");
  if (observed_qoi.rows() < 2) throw ValidationError("density ratio needs at least two observed QoI samples");
  if (predicted_qoi.cols() != observed_qoi.cols()) throw ValidationError("predicted and observed QoI widths differ");
  const Kde pred(predicted_qoi);
  const Kde obs(observed_qoi);
  const Vector p = pred.evaluate(predicted_qoi);
  const Vector o = obs.evaluate(predicted_qoi);
  RatioResult out;
  out.ratios.resize(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) < 1e-300) {
      out.ratios(i) = 0.0;
      ++out.underflows;
    } else {
      out.ratios(i) = o(i) / p(i);
    }
  }
  if (out.underflows > 0) {
    warn(std::to_string(out.underflows) + " predicted QoI points have negligible predicted density; ratio set to 0");
  }
  out.diagnostic = out.ratios.mean();
  return out;
}

Vector cluster_weights(const Labels& observed_labels, int num_clusters) {
  if (observed_labels.empty()) throw ValidationError("cluster weights need at least one observed label");
  if (num_clusters < 1) throw ValidationError("cluster weights need K >= 1");
  Vector w = Vector::Zero(num_clusters);
  for (int label : observed_labels) {
    if (label < 0 || label >= num_clusters) throw ValidationError("observed label " + std::to_string(label) + " out of range");
    w(label) += 1.0;
  }
  return w / static_cast<double>(observed_labels.size());
}

Vector update_weights(const Labels& predicted_labels, const Vector& ratios, const Vector& weights) {
  if (static_cast<std::size_t>(ratios.size()) != predicted_labels.size()) {
    throw ValidationError("ratio and label counts differ");
  }
  const auto k = weights.size();
  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (int label : predicted_labels) {
    if (label < 0 || label >= k) throw ValidationError("predicted label " + std::to_string(label) + " out of range");
    counts[static_cast<std::size_t>(label)] += 1.0;
  }
  const double n = static_cast<double>(predicted_labels.size());
  Vector u(ratios.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const int label = predicted_labels[static_cast<std::size_t>(i)];
    u(i) = weights(label) * ratios(i) * n / counts[static_cast<std::size_t>(label)];
  }
  if (!(u.maxCoeff() > 0.0)) throw NumericalError("every update weight is zero");
  return u;
}

Kde updated_marginal(const ParameterSampleSet& init, Eigen::Index parameter, const Vector& update_weights) {
  if (parameter < 0 || parameter >= init.dimension()) throw ValidationError("parameter index out of range");
  return Kde(init.samples().col(parameter), update_weights);
}

std::vector<std::size_t> rejection_sample(const Vector& update_weights, std::uint64_t seed) {
  if (update_weights.size() == 0 || !(update_weights.maxCoeff() > 0.0)) {
    throw ValidationError("rejection sampling needs a positive weight");
  }
  const double top = update_weights.maxCoeff();
  Rng rng(seed, 0x72656a656374ull);
  std::vector<std::size_t> accepted;
  for (Eigen::Index i = 0; i < update_weights.size(); ++i) {
    if (rng.uniform() < update_weights(i) / top) accepted.push_back(static_cast<std::size_t>(i));
  }
  return accepted;
}

namespace {

double trapezoid_abs_diff(const Density1D& p, const Density1D& q, double a, double b, std::size_t grid_n) {
  if (grid_n < 2) throw ValidationError("TV grid needs at least two points");
  if (!(b > a)) throw ValidationError("TV support interval is degenerate");
  const double h = (b - a) / static_cast<double>(grid_n - 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < grid_n; ++i) {
    const double x = i + 1 == grid_n ? b : a + h * static_cast<double>(i);
    const double v = std::abs(p(x) - q(x));
    acc += (i == 0 || i + 1 == grid_n) ? 0.5 * v : v;
  }
  return acc * h;
}

}  // namespace

double tv_distance(const Density1D& p, const Density1D& q, Interval support, std::size_t grid_n, double extension) {
  const double tv = 0.5 * trapezoid_abs_diff(p, q, support.lo - extension, support.hi + extension, grid_n);
  return std::clamp(tv, 0.0, 1.0 + 1e-3);
}

double table_distance(const Density1D& p, const Density1D& q, Interval bounds, std::size_t grid_n) {
  return trapezoid_abs_diff(p, q, bounds.lo, bounds.hi, grid_n);
}

}  // namespace luq
