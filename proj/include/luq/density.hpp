#pragma once

#include "luq/common.hpp"
#include "luq/timeseries.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace luq {

/// Gaussian product-kernel density estimate with a diagonal Scott bandwidth
/// h_j = sigma_j * n_eff^(-1/(d+4)).
class Kde {
 public:
  Kde() = default;
  /// Rows of `samples` are points. Weights, if given, are nonnegative and
  /// normalized internally.
  explicit Kde(Matrix samples, std::optional<Vector> weights = std::nullopt);

  double operator()(const Eigen::Ref<const Vector>& x) const;
  double operator()(double x) const;
  Vector evaluate(const Matrix& points) const;

  const Vector& bandwidth() const { return bandwidth_; }
  const Vector& weights() const { return weights_; }
  Eigen::Index dimension() const { return samples_.cols(); }
  double effective_size() const { return n_eff_; }

 private:
  Matrix samples_;
  Vector weights_;
  Vector bandwidth_;
  double n_eff_ = 0.0;
  double norm_ = 0.0;
};

struct RatioResult {
  Vector ratios;              ///< at each predicted QoI point
  double diagnostic = 0.0;    ///< mean ratio
  std::size_t underflows = 0; ///< points with predicted density below 1e-300
};

/// r_i = pi_obs(q_i) / pi_pred(q_i) at every predicted QoI point.
RatioResult compute_ratios(const Matrix& predicted_qoi, const Matrix& observed_qoi);

/// Fraction of observed labels in each of the K clusters.
Vector cluster_weights(const Labels& observed_labels, int num_clusters);

/// Per initial sample: u_i = w_k * r_i * N / N_k for the sample's cluster k,
/// so cluster k carries total mass w_k * E_k. Throws if every u_i is zero.
Vector update_weights(const Labels& predicted_labels, const Vector& ratios, const Vector& weights);

/// Weighted KDE of one parameter column of the initial samples.
Kde updated_marginal(const ParameterSampleSet& init, Eigen::Index parameter, const Vector& update_weights);

/// Accepts sample i with probability u_i / max u.
std::vector<std::size_t> rejection_sample(const Vector& update_weights, std::uint64_t seed);

using Density1D = std::function<double(double)>;

/// 0.5 * trapezoid integral of |p - q| over `support` widened by
/// `extension` on both sides, clipped to [0, 1 + 1e-3].
double tv_distance(const Density1D& p, const Density1D& q, Interval support, std::size_t grid_n,
                   double extension = 0.0);

/// Trapezoid integral of |p - q| over `bounds`; the convention of the
/// published TV tables.
double table_distance(const Density1D& p, const Density1D& q, Interval bounds, std::size_t grid_n);

}  // namespace luq
