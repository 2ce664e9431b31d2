#pragma once

#include "luq/common.hpp"
#include "luq/kernels.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace luq {

/// Per-feature mean and population standard deviation; zero deviations are
/// replaced by 1.
struct Standardizer {
  Vector means;
  Vector stds;

  static Standardizer fit(const Matrix& data);
  Matrix apply(const Matrix& data) const;
};

/// Descending eigenvalues of the double-centered Gram matrix, negative ones
/// clipped to 0.
Vector kpca_spectrum(const Matrix& y_std, const KernelSpec& kernel);

/// Cumulative explained-variance fractions: entry n-1 is the share of the
/// first n eigenvalues in the positive spectrum.
Vector explained_variance(const Vector& eigenvalues);

struct QoiMap {
  KernelSpec kernel;          ///< gamma resolved
  Standardizer scaler;
  Matrix training_rows;       ///< standardized
  Vector eigenvalues;         ///< all, descending, clipped at 0
  Matrix eigenvectors;        ///< N x n_qoi, largest-magnitude entry positive
  Vector train_kernel_means;  ///< row means of the uncentered training Gram
  double train_kernel_grand_mean = 0.0;
  int n_qoi = 0;
  double variance_explained = 0.0;

  /// Gap between the normalized eigenvalues n_qoi and n_qoi + 1.
  double spectral_gap() const;
};

/// Fits kernel PCA on standardized rows keeping `n_components` components.
/// Components with eigenvalue below 1e-12 are dropped with a warning.
QoiMap kpca_fit(const Matrix& y_std, const KernelSpec& kernel, int n_components, const Standardizer& scaler = {});

/// Projects standardized rows onto the fitted components.
Matrix kpca_transform(const QoiMap& map, const Matrix& y_std);

struct QoiMode {
  enum class Kind { fixed_count, variance_rate };
  Kind kind = Kind::fixed_count;
  int n = 2;
  double rate = 0.95;

  static QoiMode fixed(int n) { return {Kind::fixed_count, n, 0.0}; }
  static QoiMode variance(double r) { return {Kind::variance_rate, 0, r}; }
};

struct ProposalScore {
  KernelSpec kernel;          ///< as proposed (gamma possibly unresolved)
  bool usable = false;
  int n_qoi = 0;
  double variance = 0.0;      ///< explained by the first n_qoi components
  std::string reason;         ///< why the proposal was not usable
};

struct ClusterQoi {
  int cluster = 0;
  QoiMap map;
  std::size_t selected = 0;
  std::vector<ProposalScore> scores;
  Matrix pred_qoi;
  Matrix obs_qoi;
  std::vector<Eigen::Index> pred_index;  ///< rows of the predicted input
  std::vector<Eigen::Index> obs_index;   ///< rows of the observed input
};

/// Kernel PCA proposals with the kernel-PCA default coefficients.
std::vector<KernelSpec> default_kpca_proposals();

/// Per cluster: standardize on the predicted rows, score every proposal,
/// select per `mode`, and transform both predicted and observed rows.
std::vector<ClusterQoi> learn_qois_and_transform(const Matrix& pred, const Labels& pred_labels, const Matrix& obs,
                                                 const Labels& obs_labels, int num_clusters, const QoiMode& mode,
                                                 const std::vector<KernelSpec>& proposals);

nlohmann::json qoi_map_to_json(const QoiMap& map);
QoiMap qoi_map_from_json(const nlohmann::json& j);
void save_qoi_map(const std::filesystem::path& path, const QoiMap& map);
QoiMap load_qoi_map(const std::filesystem::path& path);

/// CSV with header sample_id,q1..qn; ids are rows of the original ensemble.
void save_qoi_samples(const std::filesystem::path& path, const Matrix& qoi, const std::vector<Eigen::Index>& index);
Matrix load_qoi_samples(const std::filesystem::path& path, std::vector<Eigen::Index>* index = nullptr);

}  // namespace luq
