#pragma once

#include "luq/common.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace luq {

/// Fitted k-means model. Labels are 0-based cluster indices.
struct ClusterModel {
  Matrix centroids;  ///< K x d
  double inertia = 0.0;
  Labels labels;
  int iterations = 0;
  std::vector<double> inertia_history;  ///< after each assignment step of the winning restart

  int num_clusters() const { return static_cast<int>(centroids.rows()); }
};

struct KMeansOptions {
  int n_clusters = 3;
  int n_init = 10;
  int max_iterations = 300;
};

/// Lloyd's algorithm from k-means++ seeds; returns the restart with the
/// smallest inertia. Restart r draws from stream r of `seed`.
ClusterModel kmeans_fit(const Matrix& data, const KMeansOptions& options, std::uint64_t seed);

/// Nearest centroid in Euclidean distance; ties go to the lower index.
Labels kmeans_assign(const ClusterModel& model, const Matrix& data);

void save_labels(const std::filesystem::path& path, const Labels& labels);
Labels load_labels(const std::filesystem::path& path);

}  // namespace luq
