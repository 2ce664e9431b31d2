#include "luq/clustering.hpp"

#include "luq/csv.hpp"
#include "luq/rng.hpp"

#include <limits>

namespace luq {
namespace {

// Exact per-pair distance; used where ties and zero distances must be exact.
double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index k) {
  return (a.row(i) - b.row(k)).squaredNorm();
}

double assign(const Matrix& data, const Matrix& centroids, Labels& labels) {
  const Eigen::Index n = data.rows();
  const Eigen::Index k = centroids.rows();
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = squared_distance(data, i, centroids, 0);
    for (Eigen::Index c = 1; c < k; ++c) {
      const double d = squared_distance(data, i, centroids, c);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    inertia += best_d;
  }
  return inertia;
}

Matrix plus_plus_seeds(const Matrix& data, int k, Rng& rng) {
  const Eigen::Index n = data.rows();
  Matrix centroids(k, data.cols());
  const auto first = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
  centroids.row(0) = data.row(first);
  Vector closest(n);
  for (Eigen::Index i = 0; i < n; ++i) closest(i) = squared_distance(data, i, centroids, 0);
  for (int c = 1; c < k; ++c) {
    const double total = closest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += closest(i);
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = data.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) closest(i) = std::min(closest(i), squared_distance(data, i, centroids, c));
  }
  return centroids;
}

ClusterModel lloyd(const Matrix& data, Matrix centroids, int max_iterations) {
  const Eigen::Index n = data.rows();
  const Eigen::Index k = centroids.rows();
  ClusterModel model;
  model.labels.assign(static_cast<std::size_t>(n), -1);
  Labels previous;
  int it = 0;
  for (; it < max_iterations; ++it) {
    const double inertia = assign(data, centroids, model.labels);
    model.inertia_history.push_back(inertia);
    if (model.labels == previous) break;
    previous = model.labels;

    Matrix sums = Matrix::Zero(k, data.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = model.labels[static_cast<std::size_t>(i)];
      sums.row(c) += data.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
    }
    // Empty clusters move to the point farthest from its own centroid.
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = squared_distance(data, i, centroids, model.labels[static_cast<std::size_t>(i)]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      const int old = model.labels[static_cast<std::size_t>(far)];
      centroids.row(c) = data.row(far);
      --counts[static_cast<std::size_t>(old)];
      ++counts[static_cast<std::size_t>(c)];
      model.labels[static_cast<std::size_t>(far)] = static_cast<int>(c);
      previous.clear();
    }
  }
  // Final assignment against the final centroids keeps labels a fixed point
  // of kmeans_assign even when the iteration cap was hit.
  model.inertia = assign(data, centroids, model.labels);
  if (it == max_iterations) model.inertia_history.push_back(model.inertia);
  model.centroids = std::move(centroids);
  model.iterations = it;
  return model;
}

}  // namespace

ClusterModel kmeans_fit(const Matrix& data, const KMeansOptions& options, std::uint64_t seed) {
  if (data.rows() == 0 || data.cols() == 0) throw ValidationError("k-means needs non-empty data");
  if (options.n_clusters < 1) throw ValidationError("k-means needs K >= 1");
  if (data.rows() < options.n_clusters) throw ValidationError("k-means needs at least K samples");
  if (options.n_init < 1) throw ValidationError("k-means needs n_init >= 1");

  std::vector<ClusterModel> runs(static_cast<std::size_t>(options.n_init));
  parallel_for(runs.size(), [&](std::size_t r) {
    Rng rng(seed, r);
    runs[r] = lloyd(data, plus_plus_seeds(data, options.n_clusters, rng), options.max_iterations);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].inertia < runs[best].inertia) best = r;
  }
  return std::move(runs[best]);
}

Labels kmeans_assign(const ClusterModel& model, const Matrix& data) {
  if (data.cols() != model.centroids.cols()) {
    throw ValidationError("k-means assign: data has " + std::to_string(data.cols()) + " columns, centroids have " +
                          std::to_string(model.centroids.cols()));
  }
  Labels labels(static_cast<std::size_t>(data.rows()));
  assign(data, model.centroids, labels);
  return labels;
}

void save_labels(const std::filesystem::path& path, const Labels& labels) {
  std::vector<csv::Row> rows{{"series_id", "label"}};
  for (std::size_t i = 0; i < labels.size(); ++i) rows.push_back({std::to_string(i), std::to_string(labels[i])});
  csv::write(path, rows);
}

Labels load_labels(const std::filesystem::path& path) {
  const auto rows = csv::read(path);
  if (rows.empty() || rows.front().size() != 2) throw FormatError(path.string() + ": expected header series_id,label");
  Labels labels;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 2) throw FormatError(path.string() + ": malformed label row");
    labels.push_back(static_cast<int>(csv::parse_int(rows[i][1], path.string())));
  }
  return labels;
}

}  // namespace luq
