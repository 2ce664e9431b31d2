#include "luq/kpca.hpp"

#include "luq/csv.hpp"
#include "luq/linalg.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace luq {
namespace {

constexpr double kMinEigenvalue = 1e-12;

struct CenteredGram {
  Matrix kc;
  Vector row_means;
  double grand_mean = 0.0;
};

CenteredGram centered_gram(const KernelSpec& kernel, const Matrix& y) {
  CenteredGram out;
  out.kc = gram_matrix(kernel, y, y);
  if (!out.kc.allFinite()) throw NumericalError("kernel matrix has non-finite entries for " + kernel.describe());
  out.row_means = out.kc.rowwise().mean();
  out.grand_mean = out.row_means.mean();
  const Eigen::Index n = y.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) out.kc(i, j) -= out.row_means(i) + out.row_means(j) - out.grand_mean;
  }
  return out;
}

void fix_sign(Eigen::Ref<Vector> v) {
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
  }
  if (v(arg) < 0.0) v = -v;
}

Vector json_vector(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json matrix_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

Matrix json_matrix(const nlohmann::json& j, Eigen::Index cols_if_empty) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows == 0 ? cols_if_empty : static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = j[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw FormatError("ragged matrix in QoI map");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

Matrix gather_rows(const Matrix& data, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = data.row(rows[i]);
  return out;
}

}  // namespace

Standardizer Standardizer::fit(const Matrix& data) {
  if (data.rows() == 0) throw ValidationError("cannot standardize an empty matrix");
  Standardizer s;
  s.means = data.colwise().mean().transpose();
  s.stds.resize(data.cols());
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    const double sd = std::sqrt((data.col(c).array() - s.means(c)).square().mean());
    const double floor = 10.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(s.means(c)));
    s.stds(c) = sd > floor ? sd : 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& data) const {
  if (data.cols() != means.size()) throw ValidationError("standardizer applied to data of the wrong width");
  return ((data.rowwise() - means.transpose()).array().rowwise() / stds.transpose().array()).matrix();
}

Vector kpca_spectrum(const Matrix& y_std, const KernelSpec& kernel) {
  if (y_std.rows() < 2) throw ValidationError("kernel PCA needs at least two rows");
  const KernelSpec k = resolve_feature_gamma(kernel, y_std.cols());
  return symmetric_eigenvalues(centered_gram(k, y_std).kc).cwiseMax(0.0);
}

Vector explained_variance(const Vector& eigenvalues) {
  Vector cum = Vector::Zero(eigenvalues.size());
  double total = 0.0;
  Eigen::Index last_positive = -1;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues(i) > 0.0) {
      total += eigenvalues(i);
      last_positive = i;
    }
  }
  if (total <= 0.0) return cum;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues(i) > 0.0) acc += eigenvalues(i);
    cum(i) = i >= last_positive ? 1.0 : std::min(1.0, acc / total);
  }
  return cum;
}

double QoiMap::spectral_gap() const {
  const double total = eigenvalues.sum();
  if (total <= 0.0 || n_qoi < 1) return 0.0;
  const double next = n_qoi < eigenvalues.size() ? eigenvalues(n_qoi) : 0.0;
  return (eigenvalues(n_qoi - 1) - next) / total;
}

QoiMap kpca_fit(const Matrix& y_std, const KernelSpec& kernel, int n_components, const Standardizer& scaler) {
  if (y_std.rows() < 2) throw ValidationError("kernel PCA needs at least two rows");
  if (n_components < 1) throw ValidationError("kernel PCA needs at least one component");
  QoiMap map;
  map.kernel = resolve_feature_gamma(kernel, y_std.cols());
  map.kernel.validate();
  map.scaler = scaler;
  map.training_rows = y_std;

  CenteredGram g = centered_gram(map.kernel, y_std);
  map.train_kernel_means = g.row_means;
  map.train_kernel_grand_mean = g.grand_mean;
  map.eigenvalues = symmetric_eigenvalues(g.kc).cwiseMax(0.0);

  int keep = std::min<int>(n_components, static_cast<int>(y_std.rows()));
  while (keep > 0 && map.eigenvalues(keep - 1) < kMinEigenvalue) --keep;
  if (keep < n_components) {
    warn("kernel PCA " + map.kernel.describe() + ": kept " + std::to_string(keep) + " of " +
         std::to_string(n_components) + " components (eigenvalue below 1e-12)");
  }
  if (keep == 0) throw NumericalError("kernel PCA " + map.kernel.describe() + " has no positive eigenvalue");
  auto [values, vectors] = leading_eigenpairs(g.kc, keep);
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) fix_sign(vectors.col(c));
  map.eigenvectors = std::move(vectors);
  map.n_qoi = keep;
  map.variance_explained = explained_variance(map.eigenvalues)(keep - 1);
  return map;
}

Matrix kpca_transform(const QoiMap& map, const Matrix& y_std) {
  if (y_std.cols() != map.training_rows.cols()) {
    throw ValidationError("kernel PCA transform: expected " + std::to_string(map.training_rows.cols()) +
                          " features, got " + std::to_string(y_std.cols()));
  }
  if (y_std.rows() == 0) return Matrix(0, map.n_qoi);
  Matrix k = gram_matrix(map.kernel, y_std, map.training_rows);
  if (!k.allFinite()) throw NumericalError("kernel PCA transform produced non-finite kernel values");
  const Vector new_means = k.rowwise().mean();
  for (Eigen::Index j = 0; j < k.cols(); ++j) {
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
      k(i, j) -= new_means(i) + map.train_kernel_means(j) - map.train_kernel_grand_mean;
    }
  }
  Matrix scores = k * map.eigenvectors;
  for (int c = 0; c < map.n_qoi; ++c) scores.col(c) /= std::sqrt(map.eigenvalues(c));
  return scores;
}

std::vector<KernelSpec> default_kpca_proposals() {
  std::vector<KernelSpec> out;
  for (auto kind : {KernelKind::linear, KernelKind::rbf, KernelKind::sigmoid, KernelKind::poly, KernelKind::cosine}) {
    KernelSpec k;
    k.kind = kind;
    k.coef0 = 1.0;
    out.push_back(k);
  }
  return out;
}

std::vector<ClusterQoi> learn_qois_and_transform(const Matrix& pred, const Labels& pred_labels, const Matrix& obs,
                                                 const Labels& obs_labels, int num_clusters, const QoiMode& mode,
                                                 const std::vector<KernelSpec>& proposals) {
  if (proposals.empty()) throw ValidationError("kernel PCA needs at least one proposal");
  if (static_cast<std::size_t>(pred.rows()) != pred_labels.size() ||
      static_cast<std::size_t>(obs.rows()) != obs_labels.size()) {
    throw ValidationError("QoI learning: data and label counts differ");
  }
  if (pred.cols() != obs.cols()) throw ValidationError("QoI learning: predicted and observed widths differ");
  if (mode.kind == QoiMode::Kind::fixed_count && mode.n < 1) throw ValidationError("QoI count must be >= 1");
  if (mode.kind == QoiMode::Kind::variance_rate && !(mode.rate >= 0.0 && mode.rate <= 1.0)) {
    throw ValidationError("variance rate must lie in [0, 1]");
  }

  std::vector<ClusterQoi> out(static_cast<std::size_t>(num_clusters));
  for (int k = 0; k < num_clusters; ++k) {
    ClusterQoi& cq = out[static_cast<std::size_t>(k)];
    cq.cluster = k;
    for (std::size_t i = 0; i < pred_labels.size(); ++i) {
      if (pred_labels[i] == k) cq.pred_index.push_back(static_cast<Eigen::Index>(i));
    }
    for (std::size_t i = 0; i < obs_labels.size(); ++i) {
      if (obs_labels[i] == k) cq.obs_index.push_back(static_cast<Eigen::Index>(i));
    }
    if (cq.pred_index.size() < 2) {
      throw ValidationError("cluster " + std::to_string(k) + " has fewer than two predicted samples");
    }
    const Matrix pred_k = gather_rows(pred, cq.pred_index);
    const Standardizer scaler = Standardizer::fit(pred_k);
    const Matrix pred_std = scaler.apply(pred_k);

    cq.scores.resize(proposals.size());
    parallel_for(proposals.size(), [&](std::size_t p) {
      ProposalScore& s = cq.scores[p];
      s.kernel = proposals[p];
      Vector spectrum;
      try {
        spectrum = kpca_spectrum(pred_std, proposals[p]);
      } catch (const Error& e) {
        s.reason = e.what();
        return;
      }
      const Vector cum = explained_variance(spectrum);
      int positive = 0;
      while (positive < spectrum.size() && spectrum(positive) >= kMinEigenvalue) ++positive;
      if (positive == 0) {
        s.reason = "no positive eigenvalue";
        return;
      }
      if (mode.kind == QoiMode::Kind::fixed_count) {
        if (mode.n > positive) {
          s.reason = "only " + std::to_string(positive) + " positive eigenvalues";
          return;
        }
        s.n_qoi = mode.n;
      } else {
        int n = 1;
        while (n < positive && cum(n - 1) < mode.rate) ++n;
        if (cum(n - 1) < mode.rate) {
          s.reason = "reaches only " + csv::format_double(cum(n - 1));
          s.variance = cum(n - 1);
          return;
        }
        s.n_qoi = n;
      }
      s.variance = cum(s.n_qoi - 1);
      s.usable = true;
    });

    std::size_t best = proposals.size();
    for (std::size_t p = 0; p < proposals.size(); ++p) {
      const auto& s = cq.scores[p];
      if (!s.usable) continue;
      if (best == proposals.size()) {
        best = p;
        continue;
      }
      const auto& b = cq.scores[best];
      if (mode.kind == QoiMode::Kind::fixed_count) {
        if (s.variance > b.variance) best = p;
      } else if (s.n_qoi < b.n_qoi || (s.n_qoi == b.n_qoi && s.variance > b.variance)) {
        best = p;
      }
    }
    if (best == proposals.size()) {
      std::string msg = "cluster " + std::to_string(k) + ": no kernel PCA proposal is usable;";
      for (const auto& s : cq.scores) msg += " " + s.kernel.describe() + " " + s.reason + ";";
      throw NumericalError(msg);
    }
    cq.selected = best;
    cq.map = kpca_fit(pred_std, proposals[best], cq.scores[best].n_qoi, scaler);
    cq.pred_qoi = kpca_transform(cq.map, pred_std);
    cq.obs_qoi = kpca_transform(cq.map, scaler.apply(gather_rows(obs, cq.obs_index)));
  }
  return out;
}

nlohmann::json qoi_map_to_json(const QoiMap& map) {
  nlohmann::json j;
  j["format"] = "luq-qoi-map";
  j["version"] = 1;
  j["kernel"] = map.kernel;
  j["n_qoi"] = map.n_qoi;
  j["variance_explained"] = map.variance_explained;
  j["scaler_means"] = std::vector<double>(map.scaler.means.begin(), map.scaler.means.end());
  j["scaler_stds"] = std::vector<double>(map.scaler.stds.begin(), map.scaler.stds.end());
  j["eigenvalues"] = std::vector<double>(map.eigenvalues.begin(), map.eigenvalues.end());
  j["eigenvectors"] = matrix_json(map.eigenvectors);
  j["train_kernel_means"] = std::vector<double>(map.train_kernel_means.begin(), map.train_kernel_means.end());
  j["train_kernel_grand_mean"] = map.train_kernel_grand_mean;
  j["training_rows"] = matrix_json(map.training_rows);
  return j;
}

QoiMap qoi_map_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "luq-qoi-map") throw FormatError("not a QoI map document");
  if (j.value("version", 0) != 1) throw FormatError("unsupported QoI map version");
  QoiMap map;
  map.kernel = j.at("kernel").get<KernelSpec>();
  map.n_qoi = j.at("n_qoi").get<int>();
  map.variance_explained = j.at("variance_explained").get<double>();
  map.scaler.means = json_vector(j.at("scaler_means"));
  map.scaler.stds = json_vector(j.at("scaler_stds"));
  map.eigenvalues = json_vector(j.at("eigenvalues"));
  map.eigenvectors = json_matrix(j.at("eigenvectors"), map.n_qoi);
  map.train_kernel_means = json_vector(j.at("train_kernel_means"));
  map.train_kernel_grand_mean = j.at("train_kernel_grand_mean").get<double>();
  map.training_rows = json_matrix(j.at("training_rows"), map.scaler.means.size());
  if (map.eigenvectors.cols() != map.n_qoi || map.eigenvectors.rows() != map.training_rows.rows() ||
      map.train_kernel_means.size() != map.training_rows.rows()) {
    throw FormatError("QoI map dimensions are inconsistent");
  }
  return map;
}

void save_qoi_map(const std::filesystem::path& path, const QoiMap& map) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << qoi_map_to_json(map).dump() << '\n';
}

QoiMap load_qoi_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return qoi_map_from_json(j);
}

void save_qoi_samples(const std::filesystem::path& path, const Matrix& qoi, const std::vector<Eigen::Index>& index) {
  if (static_cast<std::size_t>(qoi.rows()) != index.size()) throw ValidationError("QoI rows and ids differ in count");
  std::vector<csv::Row> rows;
  csv::Row header{"sample_id"};
  for (Eigen::Index c = 0; c < qoi.cols(); ++c) header.push_back("q" + std::to_string(c + 1));
  rows.push_back(std::move(header));
  for (Eigen::Index r = 0; r < qoi.rows(); ++r) {
    csv::Row row{std::to_string(index[static_cast<std::size_t>(r)])};
    for (Eigen::Index c = 0; c < qoi.cols(); ++c) row.push_back(csv::format_double(qoi(r, c)));
    rows.push_back(std::move(row));
  }
  csv::write(path, rows);
}

Matrix load_qoi_samples(const std::filesystem::path& path, std::vector<Eigen::Index>* index) {
  const auto rows = csv::read(path);
  if (rows.empty() || rows.front().empty() || rows.front().front() != "sample_id") {
    throw FormatError(path.string() + ": expected header sample_id,q1,...");
  }
  const auto cols = static_cast<Eigen::Index>(rows.front().size() - 1);
  Matrix m(static_cast<Eigen::Index>(rows.size() - 1), cols);
  if (index) index->clear();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != cols + 1) throw FormatError(path.string() + ": ragged QoI row");
    if (index) index->push_back(static_cast<Eigen::Index>(csv::parse_int(rows[r][0], path.string())));
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r - 1), c) = csv::parse_double(rows[r][static_cast<std::size_t>(c + 1)], path.string());
    }
  }
  return m;
}

}  // namespace luq
