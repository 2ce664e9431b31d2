#include "doctest.h"
#include "support.hpp"

#include "luq/kpca.hpp"
#include "luq/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace luq;

namespace {

KernelSpec kernel(KernelKind kind) {
  KernelSpec k;
  k.kind = kind;
  k.coef0 = 1.0;
  return k;
}

// Classical PCA scores from the covariance eigendecomposition.
Matrix covariance_pca_scores(const Matrix& x, int n) {
  const Matrix xc = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Matrix> es(xc.transpose() * xc);
  const Matrix axes = es.eigenvectors().rowwise().reverse().leftCols(n);
  return xc * axes;
}

void align_signs(Matrix& a, const Matrix& ref) {
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    if (a.col(c).dot(ref.col(c)) < 0) a.col(c) *= -1.0;
  }
}

}  // namespace

TEST_SUITE("kpca") {

TEST_CASE("leading eigenpairs against a dense solver") {
  for (int n : {1, 2, 5, 40, 250}) {
    Matrix b = test::random_matrix(n, n, static_cast<std::uint64_t>(n));
    const Matrix a = b + b.transpose();
    const int k = std::min(n, 4);
    const auto [vals, vecs] = leading_eigenpairs(a, k);
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    const Vector ref = es.eigenvalues().reverse();
    for (int i = 0; i < k; ++i) CHECK(vals(i) == doctest::Approx(ref(i)).epsilon(1e-10));
    CHECK((vecs.transpose() * vecs - Matrix::Identity(k, k)).norm() < 1e-10);
    CHECK((a * vecs - vecs * vals.asDiagonal()).norm() < 1e-9 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
    CHECK((symmetric_eigenvalues(a) - ref).norm() < 1e-9 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("leading eigenpairs with a repeated eigenvalue") {
  Matrix q = Eigen::HouseholderQR<Matrix>(test::random_matrix(30, 30, 2)).householderQ();
  Vector d = Vector::LinSpaced(30, 0.0, 1.0);
  d(29) = d(28) = d(27) = 5.0;
  const Matrix a = q * d.asDiagonal() * q.transpose();
  const auto [vals, vecs] = leading_eigenpairs(a, 4);
  CHECK(vals(0) == doctest::Approx(5.0));
  CHECK(vals(2) == doctest::Approx(5.0));
  CHECK((vecs.transpose() * vecs - Matrix::Identity(4, 4)).norm() < 1e-10);
  CHECK((a * vecs - vecs * vals.asDiagonal()).norm() < 1e-9);
}

TEST_CASE("standardizer") {
  Matrix x = test::random_matrix(50, 3, 3) * 4.0;
  x.col(1).setConstant(7.0);
  const auto s = Standardizer::fit(x);
  const Matrix z = s.apply(x);
  CHECK(z.col(1).cwiseAbs().maxCoeff() == 0.0);
  for (Eigen::Index c : {0, 2}) {
    CHECK(std::abs(z.col(c).mean()) < 1e-10);
    CHECK(std::abs(z.col(c).squaredNorm() / 50.0 - 1.0) < 1e-10);
  }
  CHECK(s.apply(x) == z);
  CHECK_THROWS_AS(s.apply(Matrix::Zero(2, 2)), ValidationError);
}

TEST_CASE("points on a line carry the whole spectrum") {
  Matrix x(20, 3);
  for (int i = 0; i < 20; ++i) x.row(i) << 1.0 + i, 2.0 - 0.5 * i, 3.0 + 2.0 * i;
  const auto map = kpca_fit(x, kernel(KernelKind::linear), 1);
  CHECK(map.variance_explained == doctest::Approx(1.0));
}

TEST_CASE("linear kernel PCA equals covariance PCA") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rows = static_cast<Eigen::Index>(5 + rng.below(46));
    const auto cols = static_cast<Eigen::Index>(2 + rng.below(29));
    const Matrix x = test::random_matrix(rows, cols, 100 + static_cast<std::uint64_t>(trial)) *
                     Matrix(test::random_matrix(cols, cols, 200 + static_cast<std::uint64_t>(trial)));
    const int n = static_cast<int>(std::min<Eigen::Index>(3, std::min(rows - 1, cols)));
    const auto map = kpca_fit(x, kernel(KernelKind::linear), n);
    Matrix scores = kpca_transform(map, x);
    const Matrix ref = covariance_pca_scores(x, n);
    align_signs(scores, ref);
    INFO("trial " << trial << " shape " << rows << "x" << cols);
    CHECK((scores - ref).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("training rows reproduce the fitted scores") {
  const Matrix x = test::random_matrix(40, 6, 5);
  for (auto kind : {KernelKind::linear, KernelKind::rbf, KernelKind::poly, KernelKind::sigmoid, KernelKind::cosine}) {
    const auto map = kpca_fit(x, kernel(kind), 2);
    const Matrix scores = kpca_transform(map, x);
    for (int c = 0; c < map.n_qoi; ++c) {
      const Vector expect = map.eigenvectors.col(c) * std::sqrt(map.eigenvalues(c));
      CHECK((scores.col(c) - expect).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("translation leaves linear scores unchanged") {
  const Matrix x = test::random_matrix(30, 4, 6);
  Vector shift(4);
  shift << 3, -1, 10, 0.5;
  const Matrix y = x.rowwise() + shift.transpose();
  const Matrix a = kpca_transform(kpca_fit(x, kernel(KernelKind::linear), 2), x);
  const Matrix b = kpca_transform(kpca_fit(y, kernel(KernelKind::linear), 2), y);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("the training mean projects to zero") {
  const Matrix x = test::random_matrix(25, 5, 7);
  const auto map = kpca_fit(x, kernel(KernelKind::linear), 3);
  const Matrix s = kpca_transform(map, Matrix(x.colwise().mean()));
  CHECK(s.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("duplicated rows get identical scores") {
  Matrix x = test::random_matrix(20, 3, 8);
  x.row(5) = x.row(11);
  const auto map = kpca_fit(x, kernel(KernelKind::rbf), 2);
  const Matrix s = kpca_transform(map, x);
  CHECK((s.row(5) - s.row(11)).norm() < 1e-12);
}

TEST_CASE("explained variance is a cumulative fraction") {
  const Matrix x = test::random_matrix(40, 8, 9);
  for (auto kind : {KernelKind::linear, KernelKind::rbf, KernelKind::sigmoid}) {
    const Vector ev = explained_variance(kpca_spectrum(x, kernel(kind)));
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      CHECK(ev(i) >= 0.0);
      CHECK(ev(i) <= 1.0);
      if (i > 0) CHECK(ev(i) >= ev(i - 1));
    }
    CHECK(ev(ev.size() - 1) == 1.0);
  }
}

TEST_CASE("rank deficiency drops components") {
  Matrix x(10, 2);
  for (int i = 0; i < 10; ++i) x.row(i) << i, 2.0 * i;
  set_warnings_enabled(false);
  const auto map = kpca_fit(x, kernel(KernelKind::linear), 2);
  set_warnings_enabled(true);
  CHECK(map.n_qoi == 1);
  CHECK_THROWS_AS(kpca_fit(Matrix::Ones(5, 2), kernel(KernelKind::linear), 1), NumericalError);
}

TEST_CASE("proposal selection modes") {
  Matrix pred = test::random_matrix(120, 10, 10);
  pred.col(1) = pred.col(0) * 3.0 + 0.1 * pred.col(1);
  Labels pl(120);
  for (int i = 0; i < 120; ++i) pl[static_cast<std::size_t>(i)] = i % 2;
  const Matrix obs = test::random_matrix(30, 10, 11);
  Labels ol(30);
  for (int i = 0; i < 30; ++i) ol[static_cast<std::size_t>(i)] = i % 2;
  const auto props = default_kpca_proposals();

  const auto a = learn_qois_and_transform(pred, pl, obs, ol, 2, QoiMode::fixed(2), props);
  REQUIRE(a.size() == 2);
  for (const auto& c : a) {
    for (const auto& s : c.scores) {
      if (s.usable) CHECK(c.scores[c.selected].variance >= s.variance);
    }
    CHECK(c.pred_qoi.cols() == 2);
    CHECK(c.obs_qoi.rows() == 15);
    CHECK(c.pred_index.size() == 60);
  }

  const auto b = learn_qois_and_transform(pred, pl, obs, ol, 2, QoiMode::variance(0.0), {kernel(KernelKind::rbf)});
  for (const auto& c : b) CHECK(c.map.n_qoi == 1);

  const auto r = learn_qois_and_transform(pred, pl, obs, ol, 2, QoiMode::variance(0.5), props);
  for (const auto& c : r) {
    const auto& win = c.scores[c.selected];
    CHECK(win.variance >= 0.5);
    for (const auto& s : c.scores) {
      if (!s.usable) continue;
      CHECK(win.n_qoi <= s.n_qoi);
      if (s.n_qoi == win.n_qoi) CHECK(win.variance >= s.variance);
    }
  }
}

TEST_CASE("stored QoI map reproduces the transform") {
  test::TempDir dir("qoi_rt");
  const Matrix x = test::random_matrix(30, 5, 12);
  const auto map = kpca_fit(x, kernel(KernelKind::sigmoid), 2, Standardizer::fit(x));
  save_qoi_map(dir / "m.json", map);
  const auto back = load_qoi_map(dir / "m.json");
  const Matrix probe = test::random_matrix(7, 5, 13);
  CHECK(kpca_transform(back, probe) == kpca_transform(map, probe));

  const Matrix q = kpca_transform(map, x);
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < 30; ++i) idx.push_back(3 * i);
  save_qoi_samples(dir / "q.csv", q, idx);
  std::vector<Eigen::Index> idx_back;
  CHECK(load_qoi_samples(dir / "q.csv", &idx_back) == q);
  CHECK(idx_back == idx);
}

}
