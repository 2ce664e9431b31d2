#include "doctest.h"
#include "support.hpp"

#include "luq/clustering.hpp"

#include <set>

using namespace luq;

namespace {

Matrix two_clouds(std::uint64_t seed) {
  Matrix a = test::random_matrix(40, 3, seed) * 0.1;
  Matrix b = test::random_matrix(30, 3, seed + 1) * 0.1;
  b.array() += 50.0;
  Matrix out(70, 3);
  out << a, b;
  return out;
}

}  // namespace

TEST_SUITE("clustering") {

TEST_CASE("well separated clouds") {
  const Matrix x = two_clouds(1);
  const auto m = kmeans_fit(x, {2, 10, 300}, 7);
  for (int i = 1; i < 40; ++i) CHECK(m.labels[i] == m.labels[0]);
  for (int i = 40; i < 70; ++i) CHECK(m.labels[i] != m.labels[0]);
}

TEST_CASE("single cluster closed form") {
  const Matrix x = test::random_matrix(25, 4, 3);
  const auto m = kmeans_fit(x, {1, 3, 300}, 1);
  CHECK((m.centroids.row(0) - x.colwise().mean()).norm() < 1e-12);
  const double total = (x.rowwise() - x.colwise().mean()).squaredNorm();
  CHECK(m.inertia == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("one cluster per point") {
  const Matrix x = test::random_matrix(6, 2, 4);
  const auto m = kmeans_fit(x, {6, 5, 300}, 2);
  CHECK(m.inertia == doctest::Approx(0.0));
  CHECK(std::set<int>(m.labels.begin(), m.labels.end()).size() == 6);
}

TEST_CASE("inertia is monotone and labels are a fixed point") {
  Matrix x = test::random_matrix(300, 5, 11);
  x.topRows(100).array() += 2.0;
  x.middleRows(100, 100).array() -= 2.0;
  const auto m = kmeans_fit(x, {3, 10, 300}, 5);
  for (std::size_t i = 1; i < m.inertia_history.size(); ++i) CHECK(m.inertia_history[i] <= m.inertia_history[i - 1] + 1e-9);
  CHECK(kmeans_assign(m, x) == m.labels);
  for (int l : m.labels) CHECK((l >= 0 && l < 3));
}

TEST_CASE("nearest centroid with lowest-index ties") {
  ClusterModel m;
  m.centroids = Matrix(2, 1);
  m.centroids << -1.0, 1.0;
  Matrix pts(3, 1);
  pts << -1.0, 1.0, 0.0;
  CHECK(kmeans_assign(m, pts) == Labels{0, 1, 0});
  CHECK_THROWS_AS(kmeans_assign(m, Matrix::Zero(1, 2)), ValidationError);
}

TEST_CASE("row permutation permutes labels") {
  const Matrix x = two_clouds(5);
  const auto m = kmeans_fit(x, {2, 4, 300}, 3);
  std::vector<int> perm(70);
  for (int i = 0; i < 70; ++i) perm[static_cast<std::size_t>(i)] = (i * 37) % 70;
  Matrix xp(70, 3);
  for (int i = 0; i < 70; ++i) xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  const auto mp = kmeans_fit(xp, {2, 4, 300}, 3);
  CHECK(mp.inertia == doctest::Approx(m.inertia).epsilon(1e-10));
  for (int i = 0; i < 70; ++i) {
    for (int j = 0; j < 70; ++j) {
      const bool same = m.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] ==
                        m.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
      REQUIRE(same == (mp.labels[static_cast<std::size_t>(i)] == mp.labels[static_cast<std::size_t>(j)]));
    }
  }
}

TEST_CASE("deterministic per seed") {
  const Matrix x = test::random_matrix(200, 4, 8);
  const auto a = kmeans_fit(x, {3, 10, 300}, 99);
  const auto b = kmeans_fit(x, {3, 10, 300}, 99);
  CHECK(a.labels == b.labels);
  CHECK(a.centroids == b.centroids);
}

TEST_CASE("invalid input") {
  CHECK_THROWS_AS(kmeans_fit(Matrix::Zero(2, 2), {3, 1, 300}, 1), ValidationError);
  CHECK_THROWS_AS(kmeans_fit(Matrix(0, 2), {1, 1, 300}, 1), ValidationError);
}

TEST_CASE("label file round trip") {
  test::TempDir dir("labels");
  const Labels l{0, 2, 1, 1, 0};
  save_labels(dir / "l.csv", l);
  CHECK(load_labels(dir / "l.csv") == l);
  test::write_text(dir / "bad.csv", "id\n0\n");
  CHECK_THROWS_AS(load_labels(dir / "bad.csv"), FormatError);
}

}
