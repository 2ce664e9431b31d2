#include "doctest.h"
#include "support.hpp"

#include "luq/timeseries.hpp"

#include <cmath>

using namespace luq;

TEST_SUITE("timeseries") {

TEST_CASE("minimal ensemble file loads") {
  test::TempDir dir("ts_min");
  test::write_text(dir / "e.csv", "t,0.0,0.5,1.0\n3.0,2.9,2.7\n");
  const auto ens = load_ensemble(dir / "e.csv", SeriesKind::observed);
  CHECK(ens.num_series() == 1);
  CHECK(ens.num_times() == 3);
  CHECK(ens.values()(0, 2) == doctest::Approx(2.7));
  CHECK(ens.grid()[1] == 0.5);
}

TEST_CASE("malformed ensemble files are rejected") {
  test::TempDir dir("ts_bad");
  test::write_text(dir / "ragged.csv", "t,0,1,2\n0,1,2,3\n1,1\n");
  CHECK_THROWS_AS(load_ensemble(dir / "ragged.csv", SeriesKind::predicted), FormatError);
  test::write_text(dir / "flat.csv", "t,0.0,0.0,1.0\n0,1,2,3\n");
  CHECK_THROWS_AS(load_ensemble(dir / "flat.csv", SeriesKind::predicted), ValidationError);
  test::write_text(dir / "nan.csv", "t,0,1\n0,1,nan\n");
  CHECK_THROWS_AS(load_ensemble(dir / "nan.csv", SeriesKind::predicted), ValidationError);
  CHECK_THROWS_AS(load_ensemble(dir / "absent.csv", SeriesKind::predicted), MissingArtifactError);
}

TEST_CASE("ensemble round trip keeps every bit") {
  test::TempDir dir("ts_rt");
  const TimeGrid grid = TimeGrid::uniform(1.0, 6.0, 501);
  const Matrix values = test::random_matrix(7, 501, 3) * 1e3;
  save_ensemble(dir / "e.csv", grid, values);
  const auto back = load_ensemble(dir / "e.csv", SeriesKind::predicted);
  CHECK(back.grid() == grid);
  CHECK(back.values() == values);
}

TEST_CASE("uniform grid ends exactly on its endpoint") {
  const auto g = TimeGrid::uniform(1.0, 6.0, 501);
  CHECK(g.back() == 6.0);
  CHECK(g[100] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_THROWS_AS(TimeGrid({0.0}), ValidationError);
}

TEST_CASE("zero noise is the identity") {
  const Matrix v = test::random_matrix(4, 9, 1);
  CHECK(add_noise(v, {0.0, 11}) == v);
}

TEST_CASE("noise variance and mean") {
  const Matrix v = Matrix::Zero(100, 501);
  const Matrix out = add_noise(v, {0.25, 42});
  const double n = static_cast<double>(out.size());
  const double mean = out.mean();
  const double var = (out.array() - mean).square().sum() / (n - 1.0);
  CHECK(std::abs(var - 0.0625) < 0.1 * 0.0625);
  CHECK(std::abs(mean) < 5.0 * 0.25 / std::sqrt(n));
  CHECK(add_noise(v, {0.25, 42}) == out);
  CHECK(add_noise(v, {0.25, 43}) != out);
}

TEST_CASE("noise of a row does not depend on the other rows") {
  const Matrix v = Matrix::Zero(10, 20);
  const Matrix all = add_noise(v, {1.0, 5});
  const Matrix head = add_noise(Matrix(v.topRows(3)), {1.0, 5});
  CHECK(all.topRows(3) == head);
}

TEST_CASE("parameter sampling moments") {
  const auto u = sample_parameters({ParameterDistribution::uniform("x", {0.0, 1.0})}, 100000, 1);
  CHECK(std::abs(u.samples().col(0).mean() - 0.5) < 0.01);
  const auto b = sample_parameters({ParameterDistribution::beta_on("x", {0.1, 1.0}, 2, 2)}, 100000, 2);
  CHECK(std::abs(b.samples().col(0).mean() - 0.55) < 0.01);
  const auto b52 = sample_parameters({ParameterDistribution::beta_on("x", {0.0, 1.0}, 5, 2)}, 100000, 3);
  CHECK(std::abs(b52.samples().col(0).mean() - 5.0 / 7.0) < 0.01);
  // Beta(5,2) variance ab/((a+b)^2 (a+b+1)).
  const Vector c = b52.samples().col(0).array() - b52.samples().col(0).mean();
  CHECK(c.squaredNorm() / 1e5 == doctest::Approx(10.0 / (49.0 * 8.0)).epsilon(0.03));
}

TEST_CASE("parameter samples stay inside random bounds") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const double lo = rng.uniform(-5.0, 5.0);
    const double hi = lo + rng.uniform(1e-3, 4.0);
    std::vector<ParameterDistribution> spec{
        ParameterDistribution::uniform("u", {lo, hi}),
        ParameterDistribution::beta_on("b", {lo, hi}, rng.uniform(0.2, 6.0), rng.uniform(0.2, 6.0))};
    const auto s = sample_parameters(spec, 500, static_cast<std::uint64_t>(trial));
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      for (Eigen::Index j = 0; j < 2; ++j) {
        REQUIRE(s.samples()(i, j) >= lo);
        REQUIRE(s.samples()(i, j) <= hi);
      }
    }
  }
}

TEST_CASE("invalid shape parameters") {
  CHECK_THROWS_AS(sample_parameters({ParameterDistribution::beta_on("x", {0, 1}, 0.0, 2.0)}, 10, 1), ValidationError);
}

TEST_CASE("exact densities") {
  const auto b = ParameterDistribution::beta_on("x", {0.1, 1.0}, 2, 2);
  CHECK(b.pdf(0.55) == doctest::Approx(1.5 / 0.9));
  CHECK(b.pdf(0.0) == 0.0);
  CHECK(ParameterDistribution::uniform("x", {0, 4}).pdf(1.0) == doctest::Approx(0.25));
}

TEST_CASE("parameter file round trip") {
  test::TempDir dir("ts_params");
  const auto s = sample_parameters({ParameterDistribution::uniform("c", {0.1, 1}),
                                    ParameterDistribution::uniform("omega0", {0.5, 1})},
                                   20, 8);
  save_parameters(dir / "p.csv", s);
  const auto back = load_parameters(dir / "p.csv", s.bounds());
  CHECK(back.names() == s.names());
  CHECK(back.samples() == s.samples());
}

}
