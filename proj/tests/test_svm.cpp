#include "doctest.h"
#include "support.hpp"

#include "luq/svm.hpp"

#include <cmath>

using namespace luq;

namespace {

KernelSpec kernel(KernelKind kind, std::optional<double> gamma = std::nullopt) {
  KernelSpec k;
  k.kind = kind;
  k.gamma = gamma;
  return k;
}

struct Labeled {
  Matrix x;
  Labels y;
};

Labeled clouds(int per_class, int classes, double spread, std::uint64_t seed) {
  Labeled d;
  d.x = test::random_matrix(per_class * classes, 2, seed) * spread;
  for (int c = 0; c < classes; ++c) {
    const double angle = 2.0 * 3.141592653589793 * c / classes;
    for (int i = 0; i < per_class; ++i) {
      d.x(c * per_class + i, 0) += 2.0 * std::cos(angle);
      d.x(c * per_class + i, 1) += 2.0 * std::sin(angle);
      d.y.push_back(c);
    }
  }
  return d;
}

double error_rate(const ClassifierModel& m, const Labeled& d) {
  const Labels p = classify(m, d.x);
  int wrong = 0;
  for (std::size_t i = 0; i < p.size(); ++i) wrong += p[i] != d.y[i];
  return static_cast<double>(wrong) / static_cast<double>(p.size());
}

}  // namespace

TEST_SUITE("svm") {

TEST_CASE("kernel values") {
  Vector x(2), y(2);
  x << 1, 2;
  CHECK(kernel_eval(kernel(KernelKind::linear), x, x) == 5.0);
  CHECK(kernel_eval(kernel(KernelKind::rbf, 0.7), x, x) == 1.0);
  x << 1, 0;
  y << 0, 1;
  CHECK(kernel_eval(kernel(KernelKind::cosine), x, y) == 0.0);
  KernelSpec p = kernel(KernelKind::poly, 0.5);
  p.coef0 = 1.0;
  p.degree = 2;
  x << 1, 2;
  y << 3, -1;
  CHECK(kernel_eval(p, x, y) == doctest::Approx(std::pow(0.5 * 1.0 + 1.0, 2)));
  KernelSpec s = kernel(KernelKind::sigmoid, 0.25);
  CHECK(kernel_eval(s, x, y) == doctest::Approx(std::tanh(0.25)));
  CHECK_THROWS_AS(kernel_eval(kernel(KernelKind::cosine), Vector::Zero(2), y), ValidationError);
}

TEST_CASE("separable clouds train without error") {
  Labeled d;
  d.x = test::random_matrix(60, 2, 1) * 0.2;
  for (int i = 0; i < 60; ++i) {
    d.x(i, 0) += i < 30 ? 1.0 : -1.0;
    d.y.push_back(i < 30 ? 0 : 1);
  }
  const auto m = svm_train(d.x, d.y, kernel(KernelKind::linear));
  CHECK(m.converged());
  CHECK(error_rate(m, d) == 0.0);
  for (const auto& mach : m.machines) {
    for (double c : mach.coef) CHECK(std::abs(c) <= m.C + 1e-12);
  }
}

TEST_CASE("xor needs a nonlinear kernel") {
  Labeled d;
  d.x = Matrix(4, 2);
  d.x << 1, 1, -1, -1, 1, -1, -1, 1;
  d.y = {0, 0, 1, 1};
  const auto lin = svm_train(d.x, d.y, kernel(KernelKind::linear));
  CHECK(error_rate(lin, d) > 0.0);
  const auto rbf = svm_train(d.x, d.y, kernel(KernelKind::rbf, 1.0));
  CHECK(error_rate(rbf, d) == 0.0);
  // Direct evaluation of the trained decision function on the four points.
  const auto& mach = rbf.machines.front();
  for (Eigen::Index i = 0; i < 4; ++i) {
    double f = -mach.rho;
    for (std::size_t s = 0; s < mach.support.size(); ++s) {
      f += mach.coef[s] * std::exp(-(rbf.support_vectors.row(mach.support[s]) - d.x.row(i)).squaredNorm());
    }
    CHECK((f > 0) == (d.y[static_cast<std::size_t>(i)] == mach.positive_class));
    CHECK(f == doctest::Approx(rbf.decision_values(d.x.row(i).transpose()).front()).epsilon(1e-12));
  }
}

TEST_CASE("linear decision equals an explicit hyperplane") {
  const Labeled d = clouds(40, 2, 0.9, 3);
  const auto m = svm_train(d.x, d.y, kernel(KernelKind::linear));
  const auto& mach = m.machines.front();
  Vector w = Vector::Zero(2);
  for (std::size_t s = 0; s < mach.support.size(); ++s) w += mach.coef[s] * m.support_vectors.row(mach.support[s]).transpose();
  const Matrix probe = test::random_matrix(30, 2, 4) * 3.0;
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    const double explicit_f = w.dot(probe.row(i)) - mach.rho;
    CHECK(std::abs(m.decision_values(probe.row(i).transpose()).front() - explicit_f) < 1e-8);
  }
}

TEST_CASE("duplicated training set gives the same decisions") {
  Labeled d;
  d.x = test::random_matrix(40, 2, 5) * 0.3;
  for (int i = 0; i < 40; ++i) {
    d.x(i, 0) += i < 20 ? 2.0 : -2.0;
    d.y.push_back(i < 20 ? 0 : 1);
  }
  Labeled dd;
  dd.x = Matrix(80, 2);
  dd.x << d.x, d.x;
  dd.y = d.y;
  dd.y.insert(dd.y.end(), d.y.begin(), d.y.end());
  SvmOptions opt;
  opt.tol = 1e-8;
  const auto a = svm_train(d.x, d.y, kernel(KernelKind::linear), opt);
  const auto b = svm_train(dd.x, dd.y, kernel(KernelKind::linear), opt);
  const Matrix probe = test::random_matrix(20, 2, 6) * 2.0;
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    CHECK(a.decision_values(probe.row(i).transpose()).front() ==
          doctest::Approx(b.decision_values(probe.row(i).transpose()).front()).epsilon(1e-5));
  }
}

TEST_CASE("training row order does not change decisions") {
  const Labeled d = clouds(30, 3, 0.8, 7);
  Labeled r;
  r.x = d.x.colwise().reverse();
  r.y.assign(d.y.rbegin(), d.y.rend());
  SvmOptions opt;
  opt.tol = 1e-8;
  const auto a = svm_train(d.x, d.y, kernel(KernelKind::rbf, 0.5), opt);
  const auto b = svm_train(r.x, r.y, kernel(KernelKind::rbf, 0.5), opt);
  const Matrix probe = test::random_matrix(25, 2, 8) * 2.0;
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    const auto va = a.decision_values(probe.row(i).transpose());
    const auto vb = b.decision_values(probe.row(i).transpose());
    for (std::size_t k = 0; k < va.size(); ++k) CHECK(va[k] == doctest::Approx(vb[k]).epsilon(1e-5));
  }
}

TEST_CASE("three classes vote") {
  const Labeled d = clouds(30, 3, 0.3, 9);
  const auto m = svm_train(d.x, d.y, kernel(KernelKind::rbf));
  CHECK(m.num_classes == 3);
  CHECK(m.machines.size() == 3);
  CHECK(error_rate(m, d) == 0.0);
  // A support vector of a clean model keeps its label.
  const auto& mach = m.machines.front();
  const Labels l = classify(m, Matrix(m.support_vectors.row(mach.support.front())));
  CHECK((l[0] == mach.positive_class || l[0] == mach.negative_class));
}

TEST_CASE("classification is row equivariant") {
  const Labeled d = clouds(25, 3, 1.0, 10);
  const auto m = svm_train(d.x, d.y, kernel(KernelKind::rbf));
  const Labels fwd = classify(m, d.x);
  const Labels rev = classify(m, Matrix(d.x.colwise().reverse()));
  CHECK(Labels(rev.rbegin(), rev.rend()) == fwd);
}

TEST_CASE("single class is rejected") {
  CHECK_THROWS_AS(svm_train(Matrix::Zero(5, 2), Labels(5, 1), kernel(KernelKind::linear)), ValidationError);
}

TEST_CASE("fold assignment") {
  const auto f = kfold_assignment(103, 10, 4);
  std::vector<int> count(10, 0);
  for (int v : f) ++count[static_cast<std::size_t>(v)];
  CHECK(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()) <= 1);
  CHECK(kfold_assignment(103, 10, 4) == f);
}

TEST_CASE("cross-validated selection") {
  Labeled d;
  d.x = test::random_matrix(80, 2, 12) * 0.3;
  for (int i = 0; i < 80; ++i) {
    d.x(i, 0) += i % 2 ? 1.5 : -1.5;
    d.y.push_back(i % 2);
  }
  const auto single = select_classifier(d.x, d.y, {kernel(KernelKind::linear)}, 10, 1);
  CHECK(single.selected == 0);
  CHECK(single.model.cv_misclassification < 0.02);

  const Labeled ring = [] {
    Labeled r;
    r.x = test::random_matrix(200, 2, 13);
    for (Eigen::Index i = 0; i < 200; ++i) r.y.push_back(r.x.row(i).norm() > 1.1 ? 1 : 0);
    return r;
  }();
  std::vector<KernelSpec> props{kernel(KernelKind::linear), kernel(KernelKind::rbf), kernel(KernelKind::sigmoid)};
  const auto sel = select_classifier(ring.x, ring.y, props, 5, 2);
  CHECK(sel.selected == 1);
  for (double r : sel.cv_rates) CHECK(sel.cv_rates[sel.selected] <= r);
  CHECK(sel.model.cv_misclassification == sel.cv_rates[sel.selected]);
  CHECK(sel.model.kernel.kind == KernelKind::rbf);
}

TEST_CASE("scale gamma") {
  Matrix x(2, 2);
  x << 0, 2, 2, 0;
  CHECK(*resolve_scale_gamma(kernel(KernelKind::rbf), x).gamma == doctest::Approx(0.5));
  CHECK(*resolve_scale_gamma(kernel(KernelKind::rbf, 3.0), x).gamma == 3.0);
}

TEST_CASE("stored classifier reproduces classifications") {
  test::TempDir dir("svm_rt");
  const Labeled d = clouds(30, 3, 1.2, 14);
  const auto m = svm_train(d.x, d.y, kernel(KernelKind::poly));
  save_classifier(dir / "c.json", m);
  const auto back = load_classifier(dir / "c.json");
  const Matrix probe = test::random_matrix(200, 2, 15) * 3.0;
  CHECK(classify(back, probe) == classify(m, probe));
  for (Eigen::Index i = 0; i < 10; ++i) {
    CHECK(back.decision_values(probe.row(i).transpose()) == m.decision_values(probe.row(i).transpose()));
  }
  test::write_text(dir / "bad.json", R"({"format": "something-else", "version": 1})");
  CHECK_THROWS_AS(load_classifier(dir / "bad.json"), FormatError);
}

}
