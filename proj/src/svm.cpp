#include "luq/svm.hpp"

#include "luq/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

namespace luq {
namespace {

constexpr double kTau = 1e-12;

struct BinarySolution {
  Vector alpha;
  double rho = 0.0;
  long iterations = 0;
  bool converged = true;
};

// Dual C-SVC: min 0.5 a'Qa - e'a, 0 <= a <= C, y'a = 0, Q_ij = y_i y_j K_ij.
BinarySolution solve_binary(const Matrix& kernel, const std::vector<signed char>& y, double C, double eps,
                            long max_iterations) {
  const auto n = static_cast<Eigen::Index>(y.size());
  BinarySolution sol;
  sol.alpha = Vector::Zero(n);
  Vector& alpha = sol.alpha;
  Vector grad = Vector::Constant(n, -1.0);

  auto is_upper = [&](Eigen::Index t) { return alpha(t) >= C; };
  auto is_lower = [&](Eigen::Index t) { return alpha(t) <= 0.0; };

  long it = 0;
  for (;; ++it) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    Eigen::Index i = -1, j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      const double v = -y[static_cast<std::size_t>(t)] * grad(t);
      const bool pos = y[static_cast<std::size_t>(t)] > 0;
      const bool in_up = pos ? !is_upper(t) : !is_lower(t);
      const bool in_low = pos ? !is_lower(t) : !is_upper(t);
      if (in_up && v >= gmax) {
        gmax = v;
        i = t;
      }
      if (in_low && v <= gmin) {
        gmin = v;
        j = t;
      }
    }
    if (i < 0 || j < 0 || gmax - gmin < eps) break;
    if (it >= max_iterations) {
      sol.converged = false;
      break;
    }

    const double yi = y[static_cast<std::size_t>(i)];
    const double yj = y[static_cast<std::size_t>(j)];
    const double kii = kernel(i, i);
    const double kjj = kernel(j, j);
    const double kij = kernel(i, j);
    const double qij = yi * yj * kij;
    const double old_ai = alpha(i);
    const double old_aj = alpha(j);
    double ai = old_ai;
    double aj = old_aj;

    if (yi != yj) {
      double quad = kii + kjj + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > C) {
          ai = C;
          aj = C - diff;
        }
      } else if (aj > C) {
        aj = C;
        ai = C + diff;
      }
    } else {
      double quad = kii + kjj - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > C) {
        if (ai > C) {
          ai = C;
          aj = sum - C;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > C) {
        if (aj > C) {
          aj = C;
          ai = sum - C;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }
    alpha(i) = ai;
    alpha(j) = aj;

    const double dai = ai - old_ai;
    const double daj = aj - old_aj;
    const double* ki = kernel.col(i).data();
    const double* kj = kernel.col(j).data();
    for (Eigen::Index t = 0; t < n; ++t) {
      const double yt = y[static_cast<std::size_t>(t)];
      grad(t) += yt * (yi * ki[t] * dai + yj * kj[t] * daj);
    }
  }
  sol.iterations = it;

  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  long n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y[static_cast<std::size_t>(t)] * grad(t);
    const bool pos = y[static_cast<std::size_t>(t)] > 0;
    if (is_upper(t)) {
      if (!pos) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (is_lower(t)) {
      if (pos) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  sol.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  return sol;
}

std::vector<int> present_classes(const Labels& labels) {
  std::set<int> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

}  // namespace

bool ClassifierModel::converged() const {
  return std::all_of(machines.begin(), machines.end(), [](const BinaryMachine& m) { return m.converged; });
}

std::vector<double> ClassifierModel::decision_values(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != support_vectors.cols()) throw ValidationError("classifier input has the wrong dimension");
  const Matrix row = x.transpose();
  const Matrix k = gram_matrix(kernel, support_vectors, row);
  std::vector<double> out;
  out.reserve(machines.size());
  for (const auto& m : machines) {
    double f = -m.rho;
    for (std::size_t s = 0; s < m.support.size(); ++s) f += m.coef[s] * k(m.support[s], 0);
    out.push_back(f);
  }
  return out;
}

ClassifierModel svm_train(const Matrix& features, const Labels& labels, const KernelSpec& kernel,
                          const SvmOptions& options) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ValidationError("svm_train: feature and label counts differ");
  }
  if (!(options.C > 0.0)) throw ValidationError("svm_train: C must be positive");
  kernel.validate();
  const std::vector<int> classes = present_classes(labels);
  if (classes.size() < 2) throw ValidationError("svm_train needs at least two classes");
  if (classes.front() < 0) throw ValidationError("svm_train: labels must be non-negative");

  ClassifierModel model;
  model.kernel = resolve_scale_gamma(kernel, features);
  model.num_classes = classes.back() + 1;
  model.C = options.C;

  std::map<int, std::vector<Eigen::Index>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<Eigen::Index>(i));

  std::map<Eigen::Index, int> sv_slot;
  std::vector<Eigen::Index> sv_rows;
  for (std::size_t a = 0; a < classes.size(); ++a) {
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      const auto& pa = members[classes[a]];
      const auto& pb = members[classes[b]];
      std::vector<Eigen::Index> rows(pa);
      rows.insert(rows.end(), pb.begin(), pb.end());
      std::vector<signed char> y(rows.size());
      for (std::size_t t = 0; t < rows.size(); ++t) y[t] = t < pa.size() ? 1 : -1;

      Matrix sub(static_cast<Eigen::Index>(rows.size()), features.cols());
      for (std::size_t t = 0; t < rows.size(); ++t) sub.row(static_cast<Eigen::Index>(t)) = features.row(rows[t]);
      const Matrix k = gram_matrix(model.kernel, sub, sub);
      const BinarySolution sol = solve_binary(k, y, options.C, options.tol, options.max_iterations);

      BinaryMachine m;
      m.positive_class = classes[a];
      m.negative_class = classes[b];
      m.rho = sol.rho;
      m.iterations = sol.iterations;
      m.converged = sol.converged;
      for (std::size_t t = 0; t < rows.size(); ++t) {
        const double alpha = sol.alpha(static_cast<Eigen::Index>(t));
        if (alpha <= 0.0) continue;
        auto [it, inserted] = sv_slot.try_emplace(rows[t], static_cast<int>(sv_rows.size()));
        if (inserted) sv_rows.push_back(rows[t]);
        m.support.push_back(it->second);
        m.coef.push_back(alpha * y[t]);
      }
      if (!m.converged) {
        warn("SMO hit the iteration cap for classes " + std::to_string(m.positive_class) + "/" +
             std::to_string(m.negative_class) + " with kernel " + model.kernel.describe());
      }
      model.machines.push_back(std::move(m));
    }
  }
  model.support_vectors.resize(static_cast<Eigen::Index>(sv_rows.size()), features.cols());
  for (std::size_t s = 0; s < sv_rows.size(); ++s) model.support_vectors.row(static_cast<Eigen::Index>(s)) = features.row(sv_rows[s]);
  return model;
}

Labels classify(const ClassifierModel& model, const Matrix& features) {
  if (features.cols() != model.support_vectors.cols()) {
    throw ValidationError("classify: expected " + std::to_string(model.support_vectors.cols()) + " features, got " +
                          std::to_string(features.cols()));
  }
  const Matrix k = gram_matrix(model.kernel, model.support_vectors, features);
  Labels out(static_cast<std::size_t>(features.rows()));
  std::vector<int> votes(static_cast<std::size_t>(model.num_classes));
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& m : model.machines) {
      double f = -m.rho;
      for (std::size_t s = 0; s < m.support.size(); ++s) f += m.coef[s] * k(m.support[s], r);
      ++votes[static_cast<std::size_t>(f > 0.0 ? m.positive_class : m.negative_class)];
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

std::vector<int> kfold_assignment(std::size_t n, int k_folds, std::uint64_t seed) {
  if (k_folds < 2) throw ValidationError("k-fold cross-validation needs k >= 2");
  if (n < static_cast<std::size_t>(k_folds)) throw ValidationError("k-fold cross-validation needs N >= k");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed, 0x6b666f6c64ull);
  shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold(n);
  const std::size_t k = static_cast<std::size_t>(k_folds);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    for (std::size_t s = 0; s < size; ++s) fold[order[pos++]] = static_cast<int>(f);
  }
  return fold;
}

ClassifierSelection select_classifier(const Matrix& features, const Labels& labels,
                                      const std::vector<KernelSpec>& proposals, int k_folds, std::uint64_t seed,
                                      const SvmOptions& options) {
  if (proposals.empty()) throw ValidationError("select_classifier needs at least one proposal");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ValidationError("select_classifier: feature and label counts differ");
  }
  const std::vector<int> fold = kfold_assignment(labels.size(), k_folds, seed);

  struct Job {
    std::size_t proposal;
    int fold;
    double error = 0.0;
    bool skipped = false;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    for (int f = 0; f < k_folds; ++f) jobs.push_back({p, f});
  }
  parallel_for(jobs.size(), [&](std::size_t jx) {
    Job& job = jobs[jx];
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      (fold[i] == job.fold ? test : train).push_back(static_cast<Eigen::Index>(i));
    }
    Labels train_labels;
    Matrix train_x(static_cast<Eigen::Index>(train.size()), features.cols());
    for (std::size_t t = 0; t < train.size(); ++t) {
      train_x.row(static_cast<Eigen::Index>(t)) = features.row(train[t]);
      train_labels.push_back(labels[static_cast<std::size_t>(train[t])]);
    }
    if (present_classes(train_labels).size() < 2) {
      job.skipped = true;
      return;
    }
    Matrix test_x(static_cast<Eigen::Index>(test.size()), features.cols());
    for (std::size_t t = 0; t < test.size(); ++t) test_x.row(static_cast<Eigen::Index>(t)) = features.row(test[t]);
    const ClassifierModel m = svm_train(train_x, train_labels, proposals[job.proposal], options);
    const Labels predicted = classify(m, test_x);
    std::size_t wrong = 0;
    for (std::size_t t = 0; t < test.size(); ++t) {
      if (predicted[t] != labels[static_cast<std::size_t>(test[t])]) ++wrong;
    }
    job.error = static_cast<double>(wrong) / static_cast<double>(test.size());
  });

  ClassifierSelection out;
  out.cv_rates.assign(proposals.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    double sum = 0.0;
    bool skipped = false;
    for (const auto& job : jobs) {
      if (job.proposal != p) continue;
      skipped = skipped || job.skipped;
      sum += job.error;
    }
    if (skipped) {
      warn("proposal " + proposals[p].describe() + " skipped: a training fold holds a single class");
      continue;
    }
    out.cv_rates[p] = sum / static_cast<double>(k_folds);
  }
  std::size_t best = proposals.size();
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    if (std::isnan(out.cv_rates[p])) continue;
    if (best == proposals.size() || out.cv_rates[p] < out.cv_rates[best]) best = p;
  }
  if (best == proposals.size()) throw NumericalError("no classifier proposal could be cross-validated");
  out.selected = best;
  out.model = svm_train(features, labels, proposals[best], options);
  out.model.cv_misclassification = out.cv_rates[best];
  return out;
}

nlohmann::json classifier_to_json(const ClassifierModel& model) {
  nlohmann::json j;
  j["format"] = "luq-classifier";
  j["version"] = 1;
  j["kernel"] = model.kernel;
  j["num_classes"] = model.num_classes;
  j["C"] = model.C;
  j["cv_misclassification"] = model.cv_misclassification;
  auto svs = nlohmann::json::array();
  for (Eigen::Index r = 0; r < model.support_vectors.rows(); ++r) {
    std::vector<double> row(model.support_vectors.row(r).begin(), model.support_vectors.row(r).end());
    svs.push_back(row);
  }
  j["support_vectors"] = std::move(svs);
  auto machines = nlohmann::json::array();
  for (const auto& m : model.machines) {
    machines.push_back({{"positive_class", m.positive_class},
                        {"negative_class", m.negative_class},
                        {"support", m.support},
                        {"coef", m.coef},
                        {"rho", m.rho},
                        {"iterations", m.iterations},
                        {"converged", m.converged}});
  }
  j["machines"] = std::move(machines);
  return j;
}

ClassifierModel classifier_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "luq-classifier") throw FormatError("not a classifier document");
  if (j.value("version", 0) != 1) throw FormatError("unsupported classifier version");
  ClassifierModel model;
  model.kernel = j.at("kernel").get<KernelSpec>();
  model.num_classes = j.at("num_classes").get<int>();
  model.C = j.at("C").get<double>();
  model.cv_misclassification = j.at("cv_misclassification").get<double>();
  const auto& svs = j.at("support_vectors");
  const auto d = svs.empty() ? 0 : static_cast<Eigen::Index>(svs.front().size());
  model.support_vectors.resize(static_cast<Eigen::Index>(svs.size()), d);
  for (std::size_t r = 0; r < svs.size(); ++r) {
    const auto row = svs[r].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != d) throw FormatError("ragged support vector matrix");
    for (Eigen::Index c = 0; c < d; ++c) model.support_vectors(static_cast<Eigen::Index>(r), c) = row[static_cast<std::size_t>(c)];
  }
  for (const auto& mj : j.at("machines")) {
    BinaryMachine m;
    m.positive_class = mj.at("positive_class").get<int>();
    m.negative_class = mj.at("negative_class").get<int>();
    m.support = mj.at("support").get<std::vector<int>>();
    m.coef = mj.at("coef").get<std::vector<double>>();
    m.rho = mj.at("rho").get<double>();
    m.iterations = mj.value("iterations", 0L);
    m.converged = mj.value("converged", true);
    model.machines.push_back(std::move(m));
  }
  return model;
}

void save_classifier(const std::filesystem::path& path, const ClassifierModel& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << classifier_to_json(model).dump(1) << '\n';
}

ClassifierModel load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return classifier_from_json(j);
}

}  // namespace luq
