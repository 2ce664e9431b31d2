#pragma once

#include "luq/common.hpp"
#include "luq/kernels.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace luq {

struct SvmOptions {
  double C = 1.0;
  double tol = 1e-3;
  long max_iterations = 1'000'000;
};

/// One binary machine of the one-vs-one ensemble. Positive decision values
/// vote for `positive_class`.
struct BinaryMachine {
  int positive_class = 0;
  int negative_class = 1;
  std::vector<int> support;   ///< rows of ClassifierModel::support_vectors
  std::vector<double> coef;   ///< alpha_i * y_i
  double rho = 0.0;
  long iterations = 0;
  bool converged = true;
};

struct ClassifierModel {
  KernelSpec kernel;  ///< gamma resolved
  int num_classes = 0;
  double C = 1.0;
  Matrix support_vectors;
  std::vector<BinaryMachine> machines;
  double cv_misclassification = 0.0;

  bool converged() const;
  /// Decision value of each machine for one sample.
  std::vector<double> decision_values(const Eigen::Ref<const Vector>& x) const;
};

/// Trains one-vs-one C-SVC machines by SMO (maximal violating pair) on
/// rows of `features`. Labels are 0-based class indices; at least two
/// distinct classes must be present.
ClassifierModel svm_train(const Matrix& features, const Labels& labels, const KernelSpec& kernel,
                          const SvmOptions& options = {});

/// Pairwise vote; ties go to the lowest class index.
Labels classify(const ClassifierModel& model, const Matrix& features);

struct ClassifierSelection {
  ClassifierModel model;          ///< winner retrained on all rows
  std::size_t selected = 0;       ///< index into the proposal list
  std::vector<double> cv_rates;   ///< NaN for skipped proposals
};

/// Shuffled (unstratified) k-fold cross-validation of each proposal; the
/// proposal with the lowest mean fold misclassification wins, ties going to
/// the earlier proposal.
ClassifierSelection select_classifier(const Matrix& features, const Labels& labels,
                                      const std::vector<KernelSpec>& proposals, int k_folds, std::uint64_t seed,
                                      const SvmOptions& options = {});

/// Fold assignment used by select_classifier: fold sizes differ by at most one.
std::vector<int> kfold_assignment(std::size_t n, int k_folds, std::uint64_t seed);

void save_classifier(const std::filesystem::path& path, const ClassifierModel& model);
ClassifierModel load_classifier(const std::filesystem::path& path);
nlohmann::json classifier_to_json(const ClassifierModel& model);
ClassifierModel classifier_from_json(const nlohmann::json& j);

}  // namespace luq
