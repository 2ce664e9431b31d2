#pragma once

#include "luq/common.hpp"

#include "json.hpp"

#include <optional>
#include <string>

namespace luq {

enum class KernelKind { linear, rbf, poly, sigmoid, cosine };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

/// Kernel family plus coefficients. An unset gamma is resolved from the data
/// by the consumer (SVM: "scale" rule, kPCA: 1 / n_features).
struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  std::optional<double> gamma;
  int degree = 3;
  double coef0 = 0.0;

  void validate() const;
  /// Display form, e.g. {'kernel': 'rbf'} or {'kernel': 'poly', 'degree': 2}.
  std::string describe() const;

  bool operator==(const KernelSpec&) const = default;
};

/// Kernel value for equal-length vectors. `gamma` must be resolved.
double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y);

/// Dense Gram block K(a_i, b_j); rows of `a` and `b` are samples.
Matrix gram_matrix(const KernelSpec& spec, const Matrix& a, const Matrix& b);

/// Copy of `spec` with gamma filled in: 1 / (n_features * var(all entries)).
KernelSpec resolve_scale_gamma(KernelSpec spec, const Matrix& data);
/// Copy of `spec` with gamma filled in: 1 / n_features.
KernelSpec resolve_feature_gamma(KernelSpec spec, Eigen::Index n_features);

void to_json(nlohmann::json& j, const KernelSpec& spec);
void from_json(const nlohmann::json& j, KernelSpec& spec);

/// Parses proposal objects such as {"kernel": "rbf", "gamma": 0.5}. Missing
/// coef0 falls back to `default_coef0`.
KernelSpec kernel_from_proposal(const nlohmann::json& j, double default_coef0);

}  // namespace luq
