#include "luq/kernels.hpp"

#include "luq/csv.hpp"

#include <cmath>

namespace luq {

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::linear: return "linear";
    case KernelKind::rbf: return "rbf";
    case KernelKind::poly: return "poly";
    case KernelKind::sigmoid: return "sigmoid";
    case KernelKind::cosine: return "cosine";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "linear") return KernelKind::linear;
  if (name == "rbf") return KernelKind::rbf;
  if (name == "poly") return KernelKind::poly;
  if (name == "sigmoid") return KernelKind::sigmoid;
  if (name == "cosine") return KernelKind::cosine;
  throw ConfigError("unknown kernel '" + name + "'");
}

void KernelSpec::validate() const {
  if (gamma && !(*gamma > 0.0)) throw ValidationError("kernel gamma must be positive");
  if (kind == KernelKind::poly && degree < 1) throw ValidationError("polynomial degree must be >= 1");
}

std::string KernelSpec::describe() const {
  std::string out = "{'kernel': '" + to_string(kind) + "'";
  if (gamma && kind != KernelKind::linear && kind != KernelKind::cosine) {
    out += ", 'gamma': " + csv::format_double(*gamma);
  }
  return out + "}";
}

namespace {

double require_gamma(const KernelSpec& spec) {
  if (!spec.gamma) throw ValidationError("kernel gamma has not been resolved");
  return *spec.gamma;
}

}  // namespace

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
  if (x.size() != y.size()) throw ValidationError("kernel arguments differ in dimension");
  switch (spec.kind) {
    case KernelKind::linear: return x.dot(y);
    case KernelKind::rbf: return std::exp(-require_gamma(spec) * (x - y).squaredNorm());
    case KernelKind::poly: return std::pow(require_gamma(spec) * x.dot(y) + spec.coef0, spec.degree);
    case KernelKind::sigmoid: return std::tanh(require_gamma(spec) * x.dot(y) + spec.coef0);
    case KernelKind::cosine: {
      const double nx = x.norm();
      const double ny = y.norm();
      if (nx == 0.0 || ny == 0.0) throw ValidationError("cosine kernel is undefined for a zero vector");
      return x.dot(y) / (nx * ny);
    }
  }
  return 0.0;
}

Matrix gram_matrix(const KernelSpec& spec, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ValidationError("kernel arguments differ in dimension");
  Matrix k = a * b.transpose();
  switch (spec.kind) {
    case KernelKind::linear: break;
    case KernelKind::rbf: {
      const double g = require_gamma(spec);
      const Vector na = a.rowwise().squaredNorm();
      const Vector nb = b.rowwise().squaredNorm();
      for (Eigen::Index j = 0; j < k.cols(); ++j) {
        for (Eigen::Index i = 0; i < k.rows(); ++i) {
          k(i, j) = std::exp(-g * std::max(0.0, na(i) + nb(j) - 2.0 * k(i, j)));
        }
      }
      break;
    }
    case KernelKind::poly: {
      const double g = require_gamma(spec);
      k = (g * k.array() + spec.coef0).pow(spec.degree).matrix();
      break;
    }
    case KernelKind::sigmoid: {
      const double g = require_gamma(spec);
      k = (g * k.array() + spec.coef0).tanh().matrix();
      break;
    }
    case KernelKind::cosine: {
      const Vector na = a.rowwise().norm();
      const Vector nb = b.rowwise().norm();
      if ((na.array() == 0.0).any() || (nb.array() == 0.0).any()) {
        throw ValidationError("cosine kernel is undefined for a zero vector");
      }
      k = k.array().colwise() / na.array();
      k = k.array().rowwise() / nb.transpose().array();
      break;
    }
  }
  return k;
}

KernelSpec resolve_scale_gamma(KernelSpec spec, const Matrix& data) {
  if (spec.gamma) return spec;
  const double mean = data.mean();
  const double var = (data.array() - mean).square().mean();
  spec.gamma = var > 0.0 ? 1.0 / (static_cast<double>(data.cols()) * var) : 1.0;
  return spec;
}

KernelSpec resolve_feature_gamma(KernelSpec spec, Eigen::Index n_features) {
  if (spec.gamma) return spec;
  spec.gamma = 1.0 / static_cast<double>(std::max<Eigen::Index>(1, n_features));
  return spec;
}

void to_json(nlohmann::json& j, const KernelSpec& spec) {
  j = nlohmann::json{{"kernel", to_string(spec.kind)}, {"degree", spec.degree}, {"coef0", spec.coef0}};
  if (spec.gamma) j["gamma"] = *spec.gamma;
}

void from_json(const nlohmann::json& j, KernelSpec& spec) {
  spec.kind = kernel_kind_from_string(j.at("kernel").get<std::string>());
  spec.degree = j.value("degree", 3);
  spec.coef0 = j.value("coef0", 0.0);
  if (j.contains("gamma") && !j.at("gamma").is_null() && !j.at("gamma").is_string()) {
    spec.gamma = j.at("gamma").get<double>();
  } else {
    spec.gamma.reset();
  }
}

KernelSpec kernel_from_proposal(const nlohmann::json& j, double default_coef0) {
  if (!j.is_object() || !j.contains("kernel")) throw ConfigError("kernel proposal needs a 'kernel' field");
  KernelSpec spec;
  from_json(j, spec);
  if (!j.contains("coef0")) spec.coef0 = default_coef0;
  spec.validate();
  return spec;
}

}  // namespace luq
