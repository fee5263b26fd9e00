#pragma once

// L2-regularized logistic regression on z-scored features.
//
// Objective over standardized inputs z_i and labels y_i in {0, 1}:
//   f(w, b) = (1/n) sum_i [softplus(w.z_i + b) - y_i (w.z_i + b)] + (lambda/2) |w|^2
// The bias is not penalized. Training starts from zero and takes damped
// Newton steps (Armijo backtracking), so it is deterministic and the
// objective never increases between iterations.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnspec/error.hpp"
#include "attnspec/features.hpp"
#include "attnspec/metrics.hpp"

namespace attnspec {

struct LinearModel {
  FeatureLayout layout;
  SpectralConfig config;
  int window = 1;

  std::vector<double> weights;  // standardized space
  double bias = 0.0;
  std::vector<double> feature_means;
  std::vector<double> feature_stds;  // > 0; constant columns get 1
  double threshold = 0.5;

  double l2_lambda = 0.0;
  int max_iter = 1000;
  double tol = 1e-6;
  bool converged = false;
  int iterations_used = 0;
  std::size_t n_train = 0;

  std::size_t num_features() const { return weights.size(); }

  /// Coefficients on the raw (unstandardized) features: w_j / s_j.
  std::vector<double> raw_weights() const {
    std::vector<double> out(weights.size());
    for (std::size_t j = 0; j < weights.size(); ++j) out[j] = weights[j] / feature_stds[j];
    return out;
  }
};

struct TrainOptions {
  std::optional<double> l2_lambda;  // default 1 / n_samples
  int max_iter = 1000;
  double tol = 1e-6;
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Regularized mean negative log-likelihood over a fixed standardized design.
/// Parameters are packed as [w_0 .. w_{d-1}, b].
class LogisticObjective {
 public:
  LogisticObjective(Eigen::MatrixXd z, Eigen::VectorXd y, double l2_lambda)
      : z_(std::move(z)), y_(std::move(y)), lambda_(l2_lambda) {}

  Eigen::Index dim() const { return z_.cols() + 1; }
  Eigen::Index samples() const { return z_.rows(); }

  double value(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd logits = margins(theta);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) loss += softplus(logits[i]) - y_[i] * logits[i];
    const auto w = theta.head(z_.cols());
    return loss / static_cast<double>(samples()) + 0.5 * lambda_ * w.squaredNorm();
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd residual = probabilities(theta) - y_;
    const double n = static_cast<double>(samples());
    Eigen::VectorXd g(dim());
    g.head(z_.cols()) = z_.transpose() * residual / n + lambda_ * theta.head(z_.cols());
    g[z_.cols()] = residual.sum() / n;
    return g;
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd p = probabilities(theta);
    const Eigen::VectorXd s = (p.array() * (1.0 - p.array())).matrix();
    const double n = static_cast<double>(samples());
    const Eigen::Index d = z_.cols();
    Eigen::MatrixXd h(dim(), dim());
    const Eigen::MatrixXd sz = s.asDiagonal() * z_;
    h.topLeftCorner(d, d) = z_.transpose() * sz / n;
    h.topLeftCorner(d, d).diagonal().array() += lambda_;
    const Eigen::VectorXd cross = sz.colwise().sum().transpose() / n;
    h.topRightCorner(d, 1) = cross;
    h.bottomLeftCorner(1, d) = cross.transpose();
    h(d, d) = s.sum() / n;
    return h;
  }

 private:
  Eigen::VectorXd margins(const Eigen::VectorXd& theta) const {
    return (z_ * theta.head(z_.cols())).array() + theta[z_.cols()];
  }

  Eigen::VectorXd probabilities(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd p = margins(theta);
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = sigmoid(p[i]);
    return p;
  }

  Eigen::MatrixXd z_;
  Eigen::VectorXd y_;
  double lambda_;
};

struct Standardization {
  std::vector<double> means;
  std::vector<double> stds;
};

/// Column means and population standard deviations; zero-variance columns
/// get std 1.
inline Standardization fit_standardization(const FeatureMatrix& features) {
  const std::size_t d = features.width();
  const double n = static_cast<double>(features.size());
  Standardization s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (const auto& r : features.rows)
    for (std::size_t j = 0; j < d; ++j) s.means[j] += r.values[j];
  for (double& m : s.means) m /= n;
  for (const auto& r : features.rows)
    for (std::size_t j = 0; j < d; ++j) s.stds[j] += (r.values[j] - s.means[j]) * (r.values[j] - s.means[j]);
  for (double& v : s.stds) {
    v = std::sqrt(v / n);
    if (!(v > 0.0)) v = 1.0;
  }
  return s;
}

inline Eigen::MatrixXd standardized_design(const FeatureMatrix& features, const Standardization& s) {
  const std::size_t d = features.width();
  Eigen::MatrixXd z(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (features.rows[i].values[j] - s.means[j]) / s.stds[j];
  return z;
}

/// Called once per accepted iterate with (iteration, objective, max |gradient|).
using TrainObserver = std::function<void(int, double, double)>;

inline LinearModel train(const FeatureMatrix& features, const TrainOptions& options = {},
                         const TrainObserver& observer = nullptr) {
  features.validate();
  if (options.max_iter < 0) throw ConfigError("max_iter must be >= 0");
  if (!(options.tol > 0.0)) throw ConfigError("tol must be positive");
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& r = features.rows[i];
    for (double v : r.values) {
      if (!std::isfinite(v)) {
        throw DataError("non-finite feature in row " + std::to_string(i) + " (example '" + r.example_id + "', step " +
                        std::to_string(r.step_index) + ")");
      }
    }
    n_pos += r.label != 0 ? 1 : 0;
  }
  if (n_pos == 0 || n_pos == features.size()) {
    throw DataError("training needs both classes; got " + std::to_string(n_pos) + " positives out of " +
                    std::to_string(features.size()) + " rows");
  }

  const double lambda = options.l2_lambda.value_or(1.0 / static_cast<double>(features.size()));
  if (!(lambda >= 0.0)) throw ConfigError("l2 lambda must be >= 0");

  LinearModel model;
  model.layout = features.layout;
  model.config = features.config;
  model.window = features.window;
  model.l2_lambda = lambda;
  model.max_iter = options.max_iter;
  model.tol = options.tol;
  model.n_train = features.size();

  const Standardization stats = fit_standardization(features);
  model.feature_means = stats.means;
  model.feature_stds = stats.stds;

  Eigen::VectorXd y(static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) y[static_cast<Eigen::Index>(i)] = features.rows[i].label != 0 ? 1.0 : 0.0;
  const LogisticObjective objective(standardized_design(features, stats), std::move(y), lambda);

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(objective.dim());
  double f = objective.value(theta);
  Eigen::VectorXd g = objective.gradient(theta);
  int iter = 0;
  if (observer) observer(iter, f, g.cwiseAbs().maxCoeff());

  while (g.cwiseAbs().maxCoeff() >= options.tol && iter < options.max_iter) {
    Eigen::VectorXd step;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(objective.hessian(theta));
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) step = -ldlt.solve(g);
    if (step.size() == 0 || !step.allFinite() || step.dot(g) >= 0.0) step = -g;

    // Armijo backtracking; accept only non-increasing objective values.
    const double slope = step.dot(g);
    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd candidate;
    double f_candidate = f;
    for (int k = 0; k < 60; ++k) {
      candidate = theta + t * step;
      f_candidate = objective.value(candidate);
      if (std::isfinite(f_candidate) && f_candidate <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    ++iter;
    if (!accepted) break;  // no representable decrease left
    theta = std::move(candidate);
    f = f_candidate;
    g = objective.gradient(theta);
    if (observer) observer(iter, f, g.cwiseAbs().maxCoeff());
  }

  const auto d = static_cast<Eigen::Index>(features.width());
  model.weights.assign(theta.data(), theta.data() + d);
  model.bias = theta[d];
  model.converged = g.cwiseAbs().maxCoeff() < options.tol;
  model.iterations_used = iter;
  return model;
}

inline double predict_one(const LinearModel& model, std::span<const double> x) {
  double margin = model.bias;
  for (std::size_t j = 0; j < x.size(); ++j)
    margin += model.weights[j] * ((x[j] - model.feature_means[j]) / model.feature_stds[j]);
  return sigmoid(margin);
}

inline void check_compatible(const LinearModel& model, const FeatureMatrix& features) {
  if (features.width() != model.num_features() || !(features.layout == model.layout)) {
    throw StructuralError("model layout [" + model.layout.describe() + ", " + std::to_string(model.num_features()) +
                          " columns] does not match features [" + features.layout.describe() + ", " +
                          std::to_string(features.width()) + " columns]");
  }
}

/// sigmoid(w . z + b) for every row, z being the row standardized with the
/// training statistics.
inline std::vector<double> predict_proba(const LinearModel& model, const FeatureMatrix& features) {
  check_compatible(model, features);
  features.validate();
  std::vector<double> out;
  out.reserve(features.size());
  for (const auto& r : features.rows) out.push_back(predict_one(model, r.values));
  return out;
}

inline ThresholdSelection select_threshold(const LinearModel& model, const FeatureMatrix& validation) {
  const std::vector<double> scores = predict_proba(model, validation);
  const std::vector<int> labels = validation.labels();
  return select_threshold(scores, labels);
}

}  // namespace attnspec
