#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coughtb/errors.hpp"

namespace coughtb {

// Numerically stable softmax of one logit vector.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = z.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (z.array() - peak).exp().matrix();
  return e / e.sum();
}

// Row-wise softmax of an N x C logit matrix.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> softmax_rows(
    const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> p =
      (z.colwise() - z.rowwise().maxCoeff()).array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

// Per-dimension mean and population standard deviation; near-constant
// dimensions get scale 1 so they pass through centred.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& rows);
  Eigen::Index dim() const { return mean.size(); }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

struct OptimizerSettings {
  double tol = 1e-6;      // stop when the gradient infinity-norm falls below this
  int max_iters = 10000;
};

struct SoftmaxModel {
  Eigen::MatrixXd weights;  // C x D, acting on standardised features
  Eigen::VectorXd bias;     // C
  std::vector<std::string> classes;
  double l2_strength = 0.0;
  Standardizer standardizer;
  int iterations = 0;
  bool converged = false;
  double final_loss = 0.0;

  Eigen::Index num_classes() const { return weights.rows(); }
  Eigen::Index dim() const { return weights.cols(); }
};

struct SegmentScores {
  std::string segment_id;
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;
};

// Mean cross-entropy plus (l2/2)||W||^2 over already standardised rows. The
// bias is not penalised.
class SoftmaxObjective {
 public:
  SoftmaxObjective(const Eigen::MatrixXd& x, std::span<const int> labels, int num_classes, double l2);

  double value(const Eigen::MatrixXd& w, const Eigen::VectorXd& b) const;
  double value_and_gradient(const Eigen::MatrixXd& w, const Eigen::VectorXd& b, Eigen::MatrixXd& grad_w,
                            Eigen::VectorXd& grad_b) const;

 private:
  const Eigen::MatrixXd& x_;
  Eigen::MatrixXd onehot_;  // N x C
  double l2_;
};

inline const std::vector<std::string> kGroupClasses = {"TB+", "OR", "HC"};

// Full-batch gradient descent with Armijo backtracking, starting from W = 0,
// b = 0. Labels are class indices into `classes`.
SoftmaxModel train(const Eigen::MatrixXd& features, std::span<const int> labels, double l2,
                   const OptimizerSettings& opt = {},
                   const std::vector<std::string>& classes = kGroupClasses);

SegmentScores predict(const SoftmaxModel& model, const Eigen::VectorXd& feature, std::string segment_id = {});

// N x C logits for raw (unstandardised) rows.
Eigen::MatrixXd predict_logits(const SoftmaxModel& model, const Eigen::MatrixXd& features);

nlohmann::json to_json(const SoftmaxModel& model);
SoftmaxModel softmax_model_from_json(const nlohmann::json& j);

struct GridPoint {
  double l2 = 0.0;
  double tol = 1e-6;
  int max_iters = 10000;
};

// lambda = 1/C for C log-spaced over [1e-6, 100] (10 values), crossed with
// three tolerances and three iteration caps.
std::vector<GridPoint> default_grid();

// Rows of one fold. `participants` groups rows for soft voting.
struct LabelledRows {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  std::vector<std::string> participants;
};

struct GridResult {
  GridPoint point;
  std::optional<double> valid_auroc;
  int iterations = 0;
  bool converged = false;
};

struct GridSearchOutcome {
  SoftmaxModel best;
  std::size_t best_index = 0;
  std::vector<GridResult> report;
};

// Picks the point with the highest participant-level TB+/Rest validation AUROC
// (class 0 vs the rest); ties go to the larger lambda.
GridSearchOutcome grid_search(const LabelledRows& train_rows, const LabelledRows& valid_rows,
                              std::span<const GridPoint> grid, int jobs = 1);

}  // namespace coughtb
