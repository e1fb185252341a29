#include "coughtb/classifier.hpp"

#include <algorithm>
#include <map>

#include "coughtb/metrics.hpp"
#include "coughtb/util.hpp"

namespace coughtb {
namespace {

constexpr double kMinScale = 1e-12;
constexpr double kArmijo = 1e-4;
constexpr double kMaxStep = 64.0;
constexpr double kMinStep = 1e-14;

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw InvalidArgument(std::string(what) + " contain non-finite values");
}

}  // namespace

Standardizer Standardizer::fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) throw EmptyInputError("cannot fit a standardizer on zero rows");
  Standardizer s;
  s.mean = rows.colwise().mean().transpose();
  s.scale = ((rows.rowwise() - s.mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (s.scale[j] < kMinScale) s.scale[j] = 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != dim()) throw DimensionMismatch("standardizer dimension does not match features");
  return (rows.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  if (x.size() != dim()) throw DimensionMismatch("standardizer dimension does not match feature");
  return (x - mean).cwiseQuotient(scale);
}

SoftmaxObjective::SoftmaxObjective(const Eigen::MatrixXd& x, std::span<const int> labels, int num_classes,
                                   double l2)
    : x_(x), onehot_(Eigen::MatrixXd::Zero(x.rows(), num_classes)), l2_(l2) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
    throw DimensionMismatch("label count does not match feature rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw InvalidArgument("label out of range");
    onehot_(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
}

double SoftmaxObjective::value(const Eigen::MatrixXd& w, const Eigen::VectorXd& b) const {
  const Eigen::MatrixXd z = (x_ * w.transpose()).rowwise() + b.transpose();
  const Eigen::VectorXd peak = z.rowwise().maxCoeff();
  const Eigen::VectorXd lse =
      peak.array() + (z.colwise() - peak).array().exp().rowwise().sum().log();
  const double ce = (lse - z.cwiseProduct(onehot_).rowwise().sum()).mean();
  return ce + 0.5 * l2_ * w.squaredNorm();
}

double SoftmaxObjective::value_and_gradient(const Eigen::MatrixXd& w, const Eigen::VectorXd& b,
                                            Eigen::MatrixXd& grad_w, Eigen::VectorXd& grad_b) const {
  const Eigen::MatrixXd z = (x_ * w.transpose()).rowwise() + b.transpose();
  const Eigen::VectorXd peak = z.rowwise().maxCoeff();
  const Eigen::MatrixXd e = (z.colwise() - peak).array().exp().matrix();
  const Eigen::VectorXd sums = e.rowwise().sum();
  const Eigen::VectorXd lse = peak.array() + sums.array().log();
  const double n = static_cast<double>(x_.rows());

  Eigen::MatrixXd residual = e;
  residual.array().colwise() /= sums.array();
  residual -= onehot_;
  residual /= n;
  grad_w = residual.transpose() * x_ + l2_ * w;
  grad_b = residual.colwise().sum().transpose();

  const double ce = (lse - z.cwiseProduct(onehot_).rowwise().sum()).mean();
  return ce + 0.5 * l2_ * w.squaredNorm();
}

SoftmaxModel train(const Eigen::MatrixXd& features, std::span<const int> labels, double l2,
                   const OptimizerSettings& opt, const std::vector<std::string>& classes) {
  const int c = static_cast<int>(classes.size());
  if (c < 2) throw InvalidArgument("softmax regression needs at least two classes");
  if (features.rows() == 0) throw EmptyInputError("no training rows");
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw DimensionMismatch("label count does not match feature rows");
  }
  if (!(l2 >= 0.0) || !std::isfinite(l2)) throw InvalidArgument("L2 strength must be finite and >= 0");
  if (!(opt.tol > 0.0) || opt.max_iters < 0) throw InvalidArgument("invalid optimiser settings");
  check_finite(features, "training features");
  std::vector<int> counts(static_cast<std::size_t>(c), 0);
  for (int y : labels) {
    if (y < 0 || y >= c) throw InvalidArgument("label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int k = 0; k < c; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) {
      throw SingleClassError("class '" + classes[static_cast<std::size_t>(k)] + "' absent from training labels");
    }
  }

  SoftmaxModel model;
  model.classes = classes;
  model.l2_strength = l2;
  model.standardizer = Standardizer::fit(features);
  const Eigen::MatrixXd x = model.standardizer.apply(features);
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const SoftmaxObjective objective(x, labels, c, l2);

  // The logit Hessian diag(p) - pp^T is bounded by I/2, so the quadratic
  // bound 0.5 X~'X~/n + l2 (X~ = [X 1]) is a fixed preconditioner under
  // which a unit step never overshoots by more than the bound allows.
  Eigen::MatrixXd xa(n, d + 1);
  xa << x, Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd bound = 0.5 * (xa.transpose() * xa) / static_cast<double>(n);
  bound.diagonal().head(d).array() += l2;
  bound.diagonal().array() += 1e-10;
  const Eigen::LDLT<Eigen::MatrixXd> precond(bound);

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(c, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(c);
  Eigen::MatrixXd gw;
  Eigen::VectorXd gb;
  double loss = objective.value_and_gradient(w, b, gw, gb);
  double step = 1.0;
  int it = 0;
  bool converged = false;
  Eigen::MatrixXd grad(c, d + 1);
  while (true) {
    if (std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff()) < opt.tol) {
      converged = true;
      break;
    }
    if (it >= opt.max_iters) break;
    grad << gw, gb;
    const Eigen::MatrixXd dir = -precond.solve(grad.transpose()).transpose();
    const double slope = (grad.array() * dir.array()).sum();
    if (!(slope < 0.0)) break;

    bool accepted = false;
    while (step >= kMinStep) {
      const Eigen::MatrixXd w_try = w + step * dir.leftCols(d);
      const Eigen::VectorXd b_try = b + step * dir.col(d);
      const double trial = objective.value(w_try, b_try);
      if (trial <= loss + kArmijo * step * slope) {
        w = w_try;
        b = b_try;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    loss = objective.value_and_gradient(w, b, gw, gb);
    ++it;
    step = std::min(kMaxStep, 2.0 * step);
  }

  model.weights = w;
  model.bias = b;
  model.iterations = it;
  model.converged = converged;
  model.final_loss = loss;
  return model;
}

Eigen::MatrixXd predict_logits(const SoftmaxModel& model, const Eigen::MatrixXd& features) {
  if (features.cols() != model.dim()) {
    throw DimensionMismatch("feature dimension " + std::to_string(features.cols()) + " does not match model " +
                            std::to_string(model.dim()));
  }
  return (model.standardizer.apply(features) * model.weights.transpose()).rowwise() + model.bias.transpose();
}

SegmentScores predict(const SoftmaxModel& model, const Eigen::VectorXd& feature, std::string segment_id) {
  if (feature.size() != model.dim()) {
    throw DimensionMismatch("feature dimension " + std::to_string(feature.size()) + " does not match model " +
                            std::to_string(model.dim()));
  }
  SegmentScores s;
  s.segment_id = std::move(segment_id);
  s.logits = model.weights * model.standardizer.apply(feature) + model.bias;
  s.probs = softmax(s.logits);
  return s;
}

nlohmann::json to_json(const SoftmaxModel& model) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.weights.rows(); ++i) rows.push_back(vector_json(model.weights.row(i)));
  return {{"classes", model.classes},
          {"l2_strength", model.l2_strength},
          {"weights", rows},
          {"bias", vector_json(model.bias)},
          {"standardizer", {{"mean", vector_json(model.standardizer.mean)},
                            {"scale", vector_json(model.standardizer.scale)}}},
          {"iterations", model.iterations},
          {"converged", model.converged},
          {"final_loss", model.final_loss}};
}

SoftmaxModel softmax_model_from_json(const nlohmann::json& j) {
  try {
    SoftmaxModel m;
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.l2_strength = j.at("l2_strength").get<double>();
    m.bias = vector_from_json(j.at("bias"));
    m.standardizer.mean = vector_from_json(j.at("standardizer").at("mean"));
    m.standardizer.scale = vector_from_json(j.at("standardizer").at("scale"));
    const auto& rows = j.at("weights");
    const auto c = static_cast<Eigen::Index>(rows.size());
    m.weights.resize(c, m.standardizer.dim());
    for (Eigen::Index i = 0; i < c; ++i) {
      const Eigen::VectorXd r = vector_from_json(rows.at(static_cast<std::size_t>(i)));
      if (r.size() != m.weights.cols()) throw SchemaError("weights[" + std::to_string(i) + "]", "wrong length");
      m.weights.row(i) = r.transpose();
    }
    if (m.bias.size() != c || static_cast<Eigen::Index>(m.classes.size()) != c ||
        m.standardizer.scale.size() != m.standardizer.dim()) {
      throw SchemaError("model", "inconsistent dimensions");
    }
    m.iterations = j.value("iterations", 0);
    m.converged = j.value("converged", false);
    m.final_loss = j.value("final_loss", 0.0);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("model", e.what());
  }
}

std::vector<GridPoint> default_grid() {
  std::vector<GridPoint> grid;
  for (int i = 0; i < 10; ++i) {
    const double c = std::pow(10.0, -6.0 + 8.0 * i / 9.0);
    for (double tol : {1e-6, 1e-5, 1e-4}) {
      for (int iters : {1000, 5000, 10000}) grid.push_back({1.0 / c, tol, iters});
    }
  }
  return grid;
}

GridSearchOutcome grid_search(const LabelledRows& train_rows, const LabelledRows& valid_rows,
                              std::span<const GridPoint> grid, int jobs) {
  if (grid.empty()) throw InvalidArgument("grid is empty");
  if (valid_rows.features.rows() == 0) throw EmptyInputError("validation fold is empty");
  if (valid_rows.participants.size() != static_cast<std::size_t>(valid_rows.features.rows()) ||
      valid_rows.labels.size() != valid_rows.participants.size()) {
    throw DimensionMismatch("validation rows, labels and participants disagree in length");
  }

  std::vector<SoftmaxModel> models(grid.size());
  std::vector<GridResult> report(grid.size());
  parallel_for(grid.size(), jobs, [&](std::size_t i) {
    models[i] = train(train_rows.features, train_rows.labels, grid[i].l2, {grid[i].tol, grid[i].max_iters});
    const Eigen::MatrixXd probs = softmax_rows(predict_logits(models[i], valid_rows.features));
    std::map<std::string, std::pair<double, int>> votes;
    std::map<std::string, bool> positive;
    for (std::size_t r = 0; r < valid_rows.participants.size(); ++r) {
      auto& [sum, n] = votes[valid_rows.participants[r]];
      sum += probs(static_cast<Eigen::Index>(r), 0);
      ++n;
      positive[valid_rows.participants[r]] = valid_rows.labels[r] == 0;
    }
    std::vector<ScoredLabel> scored;
    scored.reserve(votes.size());
    for (const auto& [id, v] : votes) scored.push_back({v.first / v.second, positive[id]});
    report[i] = {grid[i], auroc_or_null(scored), models[i].iterations, models[i].converged};
  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < report.size(); ++i) {
    const double a = report[i].valid_auroc.value_or(-1.0);
    const double b = report[best].valid_auroc.value_or(-1.0);
    if (a > b || (a == b && report[i].point.l2 > report[best].point.l2)) best = i;
  }
  return {std::move(models[best]), best, std::move(report)};
}

}  // namespace coughtb
