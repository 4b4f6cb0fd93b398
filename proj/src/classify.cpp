#include "erpq/classify.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "erpq/errors.hpp"
#include "erpq/quant.hpp"
#include "erpq/rng.hpp"

namespace erpq {

namespace {

constexpr int kBldaMaxIters = 100;
constexpr double kBldaTol = 1e-6;
constexpr double kStdFloor = 1e-12;
constexpr double kSvdCutoff = 1e-10;

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void count_classes(const Labels& labels, Eigen::Index n_samples,
                   std::size_t& n_pos, std::size_t& n_neg) {
  if (Eigen::Index(labels.size()) != n_samples)
    throw DimensionError("label count does not match sample count");
  n_pos = n_neg = 0;
  for (const int l : labels) {
    if (l == 1)
      ++n_pos;
    else if (l == -1)
      ++n_neg;
    else
      throw ConfigError("labels must be +1 or -1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw TrainingError("training requires both classes");
}

}  // namespace

Labels labels_of(const EpochSet& set) {
  Labels labels;
  labels.reserve(set.epochs.size());
  for (const Epoch& e : set.epochs)
    labels.push_back(e.label == Label::target ? 1 : -1);
  return labels;
}

BldaModel train_blda(const Eigen::MatrixXd& features, const Labels& labels) {
  const Eigen::Index d = features.rows();
  const Eigen::Index n = features.cols();
  std::size_t n_pos, n_neg;
  count_classes(labels, n, n_pos, n_neg);
  if (!features.allFinite())
    throw NumericError("training features are not finite");

  Eigen::MatrixXd x(d + 1, n);  // bias row of ones last
  x.topRows(d) = features;
  x.row(d).setOnes();

  // class-balanced regression targets
  Eigen::VectorXd y(n);
  const double y_pos = double(n) / double(n_pos);
  const double y_neg = -double(n) / double(n_neg);
  for (Eigen::Index i = 0; i < n; ++i)
    y[i] = labels[std::size_t(i)] == 1 ? y_pos : y_neg;

  const Eigen::MatrixXd gram = x * x.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success)
    throw NumericError("eigendecomposition of the Gram matrix failed");
  Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd& v = eig.eigenvectors();
  const Eigen::VectorXd c = v.transpose() * (x * y);
  const double yty = y.squaredNorm();

  double alpha = 1.0, beta = 1.0;
  int iters = 0;
  bool converged = false;
  Eigen::VectorXd w_eig(d + 1);
  while (iters < kBldaMaxIters) {
    w_eig = (beta * c.array() / (beta * lam.array() + alpha)).matrix();
    const double gamma =
        (beta * lam.array() / (beta * lam.array() + alpha)).sum();
    const double wtw = w_eig.squaredNorm();
    const double residual = std::max(
        yty - 2.0 * w_eig.dot(c) + lam.dot(w_eig.cwiseAbs2()), 0.0);
    if (wtw <= 0.0 || residual <= 0.0)
      throw NumericError("degenerate BLDA update (zero weights or residual)");

    const double alpha_new = gamma / wtw;
    const double beta_new = (double(n) - gamma) / residual;
    if (!std::isfinite(alpha_new) || !std::isfinite(beta_new) ||
        alpha_new <= 0.0 || beta_new <= 0.0)
      throw NumericError("BLDA hyperparameter update left the feasible range");

    ++iters;
    const bool small = std::abs(alpha_new - alpha) <= kBldaTol * alpha &&
                       std::abs(beta_new - beta) <= kBldaTol * beta;
    alpha = alpha_new;
    beta = beta_new;
    if (small) {
      converged = true;
      break;
    }
  }

  w_eig = (beta * c.array() / (beta * lam.array() + alpha)).matrix();

  BldaModel model;
  model.weights = v * w_eig;
  model.alpha = alpha;
  model.beta = beta;
  model.n_iters = iters;
  model.converged = converged;
  return model;
}

double predict_linear(const BldaModel& model, const Eigen::VectorXd& features) {
  const Eigen::Index d = model.weights.size() - 1;
  if (features.size() != d)
    throw DimensionError("feature length does not match the model");
  return model.weights.head(d).dot(features) + model.weights[d];
}

Eigen::VectorXd predict_linear_batch(const BldaModel& model,
                                     const Eigen::MatrixXd& features) {
  const Eigen::Index d = model.weights.size() - 1;
  if (features.rows() != d)
    throw DimensionError("feature rows do not match the model");
  return ((features.transpose() * model.weights.head(d)).array() +
          model.weights[d])
      .matrix();
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> init_elm_weights(int condition,
                                                             std::uint64_t seed,
                                                             int n_hidden,
                                                             int n_features) {
  if (n_hidden < 1 || n_features < 1)
    throw ConfigError("hidden and feature counts must be positive");
  Rng rng(seed);
  Eigen::MatrixXd w(n_hidden, n_features);
  Eigen::VectorXd b(n_hidden);

  auto draw = [&rng, condition]() -> double {
    switch (condition) {
      case 1: return rng.uniform(-1.0, 1.0);
      case 2: case 3: case 4: case 5: {
        static constexpr QuantScheme schemes[] = {
            QuantScheme::codebook1_pm, QuantScheme::codebook1_01,
            QuantScheme::codebook2, QuantScheme::codebook3};
        const std::span<const double> levels =
            codebook_levels(schemes[condition - 2]);
        return levels[rng.uniform_index(levels.size())];
      }
      default:
        throw ConfigError("init condition must be 1..5");
    }
  };

  for (int u = 0; u < n_hidden; ++u)
    for (int f = 0; f < n_features; ++f) w(u, f) = draw();
  for (int u = 0; u < n_hidden; ++u) b[u] = draw();
  return {std::move(w), std::move(b)};
}

ElmModel train_elm(const Eigen::MatrixXd& input_weights,
                   const Eigen::VectorXd& input_biases,
                   const Eigen::MatrixXd& features, const Labels& labels,
                   int init_condition) {
  const Eigen::Index d = features.rows();
  const Eigen::Index n = features.cols();
  std::size_t n_pos, n_neg;
  count_classes(labels, n, n_pos, n_neg);
  if (input_weights.cols() != d)
    throw DimensionError("input weight columns do not match feature length");
  if (input_biases.size() != input_weights.rows())
    throw DimensionError("bias count does not match hidden size");
  if (!features.allFinite())
    throw NumericError("training features are not finite");

  ElmModel model;
  model.input_weights = input_weights;
  model.input_biases = input_biases;
  model.init_condition = init_condition;
  model.standardizer.mean = features.rowwise().mean();
  const Eigen::MatrixXd centered = features.colwise() - model.standardizer.mean;
  model.standardizer.std =
      (centered.cwiseAbs2().rowwise().mean()).cwiseSqrt().cwiseMax(kStdFloor);

  const Eigen::MatrixXd xs =
      (centered.array().colwise() / model.standardizer.std.array()).matrix();
  Eigen::MatrixXd z = input_weights * xs;
  z.colwise() += input_biases;
  const Eigen::MatrixXd h =
      z.transpose().unaryExpr([](double v) { return logistic(v); });

  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) t[i] = double(labels[std::size_t(i)]);

  Eigen::BDCSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(kSvdCutoff);
  model.output_weights = svd.solve(t);
  return model;
}

double predict_elm(const ElmModel& model, const Eigen::VectorXd& features) {
  if (features.size() != model.input_weights.cols())
    throw DimensionError("feature length does not match the model");
  const Eigen::VectorXd xs = ((features - model.standardizer.mean).array() /
                              model.standardizer.std.array())
                                 .matrix();
  const Eigen::VectorXd z = model.input_weights * xs + model.input_biases;
  double score = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    score += model.output_weights[i] * logistic(z[i]);
  return score;
}

Eigen::VectorXd predict_elm_batch(const ElmModel& model,
                                  const Eigen::MatrixXd& features) {
  if (features.rows() != model.input_weights.cols())
    throw DimensionError("feature rows do not match the model");
  const Eigen::MatrixXd xs =
      ((features.colwise() - model.standardizer.mean).array().colwise() /
       model.standardizer.std.array())
          .matrix();
  Eigen::MatrixXd z = model.input_weights * xs;
  z.colwise() += model.input_biases;
  return z.unaryExpr([](double v) { return logistic(v); }).transpose() *
         model.output_weights;
}

}  // namespace erpq
