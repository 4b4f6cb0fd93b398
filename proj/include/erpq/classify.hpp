#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

#include "erpq/synthdata.hpp"

namespace erpq {

// +1 target, -1 nontarget, one per sample.
using Labels = std::vector<int>;

Labels labels_of(const EpochSet& set);

struct BldaModel {
  Eigen::VectorXd weights;  // feature weights then bias, length d+1
  double alpha = 0.0;
  double beta = 0.0;
  int n_iters = 0;
  bool converged = false;
};

// Evidence-maximization ridge regression on class-balanced targets
// (+n/n_pos, -n/n_neg). features is d x n, one column per sample. The
// hyperparameter fixed point iterates through the eigendecomposition of the
// bias-augmented Gram matrix; stops when both relative changes drop below
// 1e-6 or after 100 iterations (converged flag records which).
BldaModel train_blda(const Eigen::MatrixXd& features, const Labels& labels);

double predict_linear(const BldaModel& model, const Eigen::VectorXd& features);
Eigen::VectorXd predict_linear_batch(const BldaModel& model,
                                     const Eigen::MatrixXd& features);

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;  // population std, floored at 1e-12
};

struct ElmModel {
  Eigen::MatrixXd input_weights;   // n_hidden x n_features
  Eigen::VectorXd input_biases;    // n_hidden
  Eigen::VectorXd output_weights;  // n_hidden, least-squares solution
  int init_condition = 1;
  Standardizer standardizer;
};

// Random hidden layer for the five init conditions: 1 = uniform on [-1,1],
// 2..5 = uniform over the codebooks {-1,1}, {0,1}, {-1,-0.33,0.33,1}, and
// the eight levels spaced 2/7 apart. Weights are drawn row-major (per hidden
// unit across features), then the biases. Deterministic in seed.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> init_elm_weights(
    int condition, std::uint64_t seed, int n_hidden = 200,
    int n_features = 1024);

// Standardizes features (fit here), builds the logistic hidden layer, and
// solves the output weights by SVD pseudoinverse (relative cutoff 1e-10).
ElmModel train_elm(const Eigen::MatrixXd& input_weights,
                   const Eigen::VectorXd& input_biases,
                   const Eigen::MatrixXd& features, const Labels& labels,
                   int init_condition = 1);

double predict_elm(const ElmModel& model, const Eigen::VectorXd& features);
Eigen::VectorXd predict_elm_batch(const ElmModel& model,
                                  const Eigen::MatrixXd& features);

}  // namespace erpq
