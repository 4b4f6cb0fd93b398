#include "erpq/spatial.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "erpq/errors.hpp"

namespace erpq {

namespace {

constexpr double kRidge = 1e-8;
constexpr double kJacobiTol = 1e-12;
constexpr int kMaxSweeps = 64;

double offdiag_norm(const Eigen::MatrixXd& a) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i + 1; j < a.cols(); ++j) sum += 2.0 * a(i, j) * a(i, j);
  return std::sqrt(sum);
}

}  // namespace

void jacobi_eigh(Eigen::MatrixXd a, Eigen::VectorXd& eigenvalues,
                 Eigen::MatrixXd& eigenvectors) {
  const Eigen::Index n = a.rows();
  if (n != a.cols()) throw DimensionError("jacobi_eigh needs a square matrix");
  if (!a.allFinite()) throw NumericError("eigensolver input is not finite");

  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double target = kJacobiTol * std::max(a.norm(), 1e-300);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    if (offdiag_norm(a) < target) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  // sort ascending
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });
  eigenvalues.resize(n);
  eigenvectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    eigenvalues[k] = a(order[std::size_t(k)], order[std::size_t(k)]);
    eigenvectors.col(k) = v.col(order[std::size_t(k)]);
  }
}

XdawnCovariances xdawn_covariances(const EpochSet& train) {
  if (train.epochs.empty()) throw TrainingError("empty training set");
  const Eigen::Index ch = train.epochs.front().data.rows();
  const Eigen::Index ns = train.epochs.front().data.cols();
  for (const Epoch& e : train.epochs)
    if (e.data.rows() != ch || e.data.cols() != ns)
      throw DimensionError("epochs disagree on shape");

  const std::size_t n_t = train.count(Label::target);
  if (n_t == 0 || n_t == train.epochs.size())
    throw TrainingError("training set must contain both classes");

  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(ch, ns);
  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(ch, ch);
  for (const Epoch& e : train.epochs) {
    if (e.label == Label::target) p += e.data;
    noise.noalias() += e.data * e.data.transpose();
  }
  p /= double(n_t);
  noise /= double(train.epochs.size()) * double(ns);

  Eigen::MatrixXd signal = p * p.transpose() / double(ns);
  if (!signal.allFinite() || !noise.allFinite())
    throw NumericError("covariance estimate is not finite");

  const double eps_s = kRidge * signal.trace() / double(ch);
  const double eps_n = kRidge * noise.trace() / double(ch);
  signal += eps_s * Eigen::MatrixXd::Identity(ch, ch);
  noise += eps_n * Eigen::MatrixXd::Identity(ch, ch);
  return {std::move(signal), std::move(noise)};
}

SpatialFilterBank fit_xdawn(const EpochSet& train, int n_filters) {
  XdawnCovariances cov = xdawn_covariances(train);
  const Eigen::Index ch = cov.noise.rows();
  if (n_filters < 1 || n_filters > ch)
    throw ConfigError("n_filters must be between 1 and the channel count");

  Eigen::LLT<Eigen::MatrixXd> llt(cov.noise);
  if (llt.info() != Eigen::Success)
    throw NumericError("noise covariance is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();

  // whiten: A = L^-1 * Sigma_s * L^-T, then ordinary symmetric eigenproblem
  Eigen::MatrixXd c = l.triangularView<Eigen::Lower>().solve(cov.signal);
  Eigen::MatrixXd a = l.triangularView<Eigen::Lower>().solve(c.transpose());
  a = 0.5 * (a + a.transpose());

  Eigen::VectorXd evals;
  Eigen::MatrixXd evecs;
  jacobi_eigh(a, evals, evecs);

  SpatialFilterBank bank;
  bank.weights.resize(n_filters, ch);
  bank.rayleigh_quotients.resize(n_filters);
  for (int f = 0; f < n_filters; ++f) {
    const Eigen::Index k = ch - 1 - f;  // descending
    bank.rayleigh_quotients[f] = evals[k];
    Eigen::VectorXd w =
        l.transpose().triangularView<Eigen::Upper>().solve(evecs.col(k));
    Eigen::Index imax = 0;
    w.cwiseAbs().maxCoeff(&imax);
    if (w[imax] < 0.0) w = -w;
    bank.weights.row(f) = w.transpose();
  }
  return bank;
}

Eigen::VectorXd apply_filters(const SpatialFilterBank& bank, const Epoch& epoch) {
  if (epoch.data.rows() != bank.weights.cols())
    throw DimensionError("epoch channel count does not match the filter bank");
  const Eigen::MatrixXd projected = bank.weights * epoch.data;
  // filter-major flatten
  return projected.transpose().reshaped();
}

Eigen::MatrixXd feature_matrix(const SpatialFilterBank& bank, const EpochSet& set) {
  if (set.epochs.empty()) return Eigen::MatrixXd();
  const Eigen::Index d = bank.weights.rows() * set.epochs.front().data.cols();
  Eigen::MatrixXd features(d, Eigen::Index(set.epochs.size()));
  for (std::size_t i = 0; i < set.epochs.size(); ++i)
    features.col(Eigen::Index(i)) = apply_filters(bank, set.epochs[i]);
  return features;
}

}  // namespace erpq
