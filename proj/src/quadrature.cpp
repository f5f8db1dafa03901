#include "chi2rate/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "chi2rate/common.hpp"

namespace chi2rate::quad {

namespace {

GaussHermite build_gauss_hermite(int order) {
  // Golub-Welsch on the Jacobi matrix of the monic Hermite recurrence for the
  // weight e^{-x^2/2}: zero diagonal, off-diagonal sqrt(i). With the measure
  // normalized to a probability, weights are squared first eigenvector entries.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int i = 1; i < order; ++i) {
    double b = std::sqrt(double(i));
    jacobi(i, i - 1) = b;
    jacobi(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  GaussHermite gh;
  gh.nodes.resize(size_t(order));
  gh.weights.resize(size_t(order));
  for (int i = 0; i < order; ++i) {
    gh.nodes[size_t(i)] = es.eigenvalues()(i);
    double q0 = es.eigenvectors()(0, i);
    gh.weights[size_t(i)] = q0 * q0;
  }
  return gh;
}

}  // namespace

const GaussHermite& gauss_hermite(int order) {
  if (order < 2 || order > 200)
    throw validation_error("gauss-hermite order must be in [2, 200]");
  static std::mutex mu;
  static std::map<int, GaussHermite> cache;
  std::lock_guard<std::mutex> lk(mu);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, build_gauss_hermite(order)).first;
  return it->second;
}

double chisq_upper_cutoff(int df, double tail) {
  if (df < 1) throw validation_error("chi-square needs df >= 1");
  boost::math::chi_squared dist{double(df)};
  return boost::math::quantile(boost::math::complement(dist, tail));
}

}  // namespace chi2rate::quad
