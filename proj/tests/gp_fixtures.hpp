#pragma once

// Random GP datasets and parameter sets shared by the unit and acceptance tests.

#include <cmath>
#include <random>

#include "boapta/surrogate.hpp"

namespace fixture {

using namespace boapta;

inline TrainingView random_view(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::normal_distribution<double> z;
  TrainingView v{Eigen::MatrixXd(n, kSolverDims), Eigen::MatrixXd(n, FeatureVector::kSize), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < kSolverDims; ++k) v.x01(i, k) = u(rng);
    for (int k = 0; k < FeatureVector::kSize; ++k) v.features(i, k) = z(rng);
    v.y[i] = z(rng);
  }
  return v;
}

inline SurrogateParams random_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  SurrogateParams p;
  p.hp.log_theta0 = 0.3 * z(rng);
  for (auto& t : p.hp.log_theta) t = 0.5 * z(rng);
  p.hp.mean_const = 0.2 * z(rng);
  p.hp.log_noise = std::log(0.05);
  p.mlp = MlpWeights::random(seed + 1);
  for (auto& b : p.mlp.biases)
    for (auto& v : b) v = 0.3 * z(rng);
  p.warp.mu = (0.3 * Eigen::VectorXd::NullaryExpr(8, [&] { return z(rng); })).eval();
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j <= i; ++j) p.warp.chol(i, j) = i == j ? 0.2 + 0.1 * std::abs(z(rng)) : 0.05 * z(rng);
  p.warp.prior_mu.setConstant(0.1);
  p.warp.prior_sigma.setConstant(0.8);
  return p;
}

}  // namespace fixture
