#include "boapta/warp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "boapta/special.hpp"

namespace boapta {

double log_normalize(double x) { return std::clamp((std::log10(x) + 7.0) / 14.0, 0.0, 1.0); }

double betacdf_warp(double x01, double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::domain_error("betacdf_warp: alpha and beta must be positive");
  return betainc(std::clamp(x01, 0.0, 1.0), alpha, beta);
}

WarpEval betacdf_warp_grad(double x01, double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::domain_error("betacdf_warp: alpha and beta must be positive");
  x01 = std::clamp(x01, 0.0, 1.0);
  using D = Dual<2>;
  const D r = betainc(D(x01), D::variable(alpha, 0), D::variable(beta, 1));
  return {r.v, beta_pdf(x01, alpha, beta), r.d[0], r.d[1]};
}

WarpPosterior WarpPosterior::identity(double scale) {
  const int n = 2 * kSolverDims;
  WarpPosterior p;
  p.mu = Eigen::VectorXd::Zero(n);
  p.chol = scale * Eigen::MatrixXd::Identity(n, n);
  p.prior_mu = Eigen::VectorXd::Zero(n);
  p.prior_sigma = Eigen::VectorXd::Ones(n);
  return p;
}

int WarpPosterior::parameter_count(int d) {
  const int n = 2 * d;
  return n + n * (n + 1) / 2;
}

void WarpPosterior::pack(Eigen::Ref<Eigen::VectorXd> out) const {
  const Eigen::Index n = mu.size();
  out.head(n) = mu;
  Eigen::Index at = n;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) out[at++] = i == j ? std::log(chol(i, i)) : chol(i, j);
}

void WarpPosterior::unpack(const Eigen::Ref<const Eigen::VectorXd>& in) {
  const Eigen::Index n = mu.size();
  mu = in.head(n);
  chol.setZero(n, n);
  Eigen::Index at = n;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) chol(i, j) = i == j ? std::exp(in[at++]) : in[at++];
}

Eigen::VectorXd WarpPosterior::gamma(const Eigen::VectorXd& eps) const {
  return (mu + chol.triangularView<Eigen::Lower>() * eps).array().exp().matrix();
}

double WarpPosterior::kl_divergence() const {
  const Eigen::ArrayXd var_p = prior_sigma.array().square();
  const double trace = (chol.array().square().colwise() / var_p).sum();
  const double maha = ((mu - prior_mu).array().square() / var_p).sum();
  const double logdet_p = var_p.log().sum();
  const double logdet_q = 2.0 * chol.diagonal().array().log().sum();
  return 0.5 * (trace + maha - static_cast<double>(mu.size()) + logdet_p - logdet_q);
}

Eigen::VectorXd WarpPosterior::kl_gradient() const {
  const Eigen::Index n = mu.size();
  const Eigen::ArrayXd var_p = prior_sigma.array().square();
  Eigen::VectorXd g(parameter_count(static_cast<int>(n / 2)));
  g.head(n) = ((mu - prior_mu).array() / var_p).matrix();
  Eigen::Index at = n;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j)
      g[at++] = i == j ? chol(i, i) * chol(i, i) / var_p[i] - 1.0 : chol(i, j) / var_p[i];
  return g;
}

WarpSamples sample_warp_params(const WarpPosterior& post, int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample_warp_params: count must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  WarpSamples out;
  for (int s = 0; s < count; ++s) {
    Eigen::VectorXd eps(post.mu.size());
    for (auto& e : eps) e = normal(rng);
    out.gamma.push_back(post.gamma(eps));
    out.eps.push_back(std::move(eps));
  }
  return out;
}

Eigen::MatrixXd warp_inputs(const Eigen::MatrixXd& x01, const WarpPosterior& post,
                            const std::vector<Eigen::VectorXd>& eps) {
  const int d = post.dims();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x01.rows(), d);
  for (const auto& e : eps) {
    const Eigen::VectorXd g = post.gamma(e);
    for (Eigen::Index i = 0; i < x01.rows(); ++i)
      for (int k = 0; k < d; ++k) out(i, k) += betacdf_warp(x01(i, k), g[k], g[d + k]);
  }
  return out / static_cast<double>(eps.size());
}

}  // namespace boapta
