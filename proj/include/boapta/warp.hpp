#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace boapta {

inline constexpr int kSolverDims = 4;

/// Maps a solver parameter in [1e-7, 1e7] to [0, 1] on a log10 scale.
double log_normalize(double x);

/// Beta CDF warp I_x(alpha, beta).  Throws std::domain_error for
/// non-positive shape parameters.
double betacdf_warp(double x01, double alpha, double beta);

/// Warp together with its partial derivatives.
struct WarpEval {
  double value;
  double d_x;
  double d_alpha;
  double d_beta;
};
WarpEval betacdf_warp_grad(double x01, double alpha, double beta);

/// Log-Gaussian variational posterior over gamma = (alpha_1..D, beta_1..D):
/// log gamma ~ N(mu, L L^T), with a diagonal log-Gaussian prior.
struct WarpPosterior {
  Eigen::VectorXd mu;          // 2D
  Eigen::MatrixXd chol;        // 2D x 2D lower triangular, positive diagonal
  Eigen::VectorXd prior_mu;    // (mu_a.., mu_b..)
  Eigen::VectorXd prior_sigma; // (sigma_a.., sigma_b..), standard deviations

  /// Identity-centred posterior (alpha = beta = 1) with spread `scale`.
  static WarpPosterior identity(double scale = 0.1);

  int dims() const { return static_cast<int>(mu.size()) / 2; }

  /// mu, then the lower triangle of chol row by row with its diagonal
  /// stored as a log.
  static int parameter_count(int d = kSolverDims);
  void pack(Eigen::Ref<Eigen::VectorXd> out) const;
  void unpack(const Eigen::Ref<const Eigen::VectorXd>& in);

  /// gamma = exp(mu + L eps).
  Eigen::VectorXd gamma(const Eigen::VectorXd& eps) const;

  /// Closed-form KL(q || p) between the Gaussians on log gamma.
  double kl_divergence() const;
  /// Gradient of kl_divergence() in the packed parameterisation.
  Eigen::VectorXd kl_gradient() const;
};

/// Reparameterised draws: `count` noise vectors eps ~ N(0, I) and the
/// matching (alpha, beta) vectors exp(mu + L eps).  Deterministic in `seed`.
struct WarpSamples {
  std::vector<Eigen::VectorXd> eps;
  std::vector<Eigen::VectorXd> gamma;
};
WarpSamples sample_warp_params(const WarpPosterior& post, int count, std::uint64_t seed);

/// Sample-averaged warp of a batch of normalized inputs (rows, D columns)
/// using the given eps draws.
Eigen::MatrixXd warp_inputs(const Eigen::MatrixXd& x01, const WarpPosterior& post,
                            const std::vector<Eigen::VectorXd>& eps);

}  // namespace boapta
