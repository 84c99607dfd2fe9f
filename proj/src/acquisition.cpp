#include "boapta/acquisition.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "boapta/lbfgs.hpp"
#include "boapta/special.hpp"

namespace boapta {

AcquisitionKind parse_acquisition(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "ei") return AcquisitionKind::EI;
  if (s == "ucb") return AcquisitionKind::UCB;
  if (s == "mes") return AcquisitionKind::MES;
  throw std::invalid_argument("unknown acquisition '" + name + "' (expected ei, ucb or mes)");
}

std::string to_string(AcquisitionKind kind) {
  switch (kind) {
    case AcquisitionKind::EI: return "ei";
    case AcquisitionKind::UCB: return "ucb";
    case AcquisitionKind::MES: return "mes";
  }
  return "?";
}

void AcquisitionConfig::validate() const {
  if (!(ucb_beta > 0.0)) throw std::invalid_argument("ucb_beta must be positive");
  if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
  if (raw_samples < restarts) throw std::invalid_argument("raw_samples must be >= restarts");
  if (mes_num_max_samples < 1 || mes_grid < 1) throw std::invalid_argument("MES sample counts must be >= 1");
  if (inner_iters < 0) throw std::invalid_argument("inner_iters must be >= 0");
}

Eigen::Vector4d z_to_x(const Eigen::Vector4d& z) {
  return z.unaryExpr([](double v) { return std::pow(10.0, 14.0 * sigmoid(v) - 7.0); });
}

Eigen::Vector4d x_to_z(const Eigen::Vector4d& x) {
  return x.unaryExpr([](double v) {
    const double p = (std::log10(v) + 7.0) / 14.0;
    return std::log(p / (1.0 - p));
  });
}

Eigen::Vector4d z_to_x_jacobian(const Eigen::Vector4d& z) {
  return z.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return std::pow(10.0, 14.0 * s - 7.0) * std::log(10.0) * 14.0 * s * (1.0 - s);
  });
}

double expected_improvement(double mu, double var, double best) {
  if (var < 0.0) throw std::invalid_argument("expected_improvement: negative variance");
  const double delta = mu - best;
  const double s = std::sqrt(var);
  if (s == 0.0) return std::max(delta, 0.0);
  const double u = delta / s;
  return std::max(0.0, delta * normal_cdf(u) + s * normal_pdf(u));
}

double ucb_score(double mu, double var, double beta) {
  if (var < 0.0) throw std::invalid_argument("ucb_score: negative variance");
  return mu + std::sqrt(beta * var);
}

namespace {

double mes_term(double gamma) { return 0.5 * gamma * normal_hazard(gamma) - log_normal_cdf(gamma); }

double mes_term_slope(double gamma) {
  const double h = normal_hazard(gamma);
  return -0.5 * h * (1.0 + gamma * gamma + gamma * h);
}

}  // namespace

double mes_score(double mu, double var, const std::vector<double>& max_samples) {
  if (max_samples.empty()) throw std::invalid_argument("mes_score: no max-value samples");
  if (!(var > 0.0)) throw std::invalid_argument("mes_score: variance must be positive");
  const double s = std::sqrt(var);
  double acc = 0.0;
  for (double y : max_samples) acc += mes_term((y - mu) / s);
  return std::max(0.0, acc / static_cast<double>(max_samples.size()));
}

std::vector<double> sample_max_values(const std::vector<GpPrediction>& candidates, int count, double floor,
                                      std::mt19937_64& rng) {
  if (candidates.empty()) throw std::invalid_argument("sample_max_values: no candidates");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : candidates) {
    const double s = std::sqrt(std::max(c.variance, 0.0));
    lo = std::min(lo, c.mean - 10.0 * s);
    hi = std::max(hi, c.mean + 10.0 * s);
  }
  auto log_cdf = [&](double y) {
    double acc = 0.0;
    for (const auto& c : candidates) {
      const double s = std::sqrt(std::max(c.variance, 0.0));
      acc += s > 1e-12 ? log_normal_cdf((y - c.mean) / s) : (y >= c.mean ? 0.0 : -1e300);
    }
    return acc;
  };
  auto quantile = [&](double q) {
    double a = lo, b = hi;
    const double target = std::log(q);
    for (int it = 0; it < 200 && b - a > 1e-12 * std::max(1.0, std::abs(b)); ++it) {
      const double m = 0.5 * (a + b);
      (log_cdf(m) < target ? a : b) = m;
    }
    return 0.5 * (a + b);
  };
  const double q1 = quantile(0.25), q2 = quantile(0.5), q3 = quantile(0.75);
  const double b = (q1 - q3) / (std::log(-std::log(0.25)) - std::log(-std::log(0.75)));
  const double a = q2 + b * std::log(-std::log(0.5));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out;
  for (int i = 0; i < count; ++i) {
    const double r = std::clamp(u(rng), 1e-12, 1.0 - 1e-12);
    const double y = b > 0.0 ? a - b * std::log(-std::log(r)) : q2;
    out.push_back(std::max(y, floor));
  }
  return out;
}

Eigen::MatrixXd halton_points(int count) {
  constexpr int kBases[4] = {2, 3, 5, 7};
  Eigen::MatrixXd p(count, 4);
  for (int i = 0; i < count; ++i) {
    for (int d = 0; d < 4; ++d) {
      double f = 1.0, r = 0.0;
      for (int k = i + 1; k > 0; k /= kBases[d]) {
        f /= kBases[d];
        r += f * (k % kBases[d]);
      }
      p(i, d) = r;
    }
  }
  return p;
}

Eigen::MatrixXd latin_hypercube(int count, std::mt19937_64& rng) {
  Eigen::MatrixXd p(count, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> perm(count);
  for (int d = 0; d < 4; ++d) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < count; ++i) p(i, d) = (perm[i] + u(rng)) / count;
  }
  return p;
}

namespace {

Eigen::Vector4d logit(const Eigen::Vector4d& p) {
  return p.unaryExpr([](double v) {
    const double c = std::clamp(v, 1e-9, 1.0 - 1e-9);
    return std::log(c / (1.0 - c));
  });
}

}  // namespace

AcquisitionSurface::AcquisitionSurface(const SurrogateModel& model, const FeatureVector& xi,
                                       const AcquisitionConfig& config)
    : model_(model), config_(config) {
  config.validate();
  if (!model.trained()) throw std::logic_error("acquisition needs a trained surrogate");
  const Eigen::VectorXd phi = mlp_forward(model.scale_features(xi), model.params.mlp);
  const Eigen::VectorXd theta_f = model.params.hp.theta().tail(MlpWeights::kInput);
  const Eigen::Index n = model.inputs.rows();
  feature_factor_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd diff = phi - model.inputs.row(i).tail(MlpWeights::kInput).transpose();
    feature_factor_[i] = std::exp(-(theta_f.array() * diff.array().square()).sum());
  }

  // Incumbent among this circuit's own observations.
  const Dataset& data = model.data;
  double best_y = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.features[i] == xi && data.y[i] < best_y) {
      best_y = data.y[i];
      incumbent_z_ = x_to_z(data.x[i]).cwiseMax(-config.z_bound).cwiseMin(config.z_bound);
      has_incumbent_ = true;
    }
  }
  const Eigen::MatrixXd grid = halton_points(config.mes_grid);
  std::vector<GpPrediction> cand;
  double grid_best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    GpPrediction p = posterior(logit(grid.row(i).transpose())).p;
    p.mean = -p.mean;
    grid_best = std::max(grid_best, p.mean);
    cand.push_back(p);
  }
  best_ = has_incumbent_ ? -(model.transform_y(best_y) - model.y_mean) / model.y_scale : grid_best;
  if (config.kind == AcquisitionKind::MES) {
    std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
    max_samples_ = sample_max_values(cand, config.mes_num_max_samples, best_, rng);
  }
}

AcquisitionSurface::Posterior AcquisitionSurface::posterior(const Eigen::Vector4d& z) const {
  const SurrogateParams& par = model_.params;
  const Eigen::Vector4d x01 = z.unaryExpr([](double v) { return sigmoid(v); });
  const Eigen::VectorXd g = par.warp.mu.array().exp().matrix();
  Eigen::Vector4d w, dw;
  for (int d = 0; d < kSolverDims; ++d) {
    w[d] = betacdf_warp(x01[d], g[d], g[kSolverDims + d]);
    dw[d] = beta_pdf(x01[d], g[d], g[kSolverDims + d]) * x01[d] * (1.0 - x01[d]);
  }
  const Eigen::Vector4d theta_x = par.hp.theta().head(kSolverDims);
  const double t0 = par.hp.theta0();
  const Eigen::Index n = model_.inputs.rows();
  Eigen::VectorXd k(n);
  Eigen::MatrixXd dk(n, kSolverDims);  // dk_i / dw_d
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector4d diff = w - model_.inputs.row(i).head(kSolverDims).transpose();
    k[i] = t0 * std::exp(-(theta_x.array() * diff.array().square()).sum()) * feature_factor_[i];
    dk.row(i) = (-2.0 * k[i] * theta_x.array() * diff.array()).matrix().transpose();
  }
  const auto l = model_.chol.triangularView<Eigen::Lower>();
  const Eigen::VectorXd v = l.solve(k);
  const Eigen::VectorXd beta = l.transpose().solve(v);

  Posterior out;
  out.p.mean = par.hp.mean_const + k.dot(model_.alpha);
  const double var = par.hp.noise_var() + t0 - v.squaredNorm();
  out.p.variance = std::max(var, 0.0);
  out.d_mean = (dk.transpose() * model_.alpha).cwiseProduct(dw);
  out.d_var = Eigen::Vector4d::Zero();
  if (var > 0.0) out.d_var = (-2.0 * dk.transpose() * beta).cwiseProduct(dw);
  return out;
}

double AcquisitionSurface::value(const Eigen::Vector4d& z, Eigen::Vector4d* grad) const {
  const Posterior post = posterior(z);
  const double mu = -post.p.mean;
  const double var = std::max(post.p.variance, 1e-300);
  const double s = std::sqrt(var);
  double d_mu = 0.0, d_var = 0.0, val = 0.0;
  switch (config_.kind) {
    case AcquisitionKind::EI: {
      val = expected_improvement(mu, var, best_);
      const double u = (mu - best_) / s;
      d_mu = normal_cdf(u);
      d_var = normal_pdf(u) / (2.0 * s);
      break;
    }
    case AcquisitionKind::UCB:
      val = ucb_score(mu, var, config_.ucb_beta);
      d_mu = 1.0;
      d_var = std::sqrt(config_.ucb_beta) / (2.0 * s);
      break;
    case AcquisitionKind::MES: {
      val = mes_score(mu, var, max_samples_);
      for (double y : max_samples_) {
        const double gamma = (y - mu) / s;
        const double slope = mes_term_slope(gamma);
        d_mu += -slope / s;
        d_var += -slope * gamma / (2.0 * var);
      }
      d_mu /= static_cast<double>(max_samples_.size());
      d_var /= static_cast<double>(max_samples_.size());
      break;
    }
  }
  if (grad) *grad = -d_mu * post.d_mean + d_var * post.d_var;
  return val;
}

AcquisitionResult optimize_acquisition(const SurrogateModel& model, const FeatureVector& xi,
                                       const AcquisitionConfig& config) {
  config.validate();
  AcquisitionResult result;
  if (!model.trained() || model.degenerate) {
    result.fallback = true;
    result.x = z_to_x(result.z);
    return result;
  }
  const AcquisitionSurface surface(model, xi, config);

  std::mt19937_64 rng(config.seed);
  const Eigen::MatrixXd raw = latin_hypercube(config.raw_samples, rng);
  std::vector<std::pair<double, Eigen::Vector4d>> scored;
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const Eigen::Vector4d z = logit(raw.row(i).transpose()).cwiseMax(-config.z_bound).cwiseMin(config.z_bound);
    scored.emplace_back(surface.value(z), z);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Eigen::Vector4d> starts;
  for (int i = 0; i < config.restarts; ++i) starts.push_back(scored[i].second);
  if (surface.has_incumbent()) starts.push_back(surface.incumbent_z());

  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(4, -config.z_bound);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(4, config.z_bound);
  LbfgsOptions opts;
  opts.max_iter = config.inner_iters;
  auto negated = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
    Eigen::Vector4d grad;
    const double v = surface.value(Eigen::Vector4d(z), &grad);
    g = -grad;
    return -v;
  };
  result.value = -std::numeric_limits<double>::infinity();
  for (const Eigen::Vector4d& z0 : starts) {
    result.start_values.push_back(surface.value(z0));
    const LbfgsResult r = lbfgs_minimize(negated, Eigen::VectorXd(z0), lo, hi, opts);
    if (-r.value > result.value) {
      result.value = -r.value;
      result.z = r.x;
    }
  }
  result.x = z_to_x(result.z);
  return result;
}

}  // namespace boapta
