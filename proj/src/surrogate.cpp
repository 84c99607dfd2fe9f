#include "boapta/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "boapta/lbfgs.hpp"
#include "boapta/special.hpp"

namespace boapta {

namespace {

double sq_distance(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                   const Eigen::Ref<const Eigen::VectorXd>& theta) {
  return (theta.array() * (a - b).array().square()).sum();
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& in, const GpHyperparams& hp) {
  const Eigen::VectorXd theta = hp.theta();
  const double t0 = hp.theta0();
  const Eigen::Index n = in.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = t0;
    for (Eigen::Index j = 0; j < i; ++j) {
      k(i, j) = k(j, i) = t0 * std::exp(-sq_distance(in.row(i).transpose(), in.row(j).transpose(), theta));
    }
  }
  return k;
}

// Cholesky of k + (noise + jitter) I, climbing the jitter ladder on failure.
Eigen::LLT<Eigen::MatrixXd> factorize(const Eigen::MatrixXd& k, double noise, double& jitter) {
  const Eigen::Index n = k.rows();
  jitter = 0.0;
  for (double j : {0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4}) {
    Eigen::MatrixXd a = k;
    a.diagonal().array() += noise + j;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      jitter = j;
      return llt;
    }
  }
  throw std::runtime_error("kernel matrix not positive definite (n=" + std::to_string(n) + ") after jitter 1e-4");
}

Eigen::VectorXd standardize_rows(const FeatureVector& f, const Eigen::VectorXd& mean, const Eigen::VectorXd& scale) {
  return ((f.as_vector() - mean).array() / scale.array()).matrix();
}

}  // namespace

double composite_kernel(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                        const GpHyperparams& hp) {
  return hp.theta0() * std::exp(-sq_distance(a, b, hp.theta()));
}

double kernel_solver_part(const Eigen::Ref<const Eigen::VectorXd>& wa, const Eigen::Ref<const Eigen::VectorXd>& wb,
                          const GpHyperparams& hp) {
  return hp.theta0() * std::exp(-sq_distance(wa, wb, hp.theta().head(kSolverDims)));
}

double kernel_feature_part(const Eigen::Ref<const Eigen::VectorXd>& fa, const Eigen::Ref<const Eigen::VectorXd>& fb,
                           const GpHyperparams& hp) {
  return hp.theta0() * std::exp(-sq_distance(fa, fb, hp.theta().tail(MlpWeights::kInput)));
}

int SurrogateParams::size() { return warp_offset() + WarpPosterior::parameter_count(); }

Eigen::VectorXd SurrogateParams::pack() const {
  Eigen::VectorXd v(size());
  v[0] = hp.log_theta0;
  v.segment(1, kKernelDims) = hp.log_theta;
  v[1 + kKernelDims] = hp.mean_const;
  v[2 + kKernelDims] = hp.log_noise;
  mlp.pack(v.segment(kMlpOffset, MlpWeights::parameter_count()));
  warp.pack(v.tail(WarpPosterior::parameter_count()));
  return v;
}

void SurrogateParams::unpack(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != size()) throw std::invalid_argument("SurrogateParams: packed size mismatch");
  hp.log_theta0 = v[0];
  hp.log_theta = v.segment(1, kKernelDims);
  hp.mean_const = v[1 + kKernelDims];
  hp.log_noise = v[2 + kKernelDims];
  mlp.unpack(v.segment(kMlpOffset, MlpWeights::parameter_count()));
  warp.unpack(v.tail(WarpPosterior::parameter_count()));
}

void Dataset::add(const Eigen::Vector4d& xi, const FeatureVector& f, double yi) {
  if (!std::isfinite(yi)) throw std::invalid_argument("Dataset: non-finite target");
  x.push_back(xi);
  features.push_back(f);
  y.push_back(yi);
}

std::size_t Dataset::penalty_count() const {
  return static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](double v) { return v >= kPenaltyY; }));
}

LikelihoodResult gp_log_likelihood(const TrainingView& data, const SurrogateParams& params,
                                   const std::vector<Eigen::VectorXd>& eps_in, bool with_gradient) {
  const Eigen::Index n = data.y.size();
  if (n < 1) throw std::invalid_argument("gp_log_likelihood: empty dataset");
  constexpr int d = kSolverDims;
  const std::vector<Eigen::VectorXd> eps =
      eps_in.empty() ? std::vector<Eigen::VectorXd>{Eigen::VectorXd::Zero(2 * d)} : eps_in;
  const double inv_s = 1.0 / static_cast<double>(eps.size());

  // Warped solver inputs, averaged over the eps draws.
  std::vector<Eigen::VectorXd> gammas;
  std::vector<Eigen::MatrixXd> da(eps.size()), db(eps.size());
  Eigen::MatrixXd in(n, kKernelDims);
  in.leftCols(d).setZero();
  for (std::size_t s = 0; s < eps.size(); ++s) {
    gammas.push_back(params.warp.gamma(eps[s]));
    const Eigen::VectorXd& g = gammas.back();
    da[s].resize(n, d);
    db[s].resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) {
        if (with_gradient) {
          const WarpEval w = betacdf_warp_grad(data.x01(i, k), g[k], g[d + k]);
          in(i, k) += w.value * inv_s;
          da[s](i, k) = w.d_alpha;
          db[s](i, k) = w.d_beta;
        } else {
          in(i, k) += betacdf_warp(data.x01(i, k), g[k], g[d + k]) * inv_s;
        }
      }
    }
  }
  const MlpTape tape = mlp_forward_batch(data.features, params.mlp);
  in.rightCols(MlpWeights::kInput) = tape.output;

  const GpHyperparams& hp = params.hp;
  const Eigen::MatrixXd k = kernel_matrix(in, hp);
  const double noise = hp.noise_var();
  LikelihoodResult out;
  const Eigen::LLT<Eigen::MatrixXd> llt = factorize(k, noise, out.jitter);
  const Eigen::VectorXd r = data.y.array() - hp.mean_const;
  const Eigen::VectorXd alpha = llt.solve(r);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  out.value = -0.5 * r.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) -
              params.warp.kl_divergence();
  if (!with_gradient) return out;

  out.gradient = Eigen::VectorXd::Zero(SurrogateParams::size());
  Eigen::VectorXd& grad = out.gradient;
  const Eigen::MatrixXd w = alpha * alpha.transpose() - llt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd wk = w.cwiseProduct(k);
  const Eigen::VectorXd theta = hp.theta();

  grad[0] = 0.5 * wk.sum();
  for (int j = 0; j < kKernelDims; ++j) {
    const Eigen::VectorXd col = in.col(j);
    // sum_il W_il K_il (a_ij - a_lj)^2 expanded.
    const double quad = 2.0 * (wk.rowwise().sum().array() * col.array().square()).sum() - 2.0 * col.dot(wk * col);
    grad[1 + j] = -0.5 * theta[j] * quad;
  }
  grad[1 + kKernelDims] = alpha.sum();
  grad[2 + kKernelDims] = 0.5 * noise * w.trace();

  // dL/da_ij = -2 theta_j sum_l W_il K_il (a_ij - a_lj)
  const Eigen::MatrixXd d_in =
      -2.0 * (wk.rowwise().sum().asDiagonal() * in - wk * in) * theta.asDiagonal();

  const MlpWeights gm = mlp_backward(tape, params.mlp, d_in.rightCols(MlpWeights::kInput));
  gm.pack(grad.segment(SurrogateParams::kMlpOffset, MlpWeights::parameter_count()));

  const Eigen::Index nw = 2 * d;
  Eigen::VectorXd warp_grad = Eigen::VectorXd::Zero(WarpPosterior::parameter_count());
  for (std::size_t s = 0; s < eps.size(); ++s) {
    Eigen::VectorXd g_gamma(nw);
    for (int c = 0; c < d; ++c) {
      g_gamma[c] = inv_s * d_in.col(c).dot(da[s].col(c));
      g_gamma[d + c] = inv_s * d_in.col(c).dot(db[s].col(c));
    }
    const Eigen::VectorXd h = g_gamma.cwiseProduct(gammas[s]);  // dL/d(log gamma)
    warp_grad.head(nw) += h;
    Eigen::Index at = nw;
    for (Eigen::Index i = 0; i < nw; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double v = h[i] * eps[s][j];
        warp_grad[at++] += i == j ? v * params.warp.chol(i, i) : v;
      }
  }
  warp_grad -= params.warp.kl_gradient();
  grad.tail(WarpPosterior::parameter_count()) = warp_grad;
  return out;
}

TrainingView SurrogateModel::view() const {
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  TrainingView v{Eigen::MatrixXd(n, kSolverDims), Eigen::MatrixXd(n, FeatureVector::kSize), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < kSolverDims; ++k) v.x01(i, k) = log_normalize(data.x[i][k]);
    v.features.row(i) = scale_features(data.features[i]).transpose();
    v.y[i] = (transform_y(data.y[i]) - y_mean) / y_scale;
  }
  return v;
}

void SurrogateModel::fit_scalers() {
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  if (n == 0) return;
  Eigen::MatrixXd f(n, FeatureVector::kSize);
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    f.row(i) = data.features[i].as_vector().transpose();
    t[i] = transform_y(data.y[i]);
  }
  feature_mean = f.colwise().mean().transpose();
  feature_scale = ((f.rowwise() - feature_mean.transpose()).array().square().colwise().mean().sqrt()).transpose();
  for (auto& s : feature_scale) s = s > 1e-12 ? s : 1.0;
  y_mean = t.mean();
  const double sd = std::sqrt((t.array() - y_mean).square().mean());
  degenerate = !(sd > 1e-12 * std::max(1.0, std::abs(y_mean)));
  y_scale = degenerate ? 1.0 : sd;
}

void SurrogateModel::refresh() {
  const TrainingView v = view();
  const Eigen::Index n = v.y.size();
  inputs.resize(n, kKernelDims);
  for (Eigen::Index i = 0; i < n; ++i) inputs.row(i).head(kSolverDims) = median_warp(v.x01.row(i)).transpose();
  inputs.rightCols(MlpWeights::kInput) = mlp_forward_batch(v.features, params.mlp).output;
  const Eigen::LLT<Eigen::MatrixXd> llt = factorize(kernel_matrix(inputs, params.hp), params.hp.noise_var(), jitter);
  chol = llt.matrixL();
  alpha = llt.solve((v.y.array() - params.hp.mean_const).matrix());
}

double SurrogateModel::transform_y(double y) const { return config.log_targets ? std::log(std::max(y, 1e-300)) : y; }

double SurrogateModel::untransform_y(double t) const { return config.log_targets ? std::exp(t) : t; }

Eigen::VectorXd SurrogateModel::scale_features(const FeatureVector& f) const {
  return standardize_rows(f, feature_mean, feature_scale);
}

Eigen::VectorXd SurrogateModel::median_warp(const Eigen::Vector4d& x01) const {
  const Eigen::VectorXd g = params.warp.mu.array().exp().matrix();
  Eigen::VectorXd w(kSolverDims);
  for (int k = 0; k < kSolverDims; ++k) w[k] = betacdf_warp(x01[k], g[k], g[kSolverDims + k]);
  return w;
}

SurrogateModel make_surrogate(const SurrogateConfig& config) {
  SurrogateModel m;
  m.config = config;
  m.params.hp.log_theta.head(kSolverDims).setConstant(std::log(10.0));
  m.params.hp.log_theta.tail(MlpWeights::kInput).setConstant(std::log(0.5));
  m.params.mlp = MlpWeights::random(config.seed);
  return m;
}

void train_surrogate(SurrogateModel& model, const Dataset& data) {
  if (data.size() < 2) throw std::invalid_argument("train_surrogate: need at least two observations");
  model.data = data;
  model.fit_scalers();
  if (model.degenerate) {
    model.params.hp.mean_const = 0.0;
    model.refresh();
    ++model.rounds;
    return;
  }
  const TrainingView view = model.view();

  std::vector<Eigen::VectorXd> eps;
  if (model.config.train_warp) {
    const std::uint64_t seed = model.config.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(model.rounds);
    eps = sample_warp_params(model.params.warp, std::max(1, model.config.warp_samples), seed).eps;
  }

  const Eigen::VectorXd start = model.params.pack();
  Eigen::VectorXd lo(start.size()), hi(start.size());
  lo[0] = std::log(1e-3);
  hi[0] = std::log(1e3);
  lo.segment(1, kKernelDims).setConstant(std::log(1e-3));
  hi.segment(1, kKernelDims).setConstant(std::log(1e4));
  lo[1 + kKernelDims] = -5.0;
  hi[1 + kKernelDims] = 5.0;
  lo[2 + kKernelDims] = std::log(1e-6);
  hi[2 + kKernelDims] = 0.0;
  lo.segment(SurrogateParams::kMlpOffset, MlpWeights::parameter_count()).setConstant(-10.0);
  hi.segment(SurrogateParams::kMlpOffset, MlpWeights::parameter_count()).setConstant(10.0);
  const Eigen::Index w0 = SurrogateParams::warp_offset();
  const Eigen::Index nw = 2 * kSolverDims;
  lo.segment(w0, nw).setConstant(-3.0);
  hi.segment(w0, nw).setConstant(3.0);
  Eigen::Index at = w0 + nw;
  for (Eigen::Index i = 0; i < nw; ++i)
    for (Eigen::Index j = 0; j <= i; ++j, ++at) {
      lo[at] = i == j ? std::log(1e-4) : -2.0;
      hi[at] = i == j ? 0.0 : 2.0;
    }
  if (!model.config.train_warp) {
    lo.tail(WarpPosterior::parameter_count()) = start.tail(WarpPosterior::parameter_count());
    hi.tail(WarpPosterior::parameter_count()) = start.tail(WarpPosterior::parameter_count());
  }
  // The starting point may sit outside the box after a config change.
  const Eigen::VectorXd x0 = start.cwiseMax(lo).cwiseMin(hi);

  SurrogateParams trial = model.params;
  auto objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
    trial.unpack(v);
    try {
      const LikelihoodResult r = gp_log_likelihood(view, trial, eps);
      g = -r.gradient;
      return -r.value;
    } catch (const std::exception&) {
      g.setZero(v.size());
      return std::numeric_limits<double>::infinity();
    }
  };
  LbfgsOptions opts;
  opts.max_iter = model.config.train_iters;
  const LbfgsResult res = lbfgs_minimize(objective, x0, lo, hi, opts);
  model.params.unpack(res.x);
  model.refresh();
  ++model.rounds;
}

GpPrediction predict_latent(const SurrogateModel& model, const Eigen::Ref<const Eigen::VectorXd>& input) {
  if (!model.trained()) throw std::logic_error("surrogate model is not trained");
  const GpHyperparams& hp = model.params.hp;
  const Eigen::VectorXd theta = hp.theta();
  const Eigen::Index n = model.inputs.rows();
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i)
    k[i] = hp.theta0() * std::exp(-sq_distance(input, model.inputs.row(i).transpose(), theta));
  const Eigen::VectorXd v = model.chol.triangularView<Eigen::Lower>().solve(k);
  GpPrediction p;
  p.mean = hp.mean_const + k.dot(model.alpha);
  p.variance = std::max(0.0, hp.noise_var() + hp.theta0() - v.squaredNorm());
  return p;
}

GpPrediction gp_predict(const Eigen::Vector4d& x, const FeatureVector& xi, const SurrogateModel& model) {
  if (!model.trained()) throw std::logic_error("surrogate model is not trained");
  Eigen::Vector4d x01;
  for (int k = 0; k < kSolverDims; ++k) x01[k] = log_normalize(x[k]);
  Eigen::VectorXd in(kKernelDims);
  in.head(kSolverDims) = model.median_warp(x01);
  in.tail(MlpWeights::kInput) = mlp_forward(model.scale_features(xi), model.params.mlp);
  const GpPrediction z = predict_latent(model, in);
  return {model.y_mean + model.y_scale * z.mean, model.y_scale * model.y_scale * z.variance};
}

namespace {

nlohmann::json to_json_vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd from_json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string model_to_json(const SurrogateModel& model) {
  nlohmann::json j;
  j["version"] = 1;
  j["params"] = to_json_vec(model.params.pack());
  j["warp_prior_mu"] = to_json_vec(model.params.warp.prior_mu);
  j["warp_prior_sigma"] = to_json_vec(model.params.warp.prior_sigma);
  j["config"] = {{"train_iters", model.config.train_iters},
                 {"warp_samples", model.config.warp_samples},
                 {"train_warp", model.config.train_warp},
                 {"log_targets", model.config.log_targets},
                 {"seed", model.config.seed}};
  j["rounds"] = model.rounds;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < model.data.size(); ++i) {
    const Eigen::VectorXd x = model.data.x[i];
    const Eigen::VectorXd f = model.data.features[i].as_vector();
    rows.push_back({{"x", to_json_vec(x)}, {"features", to_json_vec(f)}, {"y", model.data.y[i]}});
  }
  j["data"] = rows;
  return j.dump();
}

SurrogateModel model_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("version", 0) != 1) throw std::runtime_error("unsupported model checkpoint version");
  SurrogateConfig cfg;
  const auto& c = j.at("config");
  cfg.train_iters = c.at("train_iters").get<int>();
  cfg.warp_samples = c.at("warp_samples").get<int>();
  cfg.train_warp = c.at("train_warp").get<bool>();
  cfg.log_targets = c.at("log_targets").get<bool>();
  cfg.seed = c.at("seed").get<std::uint64_t>();
  SurrogateModel m = make_surrogate(cfg);
  m.params.unpack(from_json_vec(j.at("params")));
  m.params.warp.prior_mu = from_json_vec(j.at("warp_prior_mu"));
  m.params.warp.prior_sigma = from_json_vec(j.at("warp_prior_sigma"));
  m.rounds = j.at("rounds").get<int>();
  for (const auto& row : j.at("data")) {
    const Eigen::VectorXd x = from_json_vec(row.at("x"));
    const Eigen::VectorXd f = from_json_vec(row.at("features"));
    FeatureVector fv{static_cast<int>(f[0]), static_cast<int>(f[1]), static_cast<int>(f[2]), static_cast<int>(f[3]),
                     static_cast<int>(f[4]), static_cast<int>(f[5]), static_cast<int>(f[6])};
    m.data.add(Eigen::Vector4d(x), fv, row.at("y").get<double>());
  }
  if (m.data.size() > 0) {
    // Restore the stats the parameters were trained under.
    m.fit_scalers();
    m.refresh();
  }
  return m;
}

}  // namespace boapta
