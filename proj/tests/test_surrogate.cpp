#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "boapta/surrogate.hpp"
#include "gp_fixtures.hpp"

using namespace boapta;
using fixture::random_params;
using fixture::random_view;

TEST_CASE("likelihood gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TrainingView v = random_view(5, seed);
    const SurrogateParams p = random_params(seed + 100);
    std::mt19937_64 rng(seed + 7);
    std::normal_distribution<double> z;
    std::vector<Eigen::VectorXd> eps{Eigen::VectorXd::NullaryExpr(8, [&] { return z(rng); })};
    const LikelihoodResult r = gp_log_likelihood(v, p, eps);
    const Eigen::VectorXd x = p.pack();
    double worst = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double h = 1e-5 * std::max(1.0, std::abs(x[k]));
      SurrogateParams q = p;
      Eigen::VectorXd xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      q.unpack(xp);
      const double fp = gp_log_likelihood(v, q, eps, false).value;
      q.unpack(xm);
      const double fm = gp_log_likelihood(v, q, eps, false).value;
      const double fd = (fp - fm) / (2 * h);
      const double err = std::abs(fd - r.gradient[k]) / std::max(1e-3, std::abs(fd));
      if (err > worst) worst = err;
      if (err > 1e-4) MESSAGE("k=" << k << " fd=" << fd << " an=" << r.gradient[k]);
    }
    CHECK(worst < 1e-4);
  }
}

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

SurrogateParams plain_params() {
  SurrogateParams p;
  p.hp.log_theta0 = std::log(1.5);
  p.hp.log_theta.setConstant(std::log(2.0));
  p.hp.mean_const = 0.25;
  p.hp.log_noise = std::log(0.1);
  return p;
}

TrainingView single_circuit_view(const std::vector<double>& x, const std::vector<double>& y) {
  const int n = static_cast<int>(x.size());
  TrainingView v{Eigen::MatrixXd::Constant(n, kSolverDims, 0.5), Eigen::MatrixXd::Zero(n, FeatureVector::kSize),
                 Eigen::VectorXd::Map(y.data(), n)};
  for (int i = 0; i < n; ++i) v.x01(i, 0) = x[i];
  return v;
}

const FeatureVector kFeatures{3, 4, 0, 2, 1, 0, 0};

Eigen::Vector4d x_at(double x01) { return Eigen::Vector4d(std::pow(10.0, 14 * x01 - 7), 1, 1, 1); }

Dataset random_dataset(int n, std::uint64_t seed, double (*f)(double)) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Dataset d;
  for (int i = 0; i < n; ++i) {
    const double x01 = u(rng);
    d.add(x_at(x01), kFeatures, f(x01));
  }
  return d;
}

}  // namespace

TEST_CASE("packed parameter layout") {
  CHECK(SurrogateParams::size() == 14 + 519 + 44);
  const SurrogateParams p = random_params(3);
  SurrogateParams q;
  q.unpack(p.pack());
  CHECK((q.pack() - p.pack()).norm() == 0.0);
}

TEST_CASE("kernel factorizes into solver and feature parts") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  GpHyperparams hp;
  hp.log_theta0 = 0.7;
  for (auto& t : hp.log_theta) t = 0.5 * z(rng);
  for (int k = 0; k < 50; ++k) {
    const Eigen::VectorXd a = Eigen::VectorXd::NullaryExpr(kKernelDims, [&] { return z(rng); });
    const Eigen::VectorXd b = Eigen::VectorXd::NullaryExpr(kKernelDims, [&] { return z(rng); });
    const double full = composite_kernel(a, b, hp);
    const double prod = kernel_solver_part(a.head(4), b.head(4), hp) * kernel_feature_part(a.tail(7), b.tail(7), hp) /
                        hp.theta0();
    CHECK(full == doctest::Approx(prod).epsilon(1e-12));
    CHECK(composite_kernel(a, a, hp) == doctest::Approx(hp.theta0()));
    CHECK(full == doctest::Approx(composite_kernel(b, a, hp)));
  }
}

TEST_CASE("likelihood of a single observation") {
  const SurrogateParams p = plain_params();
  const TrainingView v = single_circuit_view({0.3}, {1.2});
  const double s2 = 1.5 + 0.1;
  const double ll = -0.5 * (1.2 - 0.25) * (1.2 - 0.25) / s2 - 0.5 * std::log(s2) - 0.5 * kLog2Pi;
  const LikelihoodResult r = gp_log_likelihood(v, p, {});
  CHECK(r.value + p.warp.kl_divergence() == doctest::Approx(ll).epsilon(1e-12));
  CHECK(r.jitter == 0.0);
}

TEST_CASE("likelihood of two observations by hand") {
  const SurrogateParams p = plain_params();
  const TrainingView v = single_circuit_view({0.2, 0.7}, {-0.4, 0.9});
  // Identity warp, zero MLP: k = 1.5 exp(-2 (0.5)^2).
  const double k12 = 1.5 * std::exp(-2.0 * 0.25);
  const double a = 1.6, det = a * a - k12 * k12;
  const double r1 = -0.4 - 0.25, r2 = 0.9 - 0.25;
  const double quad = (a * r1 * r1 - 2 * k12 * r1 * r2 + a * r2 * r2) / det;
  const double ll = -0.5 * quad - 0.5 * std::log(det) - kLog2Pi;
  CHECK(gp_log_likelihood(v, p, {}).value + p.warp.kl_divergence() == doctest::Approx(ll).epsilon(1e-12));
}

TEST_CASE("duplicate rows without noise need jitter") {
  SurrogateParams p = plain_params();
  p.hp.log_noise = -60.0;
  const TrainingView v = single_circuit_view({0.4, 0.4, 0.6}, {1.0, 1.0, 0.0});
  const LikelihoodResult r = gp_log_likelihood(v, p, {});
  CHECK(r.jitter > 0.0);
  CHECK(r.jitter <= 1e-4);
  CHECK(std::isfinite(r.value));
  CHECK(r.gradient.allFinite());
}

TEST_CASE("posterior interpolates and reverts to the prior far away") {
  SurrogateModel m = make_surrogate();
  m.data = random_dataset(8, 4, [](double x) { return std::sin(6 * x); });
  m.params.hp.log_noise = std::log(1e-12);
  m.fit_scalers();
  m.refresh();
  const TrainingView v = m.view();
  for (int i = 0; i < 8; ++i) {
    const GpPrediction p = predict_latent(m, m.inputs.row(i).transpose());
    CHECK(std::abs(p.mean - v.y[i]) <= 1e-6);
    CHECK(p.variance <= 1e-6);
  }
  Eigen::VectorXd far = m.inputs.row(0).transpose();
  far.tail(7).setConstant(1e3);
  const GpPrediction p = predict_latent(m, far);
  CHECK(p.mean == doctest::Approx(m.params.hp.mean_const).epsilon(1e-12));
  CHECK(p.variance == doctest::Approx(m.params.hp.theta0() + m.params.hp.noise_var()).epsilon(1e-12));
}

TEST_CASE("posterior variance is never negative") {
  SurrogateModel m = make_surrogate();
  const Dataset d = random_dataset(30, 8, [](double x) { return std::cos(12 * x); });
  for (int r = 0; r < 3; ++r) train_surrogate(m, d);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  double lowest = 1.0;
  for (int k = 0; k < 100000; ++k) {
    const Eigen::Vector4d x(std::pow(10.0, 14 * u(rng) - 7), std::pow(10.0, 14 * u(rng) - 7),
                            std::pow(10.0, 14 * u(rng) - 7), std::pow(10.0, 14 * u(rng) - 7));
    lowest = std::min(lowest, gp_predict(x, kFeatures, m).variance);
  }
  CHECK(lowest >= 0.0);
}

TEST_CASE("training input checks") {
  SurrogateModel m = make_surrogate();
  Dataset one;
  one.add(x_at(0.5), kFeatures, 10);
  CHECK_THROWS_AS(train_surrogate(m, one), std::invalid_argument);
  CHECK_THROWS_AS(one.add(x_at(0.5), kFeatures, std::nan("")), std::invalid_argument);
  CHECK_THROWS_AS(gp_predict(x_at(0.5), kFeatures, make_surrogate()), std::logic_error);
}

TEST_CASE("all-equal targets give a constant model") {
  SurrogateModel m = make_surrogate();
  Dataset d = random_dataset(6, 1, [](double) { return 42.0; });
  train_surrogate(m, d);
  CHECK(m.degenerate);
  for (double x01 : {0.0, 0.3, 0.9}) CHECK(gp_predict(x_at(x01), kFeatures, m).mean == doctest::Approx(42.0));
}

TEST_CASE("a training round never lowers the objective") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SurrogateConfig c;
    c.train_warp = false;
    c.seed = seed;
    SurrogateModel m = make_surrogate(c);
    const Dataset d = random_dataset(15, seed, [](double x) { return x * x; });
    for (int r = 0; r < 4; ++r) {
      const SurrogateParams before = m.params;
      train_surrogate(m, d);
      const TrainingView v = m.view();
      CHECK(gp_log_likelihood(v, m.params, {}, false).value >= gp_log_likelihood(v, before, {}, false).value);
    }
  }
}

TEST_CASE("learned warp beats a fixed warp on a non-stationary response") {
  auto f = [](double x) { return std::sin(10 * x * x * x); };
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset d = random_dataset(30, seed, f);
    double rmse[2];
    for (int mode = 0; mode < 2; ++mode) {
      SurrogateConfig c;
      c.train_warp = mode == 0;
      c.seed = seed;
      SurrogateModel m = make_surrogate(c);
      for (int r = 0; r < 20; ++r) train_surrogate(m, d);
      std::mt19937_64 rng(1000 + seed);
      std::uniform_real_distribution<double> u(0, 1);
      double se = 0.0;
      for (int i = 0; i < 50; ++i) {
        const double x01 = u(rng);
        se += std::pow(gp_predict(x_at(x01), kFeatures, m).mean - f(x01), 2);
      }
      rmse[mode] = std::sqrt(se / 50);
    }
    wins += rmse[0] < rmse[1];
  }
  CHECK(wins >= 4);
}

TEST_CASE("model JSON round trip") {
  SurrogateConfig c;
  c.log_targets = true;
  c.seed = 9;
  SurrogateModel m = make_surrogate(c);
  const Dataset d = random_dataset(12, 2, [](double x) { return 30 + 20 * x; });
  train_surrogate(m, d);
  train_surrogate(m, d);
  const SurrogateModel back = model_from_json(model_to_json(m));
  CHECK(back.rounds == m.rounds);
  CHECK(back.data.size() == m.data.size());
  CHECK(back.config.log_targets);
  for (double x01 : {0.05, 0.5, 0.77}) {
    const GpPrediction a = gp_predict(x_at(x01), kFeatures, m), b = gp_predict(x_at(x01), kFeatures, back);
    CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-12));
    CHECK(a.variance == doctest::Approx(b.variance).epsilon(1e-10));
  }
  CHECK(model_to_json(back) == model_to_json(m));
  CHECK_THROWS(model_from_json("{\"version\": 99}"));
}
