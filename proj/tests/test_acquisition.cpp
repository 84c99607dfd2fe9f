#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "boapta/acquisition.hpp"

using namespace boapta;

namespace {

const FeatureVector kFeatures{3, 4, 0, 2, 1, 0, 0};
const FeatureVector kOther{9, 12, 2, 6, 1, 3, 0};

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi); }
double cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Differential entropy of N(mu, s^2) restricted to (-inf, top], by
// trapezoid quadrature of -p ln p.
double truncated_entropy(double mu, double s, double top) {
  const double z = cdf((top - mu) / s);
  const double lo = mu - 12 * s;
  const int n = 200000;
  const double h = (top - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double y = lo + i * h;
    const double p = phi((y - mu) / s) / (s * z);
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    if (p > 0) acc -= w * p * std::log(p);
  }
  return acc * h;
}

// Iteration-count-like response with a minimum near x1 = 1e2, x2 = 1e-3.
double response(const Eigen::Vector4d& x) {
  const double a = std::log10(x[0]) - 2, b = std::log10(x[1]) + 3;
  return 50 + 4 * a * a + 2 * b * b;
}

SurrogateModel trained_model(std::uint64_t seed, int n = 25) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-7, 7);
  Dataset d;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector4d x(std::pow(10, u(rng)), std::pow(10, u(rng)), std::pow(10, u(rng)), std::pow(10, u(rng)));
    d.add(x, i % 5 == 4 ? kOther : kFeatures, response(x) + (i % 5 == 4 ? 30 : 0));
  }
  SurrogateConfig c;
  c.seed = seed;
  c.log_targets = true;
  SurrogateModel m = make_surrogate(c);
  for (int r = 0; r < 5; ++r) train_surrogate(m, d);
  return m;
}

AcquisitionConfig config_for(AcquisitionKind kind, std::uint64_t seed = 0) {
  AcquisitionConfig c;
  c.kind = kind;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("acquisition names") {
  CHECK(parse_acquisition("EI") == AcquisitionKind::EI);
  CHECK(parse_acquisition("ucb") == AcquisitionKind::UCB);
  CHECK(parse_acquisition("Mes") == AcquisitionKind::MES);
  CHECK_THROWS_AS(parse_acquisition("pi"), std::invalid_argument);
  for (auto k : {AcquisitionKind::EI, AcquisitionKind::UCB, AcquisitionKind::MES})
    CHECK(parse_acquisition(to_string(k)) == k);
  AcquisitionConfig c;
  c.restarts = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("unconstrained reparameterisation") {
  CHECK((z_to_x(Eigen::Vector4d::Zero()) - Eigen::Vector4d::Ones()).norm() < 1e-12);
  const double s = std::log(0.75 / 0.25);
  CHECK(z_to_x(Eigen::Vector4d::Constant(s))[0] == doctest::Approx(std::pow(10.0, 3.5)).epsilon(1e-12));
  CHECK(z_to_x(Eigen::Vector4d::Constant(s))[0] == doctest::Approx(3162.28).epsilon(1e-6));
  const Eigen::Vector4d hi = z_to_x(Eigen::Vector4d::Constant(40)), lo = z_to_x(Eigen::Vector4d::Constant(-40));
  CHECK(hi[0] <= 1e7);
  CHECK(hi[0] == doctest::Approx(1e7));
  CHECK(lo[0] >= 1e-7);
  CHECK(lo[0] == doctest::Approx(1e-7));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-6, 6);
  for (int k = 0; k < 100; ++k) {
    const Eigen::Vector4d z(u(rng), u(rng), u(rng), u(rng));
    CHECK((x_to_z(z_to_x(z)) - z).norm() < 1e-8);
    const Eigen::Vector4d j = z_to_x_jacobian(z);
    for (int d = 0; d < 4; ++d) {
      Eigen::Vector4d zp = z, zm = z;
      zp[d] += 1e-6;
      zm[d] -= 1e-6;
      CHECK(j[d] == doctest::Approx((z_to_x(zp)[d] - z_to_x(zm)[d]) / 2e-6).epsilon(1e-5));
    }
  }
}

TEST_CASE("expected improvement values") {
  CHECK(expected_improvement(0, 1, 0) == doctest::Approx(1 / std::sqrt(2 * std::numbers::pi)).epsilon(1e-12));
  CHECK(expected_improvement(0, 1, 0) == doctest::Approx(0.39894).epsilon(1e-5));
  CHECK(expected_improvement(2, 0, 1) == 1.0);
  CHECK(expected_improvement(0, 0, 1) == 0.0);
  CHECK_THROWS_AS(expected_improvement(0, -1, 0), std::invalid_argument);

  std::mt19937_64 rng(7);
  const double mu = 0.3, var = 2.0, best = 1.1;
  std::normal_distribution<double> n(mu, std::sqrt(var));
  double acc = 0.0, acc2 = 0.0;
  const int m = 1000000;
  for (int i = 0; i < m; ++i) {
    const double v = std::max(n(rng) - best, 0.0);
    acc += v;
    acc2 += v * v;
  }
  const double mean = acc / m, se = std::sqrt((acc2 / m - mean * mean) / m);
  CHECK(std::abs(expected_improvement(mu, var, best) - mean) < 4 * se);
}

TEST_CASE("upper confidence bound") {
  CHECK(ucb_score(1, 4, 0.1) == doctest::Approx(1.63246).epsilon(1e-5));
  CHECK(ucb_score(-2, 0, 3) == -2.0);
  CHECK_THROWS_AS(ucb_score(0, -1, 0.1), std::invalid_argument);
}

TEST_CASE("max-value entropy values") {
  CHECK(mes_score(0, 1, {0.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(mes_score(0, 1, {10.0}) < 1e-15);
  CHECK(mes_score(0, 1, {0.0, 10.0}) == doctest::Approx(0.5 * std::log(2.0)));
  CHECK_THROWS_AS(mes_score(0, 1, {}), std::invalid_argument);
  CHECK_THROWS_AS(mes_score(0, 0, {1.0}), std::invalid_argument);

  // Entropy reduction from truncating the predictive at y*.
  for (double top : {-1.5, -0.2, 0.7, 2.0}) {
    const double mu = 0.4, s = 1.3;
    const double full = 0.5 * std::log(2 * std::numbers::pi * std::numbers::e * s * s);
    CHECK(mes_score(mu, s * s, {top}) == doctest::Approx(full - truncated_entropy(mu, s, top)).epsilon(1e-6));
  }
  // Deep in the lower tail the score keeps growing instead of overflowing.
  CHECK(std::isfinite(mes_score(0, 1, {-40.0})));
  CHECK(mes_score(0, 1, {-40.0}) > mes_score(0, 1, {-20.0}));
}

TEST_CASE("sampled maximum values") {
  std::vector<GpPrediction> c(20, GpPrediction{0.0, 1.0});
  std::mt19937_64 rng(3);
  std::vector<double> s = sample_max_values(c, 20001, -1e9, rng);
  std::nth_element(s.begin(), s.begin() + 10000, s.end());
  // Median of the max of 20 standard normals: Phi(y)^20 = 1/2.
  double a = 0, b = 5;
  for (int i = 0; i < 100; ++i) {
    const double m = 0.5 * (a + b);
    (std::pow(cdf(m), 20) < 0.5 ? a : b) = m;
  }
  CHECK(s[10000] == doctest::Approx(a).epsilon(0.02));

  const std::vector<double> floored = sample_max_values(c, 100, 3.0, rng);
  CHECK(*std::min_element(floored.begin(), floored.end()) >= 3.0);
  CHECK_THROWS_AS(sample_max_values({}, 3, 0, rng), std::invalid_argument);
}

TEST_CASE("space-filling designs") {
  const Eigen::MatrixXd h = halton_points(4);
  CHECK(h(0, 0) == doctest::Approx(0.5));
  CHECK(h(1, 0) == doctest::Approx(0.25));
  CHECK(h(0, 1) == doctest::Approx(1.0 / 3));
  CHECK(h(3, 2) == doctest::Approx(4.0 / 5));
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd l = latin_hypercube(16, rng);
  for (int d = 0; d < 4; ++d) {
    std::vector<int> bins(16, 0);
    for (int i = 0; i < 16; ++i) ++bins[static_cast<int>(l(i, d) * 16)];
    CHECK(std::all_of(bins.begin(), bins.end(), [](int b) { return b == 1; }));
  }
}

TEST_CASE("acquisition gradients match central differences") {
  const SurrogateModel m = trained_model(2);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  for (auto kind : {AcquisitionKind::EI, AcquisitionKind::UCB, AcquisitionKind::MES}) {
    const AcquisitionSurface s(m, kFeatures, config_for(kind));
    for (int k = 0; k < 20; ++k) {
      const Eigen::Vector4d z(u(rng), u(rng), u(rng), u(rng));
      Eigen::Vector4d g;
      s.value(z, &g);
      for (int d = 0; d < 4; ++d) {
        Eigen::Vector4d zp = z, zm = z;
        zp[d] += 1e-6;
        zm[d] -= 1e-6;
        const double fd = (s.value(zp) - s.value(zm)) / 2e-6;
        CHECK(g[d] == doctest::Approx(fd).epsilon(1e-4).scale(1e-3));
      }
    }
  }
}

TEST_CASE("incumbent comes from the circuit's own rows") {
  const SurrogateModel m = trained_model(2);
  const AcquisitionSurface own(m, kFeatures, config_for(AcquisitionKind::EI));
  CHECK(own.has_incumbent());
  double best = 1e300;
  for (std::size_t i = 0; i < m.data.size(); ++i)
    if (m.data.features[i] == kFeatures) best = std::min(best, m.data.y[i]);
  CHECK(own.incumbent() == doctest::Approx(-(std::log(best) - m.y_mean) / m.y_scale).epsilon(1e-9));
  const AcquisitionSurface unseen(m, FeatureVector{1, 1, 1, 1, 1, 1, 1}, config_for(AcquisitionKind::EI));
  CHECK_FALSE(unseen.has_incumbent());
  const AcquisitionSurface mes(m, kFeatures, config_for(AcquisitionKind::MES));
  CHECK(mes.max_samples().size() == 10u);
  for (double v : mes.max_samples()) CHECK(v >= mes.incumbent());
}

TEST_CASE("optimizer output stays in the box, ascends and is deterministic") {
  const SurrogateModel m = trained_model(5);
  for (auto kind : {AcquisitionKind::EI, AcquisitionKind::UCB, AcquisitionKind::MES}) {
    const AcquisitionConfig c = config_for(kind, 11);
    const AcquisitionResult r = optimize_acquisition(m, kFeatures, c);
    CHECK_FALSE(r.fallback);
    CHECK(r.z.cwiseAbs().maxCoeff() <= c.z_bound);
    CHECK((r.x - z_to_x(r.z)).norm() <= 1e-9 * r.x.norm());
    REQUIRE_FALSE(r.start_values.empty());
    CHECK(r.value >= *std::max_element(r.start_values.begin(), r.start_values.end()));
    const AcquisitionResult again = optimize_acquisition(m, kFeatures, c);
    CHECK(again.z == r.z);
    CHECK(again.value == r.value);
  }
}

TEST_CASE("optimizer finds the grid-search optimum along each axis") {
  const SurrogateModel m = trained_model(6);
  const AcquisitionConfig c = config_for(AcquisitionKind::EI, 1);
  const AcquisitionSurface s(m, kFeatures, c);
  const AcquisitionResult r = optimize_acquisition(m, kFeatures, c);

  // No point of a dense space-filling grid does better.
  const Eigen::MatrixXd grid = halton_points(20000);
  double grid_best = 0.0;
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    Eigen::Vector4d z = (grid.row(i).transpose().array() * 2 * c.z_bound - c.z_bound).matrix();
    grid_best = std::max(grid_best, s.value(z));
  }
  CHECK(r.value >= 0.99 * grid_best);

  // Along each axis through the optimum, the 1-D grid maximum lies within
  // 5% of the 14-decade log range.
  for (int d = 0; d < 4; ++d) {
    double best = -1e300, arg = 0.0;
    for (int i = 0; i <= 4000; ++i) {
      Eigen::Vector4d z = r.z;
      z[d] = -c.z_bound + i * (2 * c.z_bound / 4000);
      const double v = s.value(z);
      if (v > best) {
        best = v;
        arg = std::log10(z_to_x(z)[d]);
      }
    }
    if (best > r.value * (1 + 1e-9)) CHECK(std::abs(arg - std::log10(r.x[d])) <= 0.05 * 14);
  }
}

TEST_CASE("a constant posterior falls back to the centre point") {
  SurrogateModel m = make_surrogate();
  Dataset d;
  for (int i = 0; i < 5; ++i) d.add(Eigen::Vector4d::Constant(std::pow(10.0, i - 2)), kFeatures, 77.0);
  train_surrogate(m, d);
  const AcquisitionResult r = optimize_acquisition(m, kFeatures, config_for(AcquisitionKind::EI));
  CHECK(r.fallback);
  CHECK(r.z == Eigen::Vector4d::Zero());
  CHECK(optimize_acquisition(make_surrogate(), kFeatures, config_for(AcquisitionKind::MES)).fallback);
}
