#include "support.hpp"

#include "ded/endpoint_diffusion.hpp"
#include "ded/errors.hpp"

#include <doctest.h>

#include <numbers>

using namespace ded;
using ded::test::gradient_error;
using ded::test::random_matrix;

TEST_CASE("linear schedule endpoints, cumulative products and validation") {
  const auto s = make_schedule(100, 1e-4, 0.05);
  CHECK(s.beta_at(1) == 1e-4);
  CHECK(s.beta_at(100) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(s.alpha_bar_at(0) == 1.0);
  double prod = 1.0;
  for (int k = 1; k <= 100; ++k) {
    prod *= 1.0 - s.beta_at(k);
    CHECK(s.alpha_bar_at(k) == doctest::Approx(prod).epsilon(1e-14));
  }
  CHECK_THROWS_AS(make_schedule(0, 1e-4, 0.05), UsageError);
  CHECK_THROWS_AS(make_schedule(10, 0.1, 0.05), UsageError);
  CHECK_THROWS_AS(make_schedule(10, 1e-4, 1.0), UsageError);
  CHECK_THROWS_AS(s.check_step(101), UsageError);
  CHECK_THROWS_AS(s.check_step(0), UsageError);
}

TEST_CASE("closed-form forward diffusion matches the composed one-step chain") {
  const auto s = make_schedule(20, 1e-3, 0.1);
  const Vec2 y0{1.5, -0.7};
  const int k = 20, n = 20000;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  double mx = 0.0, my = 0.0, vx = 0.0, vy = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec2 y = y0;
    for (int j = 1; j <= k; ++j) y = forward_step(y, j, Vec2{normal(rng), normal(rng)}, s);
    mx += y.x;
    my += y.y;
    vx += y.x * y.x;
    vy += y.y * y.y;
  }
  mx /= n;
  my /= n;
  vx = vx / n - mx * mx;
  vy = vy / n - my * my;
  const double ab = s.alpha_bar_at(k);
  const double var = 1.0 - ab;
  const double se_mean = std::sqrt(var / n);
  const double se_var = var * std::sqrt(2.0 / (n - 1));
  CHECK(std::abs(mx - std::sqrt(ab) * y0.x) < 3 * se_mean);
  CHECK(std::abs(my - std::sqrt(ab) * y0.y) < 3 * se_mean);
  CHECK(std::abs(vx - var) < 3 * se_var);
  CHECK(std::abs(vy - var) < 3 * se_var);
}

TEST_CASE("posterior collapses onto Y0 at the first step") {
  const auto s = make_schedule(100, 1e-4, 0.05);
  const Vec2 y0{0.3, -2.0}, yk{5.0, 7.0};
  const Vec2 m = posterior_mean(yk, y0, 1, s);
  CHECK(m.x == y0.x);
  CHECK(m.y == y0.y);
  CHECK(s.posterior_variance(1) == 0.0);
}

TEST_CASE("posterior mean and variance match a grid Bayes computation") {
  const auto s = make_schedule(50, 1e-3, 0.08);
  const double y0 = 0.8, yk = -0.4;
  for (int k : {2, 10, 33, 50}) {
    // p(y_{k-1} | y_k, y0) ~ N(y_k; sqrt(a_k) y_{k-1}, 1 - a_k) N(y_{k-1}; sqrt(ab_{k-1}) y0, 1 - ab_{k-1})
    const double a = s.alpha_at(k), abp = s.alpha_bar_at(k - 1);
    const double lo = -6.0, hi = 6.0;
    const int n = 200001;
    const double h = (hi - lo) / (n - 1);
    double z = 0.0, m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = lo + i * h;
      const double lik = std::exp(-0.5 * (yk - std::sqrt(a) * x) * (yk - std::sqrt(a) * x) / (1.0 - a));
      const double prior = std::exp(-0.5 * (x - std::sqrt(abp) * y0) * (x - std::sqrt(abp) * y0) / (1.0 - abp));
      const double w = lik * prior;
      z += w;
      m1 += w * x;
      m2 += w * x * x;
    }
    const double mean = m1 / z, var = m2 / z - mean * mean;
    const Vec2 pm = posterior_mean(Vec2{yk, yk}, Vec2{y0, y0}, k, s);
    CHECK(pm.x == doctest::Approx(mean).epsilon(1e-7));
    CHECK(s.posterior_variance(k) == doctest::Approx(var).epsilon(1e-6));
  }
}

TEST_CASE("reparameterized mean with the true noise equals the posterior mean") {
  const auto s = make_schedule(100, 1e-4, 0.05);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + trial % 100;
    const Vec2 y0{normal(rng), normal(rng)}, eps{normal(rng), normal(rng)};
    const Vec2 yk = forward_diffuse(y0, k, eps, s);
    const Vec2 a = reparam_mean(yk, k, eps, s), b = posterior_mean(yk, y0, k, s);
    CHECK(std::abs(a.x - b.x) <= 1e-9);
    CHECK(std::abs(a.y - b.y) <= 1e-9);
  }
  CHECK_THROWS_AS(reparam_mean(Vec2{0, 0}, 3, Vec2{std::nan(""), 0}, s), NumericError);
}

TEST_CASE("ancestral sampling with the exact noise of a point mass returns the point") {
  const auto s = make_schedule(100, 1e-4, 0.05);
  const Eigen::RowVector2d y0(2.0, -1.0);
  const NoisePredictor oracle = [&](const Matrix& y, int k) {
    const double ab = s.alpha_bar_at(k);
    Matrix eps = y;
    eps.rowwise() -= std::sqrt(ab) * y0;
    return Matrix(eps / std::sqrt(1.0 - ab));
  };
  const auto set = sample_endpoints(oracle, 50, s, 9);
  CHECK((set.samples.rowwise() - y0).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(set.degenerate);
  CHECK(set.covariance.determinant() > 0.0);
}

TEST_CASE("ancestral sampling with the exact score of a Gaussian recovers it") {
  // Long schedule so that alpha_bar_K is close to zero.
  const auto s = make_schedule(300, 1e-4, 0.05);
  const double m = 1.0, sd = 0.5;
  const NoisePredictor oracle = [&](const Matrix& y, int k) {
    const double ab = s.alpha_bar_at(k);
    const double total = ab * sd * sd + 1.0 - ab;
    return Matrix((y.array() - std::sqrt(ab) * m) * std::sqrt(1.0 - ab) / total);
  };
  const auto set = sample_endpoints(oracle, 4000, s, 2);
  CHECK(set.mean.x == doctest::Approx(m).epsilon(0.03));
  CHECK(set.mean.y == doctest::Approx(m).epsilon(0.03));
  CHECK(std::sqrt(set.covariance(0, 0)) == doctest::Approx(sd).epsilon(0.05));
  CHECK(std::abs(set.covariance(0, 1)) < 0.02);
}

TEST_CASE("per-chain streams make samples independent of the chain count") {
  const auto s = make_schedule(30, 1e-3, 0.05);
  const NoisePredictor zero = [](const Matrix& y, int) { return Matrix(Matrix::Zero(y.rows(), 2)); };
  const auto a = sample_endpoints(zero, 10, s, 77);
  const auto b = sample_endpoints(zero, 20, s, 77);
  CHECK(a.samples == b.samples.topRows(10));
  CHECK(sample_endpoints(zero, 10, s, 78).samples != a.samples);
}

TEST_CASE("density fit uses two-pass mean and unbiased covariance") {
  Matrix pts(4, 2);
  pts << 0, 0, 2, 0, 0, 2, 2, 2;
  const auto set = fit_density(pts);
  CHECK(set.mean.x == 1.0);
  CHECK(set.mean.y == 1.0);
  CHECK(set.covariance(0, 0) == doctest::Approx(4.0 / 3.0 + kCovarianceJitter));
  CHECK(set.covariance(0, 1) == doctest::Approx(0.0));
  CHECK_FALSE(set.degenerate);

  Matrix line(3, 2);
  line << 0, 0, 1, 1, 2, 2;
  const auto flat = fit_density(line);
  CHECK(flat.degenerate);
  CHECK(std::isfinite(endpoint_nll(Vec2{1, 1}, flat)));
  CHECK_THROWS_AS(fit_density(Matrix::Zero(1, 2)), UsageError);
}

TEST_CASE("unit isotropic Gaussian NLL at the mode is log(2 pi)") {
  CHECK(std::abs(gaussian_nll(Vec2{3, 4}, Vec2{3, 4}, Eigen::Matrix2d::Identity()) -
                 std::log(2.0 * std::numbers::pi)) <= 1e-12);
}

TEST_CASE("Gaussian and KDE endpoint densities integrate to one") {
  std::mt19937_64 rng(5);
  Matrix pts = random_matrix(60, 2, rng);
  pts.col(1) = 0.5 * pts.col(0) + 0.8 * pts.col(1);
  for (auto kind : {DensityKind::gaussian, DensityKind::kde}) {
    const auto set = fit_density(pts, kind);
    const double h = 0.02;
    double mass = 0.0;
    for (double x = -8.0; x <= 8.0; x += h) {
      for (double y = -8.0; y <= 8.0; y += h) mass += std::exp(-endpoint_nll(Vec2{x, y}, set)) * h * h;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("denoiser bind agrees with the differentiable forward pass") {
  std::mt19937_64 rng(4);
  nn::ParamStore store;
  const Denoiser d(store, DenoiserConfig{16, 8}, 5, rng);
  const auto s = make_schedule(10, 1e-3, 0.05);
  const Eigen::RowVectorXd f = random_matrix(1, 5, rng).row(0);
  const Matrix y = random_matrix(3, 2, rng);
  const auto bound = d.bind(f, s);
  for (int k : {1, 4, 10}) {
    const std::vector<int> ks(3, k);
    const Matrix fs = f.replicate(3, 1);
    const Matrix ref = d(nn::constant(y), ks, nn::constant(fs)).value();
    CHECK((bound(y, k) - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("noise-MSE loss gradients match central differences") {
  const auto s = make_schedule(100, 1e-4, 0.05);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    nn::ParamStore store;
    const Denoiser d(store, DenoiserConfig{8, 4}, 3, rng);
    const Matrix y0 = random_matrix(4, 2, rng);
    nn::Var f = nn::leaf(random_matrix(4, 3, rng));
    std::vector<nn::Var> leaves{f};
    for (auto& p : store.items()) leaves.push_back(p.var);
    auto loss = [&] {
      std::mt19937_64 draw(seed + 100);
      return diffusion_loss(y0, f, d, s, draw, 2);
    };
    CHECK(gradient_error(loss, leaves) < 1e-4);
  }
}

TEST_CASE("default schedule leaves alpha_bar_K near 0.08") {
  // Not below 0.01: sampling from N(0, I) at K is an approximation here.
  const auto s = make_schedule(100, 1e-4, 0.05);
  long double log_prod = 0.0L;
  for (int k = 0; k < 100; ++k) log_prod += std::log1p(-(1e-4L + (0.05L - 1e-4L) * k / 99.0L));
  CHECK(s.alpha_bar_at(100) == doctest::Approx(static_cast<double>(std::exp(log_prod))).epsilon(1e-12));
  CHECK(s.alpha_bar_at(100) > 0.07);
  CHECK(s.alpha_bar_at(100) < 0.09);
}
