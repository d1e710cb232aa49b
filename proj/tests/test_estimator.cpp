#include <catch2/catch_amalgamated.hpp>

#include "dmpc/estimator.hpp"
#include "dmpc/plant.hpp"

using namespace dmpc;
using Catch::Approx;

TEST_CASE("exact init and noiseless data track truth") {
  auto m = zoh_discretize(0.05);
  auto em = extend_with_disturbance(m);
  Plant plant(m, Vec::Zero(6), Vec::Zero(3), 1);
  DisturbanceEstimator est(em, ExtendedState{});

  Vec u = (Vec(3) << 0.3, -0.2, 1.0).finished();
  for (int t = 0; t < 50; ++t) {
    plant.step(u);
    est.step(u, plant.measure(SensorNoise::off()));
    CHECK((est.estimate().x() - plant.state()).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK(est.estimate().d().lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("constant disturbance is identified within five seconds") {
  auto m = zoh_discretize(0.05);
  auto em = extend_with_disturbance(m);
  Vec d_true = (Vec(3) << 0.5, -0.3, 0.0).finished();
  Plant plant(m, Vec::Zero(6), d_true, 2);
  DisturbanceEstimator est(em, ExtendedState{});

  int converged_at = -1;
  for (int t = 0; t < 100; ++t) {  // 5 s at 50 ms
    plant.step(Vec::Zero(3));
    est.step(Vec::Zero(3), plant.measure(SensorNoise::off()));
    const Vec d_hat = est.estimate().d();
    const bool close = std::abs(d_hat(0) - 0.5) <= 0.05 * 0.5 &&
                       std::abs(d_hat(1) + 0.3) <= 0.05 * 0.3 && std::abs(d_hat(2)) <= 0.02;
    if (close && converged_at < 0) converged_at = t;
    if (!close) converged_at = -1;
  }
  REQUIRE(converged_at >= 0);
  CHECK(converged_at * 0.05 <= 5.0);
}

TEST_CASE("stationary plant yields vanishing velocity estimate") {
  auto m = zoh_discretize(0.15);
  auto em = extend_with_disturbance(m);
  ExtendedState wrong;
  wrong.xi(3) = 0.4;  // bogus initial velocity belief
  DisturbanceEstimator est(em, wrong);
  Vec y = Vec::Zero(3);
  for (int t = 0; t < 60; ++t) est.step(Vec::Zero(3), y);
  CHECK(est.estimate().x().tail(3).lpNorm<Eigen::Infinity>() < 1e-4);
}

TEST_CASE("covariance stays symmetric positive definite") {
  auto m = zoh_discretize(0.05);
  auto em = extend_with_disturbance(m);
  Plant plant(m, Vec::Zero(6), (Vec(3) << 0.2, 0.1, -0.4).finished(), 5);
  DisturbanceEstimator est(em, ExtendedState{});
  SensorNoise n;
  for (int t = 0; t < 200; ++t) {
    plant.step(Vec::Zero(3));
    est.step(Vec::Zero(3), plant.measure(n));
    const Mat& P = est.covariance();
    CHECK((P - P.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(Eigen::LLT<Mat>(P).info() == Eigen::Success);
  }
}

TEST_CASE("innovations are unbiased and nearly white under nominal noise") {
  auto m = zoh_discretize(0.05);
  auto em = extend_with_disturbance(m);
  Plant plant(m, Vec::Zero(6), Vec::Zero(3), 11);
  DisturbanceEstimator est(em, ExtendedState{});
  SensorNoise n;

  const int burn = 100, count = 2000;
  std::vector<double> innov;
  for (int t = 0; t < burn + count; ++t) {
    plant.step(Vec::Zero(3));
    Vec e = est.step(Vec::Zero(3), plant.measure(n));
    if (t >= burn) innov.push_back(e(0));
  }
  double mean = 0, var = 0, lag1 = 0;
  for (double v : innov) mean += v;
  mean /= count;
  for (double v : innov) var += (v - mean) * (v - mean);
  var /= count;
  for (int i = 1; i < count; ++i) lag1 += (innov[i] - mean) * (innov[i - 1] - mean);
  lag1 /= (count - 1) * var;
  CHECK(std::abs(mean) < 4.0 * std::sqrt(var / count));
  CHECK(std::abs(lag1) < 0.1);
}

TEST_CASE("estimator rejects broken configurations") {
  auto m = zoh_discretize(0.05);
  auto em = extend_with_disturbance(m);
  KalmanConfig bad;
  bad.meas_diag.setZero();
  CHECK_THROWS_AS(DisturbanceEstimator(em, ExtendedState{}, bad), ConfigError);
}
