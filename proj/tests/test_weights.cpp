#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "dmpc/weights.hpp"

using namespace dmpc;
using Catch::Approx;

namespace {

WeightConfig paper_like_config() {
  WeightConfig cfg;
  Vec q_main(6), q_last(6), q_couple(6), r(3);
  q_main << 28, 28, 18, 18, 40, 18;
  q_last << 14, 14, 9, 9, 20, 9;
  q_couple << 14, 14, 9, 9, 20, 9;
  r << 0.1, 0.1, 0.1;
  cfg.q_diag = {q_main, q_main, q_main, q_last};
  cfg.q_couple_diag = q_couple;
  cfg.r_diag = r;
  return cfg;
}

}  // namespace

TEST_CASE("default weight set builds and is positive definite") {
  auto g = CouplingGraph::path(4);
  auto m = zoh_discretize(0.05);
  auto w = build_weights(g, m, paper_like_config());

  CHECK(w.Qii[3](0, 0) == Approx(14.0));
  CHECK(w.Qii[3](4, 4) == Approx(20.0));
  CHECK(w.Q_offdiag(0, 1)(0, 0) == Approx(-14.0));

  Eigen::SelfAdjointEigenSolver<Mat> esq(w.Q_central), esp(w.P_central);
  CHECK(esq.eigenvalues().minCoeff() > 1.0);
  CHECK(esp.eigenvalues().minCoeff() > 0.0);

  // Coupling this strong forces a terminal coupling scale below one.
  CHECK(w.theta > 0.5);
  CHECK(w.theta < 1.0);

  // Non-neighbor blocks are zero.
  CHECK(w.Q_central.block(0, 12, 6, 6).cwiseAbs().maxCoeff() == 0.0);
  CHECK(w.P_central.block(0, 18, 6, 6).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("per-agent splitting remainders") {
  auto g = CouplingGraph::path(4);
  auto m = zoh_discretize(0.05);
  auto w = build_weights(g, m, paper_like_config());

  Vec expect(6);
  expect << 14, 14, 9, 9, 20, 9;
  CHECK((w.Qself[0].diagonal() - expect).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(w.Qself[1].cwiseAbs().maxCoeff() < 1e-12);
  CHECK(w.Qself[2].cwiseAbs().maxCoeff() < 1e-12);
  CHECK(w.Qself[3].cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < 4; ++i) {
    Eigen::SelfAdjointEigenSolver<Mat> es(w.Pself[i]);
    CHECK(es.eigenvalues().minCoeff() >= -1e-9);
  }
}

// The split stage/terminal forms summed over agents (with copies equal to the
// owner states) must reproduce the centralized quadratic exactly.
TEST_CASE("splitting reassembles the centralized quadratic") {
  auto g = CouplingGraph::path(4);
  auto m = zoh_discretize(0.05);
  auto w = build_weights(g, m, paper_like_config());

  std::mt19937_64 rng(7);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 10; ++trial) {
    Vec x(24);
    for (int i = 0; i < 24; ++i) x(i) = dist(rng);

    double split_stage = 0.0, split_term = 0.0;
    for (int i = 0; i < 4; ++i) {
      Vec xi = x.segment(6 * i, 6);
      split_stage += 0.5 * xi.dot(w.Qself[i] * xi);
      split_term += 0.5 * xi.dot(w.Pself[i] * xi);
      for (int j : g.neighbors(i)) {
        Vec d = xi - x.segment(6 * j, 6);
        split_stage += 0.25 * d.dot(w.W_of(i, j) * d);
        split_term += 0.25 * w.theta * d.dot(w.M_of(i, j) * d);
      }
    }
    const double central_stage = 0.5 * x.dot(w.Q_central * x);
    const double central_term = 0.5 * x.dot(w.P_central * x);
    CHECK(split_stage == Approx(central_stage).epsilon(1e-12));
    CHECK(split_term == Approx(central_term).epsilon(1e-12));
  }
}

TEST_CASE("single agent keeps the plain Riccati terminal") {
  CouplingGraph g(1, {});
  auto m = zoh_discretize(0.05);
  WeightConfig cfg;
  Vec q(6), r(3);
  q << 28, 28, 18, 18, 40, 18;
  r << 0.1, 0.1, 0.1;
  cfg.q_diag = {q};
  cfg.r_diag = r;
  auto w = build_weights(g, m, cfg);
  CHECK(w.theta == 1.0);
  CHECK((w.P_central - w.Pii[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((w.Qself[0] - w.Qii[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("weights that cannot be split convexly are rejected") {
  auto g = CouplingGraph::path(3);
  auto m = zoh_discretize(0.05);
  WeightConfig cfg;
  Vec q(6), r(3), couple(6);
  q << 1, 1, 1, 1, 1, 1;
  couple << 14, 14, 9, 9, 20, 9;  // far stronger than the diagonal
  r << 0.1, 0.1, 0.1;
  cfg.q_diag = {q, q, q};
  cfg.q_couple_diag = couple;
  cfg.r_diag = r;
  CHECK_THROWS_AS(build_weights(g, m, cfg), NumericError);
}

TEST_CASE("weight input validation") {
  auto g = CouplingGraph::path(2);
  auto m = zoh_discretize(0.05);
  WeightConfig cfg = paper_like_config();
  cfg.q_diag = {cfg.q_diag[0]};  // wrong count
  CHECK_THROWS_AS(build_weights(g, m, cfg), ConfigError);

  cfg = paper_like_config();
  cfg.q_diag = {cfg.q_diag[0], cfg.q_diag[1]};
  cfg.mu = 0.0;
  CHECK_THROWS_AS(build_weights(g, m, cfg), ConfigError);
}
