#include <catch2/catch_amalgamated.hpp>

#include "dmpc/obstacle.hpp"

using namespace dmpc;
using Catch::Approx;

TEST_CASE("static obstacle stays put") {
  ObstacleMotion o;
  o.kind = ObstacleMotion::Kind::Fixed;
  o.cx = 1.0;
  o.cy = 0.5;
  CHECK(obstacle_position(o, 0.0).isApprox(Eigen::Vector2d(1.0, 0.5)));
  CHECK(obstacle_position(o, 37.0).isApprox(Eigen::Vector2d(1.0, 0.5)));
}

TEST_CASE("circular obstacle quarter period") {
  ObstacleMotion o;
  o.kind = ObstacleMotion::Kind::Circular;
  o.cx = 1.0;
  o.cy = 0.5;
  o.orbit_radius = 0.3;
  o.period_s = 8.0;
  auto p = obstacle_position(o, 2.0);
  CHECK(p(0) == Approx(1.0).margin(1e-12));
  CHECK(p(1) == Approx(0.8));
  auto full = obstacle_position(o, 8.0);
  CHECK(full(0) == Approx(1.3));
  CHECK(full(1) == Approx(0.5).margin(1e-12));
}

TEST_CASE("linear obstacle traverses and wraps") {
  ObstacleMotion o;
  o.kind = ObstacleMotion::Kind::Linear;
  o.cx = 1.2;
  o.cy = 1.05;
  o.span_y = -1.1;
  o.period_s = 5.0;
  CHECK(obstacle_position(o, 0.0)(1) == Approx(1.05));
  CHECK(obstacle_position(o, 2.5)(1) == Approx(1.05 - 0.55));
  CHECK(obstacle_position(o, 5.0)(1) == Approx(1.05).margin(1e-12));
  CHECK(obstacle_position(o, 7.5)(1) == Approx(0.5));
}

TEST_CASE("querying an absent obstacle fails") {
  ObstacleMotion o;
  CHECK_FALSE(o.active());
  CHECK_THROWS_AS(obstacle_position(o, 1.0), NumericError);
}
