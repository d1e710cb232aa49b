#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "dmpc/reference.hpp"

using namespace dmpc;
using Catch::Approx;

TEST_CASE("clover passes through the center at t=0 and petal tip at T/12") {
  const double amp = 0.4, lap = 30.0, cx = 0.6, cy = 0.5;
  auto p0 = clover_reference(0.0, amp, lap, cx, cy);
  CHECK(p0.x_d(0) == Approx(cx).margin(1e-12));
  CHECK(p0.x_d(1) == Approx(cy).margin(1e-12));

  auto tip = clover_reference(lap / 12.0, amp, lap, cx, cy);
  const double th = std::numbers::pi / 6.0;
  CHECK(tip.x_d(0) == Approx(cx + amp * std::cos(th)));
  CHECK(tip.x_d(1) == Approx(cy + amp * std::sin(th)));
}

TEST_CASE("clover closes after one lap") {
  auto a = clover_reference(0.0, 0.3, 20.0, 0.0, 0.0);
  auto b = clover_reference(20.0, 0.3, 20.0, 0.0, 0.0);
  CHECK((a.x_d - b.x_d).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("clover velocity and feedforward match finite differences") {
  const double amp = 0.4, lap = 30.0, h = 1e-6;
  for (double t : {1.0, 4.7, 11.3, 22.2}) {
    auto c = clover_reference(t, amp, lap, 0.2, 0.1);
    auto cm = clover_reference(t - h, amp, lap, 0.2, 0.1);
    auto cp = clover_reference(t + h, amp, lap, 0.2, 0.1);
    for (int a = 0; a < 2; ++a) {
      const double v_fd = (cp.x_d(a) - cm.x_d(a)) / (2.0 * h);
      const double acc_fd = (cp.x_d(3 + a) - cm.x_d(3 + a)) / (2.0 * h);
      CHECK(c.x_d(3 + a) == Approx(v_fd).margin(1e-6));
      CHECK(c.u_d(a) == Approx(acc_fd).margin(1e-5));
    }
  }
}

TEST_CASE("setpoint schedule holds piecewise and switches on time") {
  auto r = ReferenceSchedule::setpoints({
      {{0.0, 0.1, 0.2, 0.0}, {5.0, 0.8, 0.4, 0.5}},
      {{0.0, 0.3, 0.3, 0.0}},
  });
  CHECK(r.agents() == 2);
  CHECK(r.sample(0, 0.0).x_d(0) == Approx(0.1));
  CHECK(r.sample(0, 4.999).x_d(1) == Approx(0.2));
  CHECK(r.sample(0, 5.0).x_d(0) == Approx(0.8));
  CHECK(r.sample(0, 99.0).x_d(2) == Approx(0.5));
  CHECK(r.sample(1, 50.0).x_d(0) == Approx(0.3));
  CHECK(r.sample(0, 1.0).x_d.tail(3).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(r.sample(0, 1.0).u_d.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("clover schedule applies formation offsets") {
  auto r = ReferenceSchedule::clover(2, 0.4, 30.0, 0.6, 0.5,
                                     {{0.0, 0.0}, {0.28, 0.0}});
  auto a = r.sample(0, 3.0);
  auto b = r.sample(1, 3.0);
  CHECK(b.x_d(0) - a.x_d(0) == Approx(0.28));
  CHECK(b.x_d(1) == Approx(a.x_d(1)));
  CHECK((b.x_d.segment(3, 2) - a.x_d.segment(3, 2)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(ReferenceSchedule::setpoints({{}}), ConfigError);
  CHECK_THROWS_AS(
      ReferenceSchedule::setpoints({{{2.0, 0, 0, 0}}}),  // first waypoint after t=0
      ConfigError);
  CHECK_THROWS_AS(ReferenceSchedule::clover(3, 0.4, 30.0, 0, 0, {{0, 0}}), ConfigError);
}
