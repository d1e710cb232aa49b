#include <catch2/catch_amalgamated.hpp>

#include "dmpc/graph.hpp"

using namespace dmpc;

TEST_CASE("path graph adjacency") {
  auto g = CouplingGraph::path(4);
  CHECK(g.size() == 4);
  CHECK(g.neighbors(0) == std::vector<int>{1});
  CHECK(g.neighbors(1) == std::vector<int>{0, 2});
  CHECK(g.neighbors(2) == std::vector<int>{1, 3});
  CHECK(g.neighbors(3) == std::vector<int>{2});
  CHECK(g.degree(1) == 2);
  CHECK(g.adjacent(2, 3));
  CHECK_FALSE(g.adjacent(0, 2));
}

TEST_CASE("graph symmetry and dedup") {
  CouplingGraph g(3, {{0, 1}, {1, 0}, {1, 2}});
  CHECK(g.edges().size() == 2);
  for (int i = 0; i < 3; ++i)
    for (int j : g.neighbors(i)) CHECK(g.adjacent(j, i));
}

TEST_CASE("graph rejects invalid input") {
  CHECK_THROWS_AS(CouplingGraph(2, {{0, 0}}), ConfigError);
  CHECK_THROWS_AS(CouplingGraph(3, {{0, 5}}), ConfigError);
  CHECK_THROWS_AS(CouplingGraph(4, {{0, 1}, {2, 3}}), ConfigError);  // disconnected
  CHECK_THROWS_AS(CouplingGraph(2, {}), ConfigError);
}

TEST_CASE("single agent graph is valid") {
  CouplingGraph g(1, {});
  CHECK(g.size() == 1);
  CHECK(g.degree(0) == 0);
}
