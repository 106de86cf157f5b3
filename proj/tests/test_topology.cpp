#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "dystop/topology.hpp"
#include "oracles/ptca_reference.hpp"

using namespace dystop;

TEST(PriorityPhase1, Examples) {
  EXPECT_DOUBLE_EQ(priority_phase1(0.0, 2.0, 141.42, 141.42), 0.0);
  EXPECT_DOUBLE_EQ(priority_phase1(2.0, 2.0, 0.0, 141.42), 2.0);
  EXPECT_NEAR(priority_phase1(0.7, 2.0, 50.0, 141.42), 0.35 + (1.0 - 50.0 / 141.42), 1e-12);
  EXPECT_NEAR(priority_phase1(0.7, 2.0, 50.0, 141.42), 0.9964, 1e-4);
}

TEST(PriorityPhase1, DegenerateNormalizers) {
  EXPECT_DOUBLE_EQ(priority_phase1(0.0, 0.0, 3.0, 10.0), 0.7);
  EXPECT_DOUBLE_EQ(priority_phase1(1.0, 2.0, 0.0, 0.0), 1.5);
}

TEST(PriorityPhase2, Examples) {
  EXPECT_DOUBLE_EQ(priority_phase2(0, 7, 3, 3), 1.0);
  EXPECT_DOUBLE_EQ(priority_phase2(7, 7, 0, 4), 0.0);
  EXPECT_NEAR(priority_phase2(2, 10, 3, 1), 0.8 / 3.0, 1e-12);
  EXPECT_NEAR(priority_phase2(2, 10, 3, 1), 0.26667, 1e-5);
  EXPECT_THROW(priority_phase2(0, 0, 1, 1), InvalidInput);
}

TEST(PriorityInputs, PhaseSwitch) {
  std::vector<std::vector<double>> emd{{0.0, 1.0}, {1.0, 0.0}}, dist{{0.0, 5.0}, {5.0, 0.0}};
  PullHistory pulls(2);
  std::vector<int> tau{0, 2};
  PriorityInputs p{&emd, &dist, 2.0, 10.0, &pulls, tau, 3, 3};
  EXPECT_TRUE(p.phase1());
  EXPECT_DOUBLE_EQ(p(0, 1), 0.5 + 0.5);
  p.round = 4;
  EXPECT_FALSE(p.phase1());
  EXPECT_DOUBLE_EQ(p(0, 1), 1.0 / 3.0);
}

TEST(Snapshot, SelfMembershipAndAccounting) {
  TopologySnapshot s(3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(s.in_neighbors[i], (std::vector<std::size_t>{i}));
    EXPECT_EQ(s.out_neighbors[i], (std::vector<std::size_t>{i}));
  }
  s.add_edge(0, 2, 5.0);
  EXPECT_EQ(s.in_degree(0), 1u);
  EXPECT_EQ(s.out_degree(2), 1u);
  EXPECT_EQ(s.bandwidth_bits, (std::vector<double>{5.0, 0.0, 5.0}));
  EXPECT_EQ(s.total_bandwidth(), 10.0);
}

namespace {
PriorityFn from_matrix(const std::vector<std::vector<double>>& m) {
  return [&m](std::size_t i, std::size_t j) { return m[i][j]; };
}
} // namespace

TEST(Ptca, ZeroBudgetsGiveSelfOnly) {
  std::vector<std::vector<std::size_t>> cand{{1, 2}, {0, 2}, {0, 1}};
  std::vector<std::vector<double>> prio(3, std::vector<double>(3, 1.0));
  std::vector<std::size_t> active{0, 1, 2};
  std::vector<double> budgets(3, 0.0);
  auto s = ptca(active, cand, budgets, 1.0, 0, from_matrix(prio));
  EXPECT_TRUE(s.edges.empty());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s.in_neighbors[i], (std::vector<std::size_t>{i}));
}

TEST(Ptca, BudgetForTwoPullsTakesTopTwo) {
  std::vector<std::vector<std::size_t>> cand{{1, 2, 3}, {}, {}, {}};
  std::vector<std::vector<double>> prio(4, std::vector<double>(4, 0.0));
  prio[0] = {0.0, 0.2, 0.9, 0.5};
  std::vector<std::size_t> active{0};
  std::vector<double> budgets{2.0, 5.0, 5.0, 5.0};
  auto s = ptca(active, cand, budgets, 1.0, 0, from_matrix(prio));
  EXPECT_EQ(s.edges, (std::vector<Edge>{{0, 2}, {0, 3}}));
  EXPECT_EQ(s.in_neighbors[0], (std::vector<std::size_t>{0, 2, 3}));
}

TEST(Ptca, SkipsExhaustedSourcesAndHonorsCap) {
  // worker 1 (top choice of both) can serve only one pull
  std::vector<std::vector<std::size_t>> cand{{1, 2, 3}, {}, {1, 3}, {}};
  std::vector<std::vector<double>> prio(4, std::vector<double>(4, 0.0));
  prio[0] = {0.0, 0.9, 0.5, 0.1};
  prio[2] = {0.0, 0.9, 0.0, 0.2};
  std::vector<std::size_t> active{0, 2};
  std::vector<double> budgets{10.0, 1.0, 10.0, 10.0};
  auto s = ptca(active, cand, budgets, 1.0, 2, from_matrix(prio));
  EXPECT_EQ(s.edges, (std::vector<Edge>{{0, 1}, {2, 3}, {0, 2}}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_LE(s.bandwidth_bits[i], budgets[i]);
  EXPECT_LE(s.in_degree(0), 2u);
}

TEST(Ptca, MatchesReference) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> nd(1, 10), capd(0, 4), bud(0, 6);
  std::uniform_real_distribution<double> pr(0.0, 1.0), u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = static_cast<std::size_t>(nd(rng));
    std::vector<std::vector<std::size_t>> cand(n);
    std::vector<std::vector<double>> prio(n, std::vector<double>(n, 0.0));
    std::vector<std::size_t> active;
    std::vector<double> budgets(n);
    for (std::size_t i = 0; i < n; ++i) {
      budgets[i] = bud(rng) * 1.0 + (trial % 2 ? u(rng) * 0.5 : 0.0);
      if (u(rng) < 0.6) active.push_back(i);
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i && u(rng) < 0.7) cand[i].push_back(j);
        prio[i][j] = trial % 5 == 0 ? std::round(pr(rng) * 3) : pr(rng);
      }
    }
    const auto cap = static_cast<std::size_t>(capd(rng));
    auto snap = ptca(active, cand, budgets, 1.0, cap, from_matrix(prio));
    auto ref = oracle::ptca_reference(active, cand, budgets, 1.0, cap, prio);
    ASSERT_EQ(snap.edges.size(), ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) {
      EXPECT_EQ(snap.edges[k].puller, ref[k].puller);
      EXPECT_EQ(snap.edges[k].source, ref[k].source);
    }
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_LE(snap.bandwidth_bits[i], budgets[i]);
      EXPECT_EQ(snap.bandwidth_bits[i], static_cast<double>(snap.in_degree(i) + snap.out_degree(i)));
    }
  }
}

TEST(Ptca, Deterministic) {
  std::vector<std::vector<std::size_t>> cand{{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};
  std::vector<std::vector<double>> prio(4, std::vector<double>(4, 0.5));
  std::vector<std::size_t> active{0, 1, 2, 3};
  std::vector<double> budgets(4, 3.0);
  auto a = ptca(active, cand, budgets, 1.0, 0, from_matrix(prio));
  auto b = ptca(active, cand, budgets, 1.0, 0, from_matrix(prio));
  EXPECT_EQ(a.edges, b.edges);
}

TEST(PullHistory, Recording) {
  PullHistory p(3);
  TopologySnapshot empty(3);
  record_pulls(empty, p);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(p.count(i, j), 0u);
  TopologySnapshot one(3);
  one.add_edge(2, 0, 1.0);
  record_pulls(one, p);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) total += p.count(i, j);
  EXPECT_EQ(total, 1u);
  EXPECT_EQ(p.count(2, 0), 1u);
}

TEST(PullHistory, BoundedByRounds) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 6;
  PullHistory pulls(n);
  std::vector<std::vector<std::size_t>> cand(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) cand[i].push_back(j);
  std::vector<int> tau(n, 0);
  std::vector<std::vector<double>> zeros(n, std::vector<double>(n, 0.0));
  for (int t = 1; t <= 40; ++t) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < n; ++i)
      if (u(rng) < 0.5) active.push_back(i);
    PriorityInputs p{&zeros, &zeros, 0.0, 0.0, &pulls, tau, t, 0};
    auto s = ptca(active, cand, std::vector<double>(n, 4.0), 1.0, 3, std::cref(p));
    record_pulls(s, pulls);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_LE(pulls.count(i, j), static_cast<std::uint64_t>(t));
        const double pr = priority_phase2(pulls.count(i, j), t, 0, 0);
        EXPECT_GE(pr, 0.0);
        EXPECT_LE(pr, 1.0);
      }
  }
}

TEST(TopologyCsv, Rows) {
  TopologySnapshot s(3);
  s.add_edge(1, 0, 1.0);
  s.add_edge(2, 1, 1.0);
  std::ostringstream os;
  write_topology_csv(os, 7, s);
  EXPECT_EQ(os.str(), "7,1,0\n7,2,1\n");
}
