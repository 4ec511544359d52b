#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "stvem/adaptivity.hpp"

using namespace stvem;

TEST(Doerfler, Examples) {
  EXPECT_EQ(doerfler_mark({4, 1, 1}, {0, 1, 2}, 0.5), std::vector<int>({0}));
  // θ = 1 takes every element with a nonzero indicator
  auto all = doerfler_mark({0.3, 0.0, 0.2, 0.1}, {0, 1, 2, 3}, 1.0);
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, std::vector<int>({0, 2, 3}));
  // equal indicators: two of four, lowest ids first
  EXPECT_EQ(doerfler_mark({1, 1, 1, 1}, {7, 3, 9, 5}, 0.5), std::vector<int>({1, 3}));
  EXPECT_THROW(doerfler_mark({}, {}, 0.5), std::invalid_argument);
  EXPECT_THROW(doerfler_mark({1}, {0}, 1.5), std::invalid_argument);
  EXPECT_THROW(doerfler_mark({1}, {0}, 0.0), std::invalid_argument);
}

TEST(Doerfler, MinimalityOnRandomData) {
  std::mt19937 rng(11);
  std::exponential_distribution<double> ex(1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 37;
    std::vector<double> eta(n);
    std::vector<int> ids(n);
    for (int i = 0; i < n; ++i) {
      eta[i] = ex(rng);
      ids[i] = i;
    }
    const double theta = 0.05 + 0.95 * (trial % 20) / 19.0;
    const auto m = doerfler_mark(eta, ids, theta);
    EXPECT_TRUE(doerfler_minimal(eta, m, theta));
    // no set of the same size minus one can reach θ: the greedy set has minimal cardinality
    std::vector<double> sq;
    for (double e : eta) sq.push_back(e * e);
    std::sort(sq.rbegin(), sq.rend());
    double best = 0, total = 0;
    for (double v : sq) total += v;
    for (std::size_t k = 0; k + 1 < m.size(); ++k) best += sq[k];
    EXPECT_LT(best, theta * total);
  }
}

TEST(HpSequence, TestTwoMeshes) {
  const auto seq = hp_sequence(2, 3);
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(seq[0].n_leaves(), 20u);
  EXPECT_EQ(seq[0].slab_count(), 1);
  for (int id : seq[0].leaves()) {
    EXPECT_NEAR(seq[0].element(id).hx(), 0.05, 1e-14);
    EXPECT_EQ(seq[0].element(id).degree, 1);
  }
  const auto& m3 = seq[2];
  ASSERT_EQ(m3.slab_count(), 3);
  // interior cuts only
  const auto& inner = m3.slab_cuts();
  ASSERT_EQ(inner.size(), 2u);
  EXPECT_NEAR(inner[0], 0.001, 1e-15);
  EXPECT_NEAR(inner[1], 0.01, 1e-15);
  for (int s = 0; s < 3; ++s)
    for (int id : m3.slab(s)) EXPECT_EQ(m3.element(id).degree, s + 1);
  EXPECT_THROW(hp_sequence(2, 0), std::invalid_argument);
  EXPECT_THROW(hp_sequence(1, 2), std::invalid_argument);
}

TEST(HpSequence, TestThreeMeshes) {
  const auto seq = hp_sequence(3, 3);
  EXPECT_EQ(seq[0].n_leaves(), 2u);
  const auto& m2 = seq[1];
  EXPECT_EQ(m2.slab_count(), 2);
  std::set<double> xs;
  for (int id : m2.leaves()) {
    xs.insert(m2.element(id).x_iv.lo);
    const auto& e = m2.element(id);
    EXPECT_EQ(e.degree, e.t_iv.lo < 0.1 ? 1 : 2);
    if (e.t_iv.lo < 0.1) EXPECT_NEAR(e.t_iv.hi, 0.25, 1e-15);
  }
  EXPECT_EQ(xs, std::set<double>({0.0, 0.125, 0.5, 0.875}));
  const auto& m3 = seq[2];
  EXPECT_EQ(m3.n_leaves(), 18u);
  EXPECT_NEAR(m3.slab_cuts()[0], 0.0625, 1e-15);
}

TEST(Adaptive, FirstRefinementAccounting) {
  for (int test : {2, 3}) {
    AdaptiveConfig c;
    c.test_case = test;
    c.degree = test == 2 ? 2 : 1;
    c.theta = test == 2 ? 0.99 : 0.9;
    c.max_steps = 2;
    c.options.compute_EN = false;
    const auto r = adapt_loop(c);
    ASSERT_EQ(r.report.steps.size(), 2u);
    const auto& s2 = r.report.steps[1];
    EXPECT_EQ(s2.n_elements, 4);
    EXPECT_EQ(s2.n_slabs, 2);
    EXPECT_EQ(s2.n_ref_elements, 1);
  }
}

TEST(Adaptive, LocalityAndMonotoneGrowth) {
  AdaptiveConfig c;
  c.test_case = 3;
  c.degree = 1;
  c.theta = 0.5;
  c.max_steps = 5;
  c.options.compute_EN = false;
  std::vector<std::map<int, std::array<double, 4>>> geo;
  const auto r = adapt_loop(c, [&](const StepRecord&, const SpaceTimeMesh& m) {
    std::map<int, std::array<double, 4>> g;
    for (int id : m.leaves()) {
      const auto& e = m.element(id);
      g[id] = {e.x_iv.lo, e.x_iv.hi, e.t_iv.lo, e.t_iv.hi};
    }
    geo.push_back(std::move(g));
  });
  ASSERT_EQ(r.report.steps.size(), 5u);
  for (std::size_t k = 1; k < r.report.steps.size(); ++k) {
    EXPECT_GT(r.report.steps[k].n_dofs, r.report.steps[k - 1].n_dofs);
    const std::set<int> marked(r.marked[k - 1].begin(), r.marked[k - 1].end());
    for (const auto& [id, box] : geo[k - 1]) {
      if (marked.count(id)) {
        EXPECT_EQ(geo[k].count(id), 0u);
      } else {
        ASSERT_EQ(geo[k].count(id), 1u);
        EXPECT_EQ(geo[k].at(id), box);
      }
    }
  }
  for (const auto& s : r.report.steps) EXPECT_LT(s.bookkeeping_gap, 1e-12);
}

TEST(Adaptive, SmoothSolutionRefinesNearlyUniformly) {
  AdaptiveConfig c;
  c.test_case = 1;
  c.degree = 1;
  c.theta = 0.9;
  c.max_steps = 5;
  c.options.compute_EN = false;
  const auto r = adapt_loop(c);
  for (std::size_t k = 2; k < r.marked.size(); ++k)
    EXPECT_GE(double(r.marked[k].size()), 0.6 * r.report.steps[k].n_elements) << "step " << k + 1;
}

TEST(Adaptive, StopsAtDofBudget) {
  AdaptiveConfig c;
  c.test_case = 1;
  c.degree = 1;
  c.theta = 1.0;
  c.max_dofs = 400;
  c.options.compute_EN = false;
  const auto r = adapt_loop(c);
  for (const auto& s : r.report.steps) EXPECT_LE(s.n_dofs, 400);
  EXPECT_GE(r.report.steps.size(), 3u);
  EXPECT_LT(r.report.steps.size(), 25u);
  AdaptiveConfig bad = c;
  bad.theta = 1.5;
  EXPECT_THROW(adapt_loop(bad), std::invalid_argument);
}
