#include <gtest/gtest.h>

#include <random>

#include "stvem/local_vem.hpp"

using namespace stvem;

namespace {

LocalGeometry box(double x0, double x1, double t0, double t1, int p,
                  std::vector<double> left_cuts = {}, std::vector<double> right_cuts = {},
                  int facet_degree = -1) {
  LocalGeometry g;
  g.rect = {Interval(x0, x1), Interval(t0, t1)};
  g.p = p;
  const int fd = facet_degree < 0 ? p : facet_degree;
  auto side = [&](std::vector<double> cuts, int s) {
    cuts.insert(cuts.begin(), t0);
    cuts.push_back(t1);
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
      g.facets.push_back({Interval(cuts[k], cuts[k + 1]), fd, s});
  };
  side(left_cuts, -1);
  side(right_cuts, +1);
  return g;
}

LocalGeometry random_box(std::mt19937& rng, int p) {
  std::uniform_real_distribution<double> u(0, 1);
  const double x0 = u(rng) * 4 - 2, t0 = u(rng);
  const double hx = std::pow(10.0, -2 + 2 * u(rng)), ht = std::pow(10.0, -2 + 2 * u(rng));
  auto cuts = [&] {
    std::vector<double> c;
    const int n = std::uniform_int_distribution<int>(0, 3)(rng);
    double lo = 0.0;
    for (int k = 0; k < n; ++k) {
      lo += (1.0 - lo) * 0.5;  // dyadic hanging points
      c.push_back(t0 + lo * ht);
    }
    return c;
  };
  auto g = box(x0, x0 + hx, t0, t0 + ht, p, cuts(), cuts());
  for (auto& f : g.facets) f.degree = p + std::uniform_int_distribution<int>(0, 1)(rng);
  return g;
}

}  // namespace

TEST(Dofs, Counts) {
  EXPECT_EQ(dof_layout(box(0, 1, 0, 1, 1)).total, 7);
  EXPECT_EQ(dof_layout(box(0, 1, 0, 1, 2)).total, 12);
  EXPECT_EQ(dof_layout(box(0, 1, 0, 1, 1, {0.5})).total, 9);
}

TEST(Dofs, EvaluateConstant) {
  const auto g = box(0.2, 0.7, 1, 1.3, 3, {1.1});
  const auto d = dof_layout(g);
  const auto v = dof_evaluate([](double, double) { return 1.0; }, g, d);
  EXPECT_NEAR(v[0], 1, 1e-14);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(v[d.facet_offset[k]], 1, 1e-14);
  EXPECT_NEAR(v[d.space_offset], 1, 1e-14);
}

TEST(Dofs, EvaluateSpaceBasisMember) {
  const auto g = box(0, 2, 0, 1, 2);
  const auto d = dof_layout(g);
  const auto xb = basis_1d(2, g.rect.x);
  const auto v = dof_evaluate([&](double x, double) { return xb.eval(x)[1]; }, g, d);
  const Eigen::MatrixXd G = gram_1d(xb, g.rect.x) / 2.0;
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(v[d.space_offset + k], G(1, k), 1e-14);
}

TEST(Projectors, Reproduction) {
  std::mt19937 rng(3);
  for (int p = 1; p <= 4; ++p)
    for (int trial = 0; trial < 20; ++trial) {
      const auto g = random_box(rng, p);
      const auto op = build_local_operators(g);
      const int np = dim_p2(p);
      EXPECT_LT((op.PiN * op.D - Eigen::MatrixXd::Identity(np, np)).norm(), 1e-10);
      EXPECT_LT((op.PiStar * op.D - Eigen::MatrixXd::Identity(np, np)).norm(), 1e-10);
    }
}

TEST(Projectors, DefiningRelations) {
  std::mt19937 rng(5);
  std::normal_distribution<double> n01;
  for (int p = 1; p <= 4; ++p) {
    const auto g = random_box(rng, p);
    const auto op = build_local_operators(g);
    const auto& d = op.dofs;
    Eigen::VectorXd v(d.total);
    for (int i = 0; i < d.total; ++i) v[i] = n01(rng);
    // Π^N: bulk moments against time-only polynomials and the bottom mean
    const Eigen::VectorXd wN = op.D * op.PiN * v;
    for (int b = 0; b < p; ++b)
      EXPECT_NEAR(wN[monomial_index(0, b)], v[monomial_index(0, b)], 1e-11);
    EXPECT_NEAR(wN[d.space_offset], v[d.space_offset], 1e-11);
    // Π*: all bulk moments and all bottom moments
    const Eigen::VectorXd wS = op.D * op.PiStar * v;
    EXPECT_LT((wS.head(d.n_bulk) - v.head(d.n_bulk)).norm(), 1e-11);
    EXPECT_LT((wS.tail(d.n_space) - v.tail(d.n_space)).norm(), 1e-11);
  }
}

TEST(Projectors, PiNOfLinear) {
  const auto g = box(0, 1, 0, 1, 1);
  const auto op = build_local_operators(g);
  const auto v = dof_evaluate([](double x, double t) { return x + t; }, g, op.dofs);
  const Eigen::VectorXd c = op.PiN * v;
  // x + t = 1 + ξ + τ with centred unit scaling
  EXPECT_NEAR(c[0], 1.0, 1e-13);
  EXPECT_NEAR(c[monomial_index(1, 0)], 1.0, 1e-13);
  EXPECT_NEAR(c[monomial_index(0, 1)], 1.0, 1e-13);
}

TEST(Projectors, L2Projections) {
  const auto g = box(0, 1, 0, 1, 1, {0.5});
  const auto op = build_local_operators(g);
  const auto v = dof_evaluate([](double x, double t) { return x * t; }, g, op.dofs);
  EXPECT_NEAR((op.Pi0B * v)[0], 0.25, 1e-13);
  const auto one = dof_evaluate([](double, double) { return 1.0; }, g, op.dofs);
  for (const auto& P : op.Pi0F) {
    const Eigen::VectorXd c = P * one;
    EXPECT_NEAR(c[0], 1.0, 1e-13);
    EXPECT_NEAR(c.tail(c.size() - 1).norm(), 0.0, 1e-13);
  }
}

TEST(Forms, ConsistencyAndConstants) {
  std::mt19937 rng(9);
  for (int p = 1; p <= 4; ++p) {
    const auto g = random_box(rng, p);
    const auto op = build_local_operators(g);
    std::vector<double> hF(g.facets.size(), g.hx());
    const auto A = stiffness(op, g, 1.3, hF);
    EXPECT_LT((A - A.transpose()).norm(), 1e-13 * A.norm());
    // polynomial q: the stabilization vanishes, a_h(q,q) = a(q,q)
    const Eigen::VectorXd c = Eigen::VectorXd::Random(dim_p2(p));
    const Eigen::VectorXd q = op.D * c;
    const double aqq = 1.3 * q.dot(op.C * q);
    EXPECT_NEAR(q.dot(A * q), aqq, 1e-10 * std::max(1.0, std::abs(aqq)));
    // constants: no gradient part, raw bottom term = p ht hx^{-2} |Kx|
    const auto one = dof_evaluate([](double, double) { return 1.0; }, g, op.dofs);
    EXPECT_LT((op.C * one).norm(), 1e-10 * op.C.norm() + 1e-14);
    const double raw = (op.Wtr * one).dot(op.Mx * (op.Wtr * one));
    EXPECT_NEAR(p * g.ht() / (g.hx() * g.hx()) * raw, p * g.ht() / g.hx(),
                1e-12 * p * g.ht() / g.hx());
    // positive semidefinite
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));
    EXPECT_GT(es.eigenvalues().minCoeff(), -1e-10 * es.eigenvalues().maxCoeff());
  }
}

TEST(Forms, ScalingInvariance) {
  std::mt19937 rng(21);
  for (int p = 1; p <= 4; ++p) {
    const auto g = random_box(rng, p);
    const auto direct = build_local_operators(g);
    const auto ref = build_local_operators(g.normalized());
    const auto scaled = rescale_reference(ref, g.hx(), g.ht());
    // relative error with an absolute floor at the term's natural size
    // (SB vanishes identically for p = 1)
    auto rel = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double size = 0.0) {
      return (a - b).norm() / std::max(b.norm(), size);
    };
    EXPECT_LT(rel(scaled.PiN, direct.PiN), 1e-12);
    EXPECT_LT(rel(scaled.PiStar, direct.PiStar), 1e-12);
    EXPECT_LT(rel(scaled.C, direct.C), 1e-12);
    EXPECT_LT(rel(scaled.SB, direct.SB, g.hx() * g.ht()), 1e-12);
    EXPECT_LT(rel(scaled.SX, direct.SX), 1e-12);
    for (std::size_t k = 0; k < direct.SF.size(); ++k)
      EXPECT_LT(rel(scaled.SF[k], direct.SF[k]), 1e-12);
    EXPECT_LT(rel(scaled.Tn, direct.Tn), 1e-12);
    EXPECT_LT(rel(scaled.Sn, direct.Sn), 1e-12);
    EXPECT_LT(rel(scaled.LoadMap, direct.LoadMap), 1e-12);
  }
}

TEST(Upwind, ContinuousPolynomialHasNoJump) {
  const auto gm = box(0, 1, 0, 0.5, 2);
  const auto gp = box(0, 1, 0.5, 1, 2);
  const auto om = build_local_operators(gm);
  const auto opp = build_local_operators(gp);
  auto u = [](double x, double t) { return 1 + x * x - 2 * x * t + t; };
  const auto vm = dof_evaluate(u, gm, om.dofs);
  const auto vp = dof_evaluate(u, gp, opp.dofs);
  const auto Cpl = upwind_coupling(opp, gp, om, gm, Interval(0, 1), 1.0);
  const Eigen::VectorXd r = opp.Sn * vp + Cpl * vm;
  EXPECT_LT(r.norm(), 1e-12);
}

TEST(Upwind, InitialLoad) {
  const auto g = box(0, 1, 0, 1, 1);
  const auto op = build_local_operators(g);
  // U0(γ) = ∫ 1 · ξ^γ = (1, 0)
  Eigen::VectorXd U0(2);
  U0 << 1.0, 0.0;
  const auto l = initial_load(op, U0, 1.0);
  const auto one = dof_evaluate([](double, double) { return 1.0; }, g, op.dofs);
  // test with v = 1: l · (dofs of 1) equals c_H ∫ u0 v = 1
  EXPECT_NEAR(l.dot(one), 1.0, 1e-13);
}
