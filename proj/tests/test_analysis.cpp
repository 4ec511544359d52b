#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "stvem/analysis.hpp"

using namespace stvem;

namespace {

constexpr double pi = std::numbers::pi;

struct Solved {
  SpaceTimeMesh mesh;
  ReferenceCache cache;
  Discretization d;
  Eigen::VectorXd uh;
};

std::unique_ptr<Solved> solve(SpaceTimeMesh m, const ExactSolution& ex) {
  auto s = std::make_unique<Solved>();
  s->mesh = std::move(m);
  s->d = discretize(s->mesh, s->cache);
  s->uh = assemble_and_solve(s->d, ex.problem());
  return s;
}

SpaceTimeMesh hanging_mesh(int p, double T = 1.0) {
  auto m = cartesian_mesh(Interval(0, 1), T, 2, 2, p);
  auto kids = m.split(m.leaves()[0]);
  m.split(kids[3]);
  m.split(m.leaves()[3]);
  m.finalize();
  int k = 0;
  for (int id : m.leaves()) m.element_mut(id).degree = p + (k++ % 2);
  m.finalize();
  return m;
}

// u = x² + 2t solves ∂t u - ∂xx u = 0
ExactSolution quadratic_solution() {
  ExactSolution e;
  e.name = "quadratic";
  e.u = [](double x, double t) { return x * x + 2 * t; };
  e.ux = [](double x, double) { return 2 * x; };
  e.ut = [](double, double) { return 2.0; };
  e.f = [](double, double) { return 0.0; };
  e.g = e.u;
  e.u0 = [](double x) { return x * x; };
  return e;
}

}  // namespace

TEST(TestCases, PointValuesAndErrors) {
  EXPECT_NEAR(test_case(1).u(0.5, 0.0), 1.0, 1e-15);
  EXPECT_NEAR(test_case(2, 0.75).u(0.5, 0.1), std::pow(0.1, 0.75), 1e-15);
  EXPECT_THROW(test_case(2, 0.5), std::invalid_argument);
  EXPECT_THROW(test_case(2, 0.3), std::invalid_argument);
  EXPECT_THROW(test_case(4), std::invalid_argument);
  // truncated Fourier series of 1, alternating tail bound
  EXPECT_NEAR(test_case(3).u(0.5, 0.0), 1.0, 4.0 / (501 * pi));
  EXPECT_EQ(test_case(2).T, 0.1);
}

TEST(TestCases, SourceMatchesFiniteDifferences) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> U(0.05, 0.95);
  for (int id : {1, 2, 3}) {
    const auto ex = test_case(id, 0.75);
    for (int trial = 0; trial < 20; ++trial) {
      const double x = U(rng), t = ex.T * (0.1 + 0.8 * U(rng));
      // fourth-order central differences, time step relative to t
      const double h = 1e-3, k = 1e-3 * t;
      auto u = ex.u;
      const double ut = (-u(x, t + 2 * k) + 8 * u(x, t + k) - 8 * u(x, t - k) + u(x, t - 2 * k)) / (12 * k);
      const double ux = (-u(x + 2 * h, t) + 8 * u(x + h, t) - 8 * u(x - h, t) + u(x - 2 * h, t)) / (12 * h);
      const double uxx = (-u(x + 2 * h, t) + 16 * u(x + h, t) - 30 * u(x, t) + 16 * u(x - h, t) -
                          u(x - 2 * h, t)) / (12 * h * h);
      const double scale = std::max(1.0, std::abs(uxx));
      EXPECT_NEAR(ex.f(x, t), ex.cH * ut - ex.nu * uxx, 1e-6 * scale) << "case " << id;
      EXPECT_NEAR(ex.ut(x, t), ut, 1e-6 * std::max(1.0, std::abs(ut))) << "case " << id;
      EXPECT_NEAR(ex.ux(x, t), ux, 1e-6 * std::max(1.0, std::abs(ux))) << "case " << id;
    }
  }
}

TEST(TestCases, SeriesRecurrenceMatchesDirectSum) {
  HeatSeries s;
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> U(0, 1);
  for (int k = 0; k < 50; ++k) {
    const double x = U(rng), t = k < 10 ? 0.0 : std::pow(10.0, -6 * U(rng));
    double u = 0, ux = 0;
    for (int n = 0; n <= 250; ++n) {
      const double kn = (2 * n + 1) * pi;
      u += 4 / kn * std::sin(kn * x) * std::exp(-kn * kn * t);
      ux += 4 * std::cos(kn * x) * std::exp(-kn * kn * t);
    }
    double a, b;
    s.eval(x, t, &a, &b, nullptr);
    EXPECT_NEAR(a, u, 1e-11);
    EXPECT_NEAR(b, ux, 1e-9 * std::max(1.0, std::abs(ux)));
  }
}

TEST(Errors, ReproducedPolynomialHasZeroErrors) {
  const auto ex = quadratic_solution();
  auto s = solve(hanging_mesh(2), ex);
  const auto r = compute_errors(s->d, s->uh, ex);
  EXPECT_LT(r.EY, 1e-9);
  EXPECT_LT(r.EU, 1e-9);
  EXPECT_LT(r.EN, 1e-9);
  EXPECT_FALSE(r.EN_least_squares);
  const auto ind = indicator(s->d, s->uh, ex.problem());
  for (double e : ind.eta_K) EXPECT_LT(e, 1e-8);
}

TEST(Errors, ZeroDiscreteSolutionGivesExactNorm) {
  const auto ex = test_case(1);
  auto m = cartesian_mesh(Interval(0, 1), 1.0, 3, 2, 1);
  ReferenceCache cache;
  const auto d = discretize(m, cache);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d.dofs.n_dofs);
  // ∫∫ π² e^{-2t} cos²(πx) = π²/2 · (1 - e^{-2})/2
  const double exact = std::sqrt(pi * pi / 4 * (1 - std::exp(-2.0)));
  EXPECT_NEAR(error_Y(d, zero, ex), exact, 1e-9);
}

TEST(Errors, InitialTraceOfIncompatibleSolution) {
  const auto ex = test_case(3);
  auto m = cartesian_mesh(Interval(0, 1), 1.0, 16, 16, 2);
  ReferenceCache cache;
  const auto d = discretize(m, cache);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d.dofs.n_dofs);
  const double EU = error_U(d, zero, ex);
  EXPECT_NEAR(EU * EU, 0.5, 0.05);
}

TEST(Errors, XNormComposition) {
  const auto ex = test_case(2, 0.55);
  auto s = solve(cartesian_mesh(Interval(0, 1), ex.T, 8, 4, 1), ex);
  const auto r = compute_errors(s->d, s->uh, ex);
  EXPECT_TRUE(r.EN_computed);
  EXPECT_GT(r.EN, 0.0);
  EXPECT_NEAR(r.EX * r.EX, r.EY * r.EY + r.EN * r.EN + r.EU * r.EU, 1e-12 * r.EX * r.EX);
  double sum = 0;
  for (double v : r.EY_K_sq) sum += v;
  EXPECT_NEAR(sum, r.EY * r.EY, 1e-12 * sum);
  ErrorOptions off;
  off.compute_EN = false;
  const auto r2 = compute_errors(s->d, s->uh, ex, off);
  EXPECT_FALSE(r2.EN_computed);
  EXPECT_EQ(r2.EN, 0.0);
}

TEST(Errors, FirstOrderRateForSmoothSolution) {
  const auto ex = test_case(1);
  auto a = solve(cartesian_mesh(Interval(0, 1), 1.0, 8, 8, 1), ex);
  auto b = solve(cartesian_mesh(Interval(0, 1), 1.0, 16, 16, 1), ex);
  const double ratio = error_Y(a->d, a->uh, ex) / error_Y(b->d, b->uh, ex);
  EXPECT_NEAR(ratio, 2.0, 0.2);
}

TEST(Errors, QuadratureGuard) {
  for (int id : {2, 3}) {
    const auto ex = test_case(id, 0.55);
    auto s = solve(cartesian_mesh(Interval(0, 1), ex.T, 16, 8, 2), ex);
    const double q4 = error_Y(s->d, s->uh, ex, 4);
    const double q8 = error_Y(s->d, s->uh, ex, 8);
    EXPECT_LT(std::abs(q4 - q8), 1e-3 * q8) << "case " << id;
  }
}

TEST(Indicator, Bookkeeping) {
  const auto ex = test_case(1);
  auto s = solve(hanging_mesh(2), ex);
  const auto ind = indicator(s->d, s->uh, ex.problem());
  double by_part = 0, by_elem = 0, eta2 = 0;
  for (double e : ind.eta_i) by_part += e * e;
  for (double e : ind.eta_K) by_elem += e * e;
  for (const auto& k : ind.eta_K_sq) eta2 += k[1];
  const double eta_sq = ind.eta * ind.eta;
  EXPECT_NEAR(by_part, eta_sq, 1e-12 * eta_sq);
  EXPECT_NEAR(by_elem, eta_sq, 1e-12 * eta_sq);
  const double once = interior_gradient_jump_sum(s->d, s->uh, ex.nu);
  EXPECT_GT(once, 0.0);
  EXPECT_NEAR(eta2, once, 1e-12 * once);
  for (double e : ind.eta_i) EXPECT_GT(e, 0.0);
}

TEST(Indicator, EffectivityFlatForSmoothSolution) {
  const auto ex = test_case(1);
  std::vector<double> eff;
  for (int n : {10, 20, 40}) {
    auto s = solve(cartesian_mesh(Interval(0, 1), 1.0, n, n, 1), ex);
    ErrorOptions o;
    o.compute_EN = false;
    const auto err = compute_errors(s->d, s->uh, ex, o);
    eff.push_back(effectivity(indicator(s->d, s->uh, ex.problem()), err));
  }
  const double lo = *std::min_element(eff.begin(), eff.end());
  const double hi = *std::max_element(eff.begin(), eff.end());
  EXPECT_LT(hi / lo - 1.0, 0.2);
}
