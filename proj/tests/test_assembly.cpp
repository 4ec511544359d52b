#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "stvem/assembly.hpp"

using namespace stvem;

namespace {

using Fn = std::function<double(double, double)>;

// c_H ∂t u - ν ∂xx u = f with the lateral trace and initial value of u as data
ProblemData data_for(const Fn& u, const Fn& f, double nu = 1.0, double cH = 1.0) {
  ProblemData d;
  d.nu = nu;
  d.cH = cH;
  d.f = f;
  d.g = u;
  d.u0 = [u](double x) { return u(x, 0.0); };
  return d;
}

// largest DoF mismatch between the discrete solution and the interpolant of u
double interpolation_gap(const Discretization& d, const Eigen::VectorXd& uh, const Fn& u) {
  double gap = 0.0;
  for (std::size_t i = 0; i < d.mesh->n_leaves(); ++i) {
    const auto& g = d.geom[i];
    const Eigen::VectorXd ref = dof_evaluate(u, g, d.op(int(i)).dofs);
    gap = std::max(gap, (d.local(uh, int(i)) - ref).lpNorm<Eigen::Infinity>());
  }
  return gap;
}

SpaceTimeMesh hanging_mesh(int p, bool mixed) {
  auto m = cartesian_mesh(Interval(0, 1), 1.0, 2, 2, p);
  auto kids = m.split(m.leaves()[0]);
  m.split(kids[3]);
  m.split(m.leaves()[3]);
  m.finalize();
  if (mixed) {
    int k = 0;
    for (int id : m.leaves()) m.element_mut(id).degree = p + (k++ % 2);
    m.finalize();
  }
  m.validate();
  return m;
}

}  // namespace

TEST(DofMap, Counts) {
  {
    const auto m = cartesian_mesh(Interval(0, 1), 1.0, 1, 1, 1);
    const auto map = build_dof_map(m);
    EXPECT_EQ(map.n_dofs, 7);
    EXPECT_EQ(map.n_constrained, 4);
  }
  {
    const auto m = cartesian_mesh(Interval(0, 1), 1.0, 2, 1, 1);
    const auto map = build_dof_map(m);
    EXPECT_EQ(map.n_dofs, 12);
    EXPECT_EQ(map.n_constrained, 4);
  }
  {
    // slabs are numbered contiguously
    const auto m = hanging_mesh(2, true);
    const auto map = build_dof_map(m);
    for (int i = 1; i < map.n_dofs; ++i) EXPECT_LE(map.dof_slab[i - 1], map.dof_slab[i]);
  }
}

struct PatchCase {
  int p;
  Fn u, f;
};

TEST(Solve, PolynomialPatchTests) {
  const std::vector<PatchCase> cases = {
      {1, [](double x, double t) { return x + 3 * t; }, [](double, double) { return 3.0; }},
      {1, [](double x, double) { return x; }, [](double, double) { return 0.0; }},
      {2, [](double x, double t) { return x * x + 2 * t; }, [](double, double) { return 0.0; }},
      {3, [](double x, double t) { return x * x * x + 6 * x * t; },
       [](double, double) { return 0.0; }},
  };
  for (const auto& c : cases)
    for (bool mixed : {false, true}) {
      for (int variant = 0; variant < 2; ++variant) {
        const auto m = variant == 0 ? cartesian_mesh(Interval(0, 1), 1.0, 3, 2, c.p)
                                    : hanging_mesh(c.p, mixed);
        ReferenceCache cache;
        const auto d = discretize(m, cache);
        const auto data = data_for(c.u, c.f);
        const auto uh = assemble_and_solve(d, data);
        EXPECT_LT(interpolation_gap(d, uh, c.u), 1e-10) << "p=" << c.p << " mixed=" << mixed;
      }
    }
}

TEST(Solve, NonUnitCoefficients) {
  // 2 ∂t u - 0.5 ∂xx u = f for u = x² + t x, f = 2x - 1
  const Fn u = [](double x, double t) { return x * x + t * x; };
  const Fn f = [](double x, double) { return 2 * x - 1; };
  const auto m = hanging_mesh(2, false);
  ReferenceCache cache;
  const auto d = discretize(m, cache);
  const auto uh = assemble_and_solve(d, data_for(u, f, 0.5, 2.0));
  EXPECT_LT(interpolation_gap(d, uh, u), 1e-10);
}

TEST(Solve, ZeroDataGivesZero) {
  const auto m = hanging_mesh(2, true);
  ReferenceCache cache;
  const auto d = discretize(m, cache);
  const auto uh = assemble_and_solve(d, ProblemData{});
  EXPECT_EQ(uh.size(), d.dofs.n_dofs);
  EXPECT_LT(uh.lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(Solve, SlabsMatchMonolithic) {
  const Fn u = [](double x, double t) { return std::exp(-t) * std::sin(3.14159 * x); };
  const Fn f = [](double x, double t) {
    return (3.14159 * 3.14159 - 1) * std::exp(-t) * std::sin(3.14159 * x);
  };
  const auto m = hanging_mesh(2, true);
  ReferenceCache cache;
  const auto d = discretize(m, cache);
  const auto data = data_for(u, f);
  const Eigen::VectorXd a = assemble_and_solve(d, data);
  SolveOptions opt;
  opt.monolithic = true;
  const Eigen::VectorXd b = assemble_and_solve(d, data, opt);
  EXPECT_LT((a - b).norm(), 1e-9 * std::max(1.0, b.norm()));

  // the free rows of the assembled system are satisfied
  const auto sys = assemble_global(d, data);
  const Eigen::VectorXd r = sys.A * a - sys.load;
  for (int i = 0; i < d.dofs.n_dofs; ++i)
    if (!d.dofs.constrained[i]) EXPECT_NEAR(r[i], 0.0, 1e-10);
}

TEST(Cache, MatchesDirectBuild) {
  const Fn u = [](double x, double t) { return std::cos(x + t); };
  const Fn f = [](double x, double t) { return -std::sin(x + t) + std::cos(x + t); };
  auto m = hanging_mesh(3, true);
  ReferenceCache on(true), off(false);
  const auto d1 = discretize(m, on);
  const auto d2 = discretize(m, off);
  EXPECT_EQ(on.builds(), static_cast<std::size_t>(m.class_count()));
  EXPECT_EQ(on.size(), static_cast<std::size_t>(m.class_count()));
  EXPECT_EQ(off.builds(), m.n_leaves());
  const Eigen::VectorXd a = assemble_and_solve(d1, data_for(u, f));
  const Eigen::VectorXd b = assemble_and_solve(d2, data_for(u, f));
  EXPECT_LT((a - b).norm(), 1e-12 * std::max(1.0, b.norm()));
  // second use of the same cache builds nothing new
  const auto before = on.builds();
  discretize(m, on);
  EXPECT_EQ(on.builds(), before);
}

TEST(Cache, UniformMeshHasOneClass) {
  // interior elements and boundary elements share the same facet layout
  const auto m = cartesian_mesh(Interval(0, 1), 1.0, 6, 5, 2);
  ReferenceCache cache;
  discretize(m, cache);
  EXPECT_EQ(cache.size(), 1u);
}

TEST(Solve, SingularSystemRaises) {
  const auto m = cartesian_mesh(Interval(0, 1), 1.0, 2, 2, 1);
  ReferenceCache cache;
  const auto d = discretize(m, cache);
  ProblemData data;
  data.nu = 0.0;
  data.cH = 0.0;
  data.f = [](double, double) { return 1.0; };
  try {
    assemble_and_solve(d, data);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.slab(), 0);
  }
}

TEST(Solve, NewtonPotentialRoundTrip) {
  const auto m = hanging_mesh(2, true);
  ReferenceCache cache;
  const auto d = discretize(m, cache);
  std::mt19937 rng(4);
  std::normal_distribution<double> n01;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d.dofs.n_dofs);
  for (int i = 0; i < d.dofs.n_dofs; ++i)
    if (!d.dofs.constrained[i]) w[i] = n01(rng);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d.dofs.n_dofs);
  for (std::size_t i = 0; i < m.n_leaves(); ++i) {
    const auto& l = d.dofs.l2g[i];
    const Eigen::VectorXd r = element_stiffness(d, int(i), 0.7) * d.local(w, int(i));
    for (std::size_t k = 0; k < l.size(); ++k) rhs[l[k]] += r[k];
  }
  bool ls = true;
  const Eigen::VectorXd back = solve_ah(d, 0.7, rhs, &ls);
  EXPECT_FALSE(ls);
  EXPECT_LT((back - w).norm(), 1e-9 * w.norm());
}

TEST(Solve, ThreadCountDoesNotChangeResult) {
  const Fn u = [](double x, double t) { return std::sin(x) * (1 + t); };
  const Fn f = [](double x, double t) { return std::sin(x) * (2 + t); };
  auto m = cartesian_mesh(Interval(0, 1), 1.0, 12, 8, 2);
  ReferenceCache cache;
  const auto d = discretize(m, cache);
  setenv("STVEM_THREADS", "1", 1);
  const Eigen::VectorXd a = assemble_and_solve(d, data_for(u, f));
  setenv("STVEM_THREADS", "4", 1);
  const Eigen::VectorXd b = assemble_and_solve(d, data_for(u, f));
  unsetenv("STVEM_THREADS");
  EXPECT_EQ((a - b).lpNorm<Eigen::Infinity>(), 0.0);
}
