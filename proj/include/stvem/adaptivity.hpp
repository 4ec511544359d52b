#pragma once
// Dörfler marking, the SOLVE -> ESTIMATE -> MARK -> REFINE loop, and the
// prescribed hp mesh sequences.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "analysis.hpp"

namespace stvem {

/// Minimal set of leaf positions with Σ η_K² ≥ θ Σ η². Candidates are taken by
/// decreasing η_K, ties by increasing element id.
inline std::vector<int> doerfler_mark(const std::vector<double>& eta_K, const std::vector<int>& ids,
                                      double theta) {
  if (eta_K.empty()) throw std::invalid_argument("doerfler_mark: empty mesh");
  if (ids.size() != eta_K.size()) throw std::invalid_argument("doerfler_mark: size mismatch");
  if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("doerfler_mark: theta must lie in (0,1]");
  std::vector<int> order(eta_K.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (eta_K[a] != eta_K[b]) return eta_K[a] > eta_K[b];
    return ids[a] < ids[b];
  });
  double total = 0.0;
  for (double e : eta_K) {
    if (e < 0.0) throw std::invalid_argument("doerfler_mark: negative indicator");
    total += e * e;
  }
  const double target = theta * total;
  // absorbs the summation-order rounding so that θ = 1 stops at the last nonzero η_K
  const double slack = 1e-13 * total;
  std::vector<int> marked;
  double acc = 0.0;
  for (int k : order) {
    if (acc >= target - slack) break;
    acc += eta_K[k] * eta_K[k];
    marked.push_back(k);
  }
  return marked;
}

/// True if `marked` satisfies the Dörfler inequality and dropping its smallest member breaks it.
inline bool doerfler_minimal(const std::vector<double>& eta_K, const std::vector<int>& marked,
                             double theta) {
  double total = 0.0, acc = 0.0, smallest = INFINITY;
  for (double e : eta_K) total += e * e;
  for (int k : marked) {
    acc += eta_K[k] * eta_K[k];
    smallest = std::min(smallest, eta_K[k] * eta_K[k]);
  }
  const double slack = 1e-13 * total;
  if (acc < theta * total - slack) return false;
  return marked.empty() || acc - smallest < theta * total - slack;
}

struct StudyOptions {
  bool compute_EN = true;
  bool cache_on = true;
  int extra = 4;  // extra quadrature points for error and data integrals
  TopoEquivalence topo = TopoEquivalence::translation;
  // replace the operator coefficients; errors still refer to the unmodified solution
  std::optional<double> nu, cH;
};

/// One row of a convergence or adaptive study.
struct StepRecord {
  int step = 0;
  int n_dofs = 0;
  double EY = 0, EN = 0, EU = 0, EX = 0;
  std::array<double, 5> eta_i{};
  double eta = 0, effectivity = 0;
  int n_elements = 0, n_slabs = 0, n_ref_elements = 0;
  double seconds = 0;
  bool EN_computed = false;
  bool EN_least_squares = false;
  std::size_t local_builds = 0;  // local operator computations on this step
  double bookkeeping_gap = 0;    // max relative gap between η², Σ η_i², Σ η_K²
  std::vector<double> eta_K;     // per leaf position, for marking
};

struct StudyReport {
  std::vector<StepRecord> steps;
};

/// Solve on one mesh and evaluate all error quantities and the indicator.
inline StepRecord measure_step(SpaceTimeMesh& mesh, const ExactSolution& ex, const StudyOptions& opt,
                               int step) {
  const auto t0 = std::chrono::steady_clock::now();
  if (mesh.topo_equivalence() != opt.topo) {
    mesh.set_topo_equivalence(opt.topo);
    mesh.compute_topo_flags();
  }
  ReferenceCache cache(opt.cache_on);
  const auto d = discretize(mesh, cache);
  auto data = ex.problem(opt.extra);
  if (opt.nu) data.nu = *opt.nu;
  if (opt.cH) data.cH = *opt.cH;
  Eigen::VectorXd uh;
  try {
    uh = assemble_and_solve(d, data);
  } catch (const SolverError& e) {
    throw e.at_step(step);
  }
  ErrorOptions eo;
  eo.compute_EN = opt.compute_EN;
  eo.extra = opt.extra;
  const auto err = compute_errors(d, uh, ex, eo);
  const auto ind = indicator(d, uh, data);

  StepRecord r;
  r.step = step;
  r.n_dofs = d.dofs.n_dofs;
  r.EY = err.EY;
  r.EN = err.EN;
  r.EU = err.EU;
  r.EX = err.EX;
  r.EN_computed = err.EN_computed;
  r.EN_least_squares = err.EN_least_squares;
  r.eta_i = ind.eta_i;
  r.eta = ind.eta;
  r.effectivity = effectivity(ind, err);
  r.n_elements = static_cast<int>(mesh.n_leaves());
  r.n_slabs = mesh.slab_count();
  r.n_ref_elements = mesh.class_count();
  r.local_builds = cache.builds();
  double by_part = 0, by_elem = 0;
  for (double e : ind.eta_i) by_part += e * e;
  for (double e : ind.eta_K) by_elem += e * e;
  const double eta_sq = std::max(ind.eta * ind.eta, 1e-300);
  r.bookkeeping_gap = std::max(std::abs(by_part - eta_sq), std::abs(by_elem - eta_sq)) / eta_sq;
  r.eta_K = ind.eta_K;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

struct AdaptiveConfig {
  double theta = 0.99;
  int max_steps = 25;
  int max_dofs = 200000;
  int degree = 2;
  int test_case = 2;
  double alpha = 0.55;
  StudyOptions options;
};

inline void validate(const AdaptiveConfig& c) {
  if (!(c.theta > 0.0 && c.theta <= 1.0)) throw std::invalid_argument("theta must lie in (0,1]");
  if (c.max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  if (c.max_dofs < 1) throw std::invalid_argument("max_dofs must be >= 1");
  if (c.degree < 1) throw std::invalid_argument("degree must be >= 1");
}

struct AdaptiveResult {
  StudyReport report;
  SpaceTimeMesh mesh{Interval(0.0, 1.0), 1.0};
  std::vector<std::vector<int>> marked;  // element ids marked after each step
};

using StepCallback = std::function<void(const StepRecord&, const SpaceTimeMesh&)>;

/// Adaptive loop from mesh0. Stops after max_steps solves, or before solving a
/// mesh with more than max_dofs DoFs.
inline AdaptiveResult adapt_loop(const AdaptiveConfig& cfg, SpaceTimeMesh mesh0,
                                 const StepCallback& on_step = {}) {
  validate(cfg);
  const auto ex = test_case(cfg.test_case, cfg.alpha);
  AdaptiveResult res;
  res.mesh = std::move(mesh0);
  for (int step = 1; step <= cfg.max_steps; ++step) {
    if (step > 1 && build_dof_map(res.mesh).n_dofs > cfg.max_dofs) break;
    auto rec = measure_step(res.mesh, ex, cfg.options, step);
    if (on_step) on_step(rec, res.mesh);
    const bool last = step == cfg.max_steps;
    if (!last) {
      const auto pos = doerfler_mark(rec.eta_K, res.mesh.leaves(), cfg.theta);
      if (!doerfler_minimal(rec.eta_K, pos, cfg.theta))
        throw std::logic_error("doerfler_mark returned a non-minimal set");
      std::vector<int> ids;
      for (int k : pos) ids.push_back(res.mesh.leaves()[k]);
      refine_in_place(res.mesh, ids);
      res.marked.push_back(std::move(ids));
    }
    res.report.steps.push_back(std::move(rec));
    if (last) break;
  }
  return res;
}

/// Adaptive loop from the one-element mesh of the test problem with degree cfg.degree.
inline AdaptiveResult adapt_loop(const AdaptiveConfig& cfg, const StepCallback& on_step = {}) {
  validate(cfg);
  const auto ex = test_case(cfg.test_case, cfg.alpha);
  return adapt_loop(cfg, cartesian_mesh(ex.omega, ex.T, 1, 1, cfg.degree), on_step);
}

/// Prescribed hp meshes, levels 1..levels. Test 2: h_x = 0.05 and time layers
/// graded toward t = 0 with σ_t = 0.1; test 3: grading toward x = 0, 1 and
/// t = 0 with σ_x = σ_t = 0.25. Degrees grow by one per time layer, bottom-up.
inline std::vector<SpaceTimeMesh> hp_sequence(int test, int levels) {
  if (levels < 1) throw std::invalid_argument("hp_sequence: levels must be >= 1");
  std::vector<SpaceTimeMesh> out;
  for (int L = 1; L <= levels; ++L) {
    std::vector<int> deg(L);
    std::iota(deg.begin(), deg.end(), 1);
    if (test == 2)
      out.push_back(graded_mesh_t(Interval(0, 1), 0.1, 0.05, 0.1, L, deg));
    else if (test == 3)
      out.push_back(graded_mesh_xt(Interval(0, 1), 1.0, 0.25, 0.25, L, deg));
    else
      throw std::invalid_argument("hp_sequence: test must be 2 or 3");
  }
  return out;
}

}  // namespace stvem
