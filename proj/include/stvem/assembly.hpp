#pragma once
// Global DoF numbering, reference-element cache, sparse assembly of b_h and
// slab-by-slab direct solves.
//
// Global DoFs are numbered slab by slab. Bulk and bottom moments are private
// to an element; the moments of a time-like facet are shared by its two
// neighbours (this realizes the nonconforming coupling). Moments on boundary
// facets are constrained to the moments of g.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/SparseQR>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "local_vem.hpp"
#include "mesh.hpp"
#include "parallel.hpp"

namespace stvem {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Quadrature used for data integrals; empty members fall back to plain Gauss.
struct QuadPolicy {
  std::function<QuadratureRule2D(const Rectangle&, int)> bulk_fn;
  std::function<QuadratureRule(const Interval&, double, int)> facet_fn;
  std::function<QuadratureRule(const Interval&, double, int)> bottom_fn;
  int extra = 4;

  [[nodiscard]] QuadratureRule2D bulk(const Rectangle& r, int deg) const {
    return bulk_fn ? bulk_fn(r, deg) : PlainQuad{extra}.bulk(r, deg);
  }
  [[nodiscard]] QuadratureRule facet(const Interval& t, double x, int deg) const {
    return facet_fn ? facet_fn(t, x, deg) : PlainQuad{extra}.facet(t, x, deg);
  }
  [[nodiscard]] QuadratureRule bottom(const Interval& x, double t, int deg) const {
    return bottom_fn ? bottom_fn(x, t, deg) : PlainQuad{extra}.bottom(x, t, deg);
  }
};

/// Coefficients and data of c_H ∂t u - ν ∂xx u = f, u = g on the lateral boundary, u(·,0) = u0.
/// Empty functions mean zero data.
struct ProblemData {
  double nu = 1.0;
  double cH = 1.0;
  std::function<double(double, double)> f;
  std::function<double(double, double)> g;
  std::function<double(double)> u0;
  QuadPolicy quad;
};

/// Direct-solver failure; slab -1 means the monolithic system. The step index
/// is attached by drivers that run sequences of meshes.
class SolverError : public std::runtime_error {
 public:
  SolverError(int slab, const std::string& what, int step = -1)
      : std::runtime_error((step >= 0 ? "step " + std::to_string(step) + ", " : std::string()) +
                           "slab " + std::to_string(slab) + ": " + what),
        slab_(slab),
        step_(step),
        detail_(what) {}
  [[nodiscard]] int slab() const { return slab_; }
  [[nodiscard]] int step() const { return step_; }
  [[nodiscard]] SolverError at_step(int step) const { return SolverError(slab_, detail_, step); }

 private:
  int slab_;
  int step_;
  std::string detail_;
};

struct GlobalDofMap {
  std::vector<int> leaf_pos;          // element id -> position in mesh.leaves(), -1 otherwise
  std::vector<std::vector<int>> l2g;  // per leaf position, local DoF -> global DoF
  std::vector<int> facet_offset;      // per time-like facet
  std::vector<char> constrained;
  std::vector<int> dof_slab;
  std::vector<std::vector<int>> slab_free;  // free DoFs of each slab, ascending
  int n_dofs = 0;
  int n_constrained = 0;
};

inline GlobalDofMap build_dof_map(const SpaceTimeMesh& mesh) {
  GlobalDofMap m;
  m.leaf_pos.assign(mesh.elements().size(), -1);
  for (std::size_t i = 0; i < mesh.leaves().size(); ++i) m.leaf_pos[mesh.leaves()[i]] = int(i);
  m.l2g.resize(mesh.n_leaves());
  m.facet_offset.assign(mesh.time_facets().size(), -1);
  m.slab_free.resize(mesh.slab_count());
  int next = 0;
  auto take = [&](int count, int slab, bool fixed) {
    const int first = next;
    next += count;
    m.constrained.insert(m.constrained.end(), count, fixed ? 1 : 0);
    m.dof_slab.insert(m.dof_slab.end(), count, slab);
    return first;
  };
  for (int s = 0; s < mesh.slab_count(); ++s) {
    for (int id : mesh.slab(s)) {
      const auto& e = mesh.element(id);
      auto& l = m.l2g[m.leaf_pos[id]];
      const int p = e.degree;
      const int b0 = take(dim_p2(p - 1), s, false);
      for (int k = 0; k < dim_p2(p - 1); ++k) l.push_back(b0 + k);
      auto facets = e.left_facets;
      facets.insert(facets.end(), e.right_facets.begin(), e.right_facets.end());
      for (int f : facets) {
        const auto& tf = mesh.time_facet(f);
        if (m.facet_offset[f] < 0) m.facet_offset[f] = take(tf.moment_degree + 1, s, tf.boundary());
        for (int k = 0; k <= tf.moment_degree; ++k) l.push_back(m.facet_offset[f] + k);
      }
      const int x0 = take(p + 1, s, false);
      for (int k = 0; k <= p; ++k) l.push_back(x0 + k);
    }
  }
  m.n_dofs = next;
  for (int i = 0; i < next; ++i) {
    if (m.constrained[i])
      ++m.n_constrained;
    else
      m.slab_free[m.dof_slab[i]].push_back(i);
  }
  return m;
}

/// Operators of one element: either computed on the element itself (ax = at = 1)
/// or taken from the unit-square reference and scaled by (ax, at) = (hx, ht).
struct ElementOps {
  std::shared_ptr<const LocalOperators> op;
  double ax = 1.0;
  double at = 1.0;
};

/// Local operators per topology class, computed lazily on the unit square.
class ReferenceCache {
 public:
  explicit ReferenceCache(bool enabled = true) : enabled_(enabled) {}

  ElementOps get(const SpaceTimeMesh& mesh, int id, const LocalGeometry& g) {
    if (!enabled_) {
      auto op = std::make_shared<const LocalOperators>(build_local_operators(g));
      std::lock_guard<std::mutex> lock(mutex_);
      ++builds_;
      return {std::move(op), 1.0, 1.0};
    }
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = mesh.topo_signature(id);
    auto it = table_.find(key);
    if (it == table_.end()) {
      ++builds_;
      it = table_.emplace(std::move(key),
                          std::make_shared<const LocalOperators>(build_local_operators(g.normalized())))
               .first;
    }
    return {it->second, g.hx(), g.ht()};
  }

  [[nodiscard]] bool enabled() const { return enabled_; }
  [[nodiscard]] std::size_t builds() const { return builds_; }
  [[nodiscard]] std::size_t size() const { return table_.size(); }

 private:
  bool enabled_;
  std::size_t builds_ = 0;
  std::map<std::vector<std::int64_t>, std::shared_ptr<const LocalOperators>> table_;
  std::mutex mutex_;
};

struct Discretization {
  const SpaceTimeMesh* mesh = nullptr;
  GlobalDofMap dofs;
  std::vector<LocalGeometry> geom;        // per leaf position
  std::vector<ElementOps> ops;            // per leaf position
  std::vector<std::vector<double>> hFx;   // per leaf position and local facet

  [[nodiscard]] int pos(int id) const { return dofs.leaf_pos[id]; }
  [[nodiscard]] const LocalOperators& op(int pos) const { return *ops[pos].op; }
  [[nodiscard]] Eigen::VectorXd local(const Eigen::VectorXd& u, int pos) const {
    const auto& l = dofs.l2g[pos];
    Eigen::VectorXd v(l.size());
    for (std::size_t i = 0; i < l.size(); ++i) v[i] = u[l[i]];
    return v;
  }
};

inline Discretization discretize(const SpaceTimeMesh& mesh, ReferenceCache& cache) {
  Discretization d;
  d.mesh = &mesh;
  d.dofs = build_dof_map(mesh);
  const auto n = mesh.n_leaves();
  d.geom.resize(n);
  d.ops.resize(n);
  d.hFx.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int id = mesh.leaves()[i];
    d.geom[i] = local_geometry(mesh, id);
    const auto& e = mesh.element(id);
    for (int f : e.left_facets) d.hFx[i].push_back(mesh.time_facet(f).h_Fx);
    for (int f : e.right_facets) d.hFx[i].push_back(mesh.time_facet(f).h_Fx);
  }
  // classes are populated in leaf order so the build count is the class count
  if (cache.enabled()) {
    for (std::size_t i = 0; i < n; ++i) d.ops[i] = cache.get(mesh, mesh.leaves()[i], d.geom[i]);
  } else {
    parallel_for(n, [&](std::size_t i) { d.ops[i] = cache.get(mesh, mesh.leaves()[i], d.geom[i]); });
  }
  return d;
}

// ---------------------------------------------------------------------------
// element matrices at physical size
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd element_C(const Discretization& d, int pos) {
  const auto& e = d.ops[pos];
  return (e.at / e.ax) * e.op->C;
}

inline Eigen::MatrixXd element_stiffness(const Discretization& d, int pos, double nu) {
  const auto& e = d.ops[pos];
  const auto& o = *e.op;
  const auto& g = d.geom[pos];
  const double p = g.p, hx = g.hx(), ht = g.ht();
  Eigen::MatrixXd A = (e.at / e.ax) * o.C + (p * p / (hx * hx) * e.ax * e.at) * o.SB +
                      (p * ht / (hx * hx) * e.ax) * o.SX;
  for (std::size_t k = 0; k < o.SF.size(); ++k) A += (p / d.hFx[pos][k] * e.at) * o.SF[k];
  return nu * A;
}

inline Eigen::MatrixXd element_stabilization(const Discretization& d, int pos, double nu) {
  return element_stiffness(d, pos, nu) - nu * element_C(d, pos);
}

inline Eigen::MatrixXd element_time(const Discretization& d, int pos) {
  return d.ops[pos].ax * d.ops[pos].op->Tn;
}

inline Eigen::MatrixXd element_self_upwind(const Discretization& d, int pos) {
  return d.ops[pos].ax * d.ops[pos].op->Sn;
}

/// -c_H (Π* u|K-, v|K+)_{Ex} for a space-like facet with both neighbours.
inline Eigen::MatrixXd facet_coupling(const Discretization& d, const SpaceLikeFacet& ex, double cH) {
  const int pp = d.pos(ex.above_elem), pm = d.pos(ex.below_elem);
  return upwind_coupling(d.op(pp), d.geom[pp], d.op(pm), d.geom[pm], ex.x_iv, cH);
}

/// Element load: (f, Π0 v)_K plus c_H (u0, v(·,0)) on initial bottom facets.
inline Eigen::VectorXd element_load(const Discretization& d, int pos, const ProblemData& data) {
  const auto& g = d.geom[pos];
  const auto& o = d.op(pos);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(o.ndof());
  if (data.f) {
    const auto bb = basis_2d_any(g.p - 1, g.rect);
    const auto rule = data.quad.bulk(g.rect, g.p - 1);
    const Eigen::VectorXd Fm = moments(data.f, bb, rule, 1.0, o.dofs.n_bulk);
    b.head(o.dofs.n_bulk) = o.LoadMap * Fm;  // |K| Mb^{-1} is dilation invariant
  }
  if (data.u0 && std::abs(g.rect.t.lo) <= d.mesh->tol()) {
    const auto xb = basis_1d(g.p, g.rect.x);
    const Eigen::VectorXd U0 = moments(data.u0, xb, data.quad.bottom(g.rect.x, 0.0, g.p), 1.0);
    b += initial_load(o, U0, data.cH);
  }
  return b;
}

/// Values of the constrained DoFs: facet moments of g (zero without data).
inline Eigen::VectorXd boundary_values(const Discretization& d, const ProblemData& data) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(d.dofs.n_dofs);
  if (!data.g) return u;
  const auto& mesh = *d.mesh;
  for (const auto& f : mesh.time_facets()) {
    if (!f.boundary()) continue;
    const auto fb = basis_1d(f.moment_degree, f.t_iv);
    const double x = f.x_pos;
    const auto mom = moments([&](double t) { return data.g(x, t); }, fb,
                             data.quad.facet(f.t_iv, x, f.moment_degree), f.t_iv.length());
    u.segment(d.dofs.facet_offset[f.id], mom.size()) = mom;
  }
  return u;
}

struct SolveOptions {
  bool monolithic = false;
  std::string dump_dir;  // write each slab matrix as "row col value" lines when set
};

namespace detail {

struct ElementBlock {
  Eigen::MatrixXd K;
  Eigen::VectorXd b;
  std::vector<std::pair<int, Eigen::MatrixXd>> couplings;  // (K- position, block)
};

inline ElementBlock element_block(const Discretization& d, int pos, const ProblemData& data) {
  ElementBlock blk;
  blk.K = data.cH * (element_time(d, pos) + element_self_upwind(d, pos)) +
          element_stiffness(d, pos, data.nu);
  blk.b = element_load(d, pos, data);
  const auto& mesh = *d.mesh;
  for (int ex : mesh.element(mesh.leaves()[pos]).bottom_facets) {
    const auto& f = mesh.space_facet(ex);
    if (f.initial()) continue;
    blk.couplings.emplace_back(d.pos(f.below_elem), facet_coupling(d, f, data.cH));
  }
  return blk;
}

inline void dump_coo(const std::string& dir, int slab, const SpMat& A) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir + "/slab_" + std::to_string(slab) + ".coo");
  os << std::setprecision(17);
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

inline Eigen::VectorXd sparse_solve(const SpMat& A, const Eigen::VectorXd& rhs, int slab) {
  if (A.rows() == 0) return Eigen::VectorXd(0);
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success) throw SolverError(slab, "sparse LU factorization failed");
  Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite())
    throw SolverError(slab, "sparse LU solve failed");
  return x;
}

}  // namespace detail

/// Full b_h matrix (rows test, cols trial) and load over all DoFs, constraints not applied.
struct GlobalSystem {
  SpMat A;
  Eigen::VectorXd load;
};

inline GlobalSystem assemble_global(const Discretization& d, const ProblemData& data) {
  const auto n = d.mesh->n_leaves();
  std::vector<detail::ElementBlock> blocks(n);
  parallel_for(n, [&](std::size_t i) { blocks[i] = detail::element_block(d, int(i), data); });
  std::vector<Triplet> trip;
  GlobalSystem sys;
  sys.load = Eigen::VectorXd::Zero(d.dofs.n_dofs);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = d.dofs.l2g[i];
    const auto& blk = blocks[i];
    for (std::size_t r = 0; r < l.size(); ++r) {
      sys.load[l[r]] += blk.b[r];
      for (std::size_t c = 0; c < l.size(); ++c) trip.emplace_back(l[r], l[c], blk.K(r, c));
      for (const auto& [pm, C] : blk.couplings) {
        const auto& lm = d.dofs.l2g[pm];
        for (std::size_t c = 0; c < lm.size(); ++c) trip.emplace_back(l[r], lm[c], C(r, c));
      }
    }
  }
  sys.A.resize(d.dofs.n_dofs, d.dofs.n_dofs);
  sys.A.setFromTriplets(trip.begin(), trip.end());
  return sys;
}

/// Solve the method; returns all DoFs, constrained ones set to the moments of g.
inline Eigen::VectorXd assemble_and_solve(const Discretization& d, const ProblemData& data,
                                          const SolveOptions& opt = {}) {
  const auto& mesh = *d.mesh;
  const auto& map = d.dofs;
  Eigen::VectorXd u = boundary_values(d, data);
  std::vector<int> row_of(map.n_dofs, -1);

  if (opt.monolithic) {
    const auto sys = assemble_global(d, data);
    std::vector<int> free;
    for (int i = 0; i < map.n_dofs; ++i)
      if (!map.constrained[i]) {
        row_of[i] = int(free.size());
        free.push_back(i);
      }
    std::vector<Triplet> trip;
    Eigen::VectorXd rhs(free.size());
    for (std::size_t k = 0; k < free.size(); ++k) rhs[k] = sys.load[free[k]];
    for (int c = 0; c < sys.A.outerSize(); ++c)
      for (SpMat::InnerIterator it(sys.A, c); it; ++it) {
        const int r = row_of[it.row()];
        if (r < 0) continue;
        if (map.constrained[it.col()])
          rhs[r] -= it.value() * u[it.col()];
        else
          trip.emplace_back(r, row_of[it.col()], it.value());
      }
    SpMat A(free.size(), free.size());
    A.setFromTriplets(trip.begin(), trip.end());
    if (!opt.dump_dir.empty()) detail::dump_coo(opt.dump_dir, -1, A);
    const auto x = detail::sparse_solve(A, rhs, -1);
    for (std::size_t k = 0; k < free.size(); ++k) u[free[k]] = x[k];
    return u;
  }

  for (int s = 0; s < mesh.slab_count(); ++s) {
    const auto& free = map.slab_free[s];
    for (std::size_t k = 0; k < free.size(); ++k) row_of[free[k]] = int(k);
    const auto& elems = mesh.slab(s);
    std::vector<detail::ElementBlock> blocks(elems.size());
    parallel_for(elems.size(),
                 [&](std::size_t i) { blocks[i] = detail::element_block(d, d.pos(elems[i]), data); });
    std::vector<Triplet> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(free.size());
    auto add_column = [&](int r, int gc, double v) {
      if (map.constrained[gc] || map.dof_slab[gc] < s)
        rhs[r] -= v * u[gc];  // known value: boundary data or an earlier slab
      else
        trip.emplace_back(r, row_of[gc], v);
    };
    for (std::size_t i = 0; i < elems.size(); ++i) {
      const int pos = d.pos(elems[i]);
      const auto& l = map.l2g[pos];
      const auto& blk = blocks[i];
      for (std::size_t r = 0; r < l.size(); ++r) {
        if (map.constrained[l[r]]) continue;
        const int row = row_of[l[r]];
        rhs[row] += blk.b[r];
        for (std::size_t c = 0; c < l.size(); ++c) add_column(row, l[c], blk.K(r, c));
        for (const auto& [pm, C] : blk.couplings) {
          const auto& lm = map.l2g[pm];
          for (std::size_t c = 0; c < lm.size(); ++c) add_column(row, lm[c], C(r, c));
        }
      }
    }
    SpMat A(free.size(), free.size());
    A.setFromTriplets(trip.begin(), trip.end());
    if (!opt.dump_dir.empty()) detail::dump_coo(opt.dump_dir, s, A);
    const auto x = detail::sparse_solve(A, rhs, s);
    for (std::size_t k = 0; k < free.size(); ++k) u[free[k]] = x[k];
  }
  return u;
}

/// Solve a_h(w, v) = r(v) for all v with zero boundary moments; `rhs` is indexed by
/// test DoF. a_h does not couple slabs, so each slab is solved on its own.
/// Sets `least_squares` when a slab needed the QR fallback.
inline Eigen::VectorXd solve_ah(const Discretization& d, double nu, const Eigen::VectorXd& rhs,
                                bool* least_squares = nullptr) {
  const auto& mesh = *d.mesh;
  const auto& map = d.dofs;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(map.n_dofs);
  std::vector<int> row_of(map.n_dofs, -1);
  if (least_squares) *least_squares = false;
  for (int s = 0; s < mesh.slab_count(); ++s) {
    const auto& free = map.slab_free[s];
    for (std::size_t k = 0; k < free.size(); ++k) row_of[free[k]] = int(k);
    const auto& elems = mesh.slab(s);
    std::vector<Eigen::MatrixXd> K(elems.size());
    parallel_for(elems.size(),
                 [&](std::size_t i) { K[i] = element_stiffness(d, d.pos(elems[i]), nu); });
    std::vector<Triplet> trip;
    Eigen::VectorXd b(free.size());
    for (std::size_t k = 0; k < free.size(); ++k) b[k] = rhs[free[k]];
    for (std::size_t i = 0; i < elems.size(); ++i) {
      const auto& l = map.l2g[d.pos(elems[i])];
      for (std::size_t r = 0; r < l.size(); ++r) {
        if (map.constrained[l[r]]) continue;
        for (std::size_t c = 0; c < l.size(); ++c)
          if (!map.constrained[l[c]]) trip.emplace_back(row_of[l[r]], row_of[l[c]], K[i](r, c));
      }
    }
    SpMat A(free.size(), free.size());
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::VectorXd x;
    try {
      x = detail::sparse_solve(A, b, s);
    } catch (const SolverError&) {
      A.makeCompressed();
      Eigen::SparseQR<SpMat, Eigen::COLAMDOrdering<int>> qr(A);
      x = qr.solve(b);
      if (least_squares) *least_squares = true;
    }
    for (std::size_t k = 0; k < free.size(); ++k) w[free[k]] = x[k];
  }
  return w;
}

}  // namespace stvem
