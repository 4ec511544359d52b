#pragma once
// Element-level virtual element machinery.
//
// Local DoF order: bulk moments against P_{p-1}(K), then the moments of each
// time-like facet (left side bottom-up, then right side bottom-up) against
// P_{p_F}(F), then the bottom moments against P_p(Kx) at t = t_K.lo.
// All moments are normalized by the measure of their domain.
//
// Matrices acting on DoF vectors are stored with rows = test, cols = trial.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mesh.hpp"
#include "polybasis.hpp"

namespace stvem {

struct FacetSpec {
  Interval t_iv;
  int degree = 1;
  int side = -1;  // -1 on x = x_lo (outward normal -x), +1 on x = x_hi
};

struct LocalGeometry {
  Rectangle rect;
  int p = 1;
  std::vector<FacetSpec> facets;  // left bottom-up, then right bottom-up

  [[nodiscard]] double hx() const { return rect.x.length(); }
  [[nodiscard]] double ht() const { return rect.t.length(); }

  /// Same topology on the unit square (0,1)².
  [[nodiscard]] LocalGeometry normalized() const {
    LocalGeometry g;
    g.rect = {Interval(0.0, 1.0), Interval(0.0, 1.0)};
    g.p = p;
    const double t0 = rect.t.lo, ht_ = ht();
    for (const auto& f : facets)
      g.facets.push_back({Interval((f.t_iv.lo - t0) / ht_, (f.t_iv.hi - t0) / ht_), f.degree, f.side});
    // snap end points so the side cover stays exact
    auto snap = [](std::vector<FacetSpec>& fs, int side) {
      FacetSpec* first = nullptr;
      FacetSpec* last = nullptr;
      for (auto& f : fs)
        if (f.side == side) {
          if (!first) first = &f;
          last = &f;
        }
      if (first) first->t_iv.lo = 0.0;
      if (last) last->t_iv.hi = 1.0;
    };
    snap(g.facets, -1);
    snap(g.facets, +1);
    return g;
  }
};

inline LocalGeometry local_geometry(const SpaceTimeMesh& mesh, int id) {
  const auto& e = mesh.element(id);
  LocalGeometry g;
  g.rect = e.rect();
  g.p = e.degree;
  for (int f : e.left_facets)
    g.facets.push_back({mesh.time_facet(f).t_iv, mesh.time_facet(f).moment_degree, -1});
  for (int f : e.right_facets)
    g.facets.push_back({mesh.time_facet(f).t_iv, mesh.time_facet(f).moment_degree, +1});
  return g;
}

struct LocalDofSet {
  int p = 1;
  int n_bulk = 0;
  std::vector<int> facet_offset;
  std::vector<int> facet_count;
  int space_offset = 0;
  int n_space = 0;
  int total = 0;
};

inline LocalDofSet dof_layout(const LocalGeometry& g) {
  if (g.p < 1) throw std::invalid_argument("dof_layout: degree must be >= 1");
  LocalDofSet d;
  d.p = g.p;
  d.n_bulk = dim_p2(g.p - 1);
  int off = d.n_bulk;
  for (const auto& f : g.facets) {
    if (f.degree < 1) throw std::invalid_argument("dof_layout: facet degree must be >= 1");
    d.facet_offset.push_back(off);
    d.facet_count.push_back(f.degree + 1);
    off += f.degree + 1;
  }
  d.space_offset = off;
  d.n_space = g.p + 1;
  d.total = off + d.n_space;
  return d;
}

/// Quadrature used for moments of general functions; `deg` is the degree of the
/// polynomial weight, `extra` adds points for non-polynomial integrands.
struct PlainQuad {
  int extra = 4;
  [[nodiscard]] QuadratureRule2D bulk(const Rectangle& r, int deg) const {
    const int n = points_for_degree(deg) + extra;
    return tensor_rule(gauss_rule(n, r.x), gauss_rule(n, r.t));
  }
  [[nodiscard]] QuadratureRule facet(const Interval& t, double /*x*/, int deg) const {
    return gauss_rule(points_for_degree(deg) + extra, t);
  }
  [[nodiscard]] QuadratureRule bottom(const Interval& x, double /*t*/, int deg) const {
    return gauss_rule(points_for_degree(deg) + extra, x);
  }
};

/// DoF vector of a function f(x, t) evaluable on the closure of K.
template <class F, class Q = PlainQuad>
Eigen::VectorXd dof_evaluate(F&& f, const LocalGeometry& g, const LocalDofSet& d,
                             const Q& quad = Q{}) {
  Eigen::VectorXd out(d.total);
  const auto& r = g.rect;
  if (d.n_bulk > 0) {
    const auto bb = basis_2d_any(g.p - 1, r);
    out.head(d.n_bulk) = moments(f, bb, quad.bulk(r, g.p - 1), r.area(), d.n_bulk);
  }
  for (std::size_t k = 0; k < g.facets.size(); ++k) {
    const auto& fs = g.facets[k];
    const double x = fs.side < 0 ? r.x.lo : r.x.hi;
    const auto fb = basis_1d(fs.degree, fs.t_iv);
    out.segment(d.facet_offset[k], d.facet_count[k]) =
        moments([&](double t) { return f(x, t); }, fb, quad.facet(fs.t_iv, x, fs.degree),
                fs.t_iv.length());
  }
  const auto xb = basis_1d(g.p, r.x);
  const double t0 = r.t.lo;
  out.segment(d.space_offset, d.n_space) =
      moments([&](double x) { return f(x, t0); }, xb, quad.bottom(r.x, t0, g.p), r.x.length());
  return out;
}

/// Projectors and unweighted local matrices of one element.
struct LocalOperators {
  LocalDofSet dofs;
  Eigen::MatrixXd D;       // DoFs of the P_p monomials (ndof × np)
  Eigen::MatrixXd PiN;     // np × ndof
  Eigen::MatrixXd PiStar;  // np × ndof
  Eigen::MatrixXd Pi0B;    // bulk L2 projection coefficients, nb × ndof
  std::vector<Eigen::MatrixXd> Pi0F;
  Eigen::MatrixXd Wtr;  // bottom trace coefficients, (p+1) × ndof
  Eigen::MatrixXd Mb;   // Gram of the P_{p-1} bulk basis
  Eigen::MatrixXd Mx;   // Gram of the bottom basis
  Eigen::MatrixXd LoadMap;  // |K| Mb^{-1}: bulk rows of the load from ∫ f m_β

  // unweighted bilinear forms
  Eigen::MatrixXd C;                // (∂x ΠN ·, ∂x ΠN ·)_K
  Eigen::MatrixXd SB;               // bulk stabilization on the ΠN complement
  std::vector<Eigen::MatrixXd> SF;  // per facet
  Eigen::MatrixXd SX;               // bottom trace
  Eigen::MatrixXd Tn;               // (∂t Π* u, Π0 v)_K
  Eigen::MatrixXd Sn;               // (Π* u(·,t_K), v(·,t_K))_{Kx}

  [[nodiscard]] int ndof() const { return dofs.total; }
};

namespace detail {

// ∫_F τ^b v in terms of facet moments: coefficients c_j with ∫_F τ^b v = |F| Σ c_j dof_j.
inline Eigen::VectorXd tau_power_on_facet(int b, const Interval& kt, const Interval& ft, int pf) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(pf + 1);
  const double shift = (ft.mid() - kt.mid()) / kt.length();
  const double scale = ft.length() / kt.length();
  double binom = 1.0;
  for (int j = 0; j <= b; ++j) {
    if (j > 0) binom = binom * (b - j + 1) / j;
    c[j] = binom * std::pow(shift, b - j) * std::pow(scale, j);
  }
  return c;
}

inline Eigen::MatrixXd solve_checked(const Eigen::MatrixXd& G, const Eigen::MatrixXd& B,
                                     const char* what) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
  if (!lu.isInvertible()) throw std::runtime_error(std::string(what) + ": singular local system");
  return lu.solve(B);
}

}  // namespace detail

inline LocalOperators build_local_operators(const LocalGeometry& g) {
  LocalOperators op;
  op.dofs = dof_layout(g);
  const auto& d = op.dofs;
  const int p = g.p, np = dim_p2(p), nb = d.n_bulk, nd = d.total;
  const auto& r = g.rect;
  const double hx = g.hx(), ht = g.ht(), area = r.area();
  const auto basis = basis_2d(p, r);
  const auto xb = basis_1d(p, r.x);

  // element rules exact for degree 2p
  const int nq = p + 2;
  const auto rule = tensor_rule(gauss_rule(nq, r.x), gauss_rule(nq, r.t));
  const auto rule_x = gauss_rule(nq, r.x);

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(np, np);   // ∫ m_i m_j
  Eigen::MatrixXd Ag = Eigen::MatrixXd::Zero(np, np);  // ∫ ∂x m_i ∂x m_j
  {
    Eigen::VectorXd v(np), dx(np);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      basis.eval(rule.x[q], rule.t[q], v.data(), dx.data());
      M.noalias() += rule.weights[q] * v * v.transpose();
      Ag.noalias() += rule.weights[q] * dx * dx.transpose();
    }
  }
  // Q(γ, l) = ∫_{Kx} ξ^γ m_l(x, t_lo)
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(p + 1, np);
  {
    Eigen::VectorXd v(np), w(p + 1);
    for (std::size_t q = 0; q < rule_x.size(); ++q) {
      basis.eval(rule_x.nodes[q], r.t.lo, v.data());
      xb.eval(rule_x.nodes[q], std::span<double>(w.data(), p + 1));
      Q.noalias() += rule_x.weights[q] * w * v.transpose();
    }
  }
  op.Mb = M.topLeftCorner(nb, nb);
  op.Mx = gram_1d(xb, r.x);
  op.LoadMap = area * op.Mb.inverse();

  // DoFs of the monomials
  op.D = Eigen::MatrixXd::Zero(nd, np);
  op.D.topRows(nb) = M.topRows(nb) / area;
  for (std::size_t k = 0; k < g.facets.size(); ++k) {
    const auto& fs = g.facets[k];
    const double x = fs.side < 0 ? r.x.lo : r.x.hi;
    const auto fb = basis_1d(fs.degree, fs.t_iv);
    const auto fr = gauss_rule((p + fs.degree) / 2 + 1, fs.t_iv);
    Eigen::VectorXd v(np), w(fs.degree + 1);
    Eigen::MatrixXd blk = Eigen::MatrixXd::Zero(fs.degree + 1, np);
    for (std::size_t q = 0; q < fr.size(); ++q) {
      basis.eval(x, fr.nodes[q], v.data());
      fb.eval(fr.nodes[q], std::span<double>(w.data(), w.size()));
      blk.noalias() += fr.weights[q] * w * v.transpose();
    }
    op.D.middleRows(d.facet_offset[k], d.facet_count[k]) = blk / fs.t_iv.length();
  }
  op.D.middleRows(d.space_offset, d.n_space) = Q / hx;

  // ΠN: one condition per monomial
  {
    Eigen::MatrixXd G(np, np), B = Eigen::MatrixXd::Zero(np, nd);
    for (int row = 0; row < np; ++row) {
      const auto [a, b] = ScaledMonomialBasis2D::exponent(row);
      if (a >= 1) {
        G.row(row) = Ag.row(row);
        if (a >= 2) B(row, monomial_index(a - 2, b)) -= a * (a - 1) / (hx * hx) * area;
        for (std::size_t k = 0; k < g.facets.size(); ++k) {
          const auto& fs = g.facets[k];
          const double xi = 0.5 * fs.side;
          const double dm = a / hx * std::pow(xi, a - 1);  // ∂x m on the side, times τ^b
          const auto c = detail::tau_power_on_facet(b, r.t, fs.t_iv, fs.degree);
          B.block(row, d.facet_offset[k], 1, d.facet_count[k]) +=
              (fs.side * dm * fs.t_iv.length()) * c.transpose();
        }
      } else if (b < p) {
        G.row(row) = M.row(row);
        B(row, monomial_index(0, b)) = area;
      } else {
        G.row(row) = Q.row(0);
        B(row, d.space_offset) = hx;
      }
    }
    op.PiN = detail::solve_checked(G, B, "build_PiN");
  }

  // Π*
  {
    Eigen::MatrixXd G(np, np), B = Eigen::MatrixXd::Zero(np, nd);
    G.topRows(nb) = M.topRows(nb);
    B.topLeftCorner(nb, nb) = area * Eigen::MatrixXd::Identity(nb, nb);
    G.bottomRows(p + 1) = Q;
    B.block(nb, d.space_offset, p + 1, p + 1) = hx * Eigen::MatrixXd::Identity(p + 1, p + 1);
    op.PiStar = detail::solve_checked(G, B, "build_PiStar");
  }

  // L2 projections
  op.Pi0B = Eigen::MatrixXd::Zero(nb, nd);
  op.Pi0B.leftCols(nb) = op.LoadMap;
  std::vector<Eigen::MatrixXd> MF;
  for (std::size_t k = 0; k < g.facets.size(); ++k) {
    const auto& fs = g.facets[k];
    const auto Mf = gram_1d(basis_1d(fs.degree, fs.t_iv), fs.t_iv);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(fs.degree + 1, nd);
    P.middleCols(d.facet_offset[k], d.facet_count[k]) = fs.t_iv.length() * Mf.inverse();
    op.Pi0F.push_back(P);
    MF.push_back(Mf);
  }
  op.Wtr = Eigen::MatrixXd::Zero(p + 1, nd);
  op.Wtr.middleCols(d.space_offset, p + 1) = hx * op.Mx.inverse();

  // forms
  const Eigen::MatrixXd Pc = Eigen::MatrixXd::Identity(nd, nd) - op.D * op.PiN;
  op.C = op.PiN.transpose() * Ag * op.PiN;
  {
    const Eigen::MatrixXd W = op.Pi0B * Pc;
    op.SB = W.transpose() * op.Mb * W;
  }
  for (std::size_t k = 0; k < g.facets.size(); ++k) {
    const Eigen::MatrixXd W = op.Pi0F[k] * Pc;
    op.SF.push_back(W.transpose() * MF[k] * W);
  }
  {
    const Eigen::MatrixXd W = op.Wtr * Pc;
    op.SX = W.transpose() * op.Mx * W;
  }
  // ∂t m_l = (b/ht) m_{(a,b-1)} ∈ P_{p-1}, hence (∂t Π* u, v)_K only needs bulk moments
  op.Tn = Eigen::MatrixXd::Zero(nd, nd);
  for (int l = 0; l < np; ++l) {
    const auto [a, b] = ScaledMonomialBasis2D::exponent(l);
    if (b == 0) continue;
    op.Tn.row(monomial_index(a, b - 1)) += (area * b / ht) * op.PiStar.row(l);
  }
  op.Sn = op.Wtr.transpose() * Q * op.PiStar;
  return op;
}

/// Rescale operators computed on the unit-square copy of an element to hx × ht.
inline LocalOperators rescale_reference(const LocalOperators& ref, double hx, double ht) {
  LocalOperators op = ref;
  op.Mb *= hx * ht;
  op.Mx *= hx;
  op.C *= ht / hx;
  op.SB *= hx * ht;
  for (auto& s : op.SF) s *= ht;
  op.SX *= hx;
  op.Tn *= hx;
  op.Sn *= hx;
  return op;
}

/// Weighted stiffness ν[C + p² hx⁻² SB + Σ p h_Fx⁻¹ SF + p ht hx⁻² SX].
inline Eigen::MatrixXd stiffness(const LocalOperators& op, const LocalGeometry& g, double nu,
                                 const std::vector<double>& hFx) {
  const double p = g.p, hx = g.hx(), ht = g.ht();
  Eigen::MatrixXd A = op.C + (p * p / (hx * hx)) * op.SB + (p * ht / (hx * hx)) * op.SX;
  for (std::size_t k = 0; k < op.SF.size(); ++k) A += (p / hFx.at(k)) * op.SF[k];
  return nu * A;
}

/// Stabilization part only: ν S((I-ΠN)·, (I-ΠN)·).
inline Eigen::MatrixXd stabilization(const LocalOperators& op, const LocalGeometry& g, double nu,
                                     const std::vector<double>& hFx) {
  return stiffness(op, g, nu, hFx) - nu * op.C;
}

/// Coefficient vector in the P_p monomial basis of ΠN v or Π* v.
inline Eigen::VectorXd coeffs_N(const LocalOperators& op, const Eigen::VectorXd& v) {
  return op.PiN * v;
}
inline Eigen::VectorXd coeffs_star(const LocalOperators& op, const Eigen::VectorXd& v) {
  return op.PiStar * v;
}

/// Bulk load rows from (f, Π0 v)_K; `Fm` holds ∫_K f m_β.
inline Eigen::VectorXd bulk_load(const LocalOperators& op, const Eigen::VectorXd& Fm) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(op.ndof());
  out.head(op.dofs.n_bulk) = op.LoadMap * Fm;
  return out;
}

/// Upwind coupling of the space-like facet ex at t* between K- (below) and K+ (above):
/// -c_H (Π* u|K-(·,t*), v|K+)_{Ex}; rows K+ test DoFs, cols K- trial DoFs.
inline Eigen::MatrixXd upwind_coupling(const LocalOperators& op_plus, const LocalGeometry& g_plus,
                                       const LocalOperators& op_minus,
                                       const LocalGeometry& g_minus, const Interval& ex,
                                       double cH) {
  const auto bp = basis_1d(g_plus.p, g_plus.rect.x);
  const auto bm = basis_2d(g_minus.p, g_minus.rect);
  const double ts = g_minus.rect.t.hi;
  const auto rule = gauss_rule((g_plus.p + g_minus.p) / 2 + 1, ex);
  const int np_m = dim_p2(g_minus.p);
  Eigen::MatrixXd Qpm = Eigen::MatrixXd::Zero(g_plus.p + 1, np_m);
  Eigen::VectorXd w(g_plus.p + 1), v(np_m);
  for (std::size_t q = 0; q < rule.size(); ++q) {
    bp.eval(rule.nodes[q], std::span<double>(w.data(), w.size()));
    bm.eval(rule.nodes[q], ts, v.data());
    Qpm.noalias() += rule.weights[q] * w * v.transpose();
  }
  return -cH * op_plus.Wtr.transpose() * Qpm * op_minus.PiStar;
}

/// Initial-data load c_H (u0, v(·,0))_{Kx}, with U0(γ) = ∫_{Kx} u0 ξ^γ.
inline Eigen::VectorXd initial_load(const LocalOperators& op, const Eigen::VectorXd& U0,
                                    double cH) {
  return cH * op.Wtr.transpose() * U0;
}

}  // namespace stvem
