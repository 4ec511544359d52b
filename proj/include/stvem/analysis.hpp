#pragma once
// Exact solutions of the three test problems, computable error quantities
// E^Y, E^N, E^U, E^X, and the residual indicator η.

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "assembly.hpp"

namespace stvem {

enum class Regularity {
  smooth,
  singular_t0,          // singular in t at t = 0 only
  incompatible_corners  // initial and boundary data disagree at (0,0) and (1,0)
};

/// Truncated Fourier series Σ_{n<terms} 4/((2n+1)π) sin((2n+1)πx) exp(-(2n+1)²π² t).
struct HeatSeries {
  int terms = 251;

  // number of terms that are not negligible (below 1e-16 relative) at time t
  [[nodiscard]] int active(double t) const {
    if (t <= 0.0) return terms;
    const double kmax = std::sqrt(37.0 / t) / std::numbers::pi;
    if (kmax > 2.0 * terms + 1.0) return terms;
    return std::max(1, std::min(terms, static_cast<int>((kmax - 1.0) / 2.0) + 1));
  }

  void eval(double x, double t, double* u, double* ux, double* ut) const {
    constexpr double pi = std::numbers::pi;
    const double th = pi * x;
    double s = std::sin(th), c = std::cos(th);
    const double s2 = std::sin(2 * th), c2 = std::cos(2 * th);
    // exp(-k_n² π² t) by recurrence: ratio between consecutive terms is q^{n+1}, q = exp(-8π² t)
    const double q = std::exp(-8.0 * pi * pi * t);
    double e = std::exp(-pi * pi * t), r = q;
    double su = 0, sx = 0, st = 0;
    const int n_end = active(t);
    for (int n = 0; n < n_end; ++n) {
      const double k = (2 * n + 1) * pi;
      const double a = 4.0 / k * e;
      su += a * s;
      sx += a * k * c;
      st -= a * k * k * s;
      const double sn = s * c2 + c * s2;
      c = c * c2 - s * s2;
      s = sn;
      e *= r;
      r *= q;
      if (e < 1e-18) break;
    }
    if (u) *u = su;
    if (ux) *ux = sx;
    if (ut) *ut = st;
  }
};

struct ExactSolution {
  int id = 0;
  double alpha = 0.0;
  std::string name;
  Interval omega{0.0, 1.0};
  double T = 1.0;
  double nu = 1.0;
  double cH = 1.0;
  Regularity regularity = Regularity::smooth;
  std::function<double(double, double)> u, ux, ut, f, g;
  std::function<double(double)> u0;
  std::shared_ptr<const HeatSeries> series;  // set for the incompatible-data case

  [[nodiscard]] QuadPolicy quadrature(int extra = 4) const;

  [[nodiscard]] ProblemData problem(int extra = 4) const {
    ProblemData d;
    d.nu = nu;
    d.cH = cH;
    d.f = f;
    d.g = g;
    d.u0 = u0;
    d.quad = quadrature(extra);
    return d;
  }
};

namespace detail {

inline bool touches_zero(const Interval& t) { return std::abs(t.lo) <= 1e-14 * std::max(1.0, t.hi); }

// Gauss on geometric pieces [a, 2a], [2a, 4a], ... covering [lo, hi], lo > 0
inline QuadratureRule doubling_rule(const Interval& iv, int n) {
  QuadratureRule r;
  double a = iv.lo;
  while (a < iv.hi) {
    const double b = (2.0 * a >= iv.hi * (1 - 1e-12)) ? iv.hi : 2.0 * a;
    r.append(gauss_rule(n, Interval(a, b)));
    a = b;
  }
  return r;
}

// time rule resolving t^α or exp(-k² t) behaviour near t = 0
inline QuadratureRule time_rule(const Interval& t, int n, bool doubling) {
  if (touches_zero(t)) return graded_rule(t, SingularEnd::lo, kGradingLayers, n);
  return doubling ? doubling_rule(t, n) : gauss_rule(n, t);
}

// spatial rule with roughly one piece per half wavelength of the fastest active mode
inline QuadratureRule oscillation_rule(const HeatSeries& s, const Interval& x, double t, int n) {
  const int m = s.active(t);
  const int pieces = std::min(4 * s.terms, std::max(1, static_cast<int>(std::ceil(x.length() * (2 * m + 1)))));
  return composite_gauss_rule(n, x, pieces);
}

}  // namespace detail

inline QuadPolicy ExactSolution::quadrature(int extra) const {
  QuadPolicy q;
  q.extra = extra;
  if (regularity == Regularity::singular_t0) {
    q.bulk_fn = [extra](const Rectangle& r, int deg) {
      const int n = points_for_degree(deg) + extra;
      return tensor_rule(gauss_rule(n, r.x), detail::time_rule(r.t, n, false));
    };
    q.facet_fn = [extra](const Interval& t, double, int deg) {
      return detail::time_rule(t, points_for_degree(deg) + extra, false);
    };
  } else if (regularity == Regularity::incompatible_corners) {
    auto s = series;
    q.bulk_fn = [extra, s](const Rectangle& r, int deg) {
      const int n = points_for_degree(deg) + extra;
      const auto rt = detail::time_rule(r.t, n, true);
      QuadratureRule2D out;
      for (std::size_t j = 0; j < rt.size(); ++j) {
        const auto rx = detail::oscillation_rule(*s, r.x, rt.nodes[j], n);
        for (std::size_t i = 0; i < rx.size(); ++i)
          out.push(rx.nodes[i], rt.nodes[j], rx.weights[i] * rt.weights[j]);
      }
      return out;
    };
    q.facet_fn = [extra](const Interval& t, double, int deg) {
      return detail::time_rule(t, points_for_degree(deg) + extra, true);
    };
    q.bottom_fn = [extra, s](const Interval& x, double t, int deg) {
      return detail::oscillation_rule(*s, x, t, points_for_degree(deg) + extra);
    };
  }
  return q;
}

/// Test problems 1-3 with ν = c_H = 1; `alpha` is used by test 2 only.
inline ExactSolution test_case(int id, double alpha = 0.55) {
  constexpr double pi = std::numbers::pi;
  ExactSolution e;
  e.id = id;
  switch (id) {
    case 1:
      e.name = "u1";
      e.T = 1.0;
      e.u = [](double x, double t) { return std::exp(-t) * std::sin(pi * x); };
      e.ux = [](double x, double t) { return pi * std::exp(-t) * std::cos(pi * x); };
      e.ut = [](double x, double t) { return -std::exp(-t) * std::sin(pi * x); };
      e.f = [](double x, double t) { return (pi * pi - 1.0) * std::exp(-t) * std::sin(pi * x); };
      e.u0 = [](double x) { return std::sin(pi * x); };
      break;
    case 2:
      if (!(alpha > 0.5)) throw std::invalid_argument("test_case 2: alpha must be > 0.5");
      e.name = "u2";
      e.alpha = alpha;
      e.T = 0.1;
      e.regularity = Regularity::singular_t0;
      e.u = [alpha](double x, double t) { return std::sin(pi * x) * std::pow(t, alpha); };
      e.ux = [alpha](double x, double t) { return pi * std::cos(pi * x) * std::pow(t, alpha); };
      e.ut = [alpha](double x, double t) {
        return t > 0 ? alpha * std::sin(pi * x) * std::pow(t, alpha - 1) : 0.0;
      };
      e.f = [alpha](double x, double t) {
        const double s = std::sin(pi * x);
        return (t > 0 ? alpha * std::pow(t, alpha - 1) : 0.0) * s + pi * pi * std::pow(t, alpha) * s;
      };
      e.u0 = [](double) { return 0.0; };
      break;
    case 3: {
      e.name = "u3";
      e.T = 1.0;
      e.regularity = Regularity::incompatible_corners;
      auto s = std::make_shared<const HeatSeries>();
      e.series = s;
      e.u = [s](double x, double t) {
        double v;
        s->eval(x, t, &v, nullptr, nullptr);
        return v;
      };
      e.ux = [s](double x, double t) {
        double v;
        s->eval(x, t, nullptr, &v, nullptr);
        return v;
      };
      e.ut = [s](double x, double t) {
        double v;
        s->eval(x, t, nullptr, nullptr, &v);
        return v;
      };
      e.f = [](double, double) { return 0.0; };
      e.u0 = [](double) { return 1.0; };
      break;
    }
    default:
      throw std::invalid_argument("test_case: id must be 1, 2 or 3");
  }
  // homogeneous lateral data in all three problems
  e.g = [](double, double) { return 0.0; };
  return e;
}

// ---------------------------------------------------------------------------
// projected discrete solution
// ---------------------------------------------------------------------------

/// Monomial coefficients of Π^N u_h and Π* u_h per leaf position.
struct ProjectedSolution {
  std::vector<Eigen::VectorXd> cN, cS;
};

inline ProjectedSolution project(const Discretization& d, const Eigen::VectorXd& uh) {
  ProjectedSolution ps;
  const auto n = d.mesh->n_leaves();
  ps.cN.resize(n);
  ps.cS.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd v = d.local(uh, int(i));
    ps.cN[i] = d.op(int(i)).PiN * v;
    ps.cS[i] = d.op(int(i)).PiStar * v;
  }
  return ps;
}

// Π*(u - u_h) coefficients per leaf position, from exact-function moments
inline std::vector<Eigen::VectorXd> star_error(const Discretization& d, const Eigen::VectorXd& uh,
                                               const ExactSolution& ex, const QuadPolicy& q) {
  const auto n = d.mesh->n_leaves();
  std::vector<Eigen::VectorXd> c(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& op = d.op(int(i));
    const Eigen::VectorXd e = dof_evaluate(ex.u, d.geom[i], op.dofs, q) - d.local(uh, int(i));
    c[i] = op.PiStar * e;
  });
  return c;
}

namespace detail {

inline double poly_at(const ScaledMonomialBasis2D& b, const Eigen::VectorXd& c, double x, double t) {
  return b.values(x, t).dot(c);
}

// ∫_{x_iv} (Σ_k w_k P_k(x, t))² for polynomials P_k with coefficients on their own elements
inline double trace_l2_sq(const Interval& x_iv, double t,
                          const std::vector<std::pair<const Rectangle*, const Eigen::VectorXd*>>& terms,
                          const std::vector<double>& w, int deg) {
  const auto r = gauss_rule(points_for_degree(2 * deg), x_iv);
  double s = 0.0;
  for (std::size_t q = 0; q < r.size(); ++q) {
    double v = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const auto& c = *terms[k].second;
      const int p = static_cast<int>(std::lround((std::sqrt(8.0 * c.size() + 1) - 3) / 2));
      v += w[k] * poly_at(basis_2d(p, *terms[k].first), c, r.nodes[q], t);
    }
    s += r.weights[q] * v * v;
  }
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// error quantities
// ---------------------------------------------------------------------------

struct ErrorOptions {
  bool compute_EN = true;
  int extra = 4;  // extra Gauss points per direction beyond polynomial exactness
};

struct ErrorReport {
  double EY = 0, EN = 0, EU = 0, EX = 0;
  std::vector<double> EY_K_sq;  // per leaf position
  bool EN_computed = false;
  bool EN_least_squares = false;
};

/// E^Y = (Σ_K ν ‖∂x(u - Π^N u_h)‖²_K)^{1/2}; per-element squares in `parts`.
inline double error_Y(const Discretization& d, const Eigen::VectorXd& uh, const ExactSolution& ex,
                      int extra = 4, std::vector<double>* parts = nullptr) {
  const auto q = ex.quadrature(extra);
  const auto n = d.mesh->n_leaves();
  std::vector<double> part(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const auto& g = d.geom[i];
    const Eigen::VectorXd c = d.op(int(i)).PiN * d.local(uh, int(i));
    const auto b = basis_2d(g.p, g.rect);
    const auto rule = q.bulk(g.rect, 2 * g.p);
    Eigen::VectorXd v(b.dimension()), dx(b.dimension());
    double s = 0.0;
    for (std::size_t k = 0; k < rule.size(); ++k) {
      b.eval(rule.x[k], rule.t[k], v.data(), dx.data());
      const double e = ex.ux(rule.x[k], rule.t[k]) - dx.dot(c);
      s += rule.weights[k] * e * e;
    }
    part[i] = ex.nu * s;
  });
  double total = 0.0;
  for (double p : part) total += p;
  if (parts) *parts = std::move(part);
  return std::sqrt(total);
}

/// E^U from the initial, interior-jump and final traces of Π*(u - u_h).
inline double error_U(const Discretization& d, const Eigen::VectorXd& uh, const ExactSolution& ex,
                      int extra = 4) {
  const auto& mesh = *d.mesh;
  const auto phi = star_error(d, uh, ex, ex.quadrature(extra));
  const double T = mesh.final_time();
  double s = 0.0;
  for (std::size_t i = 0; i < mesh.n_leaves(); ++i) {
    const auto& g = d.geom[i];
    if (detail::touches_zero(g.rect.t))
      s += detail::trace_l2_sq(g.rect.x, g.rect.t.lo, {{&g.rect, &phi[i]}}, {1.0}, g.p);
    if (std::abs(g.rect.t.hi - T) <= mesh.tol())
      s += detail::trace_l2_sq(g.rect.x, g.rect.t.hi, {{&g.rect, &phi[i]}}, {1.0}, g.p);
  }
  for (const auto& f : mesh.space_facets()) {
    if (f.initial()) continue;
    const int pp = d.pos(f.above_elem), pm = d.pos(f.below_elem);
    const int deg = std::max(d.geom[pp].p, d.geom[pm].p);
    s += detail::trace_l2_sq(f.x_iv, f.t_pos, {{&d.geom[pp].rect, &phi[pp]}, {&d.geom[pm].rect, &phi[pm]}},
                             {ex.cH, -ex.cH}, deg);
  }
  return std::sqrt(0.5 * ex.cH * s);
}

/// E^N = ‖Π^N N_h Π*(u - u_h)‖_Y through one a_h solve per slab.
inline double error_N(const Discretization& d, const Eigen::VectorXd& uh, const ExactSolution& ex,
                      int extra = 4, bool* least_squares = nullptr) {
  const auto& mesh = *d.mesh;
  const auto q = ex.quadrature(extra);
  const auto n = mesh.n_leaves();
  const double cH = ex.cH;
  // DoFs of φ_h = u - u_h; only Π* φ_h enters, so the right-hand side is exact
  std::vector<Eigen::VectorXd> e(n);
  parallel_for(n, [&](std::size_t i) {
    e[i] = dof_evaluate(ex.u, d.geom[i], d.op(int(i)).dofs, q) - d.local(uh, int(i));
  });
  std::vector<Eigen::VectorXd> r(n);
  parallel_for(n, [&](std::size_t i) {
    const int pos = int(i);
    Eigen::VectorXd ri = cH * (element_time(d, pos) * e[i]);
    const auto& el = mesh.element(mesh.leaves()[i]);
    if (detail::touches_zero(d.geom[i].rect.t)) {
      ri += cH * (element_self_upwind(d, pos) * e[i]);
    } else {
      Eigen::VectorXd up = cH * (element_self_upwind(d, pos) * e[i]);
      for (int ex_id : el.bottom_facets) {
        const auto& f = mesh.space_facet(ex_id);
        up += facet_coupling(d, f, cH) * e[d.pos(f.below_elem)];
      }
      ri += cH * up;
    }
    r[i] = std::move(ri);
  });
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d.dofs.n_dofs);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = d.dofs.l2g[i];
    for (std::size_t k = 0; k < l.size(); ++k) rhs[l[k]] += r[i][k];
  }
  const Eigen::VectorXd w = solve_ah(d, ex.nu, rhs, least_squares);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd wi = d.local(w, int(i));
    s += wi.dot(element_C(d, int(i)) * wi);
  }
  return std::sqrt(ex.nu * std::max(0.0, s));
}

inline ErrorReport compute_errors(const Discretization& d, const Eigen::VectorXd& uh,
                                  const ExactSolution& ex, const ErrorOptions& opt = {}) {
  ErrorReport r;
  r.EY = error_Y(d, uh, ex, opt.extra, &r.EY_K_sq);
  r.EU = error_U(d, uh, ex, opt.extra);
  if (opt.compute_EN) {
    r.EN = error_N(d, uh, ex, opt.extra, &r.EN_least_squares);
    r.EN_computed = true;
  }
  r.EX = std::sqrt(r.EY * r.EY + r.EN * r.EN + r.EU * r.EU);
  return r;
}

// ---------------------------------------------------------------------------
// residual indicator
// ---------------------------------------------------------------------------

struct IndicatorReport {
  std::vector<std::array<double, 5>> eta_K_sq;  // per leaf position
  std::vector<double> eta_K;
  std::array<double, 5> eta_i{};  // global parts η_i
  double eta = 0.0;
};

namespace detail {

// squared L2 norms over a time-like facet of the ΠN jump and of its x-derivative
inline std::pair<double, double> facet_jumps(const Discretization& d, const ProjectedSolution& ps,
                                             const TimeLikeFacet& f) {
  const int pl = d.pos(f.left_elem), pr = d.pos(f.right_elem);
  const auto bl = basis_2d(d.geom[pl].p, d.geom[pl].rect);
  const auto br = basis_2d(d.geom[pr].p, d.geom[pr].rect);
  const auto rule = gauss_rule(points_for_degree(2 * std::max(bl.degree, br.degree)), f.t_iv);
  Eigen::VectorXd vl(bl.dimension()), dl(bl.dimension()), vr(br.dimension()), dr(br.dimension());
  double jv = 0.0, jd = 0.0;
  for (std::size_t q = 0; q < rule.size(); ++q) {
    bl.eval(f.x_pos, rule.nodes[q], vl.data(), dl.data());
    br.eval(f.x_pos, rule.nodes[q], vr.data(), dr.data());
    const double a = vl.dot(ps.cN[pl]) - vr.dot(ps.cN[pr]);
    const double b = dl.dot(ps.cN[pl]) - dr.dot(ps.cN[pr]);
    jv += rule.weights[q] * a * a;
    jd += rule.weights[q] * b * b;
  }
  return {jv, jd};
}

}  // namespace detail

/// Per-element indicators η_{K,1..5}. Facet terms use the facet moment degree
/// as p, so the two halves of an interior facet term are equal.
inline IndicatorReport indicator(const Discretization& d, const Eigen::VectorXd& uh,
                                 const ProblemData& data) {
  const auto& mesh = *d.mesh;
  const auto n = mesh.n_leaves();
  const double nu = data.nu, cH = data.cH;
  const auto ps = project(d, uh);
  IndicatorReport rep;
  rep.eta_K_sq.assign(n, {0, 0, 0, 0, 0});

  parallel_for(n, [&](std::size_t i) {
    const int pos = int(i);
    const auto& g = d.geom[i];
    const auto b = basis_2d(g.p, g.rect);
    const int np = b.dimension();
    auto& eta = rep.eta_K_sq[i];
    // η1: interior residual
    {
      const auto rule = data.f ? data.quad.bulk(g.rect, 2 * g.p) : PlainQuad{0}.bulk(g.rect, 2 * g.p);
      Eigen::VectorXd v(np), dt(np);
      double s = 0.0;
      for (std::size_t k = 0; k < rule.size(); ++k) {
        const double x = rule.x[k], t = rule.t[k];
        b.eval(x, t, v.data(), nullptr, dt.data());
        const double fv = data.f ? data.f(x, t) : 0.0;
        const double res = fv + nu * b.dxx(x, t).dot(ps.cN[i]) - cH * dt.dot(ps.cS[i]);
        s += rule.weights[k] * res * res;
      }
      eta[0] = g.hx() * g.hx() / (g.p * g.p) * s / nu;
    }
    // η4: upwind residual on the bottom facets
    for (int ex_id : mesh.element(mesh.leaves()[i]).bottom_facets) {
      const auto& f = mesh.space_facet(ex_id);
      double s = 0.0;
      if (f.initial()) {
        const auto rule = data.u0 ? data.quad.bottom(f.x_iv, 0.0, 2 * g.p)
                                  : gauss_rule(points_for_degree(2 * g.p), f.x_iv);
        for (std::size_t k = 0; k < rule.size(); ++k) {
          const double x = rule.nodes[k];
          const double jump = detail::poly_at(b, ps.cS[i], x, f.t_pos) - (data.u0 ? data.u0(x) : 0.0);
          s += rule.weights[k] * jump * jump;
        }
      } else {
        const int pm = d.pos(f.below_elem);
        s = detail::trace_l2_sq(f.x_iv, f.t_pos, {{&g.rect, &ps.cS[i]}, {&d.geom[pm].rect, &ps.cS[pm]}},
                                {1.0, -1.0}, std::max(g.p, d.geom[pm].p));
      }
      eta[3] += cH * s;  // c_H^{-1} ‖c_H (·)‖²
    }
    // η5: stabilization, evaluated on the ΠN complement to avoid cancellation
    const auto& op = d.op(pos);
    const Eigen::VectorXd v = d.local(uh, pos);
    const Eigen::VectorXd w = v - op.D * ps.cN[i];
    eta[4] = std::max(0.0, w.dot(element_stabilization(d, pos, nu) * w));
  });

  // time-like facets: η2 and η3, interior terms split between the neighbours
  const auto& tf = mesh.time_facets();
  std::vector<std::array<double, 2>> facet_terms(tf.size(), {0, 0});
  parallel_for(tf.size(), [&](std::size_t k) {
    const auto& f = tf[k];
    const double p = f.moment_degree, h = f.h_Fx;
    if (f.boundary()) {
      const int pos = d.pos(f.owner());
      const auto& g = d.geom[pos];
      const auto b = basis_2d(g.p, g.rect);
      const auto rule = data.g ? data.quad.facet(f.t_iv, f.x_pos, 2 * g.p)
                               : gauss_rule(points_for_degree(2 * g.p), f.t_iv);
      double s = 0.0;
      for (std::size_t q = 0; q < rule.size(); ++q) {
        const double t = rule.nodes[q];
        const double r = detail::poly_at(b, ps.cN[pos], f.x_pos, t) - (data.g ? data.g(f.x_pos, t) : 0.0);
        s += rule.weights[q] * r * r;
      }
      facet_terms[k][1] = nu * p / h * s;
    } else {
      const auto [jv, jd] = detail::facet_jumps(d, ps, f);
      facet_terms[k][0] = h / p * nu * jd;  // ν^{-1} ‖ν [∂x]‖²
      facet_terms[k][1] = nu * p / h * jv;
    }
  });
  for (std::size_t k = 0; k < tf.size(); ++k) {
    const auto& f = tf[k];
    if (f.boundary()) {
      rep.eta_K_sq[d.pos(f.owner())][2] += facet_terms[k][1];
    } else {
      for (int id : {f.left_elem, f.right_elem}) {
        rep.eta_K_sq[d.pos(id)][1] += 0.5 * facet_terms[k][0];
        rep.eta_K_sq[d.pos(id)][2] += 0.5 * facet_terms[k][1];
      }
    }
  }

  std::array<double, 5> sq{};
  rep.eta_K.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < 5; ++j) {
      sq[j] += rep.eta_K_sq[i][j];
      s += rep.eta_K_sq[i][j];
    }
    rep.eta_K[i] = std::sqrt(s);
    total += s;
  }
  for (int j = 0; j < 5; ++j) rep.eta_i[j] = std::sqrt(sq[j]);
  rep.eta = std::sqrt(total);
  return rep;
}

/// Σ over interior time-like facets of (h_Fx/p) ν^{-1} ‖ν [∂x Π^N u_h]‖², each facet once.
inline double interior_gradient_jump_sum(const Discretization& d, const Eigen::VectorXd& uh, double nu) {
  const auto ps = project(d, uh);
  double s = 0.0;
  for (const auto& f : d.mesh->time_facets()) {
    if (f.boundary()) continue;
    s += f.h_Fx / f.moment_degree * nu * detail::facet_jumps(d, ps, f).second;
  }
  return s;
}

inline double effectivity(const IndicatorReport& ind, const ErrorReport& err) {
  return err.EY > 0 ? ind.eta / err.EY : 0.0;
}

}  // namespace stvem
