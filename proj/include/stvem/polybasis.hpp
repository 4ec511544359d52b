#pragma once
// Scaled monomial bases, Gauss rules (plain, composite, geometrically graded)
// and measure-normalized moments.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace stvem {

/// Open interval (lo, hi) with lo < hi.
struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  Interval() = default;
  Interval(double a, double b) : lo(a), hi(b) {
    if (!(a < b))
      throw std::invalid_argument("Interval: lo must be strictly less than hi");
  }

  [[nodiscard]] double length() const { return hi - lo; }
  [[nodiscard]] double mid() const { return 0.5 * (lo + hi); }
  [[nodiscard]] bool contains(double v, double tol = 0.0) const {
    return v >= lo - tol && v <= hi + tol;
  }
};

/// Axis-aligned space-time rectangle x_iv × t_iv.
struct Rectangle {
  Interval x;
  Interval t;
  [[nodiscard]] double area() const { return x.length() * t.length(); }
};

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }

  template <class F>
  [[nodiscard]] double integrate(F&& f) const {
    double s = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) s += weights[q] * f(nodes[q]);
    return s;
  }

  void append(const QuadratureRule& other) {
    nodes.insert(nodes.end(), other.nodes.begin(), other.nodes.end());
    weights.insert(weights.end(), other.weights.begin(), other.weights.end());
  }
};

/// Tensor or scattered rule over a rectangle; nodes are (x, t) pairs.
struct QuadratureRule2D {
  std::vector<double> x;
  std::vector<double> t;
  std::vector<double> weights;

  [[nodiscard]] std::size_t size() const { return weights.size(); }

  void push(double xx, double tt, double w) {
    x.push_back(xx);
    t.push_back(tt);
    weights.push_back(w);
  }

  template <class F>
  [[nodiscard]] double integrate(F&& f) const {
    double s = 0.0;
    for (std::size_t q = 0; q < weights.size(); ++q) s += weights[q] * f(x[q], t[q]);
    return s;
  }
};

namespace detail {

// Gauss-Legendre nodes/weights on (-1, 1) by Newton iteration on P_n.
inline std::pair<std::vector<double>, std::vector<double>> legendre_reference(int n) {
  std::vector<double> x(n), w(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // recompute derivative at converged node
    double p1 = 1.0, p2 = 0.0;
    for (int j = 1; j <= n; ++j) {
      const double p3 = p2;
      p2 = p1;
      p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
    }
    pp = n * (z * p1 - p2) / (z * z - 1.0);
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
  if (n % 2 == 1) x[n / 2] = 0.0;
  return {x, w};
}

inline const std::pair<std::vector<double>, std::vector<double>>& legendre_cached(int n) {
  constexpr int kMax = 128;
  static std::array<std::pair<std::vector<double>, std::vector<double>>, kMax + 1> table;
  static std::array<std::once_flag, kMax + 1> flags;
  if (n < 1 || n > kMax) throw std::invalid_argument("gauss_rule: unsupported point count");
  std::call_once(flags[n], [n] { table[n] = legendre_reference(n); });
  return table[n];
}

}  // namespace detail

/// n-point Gauss-Legendre rule on iv; exact up to degree 2n-1.
inline QuadratureRule gauss_rule(int n, const Interval& iv) {
  if (n < 1) throw std::invalid_argument("gauss_rule: n must be >= 1");
  const auto& [xr, wr] = detail::legendre_cached(n);
  QuadratureRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  const double half = 0.5 * iv.length(), mid = iv.mid();
  for (int i = 0; i < n; ++i) {
    r.nodes[i] = mid + half * xr[i];
    r.weights[i] = half * wr[i];
  }
  return r;
}

/// Number of Gauss points needed to integrate polynomials of the given degree exactly.
inline int points_for_degree(int degree) { return degree < 1 ? 1 : degree / 2 + 1; }

/// Composite Gauss rule with `pieces` equal subintervals.
inline QuadratureRule composite_gauss_rule(int n, const Interval& iv, int pieces) {
  if (pieces <= 1) return gauss_rule(n, iv);
  QuadratureRule r;
  const double h = iv.length() / pieces;
  for (int k = 0; k < pieces; ++k) {
    const double a = iv.lo + k * h;
    const double b = (k + 1 == pieces) ? iv.hi : a + h;
    r.append(gauss_rule(n, Interval(a, b)));
  }
  return r;
}

enum class SingularEnd { lo, hi };

inline constexpr double kGradingRatio = 0.15;
inline constexpr int kGradingLayers = 30;

/// Composite Gauss rule on geometrically shrinking subintervals toward one end.
/// Layer k (k = 1..layers-1) spans distances [r^k, r^{k-1}]·|iv| from the singular
/// end; the innermost piece [0, r^{layers-1}]·|iv| closes the cover.
/// The innermost piece gets n points, the layers n + 1: with r = 0.15 a layer
/// sees t^{-0.45} with relative error 1.06e-8 at n points and 2e-9 at n + 1.
inline QuadratureRule graded_rule(const Interval& iv, SingularEnd end, int layers, int n,
                                  double ratio = kGradingRatio) {
  if (layers < 1) throw std::invalid_argument("graded_rule: layers must be >= 1");
  if (layers == 1) return gauss_rule(n, iv);
  const double len = iv.length();
  QuadratureRule r;
  double outer = 1.0;
  for (int k = 1; k <= layers; ++k) {
    double inner = (k == layers) ? 0.0 : outer * ratio;
    // stop once the next piece is no longer representable next to the end point
    const double anchor = (end == SingularEnd::lo) ? iv.lo : iv.hi;
    if (anchor + inner * len == anchor || anchor - inner * len == anchor) inner = 0.0;
    const double d0 = inner * len, d1 = outer * len;
    const Interval piece = (end == SingularEnd::lo) ? Interval(iv.lo + d0, iv.lo + d1)
                                                    : Interval(iv.hi - d1, iv.hi - d0);
    r.append(gauss_rule(inner == 0.0 ? n : n + 1, piece));
    if (inner == 0.0) break;
    outer = inner;
  }
  return r;
}

/// Tensor rule from two 1D rules.
inline QuadratureRule2D tensor_rule(const QuadratureRule& rx, const QuadratureRule& rt) {
  QuadratureRule2D r;
  r.x.reserve(rx.size() * rt.size());
  r.t.reserve(rx.size() * rt.size());
  r.weights.reserve(rx.size() * rt.size());
  for (std::size_t j = 0; j < rt.size(); ++j)
    for (std::size_t i = 0; i < rx.size(); ++i)
      r.push(rx.nodes[i], rt.nodes[j], rx.weights[i] * rt.weights[j]);
  return r;
}

// ---------------------------------------------------------------------------
// Scaled monomial bases
// ---------------------------------------------------------------------------

/// Monomials ((x - c)/h)^k, k = 0..degree, on an interval.
struct ScaledMonomialBasis1D {
  int degree = 0;
  double center = 0.0;
  double scale = 1.0;

  [[nodiscard]] int dimension() const { return degree + 1; }

  void eval(double x, std::span<double> out) const {
    const double s = (x - center) / scale;
    double v = 1.0;
    for (int k = 0; k <= degree; ++k) {
      out[k] = v;
      v *= s;
    }
  }

  [[nodiscard]] Eigen::VectorXd eval(double x) const {
    Eigen::VectorXd out(dimension());
    eval(x, std::span<double>(out.data(), out.size()));
    return out;
  }

  [[nodiscard]] double value(const Eigen::VectorXd& coeffs, double x) const {
    const double s = (x - center) / scale;
    double acc = 0.0;
    for (int k = degree; k >= 0; --k) acc = acc * s + coeffs[k];
    return acc;
  }
};

inline ScaledMonomialBasis1D basis_1d(int p, const Interval& iv) {
  if (p < 0) throw std::invalid_argument("basis_1d: degree must be >= 0");
  return {p, iv.mid(), iv.length()};
}

/// Exponent pair (a, b) of the monomial ((x-xc)/hx)^a ((t-tc)/ht)^b.
struct Exponent {
  int a;
  int b;
};

/// Dimension of P_p in two variables.
constexpr int dim_p2(int p) { return p < 0 ? 0 : (p + 1) * (p + 2) / 2; }

/// Index of monomial (a, b) in the graded ordering: total degree k ascending,
/// within a degree the t-exponent ascending.
constexpr int monomial_index(int a, int b) { return dim_p2(a + b - 1) + b; }

/// Monomials ((x-xc)/hx)^a ((t-tc)/ht)^b with a + b <= degree on a rectangle.
/// The first dim_p2(k) members span P_k for every k <= degree.
struct ScaledMonomialBasis2D {
  int degree = 1;
  double xc = 0.0, tc = 0.0;
  double hx = 1.0, ht = 1.0;

  [[nodiscard]] int dimension() const { return dim_p2(degree); }

  [[nodiscard]] static Exponent exponent(int idx) {
    int k = 0;
    while (dim_p2(k) <= idx) ++k;
    const int b = idx - dim_p2(k - 1);
    return {k - b, b};
  }

  // values, x-derivatives and t-derivatives of all members at (x, t)
  void eval(double x, double t, double* val, double* dx = nullptr, double* dt = nullptr) const {
    const double xi = (x - xc) / hx, tau = (t - tc) / ht;
    double px[32], pt[32];
    px[0] = pt[0] = 1.0;
    for (int k = 1; k <= degree; ++k) {
      px[k] = px[k - 1] * xi;
      pt[k] = pt[k - 1] * tau;
    }
    int idx = 0;
    for (int k = 0; k <= degree; ++k) {
      for (int b = 0; b <= k; ++b, ++idx) {
        const int a = k - b;
        val[idx] = px[a] * pt[b];
        if (dx) dx[idx] = a > 0 ? a * px[a - 1] * pt[b] / hx : 0.0;
        if (dt) dt[idx] = b > 0 ? b * px[a] * pt[b - 1] / ht : 0.0;
      }
    }
  }

  [[nodiscard]] Eigen::VectorXd values(double x, double t) const {
    Eigen::VectorXd v(dimension());
    eval(x, t, v.data());
    return v;
  }
  [[nodiscard]] Eigen::VectorXd dx(double x, double t) const {
    Eigen::VectorXd v(dimension()), d(dimension());
    eval(x, t, v.data(), d.data());
    return d;
  }
  [[nodiscard]] Eigen::VectorXd dt(double x, double t) const {
    Eigen::VectorXd v(dimension()), d(dimension());
    eval(x, t, v.data(), nullptr, d.data());
    return d;
  }

  /// Second x-derivatives.
  [[nodiscard]] Eigen::VectorXd dxx(double x, double t) const {
    const double xi = (x - xc) / hx, tau = (t - tc) / ht;
    Eigen::VectorXd out(dimension());
    int idx = 0;
    for (int k = 0; k <= degree; ++k)
      for (int b = 0; b <= k; ++b, ++idx) {
        const int a = k - b;
        out[idx] = a > 1 ? a * (a - 1) * std::pow(xi, a - 2) * std::pow(tau, b) / (hx * hx) : 0.0;
      }
    return out;
  }
};

inline ScaledMonomialBasis2D basis_2d(int p, const Rectangle& elem) {
  if (p < 1) throw std::invalid_argument("basis_2d: degree must be >= 1");
  return {p, elem.x.mid(), elem.t.mid(), elem.x.length(), elem.t.length()};
}

/// Unrestricted constructor, also for the P_{p-1} bulk basis (p-1 may be 0).
inline ScaledMonomialBasis2D basis_2d_any(int p, const Rectangle& elem) {
  if (p < 0) throw std::invalid_argument("basis_2d_any: degree must be >= 0");
  return {p, elem.x.mid(), elem.t.mid(), elem.x.length(), elem.t.length()};
}

/// (1/|D|) ∫_D f m_i for every member of a 1D basis.
template <class F>
Eigen::VectorXd moments(F&& f, const ScaledMonomialBasis1D& basis, const QuadratureRule& rule,
                        double measure) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(basis.dimension());
  Eigen::VectorXd v(basis.dimension());
  for (std::size_t q = 0; q < rule.size(); ++q) {
    basis.eval(rule.nodes[q], std::span<double>(v.data(), v.size()));
    out += rule.weights[q] * f(rule.nodes[q]) * v;
  }
  return out / measure;
}

/// (1/|D|) ∫_D f m_i for the first `count` members of a 2D basis.
template <class F>
Eigen::VectorXd moments(F&& f, const ScaledMonomialBasis2D& basis, const QuadratureRule2D& rule,
                        double measure, int count = -1) {
  if (count < 0) count = basis.dimension();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(count);
  Eigen::VectorXd v(basis.dimension());
  for (std::size_t q = 0; q < rule.size(); ++q) {
    basis.eval(rule.x[q], rule.t[q], v.data());
    out += rule.weights[q] * f(rule.x[q], rule.t[q]) * v.head(count);
  }
  return out / measure;
}

/// Gram matrix ∫ m_i m_j of a 1D basis on its interval.
inline Eigen::MatrixXd gram_1d(const ScaledMonomialBasis1D& basis, const Interval& iv) {
  const int n = basis.dimension();
  const auto rule = gauss_rule(points_for_degree(2 * basis.degree), iv);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd v(n);
  for (std::size_t q = 0; q < rule.size(); ++q) {
    basis.eval(rule.nodes[q], std::span<double>(v.data(), n));
    g.noalias() += rule.weights[q] * v * v.transpose();
  }
  return g;
}

/// Gram matrix of the first `count` members of a 2D basis on a rectangle.
inline Eigen::MatrixXd gram_2d(const ScaledMonomialBasis2D& basis, const Rectangle& r,
                               int count = -1) {
  if (count < 0) count = basis.dimension();
  const int n = points_for_degree(2 * basis.degree);
  const auto rule = tensor_rule(gauss_rule(n, r.x), gauss_rule(n, r.t));
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(count, count);
  Eigen::VectorXd v(basis.dimension());
  for (std::size_t q = 0; q < rule.size(); ++q) {
    basis.eval(rule.x[q], rule.t[q], v.data());
    g.noalias() += rule.weights[q] * v.head(count) * v.head(count).transpose();
  }
  return g;
}

}  // namespace stvem
