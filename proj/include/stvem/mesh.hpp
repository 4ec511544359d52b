#pragma once
// Prismatic (1+1)-dimensional space-time meshes with hanging facets.
//
// Elements are rectangles x_iv × t_iv kept in a refinement tree; only leaves
// take part in the discretization. Facets are recomputed from the leaves by
// interval overlap, so hanging nodes need no special treatment:
//   time-like facet  F = {x} × F_t   (shared by a left and/or right element)
//   space-like facet E = E_x × {t}   (bottom of `above`, top of `below`)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "polybasis.hpp"

namespace stvem {

struct Element {
  int id = -1;
  Interval x_iv;
  Interval t_iv;
  int degree = 1;
  int topo_flag = -1;
  int slab = -1;
  int parent = -1;
  std::optional<std::array<int, 4>> children;

  // Facet incidence of a leaf, rebuilt on every finalize(); sorted along the side.
  std::vector<int> left_facets;    // time-like facets on x = x_iv.lo
  std::vector<int> right_facets;   // time-like facets on x = x_iv.hi
  std::vector<int> bottom_facets;  // space-like facets on t = t_iv.lo
  std::vector<int> top_facets;     // space-like facets on t = t_iv.hi (none at t = T)

  [[nodiscard]] bool leaf() const { return !children.has_value(); }
  [[nodiscard]] double hx() const { return x_iv.length(); }
  [[nodiscard]] double ht() const { return t_iv.length(); }
  [[nodiscard]] Rectangle rect() const { return {x_iv, t_iv}; }
};

/// Time-like facet {x_pos} × t_iv. The fixed normal points in +x direction, so
/// it is outward for `left_elem` and inward for `right_elem`.
struct TimeLikeFacet {
  int id = -1;
  double x_pos = 0.0;
  Interval t_iv;
  int left_elem = -1;
  int right_elem = -1;
  int moment_degree = 1;
  int normal_sign = +1;
  double h_Fx = 0.0;

  [[nodiscard]] bool boundary() const { return left_elem < 0 || right_elem < 0; }
  [[nodiscard]] int owner() const { return left_elem >= 0 ? left_elem : right_elem; }
};

/// Space-like facet x_iv × {t_pos}; `above` always exists, `below` is absent at t = 0.
struct SpaceLikeFacet {
  int id = -1;
  double t_pos = 0.0;
  Interval x_iv;
  int below_elem = -1;
  int above_elem = -1;
  int moment_degree = 1;

  [[nodiscard]] bool initial() const { return below_elem < 0; }
};

/// How topology classes treat element size.
/// The default (translation) keeps refined children apart from coarse elements;
/// dilation merges more, since the local operators scale exactly under it.
enum class TopoEquivalence {
  dilation,     // per-axis dilation and translation
  translation,  // translation only: element size is part of the class
};

class SpaceTimeMesh {
 public:
  SpaceTimeMesh() = default;
  SpaceTimeMesh(Interval omega, double T) : omega_(omega), T_(T) {
    if (!(T > 0.0)) throw std::invalid_argument("SpaceTimeMesh: final time must be positive");
  }

  [[nodiscard]] const Interval& omega() const { return omega_; }
  [[nodiscard]] double final_time() const { return T_; }

  [[nodiscard]] const std::vector<Element>& elements() const { return elements_; }
  [[nodiscard]] const Element& element(int id) const { return elements_.at(id); }
  Element& element_mut(int id) { return elements_.at(id); }
  [[nodiscard]] const std::vector<int>& leaves() const { return leaves_; }
  [[nodiscard]] std::size_t n_leaves() const { return leaves_.size(); }

  [[nodiscard]] const std::vector<TimeLikeFacet>& time_facets() const { return time_facets_; }
  [[nodiscard]] const std::vector<SpaceLikeFacet>& space_facets() const { return space_facets_; }
  [[nodiscard]] const TimeLikeFacet& time_facet(int id) const { return time_facets_.at(id); }
  [[nodiscard]] const SpaceLikeFacet& space_facet(int id) const { return space_facets_.at(id); }

  [[nodiscard]] int slab_count() const { return static_cast<int>(slabs_.size()); }
  /// Leaf ids of slab s, ascending id.
  [[nodiscard]] const std::vector<int>& slab(int s) const { return slabs_.at(s); }
  [[nodiscard]] const std::vector<double>& slab_cuts() const { return slab_cuts_; }

  [[nodiscard]] int class_count() const { return class_count_; }
  [[nodiscard]] TopoEquivalence topo_equivalence() const { return topo_mode_; }
  void set_topo_equivalence(TopoEquivalence m) { topo_mode_ = m; }

  /// Coordinate matching tolerance.
  [[nodiscard]] double tol() const { return tol_; }

  int add_element(Interval x, Interval t, int degree, int parent = -1) {
    Element e;
    e.id = static_cast<int>(elements_.size());
    e.x_iv = x;
    e.t_iv = t;
    e.degree = degree;
    e.parent = parent;
    elements_.push_back(std::move(e));
    return elements_.back().id;
  }

  /// Split a leaf into four congruent children; returns their ids
  /// (bottom-left, bottom-right, top-left, top-right).
  std::array<int, 4> split(int id) {
    if (!elements_.at(id).leaf()) throw std::invalid_argument("refine: element is not a leaf");
    const Element e = elements_[id];
    const double xm = e.x_iv.mid(), tm = e.t_iv.mid();
    std::array<int, 4> c{};
    c[0] = add_element({e.x_iv.lo, xm}, {e.t_iv.lo, tm}, e.degree, id);
    c[1] = add_element({xm, e.x_iv.hi}, {e.t_iv.lo, tm}, e.degree, id);
    c[2] = add_element({e.x_iv.lo, xm}, {tm, e.t_iv.hi}, e.degree, id);
    c[3] = add_element({xm, e.x_iv.hi}, {tm, e.t_iv.hi}, e.degree, id);
    elements_[id].children = c;
    return c;
  }

  /// Rebuild leaves, facets, facet degrees, slabs and topology flags.
  void finalize();

  // individual stages of finalize(), exposed for testing
  void collect_leaves();
  void build_facets();
  void assign_facet_degrees();
  void compute_slabs();
  void compute_topo_flags();

  /// Signature used for topology classification of a leaf.
  [[nodiscard]] std::vector<std::int64_t> topo_signature(int id) const;

  /// Check the tiling and facet-cover invariants; throws std::logic_error on violation.
  void validate() const;

  /// All distinct mesh vertices (element corners and hanging nodes).
  [[nodiscard]] std::set<std::pair<std::int64_t, std::int64_t>> vertex_keys() const;

 private:
  Interval omega_{0.0, 1.0};
  double T_ = 1.0;
  double tol_ = 1e-12;
  TopoEquivalence topo_mode_ = TopoEquivalence::translation;
  std::vector<Element> elements_;
  std::vector<int> leaves_;
  std::vector<TimeLikeFacet> time_facets_;
  std::vector<SpaceLikeFacet> space_facets_;
  std::vector<std::vector<int>> slabs_;
  std::vector<double> slab_cuts_;
  int class_count_ = 0;
};

// ---------------------------------------------------------------------------

namespace detail {

struct SideEvent {
  double coord;      // line position
  double lo, hi;     // extent along the line
  int elem;
  bool before_line;  // element lies at smaller coordinate than the line
};

// Group events whose coordinates agree within tol.
inline std::vector<std::pair<std::size_t, std::size_t>> group_by_coord(
    std::vector<SideEvent>& ev, double tol) {
  std::sort(ev.begin(), ev.end(), [](const SideEvent& a, const SideEvent& b) {
    if (a.coord != b.coord) return a.coord < b.coord;
    return a.lo < b.lo;
  });
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= ev.size(); ++i) {
    if (i == ev.size() || ev[i].coord - ev[start].coord > tol) {
      groups.emplace_back(start, i);
      start = i;
    }
  }
  return groups;
}

struct Overlap {
  double lo, hi;
  int before, after;  // -1 when absent
};

// Overlap two sorted covers of (parts of) a line.
inline std::vector<Overlap> overlap_covers(std::vector<SideEvent> a, std::vector<SideEvent> b,
                                           double tol) {
  auto by_lo = [](const SideEvent& u, const SideEvent& v) { return u.lo < v.lo; };
  std::sort(a.begin(), a.end(), by_lo);
  std::sort(b.begin(), b.end(), by_lo);
  std::vector<Overlap> out;
  if (a.empty() || b.empty()) {
    for (const auto& e : a) out.push_back({e.lo, e.hi, e.elem, -1});
    for (const auto& e : b) out.push_back({e.lo, e.hi, -1, e.elem});
    return out;
  }
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double lo = std::max(a[i].lo, b[j].lo);
    const double hi = std::min(a[i].hi, b[j].hi);
    if (hi - lo > tol) out.push_back({lo, hi, a[i].elem, b[j].elem});
    if (a[i].hi < b[j].hi - tol)
      ++i;
    else if (b[j].hi < a[i].hi - tol)
      ++j;
    else {
      ++i;
      ++j;
    }
  }
  return out;
}

inline std::int64_t quantize(double v, double unit) {
  return static_cast<std::int64_t>(std::llround(v / unit * 1e9));
}

}  // namespace detail

inline void SpaceTimeMesh::collect_leaves() {
  leaves_.clear();
  double hmax = 0.0;
  for (const auto& e : elements_)
    if (e.leaf()) {
      leaves_.push_back(e.id);
      hmax = std::max({hmax, e.hx(), e.ht()});
    }
  tol_ = 1e-12 * std::max(hmax, 1e-300);
}

inline void SpaceTimeMesh::build_facets() {
  time_facets_.clear();
  space_facets_.clear();
  for (int id : leaves_) {
    auto& e = elements_[id];
    e.left_facets.clear();
    e.right_facets.clear();
    e.bottom_facets.clear();
    e.top_facets.clear();
  }

  // time-like facets on vertical lines
  std::vector<detail::SideEvent> ev;
  ev.reserve(2 * leaves_.size());
  for (int id : leaves_) {
    const auto& e = elements_[id];
    ev.push_back({e.x_iv.hi, e.t_iv.lo, e.t_iv.hi, id, true});
    ev.push_back({e.x_iv.lo, e.t_iv.lo, e.t_iv.hi, id, false});
  }
  for (auto [b, en] : detail::group_by_coord(ev, tol_)) {
    std::vector<detail::SideEvent> before, after;
    for (std::size_t i = b; i < en; ++i) (ev[i].before_line ? before : after).push_back(ev[i]);
    const double x = ev[b].coord;
    const bool on_boundary =
        std::abs(x - omega_.lo) <= tol_ || std::abs(x - omega_.hi) <= tol_;
    if (!on_boundary && (before.empty() || after.empty()))
      throw std::logic_error("build_facets: interior vertical line with one-sided cover");
    for (const auto& o : detail::overlap_covers(before, after, tol_)) {
      TimeLikeFacet f;
      f.id = static_cast<int>(time_facets_.size());
      f.x_pos = x;
      f.t_iv = Interval(o.lo, o.hi);
      f.left_elem = o.before;
      f.right_elem = o.after;
      if (f.left_elem >= 0 && f.right_elem >= 0)
        f.h_Fx = std::min(elements_[f.left_elem].hx(), elements_[f.right_elem].hx());
      else
        f.h_Fx = elements_[f.owner()].hx();
      if (f.left_elem >= 0) elements_[f.left_elem].right_facets.push_back(f.id);
      if (f.right_elem >= 0) elements_[f.right_elem].left_facets.push_back(f.id);
      time_facets_.push_back(f);
    }
  }

  // space-like facets on horizontal lines
  ev.clear();
  for (int id : leaves_) {
    const auto& e = elements_[id];
    ev.push_back({e.t_iv.hi, e.x_iv.lo, e.x_iv.hi, id, true});
    ev.push_back({e.t_iv.lo, e.x_iv.lo, e.x_iv.hi, id, false});
  }
  for (auto [b, en] : detail::group_by_coord(ev, tol_)) {
    std::vector<detail::SideEvent> below, above;
    for (std::size_t i = b; i < en; ++i) (ev[i].before_line ? below : above).push_back(ev[i]);
    const double t = ev[b].coord;
    if (std::abs(t - T_) <= tol_) continue;  // final-time boundary carries no facets
    const bool initial = std::abs(t) <= tol_;
    if (!initial && (below.empty() || above.empty()))
      throw std::logic_error("build_facets: interior horizontal line with one-sided cover");
    for (const auto& o : detail::overlap_covers(below, above, tol_)) {
      SpaceLikeFacet f;
      f.id = static_cast<int>(space_facets_.size());
      f.t_pos = t;
      f.x_iv = Interval(o.lo, o.hi);
      f.below_elem = o.before;
      f.above_elem = o.after;
      if (f.above_elem < 0) throw std::logic_error("build_facets: space-like facet without K+");
      elements_[f.above_elem].bottom_facets.push_back(f.id);
      if (f.below_elem >= 0) elements_[f.below_elem].top_facets.push_back(f.id);
      space_facets_.push_back(f);
    }
  }

  for (int id : leaves_) {
    auto& e = elements_[id];
    auto by_t = [this](int a, int b) { return time_facets_[a].t_iv.lo < time_facets_[b].t_iv.lo; };
    auto by_x = [this](int a, int b) {
      return space_facets_[a].x_iv.lo < space_facets_[b].x_iv.lo;
    };
    std::sort(e.left_facets.begin(), e.left_facets.end(), by_t);
    std::sort(e.right_facets.begin(), e.right_facets.end(), by_t);
    std::sort(e.bottom_facets.begin(), e.bottom_facets.end(), by_x);
    std::sort(e.top_facets.begin(), e.top_facets.end(), by_x);
  }
}

inline void SpaceTimeMesh::assign_facet_degrees() {
  for (auto& f : time_facets_) {
    if (f.boundary())
      f.moment_degree = elements_[f.owner()].degree;
    else
      f.moment_degree = std::max(elements_[f.left_elem].degree, elements_[f.right_elem].degree);
  }
  for (auto& f : space_facets_) f.moment_degree = elements_[f.above_elem].degree;
}

inline void SpaceTimeMesh::compute_slabs() {
  // candidate cuts: every element time endpoint strictly inside (0, T)
  std::vector<double> cand;
  for (int id : leaves_) {
    cand.push_back(elements_[id].t_iv.lo);
    cand.push_back(elements_[id].t_iv.hi);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<double> cuts;
  for (double c : cand) {
    if (c <= tol_ || c >= T_ - tol_) continue;
    if (cuts.empty() || c - cuts.back() > tol_) cuts.push_back(c);
  }
  // a cut survives unless some element straddles it
  std::vector<int> straddle(cuts.size() + 1, 0);
  for (int id : leaves_) {
    const auto& e = elements_[id];
    auto first = std::upper_bound(cuts.begin(), cuts.end(), e.t_iv.lo + tol_);
    auto last = std::lower_bound(cuts.begin(), cuts.end(), e.t_iv.hi - tol_);
    if (first < last) {
      ++straddle[first - cuts.begin()];
      --straddle[last - cuts.begin()];
    }
  }
  slab_cuts_.clear();
  int running = 0;
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    running += straddle[i];
    if (running == 0) slab_cuts_.push_back(cuts[i]);
  }
  slabs_.assign(slab_cuts_.size() + 1, {});
  for (int id : leaves_) {
    auto& e = elements_[id];
    const auto s = std::upper_bound(slab_cuts_.begin(), slab_cuts_.end(), e.t_iv.mid()) -
                   slab_cuts_.begin();
    e.slab = static_cast<int>(s);
    slabs_[s].push_back(id);
  }
}

inline std::vector<std::int64_t> SpaceTimeMesh::topo_signature(int id) const {
  const auto& e = elements_[id];
  std::vector<std::int64_t> sig;
  if (topo_mode_ == TopoEquivalence::translation) {
    sig.push_back(detail::quantize(e.hx(), omega_.length()));
    sig.push_back(detail::quantize(e.ht(), T_));
  }
  sig.push_back(e.degree);
  auto side = [&](const std::vector<int>& facets) {
    sig.push_back(static_cast<std::int64_t>(facets.size()));
    for (std::size_t k = 0; k + 1 < facets.size(); ++k)
      sig.push_back(detail::quantize(time_facets_[facets[k]].t_iv.hi - e.t_iv.lo, e.ht()));
    for (int f : facets) sig.push_back(time_facets_[f].moment_degree);
  };
  side(e.left_facets);
  side(e.right_facets);
  sig.push_back(static_cast<std::int64_t>(e.bottom_facets.size()));
  for (std::size_t k = 0; k + 1 < e.bottom_facets.size(); ++k)
    sig.push_back(detail::quantize(space_facets_[e.bottom_facets[k]].x_iv.hi - e.x_iv.lo, e.hx()));
  return sig;
}

inline void SpaceTimeMesh::compute_topo_flags() {
  std::map<std::vector<std::int64_t>, int> table;
  for (int id : leaves_) {
    auto [it, inserted] = table.emplace(topo_signature(id), static_cast<int>(table.size()) + 1);
    elements_[id].topo_flag = it->second;
  }
  class_count_ = static_cast<int>(table.size());
}

inline void SpaceTimeMesh::finalize() {
  collect_leaves();
  build_facets();
  assign_facet_degrees();
  compute_slabs();
  compute_topo_flags();
}

inline void SpaceTimeMesh::validate() const {
  const double area_total = omega_.length() * T_;
  double area = 0.0;
  for (int id : leaves_) area += elements_[id].rect().area();
  if (std::abs(area - area_total) > 1e-12 * area_total)
    throw std::logic_error("validate: leaves do not tile the domain");

  auto check_cover = [&](double lo, double hi, const std::vector<std::pair<double, double>>& pieces,
                         const char* what) {
    double cur = lo;
    for (auto [a, b] : pieces) {
      if (std::abs(a - cur) > 1e-13 * std::max(1.0, std::abs(hi)) + tol_)
        throw std::logic_error(std::string("validate: gap in ") + what + " cover");
      cur = b;
    }
    if (std::abs(cur - hi) > 1e-13 * std::max(1.0, std::abs(hi)) + tol_)
      throw std::logic_error(std::string("validate: incomplete ") + what + " cover");
  };
  for (int id : leaves_) {
    const auto& e = elements_[id];
    std::vector<std::pair<double, double>> p;
    for (int f : e.left_facets) p.emplace_back(time_facets_[f].t_iv.lo, time_facets_[f].t_iv.hi);
    check_cover(e.t_iv.lo, e.t_iv.hi, p, "left side");
    p.clear();
    for (int f : e.right_facets) p.emplace_back(time_facets_[f].t_iv.lo, time_facets_[f].t_iv.hi);
    check_cover(e.t_iv.lo, e.t_iv.hi, p, "right side");
    p.clear();
    for (int f : e.bottom_facets)
      p.emplace_back(space_facets_[f].x_iv.lo, space_facets_[f].x_iv.hi);
    check_cover(e.x_iv.lo, e.x_iv.hi, p, "bottom side");
    if (std::abs(e.t_iv.hi - T_) > tol_) {
      p.clear();
      for (int f : e.top_facets) p.emplace_back(space_facets_[f].x_iv.lo, space_facets_[f].x_iv.hi);
      check_cover(e.x_iv.lo, e.x_iv.hi, p, "top side");
    }
  }
}

inline std::set<std::pair<std::int64_t, std::int64_t>> SpaceTimeMesh::vertex_keys() const {
  std::set<std::pair<std::int64_t, std::int64_t>> keys;
  auto key = [&](double x, double t) {
    keys.emplace(detail::quantize(x - omega_.lo, omega_.length()), detail::quantize(t, T_));
  };
  for (int id : leaves_) {
    const auto& e = elements_[id];
    key(e.x_iv.lo, e.t_iv.lo);
    key(e.x_iv.hi, e.t_iv.lo);
    key(e.x_iv.lo, e.t_iv.hi);
    key(e.x_iv.hi, e.t_iv.hi);
  }
  for (const auto& f : time_facets_) {
    key(f.x_pos, f.t_iv.lo);
    key(f.x_pos, f.t_iv.hi);
  }
  for (const auto& f : space_facets_) {
    key(f.x_iv.lo, f.t_pos);
    key(f.x_iv.hi, f.t_pos);
  }
  return keys;
}

// ---------------------------------------------------------------------------
// Mesh generators and refinement
// ---------------------------------------------------------------------------

namespace detail {
inline std::vector<double> uniform_cuts(const Interval& iv, int n) {
  std::vector<double> c(n + 1);
  for (int i = 0; i <= n; ++i) c[i] = iv.lo + iv.length() * i / n;
  c[n] = iv.hi;
  return c;
}

// tensor mesh from breakpoints; degree per time layer
inline SpaceTimeMesh tensor_mesh(const Interval& omega, double T, const std::vector<double>& xc,
                                 const std::vector<double>& tc, const std::vector<int>& layer_deg) {
  SpaceTimeMesh m(omega, T);
  for (std::size_t j = 0; j + 1 < tc.size(); ++j)
    for (std::size_t i = 0; i + 1 < xc.size(); ++i)
      m.add_element({xc[i], xc[i + 1]}, {tc[j], tc[j + 1]}, layer_deg[j]);
  m.finalize();
  return m;
}

inline std::vector<int> layer_degrees(const std::vector<int>& rule, int layers) {
  if (rule.empty()) throw std::invalid_argument("degree rule must not be empty");
  if (rule.size() == 1) return std::vector<int>(layers, rule[0]);
  if (static_cast<int>(rule.size()) != layers)
    throw std::invalid_argument("degree rule must give one degree per layer");
  for (int p : rule)
    if (p < 1) throw std::invalid_argument("element degree must be >= 1");
  return rule;
}
}  // namespace detail

/// Uniform nx × nt Cartesian mesh of Ω × (0, T) with degree p.
inline SpaceTimeMesh cartesian_mesh(const Interval& omega, double T, int nx, int nt, int p) {
  if (nx < 1 || nt < 1) throw std::invalid_argument("cartesian_mesh: nx, nt must be >= 1");
  if (p < 1) throw std::invalid_argument("cartesian_mesh: degree must be >= 1");
  return detail::tensor_mesh(omega, T, detail::uniform_cuts(omega, nx),
                             detail::uniform_cuts(Interval(0.0, T), nt),
                             std::vector<int>(nt, p));
}

/// Uniform spatial partition of width h_x and L time layers graded toward t = 0:
/// (0, σ^{L-1}T], (σ^{L-1}T, σ^{L-2}T], ..., (σT, T]. `degrees` lists one degree
/// per layer bottom-up (or a single uniform degree).
inline SpaceTimeMesh graded_mesh_t(const Interval& omega, double T, double h_x, double sigma_t,
                                   int L, const std::vector<int>& degrees) {
  if (L < 1) throw std::invalid_argument("graded_mesh_t: L must be >= 1");
  if (!(sigma_t > 0.0 && sigma_t < 1.0))
    throw std::invalid_argument("graded_mesh_t: sigma_t must lie in (0,1)");
  const int nx = std::max(1, static_cast<int>(std::lround(omega.length() / h_x)));
  std::vector<double> tc{0.0};
  for (int k = L - 1; k >= 1; --k) tc.push_back(std::pow(sigma_t, k) * T);
  tc.push_back(T);
  for (std::size_t j = 0; j + 1 < tc.size(); ++j)
    if (tc[j + 1] - tc[j] < 1e-14 * T) throw std::invalid_argument("graded_mesh_t: degenerate layer");
  return detail::tensor_mesh(omega, T, detail::uniform_cuts(omega, nx), tc,
                             detail::layer_degrees(degrees, L));
}

/// Tensor mesh graded geometrically toward both spatial end points and t = 0.
/// Level L has spatial cuts at the midpoint and at distances (|Ω|/2)σ_x^k,
/// k = 1..L-1, from each end, and time cuts σ_t^k T; degrees per time layer bottom-up.
inline SpaceTimeMesh graded_mesh_xt(const Interval& omega, double T, double sigma_x,
                                    double sigma_t, int L, const std::vector<int>& degrees) {
  if (L < 1) throw std::invalid_argument("graded_mesh_xt: L must be >= 1");
  if (!(sigma_x > 0.0 && sigma_x < 1.0 && sigma_t > 0.0 && sigma_t < 1.0))
    throw std::invalid_argument("graded_mesh_xt: grading factors must lie in (0,1)");
  const double half = 0.5 * omega.length();
  std::vector<double> xc{omega.lo};
  for (int k = L - 1; k >= 1; --k) xc.push_back(omega.lo + half * std::pow(sigma_x, k));
  xc.push_back(omega.mid());
  for (int k = 1; k <= L - 1; ++k) xc.push_back(omega.hi - half * std::pow(sigma_x, k));
  xc.push_back(omega.hi);
  std::vector<double> tc{0.0};
  for (int k = L - 1; k >= 1; --k) tc.push_back(std::pow(sigma_t, k) * T);
  tc.push_back(T);
  for (std::size_t j = 0; j + 1 < tc.size(); ++j)
    if (tc[j + 1] - tc[j] < 1e-14 * T) throw std::invalid_argument("graded_mesh_xt: degenerate layer");
  for (std::size_t i = 0; i + 1 < xc.size(); ++i)
    if (xc[i + 1] - xc[i] < 1e-14 * omega.length())
      throw std::invalid_argument("graded_mesh_xt: degenerate layer");
  return detail::tensor_mesh(omega, T, xc, tc, detail::layer_degrees(degrees, L));
}

/// Split every marked leaf into four siblings; neighbours are left untouched.
inline void refine_in_place(SpaceTimeMesh& mesh, const std::vector<int>& marked) {
  std::vector<int> ids(marked);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (int id : ids) mesh.split(id);
  mesh.finalize();
}

inline SpaceTimeMesh refine(const SpaceTimeMesh& mesh, const std::vector<int>& marked) {
  SpaceTimeMesh out = mesh;
  refine_in_place(out, marked);
  return out;
}

}  // namespace stvem
