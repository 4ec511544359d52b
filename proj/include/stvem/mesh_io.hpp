#pragma once
// Plain-text mesh export, format "stvem-mesh/1":
//
//   stvem-mesh/1
//   domain <x_lo> <x_hi> <T>
//   elements <n>
//   <id> <x_lo> <x_hi> <t_lo> <t_hi> <degree> <slab> <topo_flag>     (n lines)
//   time_facets <m>
//   <id> <x> <t_lo> <t_hi> <left|-1> <right|-1> <degree> <h_Fx>       (m lines)
//   space_facets <k>
//   <id> <t> <x_lo> <x_hi> <below|-1> <above> <degree>                (k lines)
//
// Element ids are refinement-tree ids of the leaves.

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "mesh.hpp"

namespace stvem {

inline constexpr const char* kMeshFormat = "stvem-mesh/1";

inline void write_mesh(std::ostream& os, const SpaceTimeMesh& m) {
  os << kMeshFormat << '\n' << std::setprecision(17);
  os << "domain " << m.omega().lo << ' ' << m.omega().hi << ' ' << m.final_time() << '\n';
  os << "elements " << m.n_leaves() << '\n';
  for (int id : m.leaves()) {
    const auto& e = m.element(id);
    os << id << ' ' << e.x_iv.lo << ' ' << e.x_iv.hi << ' ' << e.t_iv.lo << ' ' << e.t_iv.hi << ' '
       << e.degree << ' ' << e.slab << ' ' << e.topo_flag << '\n';
  }
  os << "time_facets " << m.time_facets().size() << '\n';
  for (const auto& f : m.time_facets())
    os << f.id << ' ' << f.x_pos << ' ' << f.t_iv.lo << ' ' << f.t_iv.hi << ' ' << f.left_elem << ' '
       << f.right_elem << ' ' << f.moment_degree << ' ' << f.h_Fx << '\n';
  os << "space_facets " << m.space_facets().size() << '\n';
  for (const auto& f : m.space_facets())
    os << f.id << ' ' << f.t_pos << ' ' << f.x_iv.lo << ' ' << f.x_iv.hi << ' ' << f.below_elem
       << ' ' << f.above_elem << ' ' << f.moment_degree << '\n';
}

inline void write_mesh_file(const std::string& path, const SpaceTimeMesh& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write mesh file " + path);
  write_mesh(os, m);
}

/// Summary of a mesh file, enough to check a dump round-trips.
struct MeshFileInfo {
  double x_lo = 0, x_hi = 0, T = 0;
  std::vector<std::array<double, 4>> boxes;  // x_lo x_hi t_lo t_hi
  std::vector<int> degree, slab, flag;
  std::size_t n_time_facets = 0, n_space_facets = 0;
};

inline MeshFileInfo read_mesh(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMeshFormat)
    throw std::runtime_error("read_mesh: missing stvem-mesh/1 header");
  MeshFileInfo info;
  std::string key;
  std::size_t n = 0;
  if (!(is >> key >> info.x_lo >> info.x_hi >> info.T) || key != "domain")
    throw std::runtime_error("read_mesh: bad domain line");
  if (!(is >> key >> n) || key != "elements") throw std::runtime_error("read_mesh: bad elements");
  for (std::size_t i = 0; i < n; ++i) {
    int id, p, s, fl;
    std::array<double, 4> b{};
    if (!(is >> id >> b[0] >> b[1] >> b[2] >> b[3] >> p >> s >> fl))
      throw std::runtime_error("read_mesh: truncated element list");
    info.boxes.push_back(b);
    info.degree.push_back(p);
    info.slab.push_back(s);
    info.flag.push_back(fl);
  }
  if (!(is >> key >> info.n_time_facets) || key != "time_facets")
    throw std::runtime_error("read_mesh: bad time_facets");
  std::getline(is, line);
  for (std::size_t i = 0; i < info.n_time_facets; ++i) std::getline(is, line);
  if (!(is >> key >> info.n_space_facets) || key != "space_facets")
    throw std::runtime_error("read_mesh: bad space_facets");
  return info;
}

}  // namespace stvem
