#pragma once
// Study driver: JSON run configs, h-uniform / hp-graded / adaptive / single
// solve studies, study.csv + meshes/step_k.mesh + summary.json, rate fits.
// Needs nlohmann/json on the include path (vendor/json.hpp in this tree).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptivity.hpp"
#include "mesh_io.hpp"

namespace stvem {

/// Invalid run configuration; field() names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error("config field '" + field + "': " + what), field_(std::move(field)) {}
  [[nodiscard]] const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class StudyMode { h_uniform, hp_graded, adaptive, single_solve };

inline const char* mode_name(StudyMode m) {
  switch (m) {
    case StudyMode::h_uniform: return "h_uniform";
    case StudyMode::hp_graded: return "hp_graded";
    case StudyMode::adaptive: return "adaptive";
    case StudyMode::single_solve: return "single_solve";
  }
  return "?";
}

struct RunConfig {
  StudyMode mode = StudyMode::single_solve;
  int test_id = 1;
  double alpha = 0.55;
  int degree = 1;
  // h_uniform: start mesh nx × nt, doubled in both directions each step
  int nx = 0, nt = 0, steps = 0;
  // hp_graded: levels first_level..levels, degrees 1..L bottom-up
  int levels = 0, first_level = 1;
  double h_x = 0.05, sigma_x = 0.25, sigma_t = 0.1;
  // adaptive
  double theta = 0.99;
  int max_steps = 25, max_dofs = 200000;
  int extra = 4;
  bool compute_EN = true, cache_on = true, timing = false, write_meshes = true;
  TopoEquivalence topo = TopoEquivalence::translation;
  std::optional<double> nu, cH;  // single_solve only
  std::string output = "stvem_out";
};

namespace detail {

template <class T>
T get_field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path, "missing or of the wrong type");
  }
}

template <class T>
void maybe(const nlohmann::json& j, const std::string& key, const std::string& path, T& out) {
  if (j.contains(key)) out = get_field<T>(j, key, path);
}

inline void only_keys(const nlohmann::json& j, const std::string& where,
                      const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where.empty() ? k : where + "." + k, "unknown key");
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  if (c.test_id < 1 || c.test_id > 3) throw ConfigError("test_case.id", "must be 1, 2 or 3");
  if (c.test_id == 2 && !(c.alpha > 0.5)) throw ConfigError("test_case.alpha", "must exceed 0.5");
  if (c.degree < 1) throw ConfigError("degree", "must be >= 1");
  if (c.extra < 0 || c.extra > 64) throw ConfigError("quadrature.extra", "must lie in [0, 64]");
  switch (c.mode) {
    case StudyMode::h_uniform:
      if (c.steps < 1) throw ConfigError("mesh.steps", "must be >= 1");
      [[fallthrough]];
    case StudyMode::single_solve:
      if (c.nx < 1) throw ConfigError("mesh.nx", "must be >= 1");
      if (c.nt < 1) throw ConfigError("mesh.nt", "must be >= 1");
      break;
    case StudyMode::hp_graded:
      if (c.levels < 1) throw ConfigError("mesh.levels", "must be >= 1");
      if (c.first_level < 1 || c.first_level > c.levels)
        throw ConfigError("mesh.first_level", "must lie in [1, levels]");
      if (!(c.sigma_t > 0 && c.sigma_t < 1)) throw ConfigError("mesh.sigma_t", "must lie in (0,1)");
      if (c.test_id == 3 && !(c.sigma_x > 0 && c.sigma_x < 1))
        throw ConfigError("mesh.sigma_x", "must lie in (0,1)");
      if (c.test_id != 3 && !(c.h_x > 0 && c.h_x <= 1)) throw ConfigError("mesh.h_x", "must lie in (0,1]");
      break;
    case StudyMode::adaptive:
      if (!(c.theta > 0 && c.theta <= 1)) throw ConfigError("theta", "must lie in (0,1]");
      if (c.max_steps < 1) throw ConfigError("max_steps", "must be >= 1");
      if (c.max_dofs < 1) throw ConfigError("max_dofs", "must be >= 1");
      break;
  }
  if ((c.nu || c.cH) && c.mode != StudyMode::single_solve)
    throw ConfigError("coefficients", "only allowed with mode single_solve");
  if (c.output.empty()) throw ConfigError("output", "must not be empty");
}

/// Config document:
///   { "mode": "h_uniform|hp_graded|adaptive|single_solve",
///     "test_case": {"id": 2, "alpha": 0.55}, "degree": 1,
///     "mesh": {"nx", "nt", "steps", "levels", "first_level", "h_x", "sigma_x", "sigma_t"},
///     "theta", "max_steps", "max_dofs", "quadrature": {"extra"},
///     "compute_EN", "cache_on", "timing", "write_meshes",
///     "topology": "translation|dilation", "coefficients": {"nu", "cH"}, "output": "dir" }
/// Required keys depend on the mode; see validate().
inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::get_field;
  using detail::maybe;
  detail::only_keys(j, "", {"mode", "test_case", "degree", "mesh", "theta", "max_steps", "max_dofs",
                            "quadrature", "compute_EN", "cache_on", "timing", "write_meshes",
                            "topology", "coefficients", "output"});
  RunConfig c;
  const auto mode = get_field<std::string>(j, "mode", "mode");
  if (mode == "h_uniform") c.mode = StudyMode::h_uniform;
  else if (mode == "hp_graded") c.mode = StudyMode::hp_graded;
  else if (mode == "adaptive") c.mode = StudyMode::adaptive;
  else if (mode == "single_solve") c.mode = StudyMode::single_solve;
  else throw ConfigError("mode", "unknown mode '" + mode + "'");

  if (!j.contains("test_case")) throw ConfigError("test_case", "missing");
  const auto& tc = j["test_case"];
  detail::only_keys(tc, "test_case", {"id", "alpha"});
  c.test_id = get_field<int>(tc, "id", "test_case.id");
  maybe(tc, "alpha", "test_case.alpha", c.alpha);

  if (c.mode != StudyMode::hp_graded) c.degree = get_field<int>(j, "degree", "degree");
  else maybe(j, "degree", "degree", c.degree);

  if (j.contains("mesh")) {
    const auto& m = j["mesh"];
    detail::only_keys(m, "mesh", {"nx", "nt", "steps", "levels", "first_level", "h_x", "sigma_x", "sigma_t"});
    maybe(m, "nx", "mesh.nx", c.nx);
    maybe(m, "nt", "mesh.nt", c.nt);
    maybe(m, "steps", "mesh.steps", c.steps);
    maybe(m, "levels", "mesh.levels", c.levels);
    maybe(m, "first_level", "mesh.first_level", c.first_level);
    maybe(m, "h_x", "mesh.h_x", c.h_x);
    maybe(m, "sigma_x", "mesh.sigma_x", c.sigma_x);
    maybe(m, "sigma_t", "mesh.sigma_t", c.sigma_t);
  } else if (c.mode != StudyMode::adaptive) {
    throw ConfigError("mesh", "missing");
  }
  if (c.mode == StudyMode::adaptive) c.theta = get_field<double>(j, "theta", "theta");
  maybe(j, "max_steps", "max_steps", c.max_steps);
  maybe(j, "max_dofs", "max_dofs", c.max_dofs);
  if (j.contains("quadrature")) {
    detail::only_keys(j["quadrature"], "quadrature", {"extra"});
    maybe(j["quadrature"], "extra", "quadrature.extra", c.extra);
  }
  maybe(j, "compute_EN", "compute_EN", c.compute_EN);
  maybe(j, "cache_on", "cache_on", c.cache_on);
  maybe(j, "timing", "timing", c.timing);
  maybe(j, "write_meshes", "write_meshes", c.write_meshes);
  if (j.contains("topology")) {
    const auto t = get_field<std::string>(j, "topology", "topology");
    if (t == "translation") c.topo = TopoEquivalence::translation;
    else if (t == "dilation") c.topo = TopoEquivalence::dilation;
    else throw ConfigError("topology", "must be 'translation' or 'dilation'");
  }
  if (j.contains("coefficients")) {
    const auto& k = j["coefficients"];
    detail::only_keys(k, "coefficients", {"nu", "cH"});
    if (k.contains("nu")) c.nu = get_field<double>(k, "nu", "coefficients.nu");
    if (k.contains("cH")) c.cH = get_field<double>(k, "cH", "coefficients.cH");
  }
  maybe(j, "output", "output", c.output);
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("<file>", "cannot read " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<file>", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline StudyOptions study_options(const RunConfig& c) {
  StudyOptions o;
  o.compute_EN = c.compute_EN;
  o.cache_on = c.cache_on;
  o.extra = c.extra;
  o.topo = c.topo;
  o.nu = c.nu;
  o.cH = c.cH;
  return o;
}

/// Mesh for step k (1-based) of a non-adaptive study.
inline SpaceTimeMesh study_mesh(const RunConfig& c, int k) {
  const auto ex = test_case(c.test_id, c.alpha);
  switch (c.mode) {
    case StudyMode::single_solve:
      return cartesian_mesh(ex.omega, ex.T, c.nx, c.nt, c.degree);
    case StudyMode::h_uniform: {
      const int s = 1 << (k - 1);
      return cartesian_mesh(ex.omega, ex.T, c.nx * s, c.nt * s, c.degree);
    }
    case StudyMode::hp_graded: {
      const int L = c.first_level + k - 1;
      std::vector<int> deg(L);
      std::iota(deg.begin(), deg.end(), 1);
      if (c.test_id == 3) return graded_mesh_xt(ex.omega, ex.T, c.sigma_x, c.sigma_t, L, deg);
      return graded_mesh_t(ex.omega, ex.T, c.h_x, c.sigma_t, L, deg);
    }
    case StudyMode::adaptive:
      return cartesian_mesh(ex.omega, ex.T, 1, 1, c.degree);
  }
  throw std::logic_error("study_mesh: bad mode");
}

inline int study_length(const RunConfig& c) {
  switch (c.mode) {
    case StudyMode::single_solve: return 1;
    case StudyMode::h_uniform: return c.steps;
    case StudyMode::hp_graded: return c.levels - c.first_level + 1;
    case StudyMode::adaptive: return c.max_steps;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// CSV

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "step", "N_dofs", "EY", "EN", "EU", "EX", "eta1", "eta2", "eta3", "eta4", "eta5",
      "eta", "effectivity", "n_elements", "n_slabs", "n_ref_elements", "seconds"};
  return cols;
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv_header(std::ostream& os) {
  const auto& c = csv_columns();
  for (std::size_t i = 0; i < c.size(); ++i) os << (i ? "," : "") << c[i];
  os << '\n';
}

/// EN and EX are left empty when EN was not computed; seconds only with timing on.
inline void write_csv_row(std::ostream& os, const StepRecord& r, bool timing) {
  os << r.step << ',' << r.n_dofs << ',' << fmt_double(r.EY) << ',';
  os << (r.EN_computed ? fmt_double(r.EN) : "") << ',' << fmt_double(r.EU) << ',';
  os << (r.EN_computed ? fmt_double(r.EX) : "");
  for (double e : r.eta_i) os << ',' << fmt_double(e);
  os << ',' << fmt_double(r.eta) << ',' << fmt_double(r.effectivity) << ',' << r.n_elements << ','
     << r.n_slabs << ',' << r.n_ref_elements << ',' << (timing ? fmt_double(r.seconds) : "") << '\n';
}

/// Parsed study.csv: one optional value per column per row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<double>>> rows;

  [[nodiscard]] int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline CsvTable read_csv(std::istream& is) {
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("csv: empty file");
  t.header = split(line);
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw std::runtime_error("csv: line " + std::to_string(lineno) + " has " +
                               std::to_string(cells.size()) + " fields, expected " +
                               std::to_string(t.header.size()));
    std::vector<std::optional<double>> row;
    for (const auto& c : cells) {
      if (c.empty()) {
        row.emplace_back();
        continue;
      }
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(c, &used);
      } catch (...) {
        used = 0;
      }
      if (used != c.size()) throw std::runtime_error("csv: line " + std::to_string(lineno) + ": bad number '" + c + "'");
      row.emplace_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// rate fits

struct LineFit {
  double slope = 0, intercept = 0, r2 = 0;
};

/// Least-squares line y = intercept + slope·x.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0) throw std::invalid_argument("fit_line: abscissae coincide");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

/// Algebraic slope over the last 3 rows (log err vs log N) and exponential fit
/// over all rows (log err vs N^{1/3}) for each error column with positive values
/// on every row.
inline nlohmann::ordered_json fit_rates(const CsvTable& t) {
  if (t.rows.size() < 3) throw std::invalid_argument("fit_rates: need at least 3 rows, got " + std::to_string(t.rows.size()));
  const int cn = t.column("N_dofs");
  if (cn < 0) throw std::invalid_argument("fit_rates: no N_dofs column");
  nlohmann::ordered_json rates = nlohmann::ordered_json::object();
  for (const char* name : {"EY", "EN", "EU", "EX", "eta"}) {
    const int c = t.column(name);
    if (c < 0) continue;
    std::vector<double> logN, cbrtN, logE;
    bool ok = true;
    for (const auto& row : t.rows) {
      if (!row[c] || !row[cn] || *row[c] <= 0 || *row[cn] <= 0) {
        ok = false;
        break;
      }
      logN.push_back(std::log(*row[cn]));
      cbrtN.push_back(std::cbrt(*row[cn]));
      logE.push_back(std::log(*row[c]));
    }
    if (!ok) continue;
    const std::size_t n = logN.size();
    const std::vector<double> lx(logN.end() - 3, logN.end()), ly(logE.end() - 3, logE.end());
    const auto alg = fit_line(lx, ly);
    const auto expo = fit_line(cbrtN, logE);
    rates[name] = {{"slope_last3", alg.slope},
                   {"exp_rate", expo.slope},
                   {"exp_intercept", expo.intercept},
                   {"exp_r2", expo.r2},
                   {"rows", n}};
  }
  nlohmann::ordered_json out;
  out["rows"] = t.rows.size();
  out["rates"] = rates;
  return out;
}

inline nlohmann::ordered_json fit_rates_file(const std::string& csv_path) {
  std::ifstream is(csv_path);
  if (!is) throw std::runtime_error("cannot read " + csv_path);
  return fit_rates(read_csv(is));
}

// ---------------------------------------------------------------------------
// running a study

inline std::filesystem::path mesh_path(const std::filesystem::path& out, int step) {
  return out / "meshes" / ("step_" + std::to_string(step) + ".mesh");
}

/// Run the study described by `c`, writing study.csv, meshes/ and summary.json
/// into c.output. Progress lines go to `log`. SolverError carries the step.
inline StudyReport run_study(const RunConfig& c, std::ostream& log = std::cerr) {
  validate(c);
  namespace fs = std::filesystem;
  const fs::path out(c.output);
  fs::create_directories(out);
  if (c.write_meshes) fs::create_directories(out / "meshes");
  std::ofstream csv(out / "study.csv");
  if (!csv) throw std::runtime_error("cannot write " + (out / "study.csv").string());
  write_csv_header(csv);

  const auto ex = test_case(c.test_id, c.alpha);
  const auto opt = study_options(c);
  StudyReport report;
  auto record = [&](const StepRecord& r, const SpaceTimeMesh& m) {
    write_csv_row(csv, r, c.timing);
    csv.flush();
    if (c.write_meshes) write_mesh_file(mesh_path(out, r.step).string(), m);
    log << mode_name(c.mode) << " step " << r.step << ": N=" << r.n_dofs << " EY=" << r.EY
        << " eta=" << r.eta << " elements=" << r.n_elements << " (" << r.seconds << " s)\n";
  };

  if (c.mode == StudyMode::adaptive) {
    AdaptiveConfig ac;
    ac.theta = c.theta;
    ac.max_steps = c.max_steps;
    ac.max_dofs = c.max_dofs;
    ac.degree = c.degree;
    ac.test_case = c.test_id;
    ac.alpha = c.alpha;
    ac.options = opt;
    report = adapt_loop(ac, record).report;
  } else {
    for (int k = 1; k <= study_length(c); ++k) {
      auto m = study_mesh(c, k);
      auto r = measure_step(m, ex, opt, k);
      record(r, m);
      report.steps.push_back(std::move(r));
    }
  }
  csv.close();

  nlohmann::ordered_json summary;
  summary["format"] = "stvem-summary/1";
  summary["mode"] = mode_name(c.mode);
  summary["test_case"] = c.test_id;
  if (c.test_id == 2) summary["alpha"] = c.alpha;
  summary["rows"] = report.steps.size();
  if (report.steps.size() >= 3) {
    summary["rates"] = fit_rates_file((out / "study.csv").string())["rates"];
  } else {
    summary["rates"] = nullptr;
  }
  std::ofstream js(out / "summary.json");
  js << summary.dump(2) << '\n';
  return report;
}

/// Write the meshes a study would solve on, without solving. Adaptive studies
/// only have their initial mesh ahead of time.
inline std::vector<std::string> dump_study_meshes(const RunConfig& c) {
  validate(c);
  namespace fs = std::filesystem;
  const fs::path out(c.output);
  fs::create_directories(out / "meshes");
  const int n = c.mode == StudyMode::adaptive ? 1 : study_length(c);
  std::vector<std::string> paths;
  for (int k = 1; k <= n; ++k) {
    auto m = study_mesh(c, k);
    if (m.topo_equivalence() != c.topo) {
      m.set_topo_equivalence(c.topo);
      m.compute_topo_flags();
    }
    paths.push_back(mesh_path(out, k).string());
    write_mesh_file(paths.back(), m);
  }
  return paths;
}

}  // namespace stvem
