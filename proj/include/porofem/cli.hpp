#ifndef POROFEM_CLI_HPP
#define POROFEM_CLI_HPP

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "porofem/analysis.hpp"
#include "porofem/assembly.hpp"
#include "porofem/common.hpp"
#include "porofem/mms.hpp"
#include "porofem/scheme.hpp"

namespace porofem {

enum class ExampleId { Ex41, Ex42 };

/// One experiment description: which example, scheme, refinement levels and
/// output options. Parsed from a plain-text key-value file.
struct RunConfig {
  ExampleId example = ExampleId::Ex41;
  SchemeKind scheme = SchemeKind::CrankNicolson;
  std::vector<int> n_list;       // exactly one entry for single runs
  std::vector<double> tau_list;  // exactly one entry for single runs
  double T_final = 1.0;
  std::string out_dir = ".";
  bool emit_plots = false;
  bool energy_log = false;
  int quad_exactness = 5;
  int error_quad_exactness = 7;
  int threads = 1;
  RawParams params{0, 0, 0, 0, 0, 0, 0};
  bool params_overridden = false;

  RawParams effective_params() const {
    if (params_overridden) return params;
    return example == ExampleId::Ex41 ? kExample41Params : kExample42Params;
  }

  std::unique_ptr<ManufacturedSolution> make_solution() const {
    return example == ExampleId::Ex41 ? example41(effective_params())
                                      : example42(effective_params());
  }

  std::vector<std::string> echo() const {
    std::vector<std::string> lines;
    auto add = [&](const std::string& k, const std::string& v) { lines.push_back(k + " = " + v); };
    add("example", example == ExampleId::Ex41 ? "ex41" : "ex42");
    add("scheme", scheme == SchemeKind::CrankNicolson ? "cn" : "be");
    {
      std::ostringstream ss;
      for (std::size_t i = 0; i < n_list.size(); ++i) ss << (i ? " " : "") << n_list[i];
      add(n_list.size() == 1 ? "n" : "n_list", ss.str());
    }
    {
      std::ostringstream ss;
      ss << std::setprecision(17);
      for (std::size_t i = 0; i < tau_list.size(); ++i) ss << (i ? " " : "") << tau_list[i];
      add(tau_list.size() == 1 ? "tau" : "tau_list", ss.str());
    }
    {
      std::ostringstream ss;
      ss << std::setprecision(17) << T_final;
      add("T", ss.str());
    }
    add("quad", std::to_string(quad_exactness));
    add("error_quad", std::to_string(error_quad_exactness));
    add("threads", std::to_string(threads));
    const RawParams rp = effective_params();
    std::ostringstream ss;
    ss << std::setprecision(17) << "E=" << rp.E << " nu=" << rp.nu << " alpha=" << rp.alpha
       << " c0=" << rp.c0 << " lambda_star=" << rp.lambda_star << " K=" << rp.K
       << " mu_f=" << rp.mu_f;
    add("params", ss.str());
    return lines;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string tok;
  while (ss >> tok) {
    // allow comma separated lists too
    std::string cur;
    for (char c : tok) {
      if (c == ',') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else
        cur.push_back(c);
    }
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value for '" + key + "': " + s);
  }
}

inline int parse_int(const std::string& s, const std::string& key) {
  double v = parse_double(s, key);
  int i = static_cast<int>(std::llround(v));
  if (std::abs(v - i) > 0.0) throw ConfigError("config: '" + key + "' must be an integer");
  return i;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config: bad boolean for '" + key + "': " + s);
}

}  // namespace detail

/// Key-value config with optional [params] section; '#' starts a comment.
inline RunConfig parse_config(std::istream& is) {
  RunConfig cfg;
  RawParams rp = kExample41Params;
  bool any_param = false;
  bool has_n = false, has_nlist = false, has_tau = false, has_taulist = false;
  std::string section;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "params" && !section.empty())
        throw ConfigError("config: unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key = value, got: " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError("config: empty key or value: " + line);

    if (section == "params") {
      any_param = true;
      if (key == "E") rp.E = detail::parse_double(value, key);
      else if (key == "nu") rp.nu = detail::parse_double(value, key);
      else if (key == "alpha") rp.alpha = detail::parse_double(value, key);
      else if (key == "c0") rp.c0 = detail::parse_double(value, key);
      else if (key == "lambda_star") rp.lambda_star = detail::parse_double(value, key);
      else if (key == "K") rp.K = detail::parse_double(value, key);
      else if (key == "mu_f") rp.mu_f = detail::parse_double(value, key);
      else throw ConfigError("config: unknown parameter '" + key + "'");
      continue;
    }

    if (key == "example") {
      if (value == "ex41") cfg.example = ExampleId::Ex41;
      else if (value == "ex42") cfg.example = ExampleId::Ex42;
      else throw ConfigError("config: unknown example '" + value + "'");
    } else if (key == "scheme") {
      if (value == "cn") cfg.scheme = SchemeKind::CrankNicolson;
      else if (value == "be") cfg.scheme = SchemeKind::BackwardEuler;
      else throw ConfigError("config: unknown scheme '" + value + "'");
    } else if (key == "n") {
      cfg.n_list = {detail::parse_int(value, key)};
      has_n = true;
    } else if (key == "n_list") {
      cfg.n_list.clear();
      for (const auto& tok : detail::split_ws(value)) cfg.n_list.push_back(detail::parse_int(tok, key));
      has_nlist = true;
    } else if (key == "tau") {
      cfg.tau_list = {detail::parse_double(value, key)};
      has_tau = true;
    } else if (key == "tau_list") {
      cfg.tau_list.clear();
      for (const auto& tok : detail::split_ws(value)) cfg.tau_list.push_back(detail::parse_double(tok, key));
      has_taulist = true;
    } else if (key == "T" || key == "T_final") {
      cfg.T_final = detail::parse_double(value, key);
    } else if (key == "out") {
      cfg.out_dir = value;
    } else if (key == "emit_plots") {
      cfg.emit_plots = detail::parse_bool(value, key);
    } else if (key == "energy_log") {
      cfg.energy_log = detail::parse_bool(value, key);
    } else if (key == "quad") {
      cfg.quad_exactness = detail::parse_int(value, key);
    } else if (key == "error_quad") {
      cfg.error_quad_exactness = detail::parse_int(value, key);
    } else if (key == "threads") {
      cfg.threads = detail::parse_int(value, key);
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  if (has_n && has_nlist) throw ConfigError("config: give exactly one of n, n_list");
  if (has_tau && has_taulist) throw ConfigError("config: give exactly one of tau, tau_list");
  if (cfg.n_list.empty()) throw ConfigError("config: n or n_list is required");
  if (cfg.tau_list.empty()) throw ConfigError("config: tau or tau_list is required");
  for (int n : cfg.n_list)
    if (n < 1) throw ConfigError("config: n must be >= 1");
  for (std::size_t i = 1; i < cfg.n_list.size(); ++i)
    if (cfg.n_list[i] <= cfg.n_list[i - 1])
      throw ConfigError("config: n_list must be strictly increasing (decreasing h)");
  for (double tau : cfg.tau_list)
    if (!(tau > 0.0)) throw ConfigError("config: tau must be positive");
  for (std::size_t i = 1; i < cfg.tau_list.size(); ++i)
    if (cfg.tau_list[i] >= cfg.tau_list[i - 1])
      throw ConfigError("config: tau_list must be strictly decreasing");
  if (any_param) {
    cfg.params = rp;
    cfg.params_overridden = true;
  }
  return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  return parse_config(in);
}

struct SingleResult {
  ErrorRecord record;
  double wall_seconds = 0.0;
  StateVec final_state;
};

/// One simulation: initialize, N steps, error norms at every node.
inline SingleResult run_single(const RunConfig& cfg, int n, double tau,
                               std::ostream* diagnostics = nullptr) {
  SchemeConfig sc{tau, cfg.T_final, cfg.scheme, cfg.energy_log};
  const long steps = num_steps(sc);  // config validation before any assembly

  const auto t_start = std::chrono::steady_clock::now();
  auto ms = cfg.make_solution();
  const PhysicalParams params = ms->params();
  const TriMesh mesh = build_unit_square_mesh(n);
  const DofLayout layout = build_dof_layout(mesh);
  const QuadratureRule quad = make_quadrature(cfg.quad_exactness);
  const QuadratureRule equad = make_quadrature(cfg.error_quad_exactness);
  const FormMatrices forms = assemble_forms(mesh, layout, params, quad, cfg.threads);
  const DirichletLayout parts = example_dirichlet_layout();
  MmsProblem data(mesh, layout, quad, *ms, parts);
  SchemeRunner runner(mesh, layout, params, forms, sc, data);

  StateVec state = initialize(mesh, layout, params, forms, *ms, quad, runner.mass_solver(),
                              parts.u_parts);
  SingleResult out;
  out.record.h = 1.0 / n;
  out.record.tau = tau;
  out.record.times.push_back(state.t);
  out.record.nodes.push_back(error_norms(state, *ms, state.t, mesh, layout, equad));
  if (diagnostics) {
    *diagnostics << "n,t,energy,u_l2,xi_l2,eta_l2,p_l2\n";
    runner.log_diagnostics(state, *diagnostics);
  }
  for (long k = 0; k < steps; ++k) {
    state = runner.advance(state);
    out.record.times.push_back(state.t);
    out.record.nodes.push_back(error_norms(state, *ms, state.t, mesh, layout, equad));
    if (diagnostics) runner.log_diagnostics(state, *diagnostics);
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  out.final_state = std::move(state);
  return out;
}

struct StudyResult {
  std::vector<ErrorRecord> records;
  std::vector<ConvergenceTable> tables;
  std::vector<double> wall_seconds;
  std::vector<std::string> config_echo;
};

inline StudyResult run_spatial_study(const RunConfig& cfg) {
  if (cfg.n_list.size() < 2) throw ConfigError("spatial study: n_list needs at least 2 levels");
  if (cfg.tau_list.size() != 1) throw ConfigError("spatial study: a single tau is required");
  StudyResult res;
  res.config_echo = cfg.echo();
  for (int n : cfg.n_list) {
    SingleResult r = run_single(cfg, n, cfg.tau_list[0]);
    res.records.push_back(std::move(r.record));
    res.wall_seconds.push_back(r.wall_seconds);
  }
  res.tables = build_tables(res.records);
  return res;
}

inline StudyResult run_temporal_study(const RunConfig& cfg) {
  if (cfg.tau_list.size() < 2) throw ConfigError("temporal study: tau_list needs at least 2 levels");
  if (cfg.n_list.size() != 1) throw ConfigError("temporal study: a single n is required");
  StudyResult res;
  res.config_echo = cfg.echo();
  for (double tau : cfg.tau_list) {
    SingleResult r = run_single(cfg, cfg.n_list[0], tau);
    res.records.push_back(std::move(r.record));
    res.wall_seconds.push_back(r.wall_seconds);
  }
  res.tables = build_tables(res.records);
  return res;
}

struct ComparisonResult {
  StudyResult cn;
  StudyResult be;
};

/// CN-vs-BE spatial study on the same levels; the CN leg runs through the
/// exact same path as run_spatial_study.
inline ComparisonResult run_scheme_comparison(const RunConfig& cfg) {
  if (cfg.example != ExampleId::Ex42)
    throw ConfigError("compare: the scheme comparison is defined for example ex42");
  RunConfig cn_cfg = cfg;
  cn_cfg.scheme = SchemeKind::CrankNicolson;
  RunConfig be_cfg = cfg;
  be_cfg.scheme = SchemeKind::BackwardEuler;
  ComparisonResult out;
  out.cn = run_spatial_study(cn_cfg);
  out.be = run_spatial_study(be_cfg);
  return out;
}

inline void write_comparison_csv(std::ostream& os, const ComparisonResult& res,
                                 const std::vector<std::string>& config_echo) {
  for (const auto& line : config_echo) os << "# " << line << "\n";
  os << "h,tau,field,norm,cn_error,cn_order,be_error,be_order\n";
  os << std::setprecision(12);
  for (std::size_t w = 0; w < res.cn.tables.size(); ++w) {
    const auto& ct = res.cn.tables[w];
    const auto& bt = res.be.tables[w];
    for (std::size_t r = 0; r < ct.rows.size(); ++r) {
      os << ct.rows[r].h << "," << ct.rows[r].tau << "," << ct.field << "," << ct.norm << ","
         << ct.rows[r].error << ",";
      if (ct.rows[r].order) os << *ct.rows[r].order;
      else os << "n/a";
      os << "," << bt.rows[r].error << ",";
      if (bt.rows[r].order) os << *bt.rows[r].order;
      else os << "n/a";
      os << "\n";
    }
  }
}

/// gnuplot script plus one two-column series file per (field, norm), with
/// slope guide lines through the coarsest level. The script references the
/// study CSV by relative path in a header comment.
inline void emit_plot_script(const StudyResult& result, const std::string& out_dir,
                             const std::string& csv_name, bool temporal) {
  if (result.records.empty() || result.tables.empty())
    throw UsageError("emit_plot_script: empty study result");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string var = temporal ? "tau" : "h";

  std::vector<std::string> series;
  for (const auto& t : result.tables) {
    const std::string name = "err_" + t.field + "_" + t.norm + "_vs_" + var + ".dat";
    std::ofstream ds(fs::path(out_dir) / name);
    if (!ds) throw std::runtime_error("emit_plot_script: cannot write " + name);
    ds << std::setprecision(12);
    for (const auto& r : t.rows) ds << (temporal ? r.tau : r.h) << " " << r.error << "\n";
    series.push_back(name);
  }

  std::ofstream os(fs::path(out_dir) / (std::string("plot_") + var + ".gp"));
  if (!os) throw std::runtime_error("emit_plot_script: cannot write plot script");
  os << "# log-log error plot for the study recorded in " << csv_name << "\n";
  os << "set logscale xy\n";
  os << "set xlabel '" << var << "'\nset ylabel 'error'\n";
  os << "set key left top\n";
  os << "set term pngcairo size 900,700\nset output 'errors_vs_" << var << ".png'\n";
  const double x0 = temporal ? result.records.front().tau : result.records.front().h;
  const auto ref = result.records.front().r_max();
  const double eref = std::max({ref.u_l2, ref.u_h1, ref.p_l2, ref.p_h1, 1e-300});
  os << "plot \\\n";
  for (std::size_t i = 0; i < series.size(); ++i)
    os << "  '" << series[i] << "' using 1:2 with linespoints title '"
       << result.tables[i].field << " " << result.tables[i].norm << "', \\\n";
  for (int rate = 1; rate <= 3; ++rate)
    os << "  " << eref << "*(x/" << x0 << ")**" << rate << " with lines dashtype 2 title 'slope "
       << rate << "'" << (rate < 3 ? ", \\" : "") << "\n";
}

/// Vertex-grid snapshot of the P1 fields (and displacement at vertices) for
/// surface plots: rows of "x y value".
inline void emit_field_snapshots(const StateVec& state, const TriMesh& mesh,
                                 const DofLayout& layout, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto writer = [&](const std::string& name, auto&& value_at_vertex) {
    std::ofstream os(fs::path(out_dir) / (name + "_grid.dat"));
    os << std::setprecision(12);
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      Vec2 p = mesh.vertices[static_cast<std::size_t>(v)];
      os << p.x << " " << p.y << " " << value_at_vertex(v) << "\n";
    }
  };
  writer("p", [&](int v) { return state.p[static_cast<std::size_t>(v)]; });
  writer("xi", [&](int v) { return state.xi[static_cast<std::size_t>(v)]; });
  writer("eta", [&](int v) { return state.eta[static_cast<std::size_t>(v)]; });
  writer("u1", [&](int v) { return state.u[static_cast<std::size_t>(layout.u_dof(0, v))]; });
  writer("u2", [&](int v) { return state.u[static_cast<std::size_t>(layout.u_dof(1, v))]; });
}

}  // namespace porofem

#endif
