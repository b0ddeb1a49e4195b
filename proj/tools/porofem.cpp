// Experiment runner for the poroelastic consolidation solver.
//
// Subcommands:
//   run       one simulation, errors at every time node
//   spatial   h-refinement study over n_list at fixed tau
//   temporal  tau-refinement study at fixed n
//   compare   Crank-Nicolson vs backward Euler on example ex42

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "porofem/cli.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitDivergence = 4;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  int threads = 0;
  int quad = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "run configuration file")->required();
  cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
  cmd->add_option("--threads", opts.threads, "worker threads for assembly loops");
  cmd->add_option("--quad", opts.quad, "assembly quadrature exactness degree");
}

porofem::RunConfig load_config(const CommonOpts& opts) {
  porofem::RunConfig cfg = porofem::parse_config_file(opts.config_path);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (opts.threads > 0) cfg.threads = opts.threads;
  if (opts.quad > 0) cfg.quad_exactness = opts.quad;
  return cfg;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream os(std::filesystem::path(dir) / name);
  if (!os) throw std::runtime_error("cannot write " + name + " under " + dir);
  return os;
}

void print_tables(const porofem::StudyResult& res) {
  for (const auto& t : res.tables) {
    std::cout << "  " << t.field << " " << t.norm << ":";
    for (const auto& r : t.rows) {
      std::cout << "  " << r.error;
      if (r.order) std::cout << " (order " << *r.order << ")";
    }
    std::cout << "\n";
  }
}

int run_cmd(const CommonOpts& opts) {
  porofem::RunConfig cfg = load_config(opts);
  if (cfg.n_list.size() != 1 || cfg.tau_list.size() != 1)
    throw porofem::ConfigError("run: a single n and a single tau are required");
  std::ofstream diag;
  std::ostream* diag_ptr = nullptr;
  if (cfg.energy_log) {
    diag = open_out(cfg.out_dir, "diagnostics.csv");
    diag_ptr = &diag;
  }
  porofem::SingleResult r = porofem::run_single(cfg, cfg.n_list[0], cfg.tau_list[0], diag_ptr);
  auto csv = open_out(cfg.out_dir, "run.csv");
  for (const auto& line : cfg.echo()) csv << "# " << line << "\n";
  csv << "t,u_l2,u_h1,p_l2,p_h1\n" << std::setprecision(12);
  for (std::size_t i = 0; i < r.record.nodes.size(); ++i) {
    const auto& e = r.record.nodes[i];
    csv << r.record.times[i] << "," << e.u_l2 << "," << e.u_h1 << "," << e.p_l2 << "," << e.p_h1
        << "\n";
  }
  const auto rmax = r.record.r_max();
  std::cout << "run: n=" << cfg.n_list[0] << " tau=" << cfg.tau_list[0]
            << " R(u,L2)=" << rmax.u_l2 << " R(u,H1)=" << rmax.u_h1 << " R(p,L2)=" << rmax.p_l2
            << " R(p,H1)=" << rmax.p_h1 << " [" << r.wall_seconds << " s]\n";
  if (cfg.emit_plots) {
    porofem::TriMesh mesh = porofem::build_unit_square_mesh(cfg.n_list[0]);
    porofem::DofLayout layout = porofem::build_dof_layout(mesh);
    porofem::emit_field_snapshots(r.final_state, mesh, layout, cfg.out_dir);
  }
  return kExitOk;
}

int spatial_cmd(const CommonOpts& opts) {
  porofem::RunConfig cfg = load_config(opts);
  porofem::StudyResult res = porofem::run_spatial_study(cfg);
  auto csv = open_out(cfg.out_dir, "spatial.csv");
  porofem::write_tables_csv(csv, res.tables, res.config_echo);
  if (cfg.emit_plots) porofem::emit_plot_script(res, cfg.out_dir, "spatial.csv", false);
  std::cout << "spatial study (" << res.records.size() << " levels):\n";
  print_tables(res);
  return kExitOk;
}

int temporal_cmd(const CommonOpts& opts) {
  porofem::RunConfig cfg = load_config(opts);
  porofem::StudyResult res = porofem::run_temporal_study(cfg);
  auto csv = open_out(cfg.out_dir, "temporal.csv");
  porofem::write_tables_csv(csv, res.tables, res.config_echo);
  if (cfg.emit_plots) porofem::emit_plot_script(res, cfg.out_dir, "temporal.csv", true);
  std::cout << "temporal study (" << res.records.size() << " levels):\n";
  print_tables(res);
  return kExitOk;
}

int compare_cmd(const CommonOpts& opts) {
  porofem::RunConfig cfg = load_config(opts);
  porofem::ComparisonResult res = porofem::run_scheme_comparison(cfg);
  auto csv = open_out(cfg.out_dir, "compare.csv");
  porofem::write_comparison_csv(csv, res, cfg.echo());
  std::cout << "Crank-Nicolson:\n";
  print_tables(res.cn);
  std::cout << "backward Euler:\n";
  print_tables(res.be);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"poroelastic consolidation solver and verification harness"};
  app.require_subcommand(1);

  CommonOpts run_opts, spatial_opts, temporal_opts, compare_opts;
  add_common(app.add_subcommand("run", "single simulation"), run_opts);
  add_common(app.add_subcommand("spatial", "spatial refinement study"), spatial_opts);
  add_common(app.add_subcommand("temporal", "temporal refinement study"), temporal_opts);
  add_common(app.add_subcommand("compare", "CN vs backward Euler comparison"), compare_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("run")) return run_cmd(run_opts);
    if (app.got_subcommand("spatial")) return spatial_cmd(spatial_opts);
    if (app.got_subcommand("temporal")) return temporal_cmd(temporal_opts);
    if (app.got_subcommand("compare")) return compare_cmd(compare_opts);
  } catch (const porofem::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const porofem::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const porofem::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
