#include <catch2/catch.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "porofem/cli.hpp"

using namespace porofem;

TEST_CASE("config parsing", "[cli]") {
  SECTION("full config with parameter overrides") {
    std::istringstream is(R"(
# spatial study setup
example = ex42
scheme = be
n_list = 8, 16 32
tau = 1e-3
T = 2.0
out = results
emit_plots = true
quad = 7
[params]
E = 2e8
nu = 0.3
alpha = 0.9
c0 = 0.1
lambda_star = 1e-5
K = 1e-8
mu_f = 2.0
)");
    RunConfig cfg = parse_config(is);
    CHECK(cfg.example == ExampleId::Ex42);
    CHECK(cfg.scheme == SchemeKind::BackwardEuler);
    CHECK(cfg.n_list == std::vector<int>{8, 16, 32});
    CHECK(cfg.tau_list.size() == 1);
    CHECK(cfg.T_final == Approx(2.0));
    CHECK(cfg.out_dir == "results");
    CHECK(cfg.emit_plots);
    CHECK(cfg.quad_exactness == 7);
    CHECK(cfg.params_overridden);
    CHECK(cfg.effective_params().E == Approx(2e8));
    CHECK(cfg.effective_params().mu_f == Approx(2.0));
  }
  SECTION("defaults fall back to the example tables") {
    std::istringstream is("example = ex41\nn = 4\ntau = 0.5\nT = 1\n");
    RunConfig cfg = parse_config(is);
    CHECK_FALSE(cfg.params_overridden);
    CHECK(cfg.effective_params().E == Approx(1e7));
    is.clear();
    is.str("example = ex42\nn = 4\ntau = 0.5\nT = 1\n");
    cfg = parse_config(is);
    CHECK(cfg.effective_params().E == Approx(1e9));
  }
  SECTION("rejected configs") {
    auto parse = [](const std::string& text) {
      std::istringstream is(text);
      return parse_config(is);
    };
    CHECK_THROWS_AS(parse("example = ex41\ntau = 0.5\n"), ConfigError);               // no n
    CHECK_THROWS_AS(parse("n = 4\n"), ConfigError);                                   // no tau
    CHECK_THROWS_AS(parse("n = 4\nn_list = 4 8\ntau = 0.5\n"), ConfigError);          // both
    CHECK_THROWS_AS(parse("n = 4\ntau = 0.5\ntau_list = 0.5 0.25\n"), ConfigError);   // both
    CHECK_THROWS_AS(parse("n_list = 8 4\ntau = 0.5\n"), ConfigError);                 // not increasing
    CHECK_THROWS_AS(parse("n = 4\ntau_list = 0.25 0.5\n"), ConfigError);              // not decreasing
    CHECK_THROWS_AS(parse("n = 4\ntau = 0.5\nbogus = 1\n"), ConfigError);             // unknown key
    CHECK_THROWS_AS(parse("n = 4\ntau = 0.5\n[stuff]\nx = 1\n"), ConfigError);        // bad section
    CHECK_THROWS_AS(parse("n = 0\ntau = 0.5\n"), ConfigError);                        // n < 1
    CHECK_THROWS_AS(parse("n = 4\ntau = -1\n"), ConfigError);                         // tau <= 0
  }
}

TEST_CASE("non-integer step count is a config error before any solve", "[cli]") {
  RunConfig cfg;
  cfg.n_list = {4};
  cfg.tau_list = {0.3};
  cfg.T_final = 1.0;
  CHECK_THROWS_AS(run_single(cfg, 4, 0.3), ConfigError);
}

TEST_CASE("single run smoke test", "[cli]") {
  RunConfig cfg;
  cfg.example = ExampleId::Ex41;
  cfg.n_list = {8};
  cfg.tau_list = {0.25};
  cfg.T_final = 1.0;
  SingleResult r = run_single(cfg, 8, 0.25);
  CHECK(r.record.nodes.size() == 5);  // 4 steps plus the initial node
  const FieldErrors rm = r.record.r_max();
  CHECK(std::isfinite(rm.u_l2));
  CHECK(std::isfinite(rm.p_h1));
  CHECK(rm.u_l2 > 0.0);
  CHECK(r.record.times.back() == Approx(1.0));

  SingleResult fast = run_single(cfg, 4, 0.5);
  CHECK(fast.wall_seconds < 1.0);
}

TEST_CASE("identical configs give bit-identical errors", "[cli]") {
  RunConfig cfg;
  cfg.example = ExampleId::Ex41;
  cfg.n_list = {4};
  cfg.tau_list = {0.5};
  cfg.T_final = 1.0;
  SingleResult a = run_single(cfg, 4, 0.5);
  SingleResult b = run_single(cfg, 4, 0.5);
  REQUIRE(a.record.nodes.size() == b.record.nodes.size());
  for (std::size_t i = 0; i < a.record.nodes.size(); ++i) {
    CHECK(a.record.nodes[i].u_l2 == b.record.nodes[i].u_l2);
    CHECK(a.record.nodes[i].p_l2 == b.record.nodes[i].p_l2);
  }
}

TEST_CASE("study validation", "[cli]") {
  RunConfig cfg;
  cfg.n_list = {4};
  cfg.tau_list = {0.5};
  cfg.T_final = 1.0;
  CHECK_THROWS_AS(run_spatial_study(cfg), ConfigError);   // needs >= 2 levels
  CHECK_THROWS_AS(run_temporal_study(cfg), ConfigError);  // needs >= 2 taus
  RunConfig cmp = cfg;
  cmp.example = ExampleId::Ex41;
  cmp.n_list = {4, 8};
  CHECK_THROWS_AS(run_scheme_comparison(cmp), ConfigError);  // ex42 only
}

TEST_CASE("comparison CN leg reproduces the spatial study bitwise", "[cli]") {
  RunConfig cfg;
  cfg.example = ExampleId::Ex42;
  cfg.scheme = SchemeKind::CrankNicolson;
  cfg.n_list = {2, 4};
  cfg.tau_list = {0.5};
  cfg.T_final = 1.0;
  ComparisonResult cmp = run_scheme_comparison(cfg);
  StudyResult spatial = run_spatial_study(cfg);
  REQUIRE(cmp.cn.tables.size() == spatial.tables.size());
  for (std::size_t t = 0; t < spatial.tables.size(); ++t)
    for (std::size_t r = 0; r < spatial.tables[t].rows.size(); ++r)
      CHECK(cmp.cn.tables[t].rows[r].error == spatial.tables[t].rows[r].error);
  // BE errors differ from CN but stay in the same ballpark
  for (std::size_t t = 0; t < cmp.be.tables.size(); ++t)
    for (const auto& row : cmp.be.tables[t].rows) CHECK(std::isfinite(row.error));
}

TEST_CASE("plot script emission", "[cli]") {
  RunConfig cfg;
  cfg.example = ExampleId::Ex41;
  cfg.n_list = {2, 4};
  cfg.tau_list = {0.5};
  cfg.T_final = 1.0;
  StudyResult res = run_spatial_study(cfg);
  const std::string dir = "cli_test_out";
  emit_plot_script(res, dir, "spatial.csv", false);
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "plot_h.gp"));
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "err_u_L2_vs_h.dat"));
  StudyResult empty;
  CHECK_THROWS_AS(emit_plot_script(empty, dir, "x.csv", false), UsageError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("field snapshots carry one row per vertex", "[cli]") {
  RunConfig cfg;
  cfg.example = ExampleId::Ex41;
  cfg.n_list = {4};
  cfg.tau_list = {0.5};
  cfg.T_final = 1.0;
  SingleResult r = run_single(cfg, 4, 0.5);
  TriMesh mesh = build_unit_square_mesh(4);
  DofLayout layout = build_dof_layout(mesh);
  const std::string dir = "cli_snapshot_out";
  emit_field_snapshots(r.final_state, mesh, layout, dir);
  std::ifstream in(std::filesystem::path(dir) / "p_grid.dat");
  REQUIRE(in.good());
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 25);  // (n+1)^2 vertices
  std::filesystem::remove_all(dir);
}

TEST_CASE("config echo appears in the csv header", "[cli]") {
  RunConfig cfg;
  cfg.example = ExampleId::Ex41;
  cfg.n_list = {2, 4};
  cfg.tau_list = {0.5};
  cfg.T_final = 1.0;
  StudyResult res = run_spatial_study(cfg);
  std::ostringstream os;
  write_tables_csv(os, res.tables, res.config_echo);
  CHECK(os.str().find("# example = ex41") != std::string::npos);
  CHECK(os.str().find("# tau = 0.5") != std::string::npos);
}

TEST_CASE("diagnostics stream", "[cli]") {
  RunConfig cfg;
  cfg.example = ExampleId::Ex41;
  cfg.n_list = {2};
  cfg.tau_list = {0.5};
  cfg.T_final = 1.0;
  cfg.energy_log = true;
  std::ostringstream diag;
  run_single(cfg, 2, 0.5, &diag);
  std::istringstream is(diag.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "n,t,energy,u_l2,xi_l2,eta_l2,p_l2");
  int rows = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);  // initial node + 2 steps
}
