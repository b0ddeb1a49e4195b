#include <catch2/catch.hpp>

#include <cmath>
#include <random>
#include <set>

#include "porofem/assembly.hpp"
#include "porofem/mms.hpp"

using namespace porofem;

namespace {

struct Setup {
  TriMesh mesh;
  DofLayout layout;
  PhysicalParams params;
  QuadratureRule quad;
  FormMatrices forms;

  explicit Setup(int n, const RawParams& raw = kExample41Params, int quad_degree = 5)
      : mesh(build_unit_square_mesh(n)), layout(build_dof_layout(mesh)),
        params(derive_params(raw)), quad(make_quadrature(quad_degree)),
        forms(assemble_forms(mesh, layout, params, quad)) {}
};

double max_abs(const CsrMatrix& m) {
  double v = 0.0;
  for (double x : m.values) v = std::max(v, std::abs(x));
  return v;
}

double max_asymmetry(const CsrMatrix& m) {
  CsrMatrix t = m.transpose();
  double worst = 0.0;
  for (int r = 0; r < m.rows; ++r)
    for (int k = m.row_offsets[static_cast<std::size_t>(r)]; k < m.row_offsets[static_cast<std::size_t>(r) + 1]; ++k) {
      int c = m.col_indices[static_cast<std::size_t>(k)];
      worst = std::max(worst, std::abs(m.values[static_cast<std::size_t>(k)] - t.at(r, c)));
    }
  return worst;
}

}  // namespace

TEST_CASE("stiffness nullspace of constants", "[assembly]") {
  Setup s(1);
  for (int r = 0; r < s.forms.k_stiff.rows; ++r) {
    double sum = 0.0;
    for (int k = s.forms.k_stiff.row_offsets[static_cast<std::size_t>(r)]; k < s.forms.k_stiff.row_offsets[static_cast<std::size_t>(r) + 1]; ++k)
      sum += s.forms.k_stiff.values[static_cast<std::size_t>(k)];
    CHECK(std::abs(sum) <= 1e-13 * max_abs(s.forms.k_stiff));
  }
}

TEST_CASE("total mass equals the domain area", "[assembly]") {
  Setup s(2);
  double total = 0.0;
  for (double v : s.forms.mass_p.values) total += v;
  CHECK(total == Approx(1.0).epsilon(1e-13));
}

TEST_CASE("strain energy of a linear field", "[assembly]") {
  Setup s(3);
  // interpolate u = (x, 0)
  std::vector<double> u(static_cast<std::size_t>(s.layout.n_u()), 0.0);
  for (int i = 0; i < s.layout.n_scalar_u; ++i)
    u[static_cast<std::size_t>(s.layout.u_dof(0, i))] = s.layout.u_support[static_cast<std::size_t>(i)].x;
  double energy = vecops::dot(u, s.forms.a_eps.multiply(u));
  CHECK(energy == Approx(s.params.mu).epsilon(1e-12));
}

TEST_CASE("divergence and strain compatibility", "[assembly]") {
  Setup s(2);
  // interpolate u = (x, y): div u = 2
  std::vector<double> u(static_cast<std::size_t>(s.layout.n_u()), 0.0);
  for (int i = 0; i < s.layout.n_scalar_u; ++i) {
    u[static_cast<std::size_t>(s.layout.u_dof(0, i))] = s.layout.u_support[static_cast<std::size_t>(i)].x;
    u[static_cast<std::size_t>(s.layout.u_dof(1, i))] = s.layout.u_support[static_cast<std::size_t>(i)].y;
  }
  // u^T B_div e_j = int div(u) psi_j = 2 int psi_j = 2 * (mass row sum of j)
  CsrMatrix bt = s.forms.b_div.transpose();  // p x u
  std::vector<double> lhs = bt.multiply(u);
  for (int j = 0; j < s.layout.n_scalar_p; ++j) {
    double mass_row = 0.0;
    for (int k = s.forms.mass_p.row_offsets[static_cast<std::size_t>(j)]; k < s.forms.mass_p.row_offsets[static_cast<std::size_t>(j) + 1]; ++k)
      mass_row += s.forms.mass_p.values[static_cast<std::size_t>(k)];
    CHECK(lhs[static_cast<std::size_t>(j)] == Approx(2.0 * mass_row).epsilon(1e-12));
  }
}

TEST_CASE("matrix symmetry", "[assembly]") {
  Setup s(3);
  CHECK(max_asymmetry(s.forms.a_eps) == 0.0);
  CHECK(max_asymmetry(s.forms.mass_p) == 0.0);
  CHECK(max_asymmetry(s.forms.mass_u) == 0.0);
  CHECK(max_asymmetry(s.forms.k_stiff) == 0.0);
}

TEST_CASE("adjoint consistency of the coupling matrices", "[assembly]") {
  Setup s(3);
  CsrMatrix bt = s.forms.b_div.transpose();
  REQUIRE(bt.rows == s.forms.b_div_t.rows);
  REQUIRE(bt.nnz() == s.forms.b_div_t.nnz());
  for (int r = 0; r < bt.rows; ++r)
    for (int k = bt.row_offsets[static_cast<std::size_t>(r)]; k < bt.row_offsets[static_cast<std::size_t>(r) + 1]; ++k) {
      CHECK(bt.col_indices[static_cast<std::size_t>(k)] ==
            s.forms.b_div_t.col_indices[static_cast<std::size_t>(k)]);
      CHECK(bt.values[static_cast<std::size_t>(k)] ==
            s.forms.b_div_t.values[static_cast<std::size_t>(k)]);
    }
}

TEST_CASE("quadrature independence of polynomial forms", "[assembly]") {
  Setup s5(2, kExample41Params, 5);
  Setup s7(2, kExample41Params, 7);
  auto close = [](const CsrMatrix& a, const CsrMatrix& b) {
    REQUIRE(a.nnz() == b.nnz());
    const double scale = std::max(max_abs(a), 1e-300);
    for (std::size_t k = 0; k < a.values.size(); ++k)
      CHECK(std::abs(a.values[k] - b.values[k]) <= 1e-13 * scale);
  };
  close(s5.forms.a_eps, s7.forms.a_eps);
  close(s5.forms.b_div, s7.forms.b_div);
  close(s5.forms.mass_p, s7.forms.mass_p);
  close(s5.forms.k_stiff, s7.forms.k_stiff);
  close(s5.forms.k_mixed_u, s7.forms.k_mixed_u);
}

TEST_CASE("load assembly", "[assembly]") {
  Setup s(3);
  SECTION("zero data gives the zero vector") {
    auto load = assemble_load(
        s.mesh, s.layout, s.quad, [](double, double) { return Vec2{0, 0}; },
        [](double, double) { return 0.0; }, [](double, double, Vec2) { return Vec2{0, 0}; },
        {BoundaryTag::Gamma1, BoundaryTag::Gamma3});
    CHECK(vecops::norm_inf(load) == 0.0);
  }
  SECTION("constant unit force sums to the domain area") {
    auto load = assemble_load(
        s.mesh, s.layout, s.quad, [](double, double) { return Vec2{1, 0}; },
        [](double, double) { return 0.0; }, [](double, double, Vec2) { return Vec2{0, 0}; },
        {});
    double sum_x = 0.0, sum_y = 0.0;
    for (int i = 0; i < s.layout.n_scalar_u; ++i) {
      sum_x += load[static_cast<std::size_t>(s.layout.u_dof(0, i))];
      sum_y += load[static_cast<std::size_t>(s.layout.u_dof(1, i))];
    }
    CHECK(sum_x == Approx(1.0).epsilon(1e-13));
    CHECK(sum_y == Approx(0.0).margin(1e-14));
  }
  SECTION("quadrature refinement changes trig loads only slightly") {
    auto ms = example41();
    TriMesh mesh = build_unit_square_mesh(8);
    DofLayout layout = build_dof_layout(mesh);
    auto l5 = assemble_mms_load(mesh, layout, make_quadrature(5), *ms, 1.0,
                                {BoundaryTag::Gamma1, BoundaryTag::Gamma3});
    auto l7 = assemble_mms_load(mesh, layout, make_quadrature(7), *ms, 1.0,
                                {BoundaryTag::Gamma1, BoundaryTag::Gamma3});
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < l5.size(); ++i) {
      diff += (l5[i] - l7[i]) * (l5[i] - l7[i]);
      norm += l7[i] * l7[i];
    }
    CHECK(std::sqrt(diff) <= 1e-4 * std::sqrt(norm));
  }
}

TEST_CASE("boundary flux functional", "[assembly]") {
  Setup s(4);
  std::vector<double> load(static_cast<std::size_t>(s.layout.total), 0.0);
  add_flux_load(s.mesh, s.layout, s.quad, [](double, double) { return 2.0; },
                {BoundaryTag::Gamma1}, load);
  // partition of unity along the side: sum of eta-row entries = 2 |Gamma1|
  double sum = 0.0;
  for (int i = 0; i < s.layout.n_scalar_p; ++i)
    sum += load[static_cast<std::size_t>(s.layout.eta_dof(i))];
  CHECK(sum == Approx(2.0).epsilon(1e-13));
  // u rows untouched
  for (int i = 0; i < s.layout.n_u(); ++i) CHECK(load[static_cast<std::size_t>(i)] == 0.0);
  // entries only at dofs supported on the selected side
  for (int i = 0; i < s.layout.n_scalar_p; ++i) {
    Vec2 p = s.layout.p_support[static_cast<std::size_t>(i)];
    if (p.x > 1e-12) CHECK(load[static_cast<std::size_t>(s.layout.eta_dof(i))] == 0.0);
  }
}

TEST_CASE("gravity load hook", "[assembly]") {
  PhysicalParams params = derive_params(RawParams{10.0, 0.25, 0.6, 0.8, 0.5, 2.0, 0.5});
  params.rho_f_g = {0.3, -0.7};
  TriMesh mesh = build_unit_square_mesh(2);
  DofLayout layout = build_dof_layout(mesh);
  QuadratureRule quad = make_quadrature(2);
  std::vector<double> g = assemble_gravity_load(mesh, layout, params, quad);
  // gradients of the partition of unity cancel: entries sum to zero
  double sum = 0.0;
  for (double v : g) sum += v;
  CHECK(sum == Approx(0.0).margin(1e-14));
  // interior vertex: int grad psi = boundary integral of psi n = 0
  CHECK(g[4] == Approx(0.0).margin(1e-14));  // vertex (0.5, 0.5) of the 3x3 grid
  // boundary mid-side vertex on Gamma4, vertex (0.5, 0): int psi n ds = (0, -h)
  const Vec2 kg = params.K.apply(params.rho_f_g) * (1.0 / params.mu_f);
  CHECK(g[1] == Approx(kg.y * -0.5).epsilon(1e-13));
  // zero gravity gives the zero vector
  params.rho_f_g = {0.0, 0.0};
  std::vector<double> z = assemble_gravity_load(mesh, layout, params, quad);
  CHECK(vecops::norm_inf(z) == 0.0);
}

TEST_CASE("dirichlet application", "[assembly]") {
  SECTION("single constrained dof in the identity system") {
    CooAccumulator acc(2, 2);
    acc.add(0, 0, 1.0);
    acc.add(1, 1, 1.0);
    auto [a, rhs] = apply_dirichlet(coo_to_csr(acc), {0.0, 0.0}, make_dirichlet({{0, 5.0}}));
    auto x = factorize(a).solve(rhs);
    CHECK(x[0] == Approx(5.0));
    CHECK(x[1] == Approx(0.0).margin(1e-15));
  }
  SECTION("all dofs constrained returns the boundary values") {
    CooAccumulator acc(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) acc.add(i, j, i == j ? 2.0 : -1.0);
    auto [a, rhs] = apply_dirichlet(coo_to_csr(acc), {0.0, 0.0, 0.0},
                                    make_dirichlet({{0, 1.0}, {1, 2.0}, {2, 3.0}}));
    auto x = factorize(a).solve(rhs);
    CHECK(x[0] == Approx(1.0));
    CHECK(x[1] == Approx(2.0));
    CHECK(x[2] == Approx(3.0));
  }
  SECTION("conflicting duplicate constraints") {
    CHECK_THROWS_AS(make_dirichlet({{0, 1.0}, {0, 2.0}}), ConfigError);
    CHECK_NOTHROW(make_dirichlet({{0, 1.0}, {0, 1.0}}));
  }
}

TEST_CASE("patch test reproduces linear displacement", "[assembly]") {
  Setup s(2);
  // exact: u = (x + 2y, 3x - y), xi = 4 constant; then the u-row equation
  // A_eps u - B_div xi = 0 holds for interior test functions.
  auto exact_u = [](Vec2 p) { return Vec2{p.x + 2.0 * p.y, 3.0 * p.x - p.y}; };
  const double xi_const = 4.0;
  std::vector<double> xi(static_cast<std::size_t>(s.layout.n_scalar_p), xi_const);
  std::vector<double> rhs = s.forms.b_div.multiply(xi);

  std::vector<std::pair<int, double>> entries;
  std::set<BoundaryTag> all{BoundaryTag::Gamma1, BoundaryTag::Gamma2, BoundaryTag::Gamma3,
                            BoundaryTag::Gamma4};
  BoundaryDofs bd = compute_boundary_dofs(s.mesh, s.layout, all);
  for (int d : bd.u_dofs) {
    int comp = d / s.layout.n_scalar_u;
    int scalar = d % s.layout.n_scalar_u;
    Vec2 p = s.layout.u_support[static_cast<std::size_t>(scalar)];
    entries.emplace_back(d, comp == 0 ? exact_u(p).x : exact_u(p).y);
  }
  auto [a, rhs_bc] = apply_dirichlet(s.forms.a_eps, rhs, make_dirichlet(std::move(entries)));
  auto u = factorize(a).solve(rhs_bc);
  for (int i = 0; i < s.layout.n_scalar_u; ++i) {
    Vec2 p = s.layout.u_support[static_cast<std::size_t>(i)];
    CHECK(u[static_cast<std::size_t>(s.layout.u_dof(0, i))] == Approx(exact_u(p).x).margin(1e-10));
    CHECK(u[static_cast<std::size_t>(s.layout.u_dof(1, i))] == Approx(exact_u(p).y).margin(1e-10));
  }
}

TEST_CASE("boundary dof counting", "[assembly]") {
  TriMesh mesh = build_unit_square_mesh(8);
  DofLayout layout = build_dof_layout(mesh);
  SECTION("two opposite sides") {
    BoundaryDofs bd = compute_boundary_dofs(mesh, layout, {BoundaryTag::Gamma2, BoundaryTag::Gamma4});
    // 2n+1 = 17 P2 nodes per side, one shared corner (1,0): 33 scalars, 66 u-dofs
    CHECK(bd.u_dofs.size() == 66);
    BoundaryDofs single = compute_boundary_dofs(mesh, layout, {BoundaryTag::Gamma2});
    CHECK(single.u_dofs.size() == 34);
  }
  SECTION("all four sides in P1") {
    BoundaryDofs bd = compute_boundary_dofs(mesh, layout,
                                            {BoundaryTag::Gamma1, BoundaryTag::Gamma2,
                                             BoundaryTag::Gamma3, BoundaryTag::Gamma4});
    CHECK(bd.p_scalars.size() == 32);  // 4n boundary vertices
  }
  SECTION("empty selection") {
    BoundaryDofs bd = compute_boundary_dofs(mesh, layout, {});
    CHECK(bd.u_dofs.empty());
    CHECK(bd.p_scalars.empty());
  }
}

TEST_CASE("constrained system matches the one-shot elimination", "[assembly]") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  const int n = 12;
  CooAccumulator acc(n, n);
  for (int i = 0; i < n; ++i) {
    acc.add(i, i, 4.0 + val(rng));
    acc.add(i, (i + 3) % n, val(rng));
    acc.add((i + 5) % n, i, val(rng));
  }
  CsrMatrix a = coo_to_csr(acc);
  std::vector<double> rhs(static_cast<std::size_t>(n));
  for (auto& v : rhs) v = val(rng);
  std::vector<int> dofs{1, 4, 7};
  std::vector<double> values{0.3, -1.2, 0.9};
  std::vector<std::pair<int, double>> entries;
  for (std::size_t i = 0; i < dofs.size(); ++i) entries.emplace_back(dofs[i], values[i]);

  auto [a1, rhs1] = apply_dirichlet(a, rhs, make_dirichlet(entries));
  ConstrainedSystem cs(a, dofs);
  std::vector<double> rhs2 = rhs;
  cs.apply(rhs2, values);
  REQUIRE(cs.matrix().nnz() == a1.nnz());
  for (std::size_t k = 0; k < rhs1.size(); ++k) CHECK(rhs1[k] == Approx(rhs2[k]).margin(1e-15));
  for (std::size_t k = 0; k < a1.values.size(); ++k)
    CHECK(a1.values[k] == cs.matrix().values[k]);
}

TEST_CASE("parallel assembly matches sequential", "[assembly]") {
  TriMesh mesh = build_unit_square_mesh(4);
  DofLayout layout = build_dof_layout(mesh);
  PhysicalParams params = derive_params(kExample41Params);
  QuadratureRule quad = make_quadrature(5);
  FormMatrices seq = assemble_forms(mesh, layout, params, quad, 1);
  FormMatrices par = assemble_forms(mesh, layout, params, quad, 3);
  REQUIRE(seq.a_eps.nnz() == par.a_eps.nnz());
  const double scale = max_abs(seq.a_eps);
  for (std::size_t k = 0; k < seq.a_eps.values.size(); ++k)
    CHECK(std::abs(seq.a_eps.values[k] - par.a_eps.values[k]) <= 1e-13 * scale);
}
