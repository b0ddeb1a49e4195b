#include <catch2/catch.hpp>

#include <cmath>
#include <random>

#include "porofem/mms.hpp"

using namespace porofem;

namespace {

// central finite differences on the analytic evaluators
constexpr double kStep = 1e-5;

Vec2 fd_grad_scalar(const ManufacturedSolution& ms,
                    double (ManufacturedSolution::*fn)(double, double, double) const, double x,
                    double y, double t) {
  return {((ms.*fn)(x + kStep, y, t) - (ms.*fn)(x - kStep, y, t)) / (2 * kStep),
          ((ms.*fn)(x, y + kStep, t) - (ms.*fn)(x, y - kStep, t)) / (2 * kStep)};
}

/// residual of the momentum balance:
///   f + lambda* grad(div u_t) + div sigma(u) - alpha grad p = 0
Vec2 momentum_residual(const ManufacturedSolution& ms, double x, double y, double t) {
  const auto& pp = ms.params();
  Vec2 grad_divut = fd_grad_scalar(ms, &ManufacturedSolution::div_u_t, x, y, t);
  Mat2 sxp = ms.stress(x + kStep, y, t), sxm = ms.stress(x - kStep, y, t);
  Mat2 syp = ms.stress(x, y + kStep, t), sym = ms.stress(x, y - kStep, t);
  Vec2 div_sigma{(sxp.a00 - sxm.a00) / (2 * kStep) + (syp.a01 - sym.a01) / (2 * kStep),
                 (sxp.a10 - sxm.a10) / (2 * kStep) + (syp.a11 - sym.a11) / (2 * kStep)};
  Vec2 gp = ms.grad_p(x, y, t);
  Vec2 f = ms.body_force(x, y, t);
  return {f.x + pp.lambda_star * grad_divut.x + div_sigma.x - pp.alpha * gp.x,
          f.y + pp.lambda_star * grad_divut.y + div_sigma.y - pp.alpha * gp.y};
}

/// residual of the mass balance: phi - eta_t + (K/mu_f) lap p = 0
double mass_residual(const ManufacturedSolution& ms, double x, double y, double t) {
  const auto& pp = ms.params();
  const double ht = 1e-6;
  double eta_t = (ms.eta(x, y, t + ht) - ms.eta(x, y, t - ht)) / (2 * ht);
  double lap_p = (ms.p(x + kStep, y, t) - 2 * ms.p(x, y, t) + ms.p(x - kStep, y, t)) / (kStep * kStep) +
                 (ms.p(x, y + kStep, t) - 2 * ms.p(x, y, t) + ms.p(x, y - kStep, t)) / (kStep * kStep);
  return ms.source(x, y, t) - eta_t + (pp.K.xx / pp.mu_f) * lap_p;
}

}  // namespace

TEST_CASE("derived parameters for the first example table", "[mms]") {
  PhysicalParams p = derive_params(kExample41Params);
  CHECK(p.lambda == Approx(1.4285714285714286e7).epsilon(1e-15));
  CHECK(p.mu == Approx(3.5714285714285714e6).epsilon(1e-15));
  // kappa1 = 0.5 / (0.25 + lambda/2) = 7e-8 (1 - 3.5e-8 + ...)
  CHECK(p.kappa1 == Approx(6.999999755000007e-8).epsilon(1e-12));
  CHECK(p.kappa3 == Approx(p.kappa1).epsilon(1e-15));
  CHECK(p.kappa2 == Approx(2.0).epsilon(1e-7));
}

TEST_CASE("kappa identities", "[mms]") {
  for (const RawParams& raw : {kExample41Params, kExample42Params, RawParams{10.0, 0.25, 0.6, 0.8, 0.5, 1.0, 1.0}}) {
    PhysicalParams p = derive_params(raw);
    CHECK(p.alpha * p.kappa2 == Approx(p.lambda * p.kappa1).epsilon(1e-14));
    CHECK(p.alpha * p.kappa3 == Approx(p.c0 * p.kappa1).epsilon(1e-14));
    CHECK(p.lambda > 0.0);
    CHECK(p.mu > 0.0);
  }
}

TEST_CASE("parameter validation", "[mms]") {
  RawParams raw = kExample41Params;
  raw.nu = 0.5;
  CHECK_THROWS_AS(derive_params(raw), IncompressibleLimitError);
  raw.nu = 0.0;  // lambda = 0 violates the positivity assumption
  CHECK_THROWS_AS(derive_params(raw), ConfigError);
  raw = kExample41Params;
  raw.E = 0.0;
  CHECK_THROWS_AS(derive_params(raw), ConfigError);
  raw = kExample41Params;
  raw.c0 = -1.0;
  CHECK_THROWS_AS(derive_params(raw), ConfigError);
}

TEST_CASE("example 4.1 point values", "[mms]") {
  auto ms = example41();
  Vec2 u0 = ms->u(0.3, 0.8, 0.0);
  CHECK(u0.x == 0.0);
  CHECK(u0.y == 0.0);
  CHECK(ms->p(0.3, 0.8, 0.0) == 0.0);
  CHECK(ms->u(0.5, 0.5, 1.0).x == Approx(1.0));
}

TEST_CASE("example 4.2 point values", "[mms]") {
  auto ms = example42();
  Vec2 u0 = ms->u(0.5, 0.5, 0.0);
  CHECK(u0.x == Approx(0.0625));
  CHECK(u0.y == Approx(0.0625));
  CHECK(ms->p(0.0, 0.0, 0.0) == Approx(1.0));
}

TEST_CASE("derivative evaluators match finite differences", "[mms]") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> pos(0.05, 0.95), time(0.1, 1.5);
  for (int which = 0; which < 2; ++which) {
    auto ms = which == 0 ? example41() : example42();
    for (int rep = 0; rep < 30; ++rep) {
      double x = pos(rng), y = pos(rng), t = time(rng);
      Mat2 g = ms->grad_u(x, y, t);
      Vec2 gx{(ms->u(x + kStep, y, t).x - ms->u(x - kStep, y, t).x) / (2 * kStep),
              (ms->u(x, y + kStep, t).x - ms->u(x, y - kStep, t).x) / (2 * kStep)};
      Vec2 gy{(ms->u(x + kStep, y, t).y - ms->u(x - kStep, y, t).y) / (2 * kStep),
              (ms->u(x, y + kStep, t).y - ms->u(x, y - kStep, t).y) / (2 * kStep)};
      CHECK(g.a00 == Approx(gx.x).margin(1e-6 * (1 + std::abs(gx.x))));
      CHECK(g.a01 == Approx(gx.y).margin(1e-6 * (1 + std::abs(gx.y))));
      CHECK(g.a10 == Approx(gy.x).margin(1e-6 * (1 + std::abs(gy.x))));
      CHECK(g.a11 == Approx(gy.y).margin(1e-6 * (1 + std::abs(gy.y))));
      CHECK(ms->div_u(x, y, t) == Approx(g.a00 + g.a11).epsilon(1e-12));
      double divut_fd = (ms->div_u(x, y, t + 1e-6) - ms->div_u(x, y, t - 1e-6)) / 2e-6;
      CHECK(ms->div_u_t(x, y, t) == Approx(divut_fd).margin(1e-6 * (1 + std::abs(divut_fd))));
      Vec2 gp = ms->grad_p(x, y, t);
      Vec2 gp_fd = fd_grad_scalar(*ms, &ManufacturedSolution::p, x, y, t);
      CHECK(gp.x == Approx(gp_fd.x).margin(1e-6 * (1 + std::abs(gp_fd.x))));
      CHECK(gp.y == Approx(gp_fd.y).margin(1e-6 * (1 + std::abs(gp_fd.y))));
    }
  }
}

TEST_CASE("auxiliary transforms at random samples", "[mms]") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> pos(0.0, 1.0), time(0.0, 2.0);
  for (int which = 0; which < 2; ++which) {
    auto ms = which == 0 ? example41() : example42();
    const auto& pp = ms->params();
    for (int rep = 0; rep < 200; ++rep) {
      double x = pos(rng), y = pos(rng), t = time(rng);
      double p = ms->p(x, y, t), du = ms->div_u(x, y, t), dut = ms->div_u_t(x, y, t);
      double xi = ms->xi(x, y, t), eta = ms->eta(x, y, t);
      // defining transforms
      CHECK(eta == Approx(pp.c0 * p + pp.alpha * du).margin(1e-10 * (1 + std::abs(eta))));
      CHECK(xi == Approx(pp.alpha * p - pp.lambda * du - pp.lambda_star * dut)
                      .margin(1e-10 * (1 + std::abs(xi))));
      // inverse transforms
      double p_back = pp.kappa1 * xi + pp.kappa2 * eta + pp.lambda_star * pp.kappa1 * dut;
      double du_back = pp.kappa1 * eta - pp.kappa3 * xi - pp.lambda_star * pp.kappa3 * dut;
      CHECK(p_back == Approx(p).margin(1e-9 * (1 + std::abs(p))));
      CHECK(du_back == Approx(du).margin(1e-9 * (1 + std::abs(du))));
    }
  }
}

TEST_CASE("forcing terms satisfy the strong form", "[mms]") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> pos(0.05, 0.95), time(0.2, 1.8);
  for (int which = 0; which < 2; ++which) {
    auto ms = which == 0 ? example41() : example42();
    const auto& pp = ms->params();
    const double fscale = pp.mu + pp.lambda;  // dominant coefficient scale in f
    for (int rep = 0; rep < 100; ++rep) {
      double x = pos(rng), y = pos(rng), t = time(rng);
      Vec2 rm = momentum_residual(*ms, x, y, t);
      CHECK(std::abs(rm.x) <= 1e-8 * fscale);
      CHECK(std::abs(rm.y) <= 1e-8 * fscale);
      double rphi = mass_residual(*ms, x, y, t);
      double phiscale = 1.0 + std::abs(ms->source(x, y, t));
      CHECK(std::abs(rphi) <= 1e-8 * phiscale);
    }
  }
}

TEST_CASE("time factorization of example 4.1", "[mms]") {
  auto ms = example41();
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> pos(0.0, 1.0), time(0.05, 0.5);
  for (int rep = 0; rep < 20; ++rep) {
    double x = pos(rng), y = pos(rng), t = time(rng);
    Vec2 u1 = ms->u(x, y, t), u2 = ms->u(x, y, 2 * t);
    CHECK(u2.x == Approx(8.0 * u1.x).margin(1e-12));
    CHECK(u2.y == Approx(8.0 * u1.y).margin(1e-12));
  }
}

TEST_CASE("traction data", "[mms]") {
  auto ms = example41();
  SECTION("all fields vanish at t = 0") {
    Vec2 tr = traction_data(*ms, 0.5, 1.0, 0.0, {0.0, 1.0});
    CHECK(tr.x == 0.0);
    CHECK(tr.y == 0.0);
  }
  SECTION("spot value on Gamma3 against an FD stress oracle") {
    const double x = 0.5, y = 1.0, t = 1.0;
    const auto& pp = ms->params();
    // stress built from FD gradients of u
    const double h = 1e-6;
    Mat2 g{(ms->u(x + h, y, t).x - ms->u(x - h, y, t).x) / (2 * h),
           (ms->u(x, y + h, t).x - ms->u(x, y - h, t).x) / (2 * h),
           (ms->u(x + h, y, t).y - ms->u(x - h, y, t).y) / (2 * h),
           (ms->u(x, y + h, t).y - ms->u(x, y - h, t).y) / (2 * h)};
    double div = g.a00 + g.a11;
    double off = 0.5 * (g.a01 + g.a10);
    Mat2 sigma{pp.mu * g.a00 + pp.lambda * div, pp.mu * off, pp.mu * off,
               pp.mu * g.a11 + pp.lambda * div};
    double dut = (ms->div_u(x, y, t + h) - ms->div_u(x, y, t - h)) / (2 * h);
    Vec2 n{0.0, 1.0};
    Vec2 expected{sigma.a01 * n.y + (pp.lambda_star * dut - pp.alpha * ms->p(x, y, t)) * n.x,
                  sigma.a11 * n.y + (pp.lambda_star * dut - pp.alpha * ms->p(x, y, t)) * n.y};
    Vec2 tr = traction_data(*ms, x, y, t, n);
    const double scale = pp.mu + pp.lambda;
    CHECK(tr.x == Approx(expected.x).margin(1e-7 * scale));
    CHECK(tr.y == Approx(expected.y).margin(1e-7 * scale));
  }
}
