#ifndef POROFEM_SCHEME_HPP
#define POROFEM_SCHEME_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "porofem/assembly.hpp"
#include "porofem/common.hpp"
#include "porofem/fe_basis.hpp"
#include "porofem/mesh.hpp"
#include "porofem/mms.hpp"
#include "porofem/sparse_linalg.hpp"

namespace porofem {

enum class SchemeKind { CrankNicolson, BackwardEuler };

struct SchemeConfig {
  double tau = 0.0;
  double T_final = 0.0;
  SchemeKind kind = SchemeKind::CrankNicolson;
  bool energy_log = false;
};

/// Number of uniform steps; rejects non-integer T/tau before any solve.
inline long num_steps(const SchemeConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw ConfigError("SchemeConfig: tau must be positive");
  if (!(cfg.T_final > 0.0)) throw ConfigError("SchemeConfig: T_final must be positive");
  const double ratio = cfg.T_final / cfg.tau;
  const double n = std::round(ratio);
  if (n < 1.0 || std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio))
    throw ConfigError("SchemeConfig: T_final/tau is not an integer step count");
  return static_cast<long>(n);
}

/// Discrete solution at one time node, including the scaled history
/// integrals Jhat^n = exp(-t_n / (lambda* kappa3)) * J^n.
struct StateVec {
  std::vector<double> u;
  std::vector<double> xi;
  std::vector<double> eta;
  std::vector<double> p;
  std::vector<double> jxi_scaled;
  std::vector<double> jeta_scaled;
  double t = 0.0;
  long step_index = 0;
};

/// Scaled trapezoid recursion for the memory integrals:
///   Jhat^{n+1} = e^{-tau/sigma} Jhat^n + (tau/2)(v^{n+1} + e^{-tau/sigma} v^n).
/// Algebraically identical to the textbook update multiplied through by
/// e^{-t_{n+1}/sigma}; every factor lies in [0,1] so nothing can overflow.
/// When tau/sigma is large enough that e^{-tau/sigma} underflows to zero the
/// recursion degenerates to Jhat^{n+1} = (tau/2) v^{n+1}, the correct limit
/// of the exponentially weighted memory.
inline std::vector<double> update_history(const std::vector<double>& j_scaled,
                                          const std::vector<double>& v_old,
                                          const std::vector<double>& v_new, double tau,
                                          double sigma) {
  if (!(sigma > 0.0)) throw UsageError("update_history: sigma must be positive");
  const double decay = std::exp(-tau / sigma);
  std::vector<double> out(j_scaled.size());
  for (std::size_t i = 0; i < j_scaled.size(); ++i)
    out[i] = decay * j_scaled[i] + 0.5 * tau * (v_new[i] + decay * v_old[i]);
  return out;
}

/// Product-integration weights for one subinterval of the memory integral:
/// with the integrand interpolated linearly and the exponential integrated
/// exactly,
///   int_{t_a}^{t_b} v(s) e^{s/sigma} ds
///     ~ sigma e^{t_b/sigma} (r_new v_b + r_old v_a),  h = t_b - t_a.
/// For h << sigma both ratios approach h/(2 sigma), the plain trapezoid
/// weights of the printed scheme; for h >> sigma they carry the true kernel
/// mass sigma instead of h/2, which keeps the divergence constraint intact
/// in the stiff reference parameter regime (sigma ~ 7e-14).
struct KernelWeights {
  double decay;  // e^{-h/sigma}
  double r_new;  // weight ratio on the newer node
  double r_old;  // weight ratio on the older node
};

inline KernelWeights exp_kernel_weights(double h, double sigma) {
  if (!(sigma > 0.0) || !(h > 0.0)) throw UsageError("exp_kernel_weights: h, sigma > 0 required");
  const double x = h / sigma;
  KernelWeights w;
  w.decay = std::exp(-x);
  if (x < 1e-3) {
    // series around the trapezoid limit; the direct formulas cancel here
    w.r_new = x * (0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0);
    w.r_old = x * (0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0);
  } else {
    const double beta = -std::expm1(-x) / x;
    w.r_new = 1.0 - beta;
    w.r_old = beta - w.decay;
  }
  return w;
}

/// Coupled block matrix over [u | xi | eta] for one scheme and step size.
/// Constant across steps, so it is factorized once per run.
inline CsrMatrix build_step_system(const FormMatrices& forms, const PhysicalParams& params,
                                   const DofLayout& layout, double tau, SchemeKind kind) {
  const double sigma = params.sigma();
  CooAccumulator acc(layout.total, layout.total);
  auto add_block = [&acc](const CsrMatrix& m, double scale, int row_off, int col_off) {
    if (scale == 0.0) return;
    for (int r = 0; r < m.rows; ++r)
      for (int k = m.row_offsets[static_cast<std::size_t>(r)]; k < m.row_offsets[static_cast<std::size_t>(r) + 1]; ++k)
        acc.add(row_off + r, col_off + m.col_indices[static_cast<std::size_t>(k)],
                scale * m.values[static_cast<std::size_t>(k)]);
  };

  const int uo = layout.u_offset, xo = layout.xi_offset, eo = layout.eta_offset;
  add_block(forms.a_eps, 1.0, uo, uo);
  add_block(forms.b_div, -1.0, uo, xo);
  if (kind == SchemeKind::CrankNicolson) {
    const KernelWeights kw = exp_kernel_weights(0.5 * tau, sigma);
    add_block(forms.b_div_t, 1.0, xo, uo);
    add_block(forms.mass_p, params.kappa3 * kw.r_new, xo, xo);
    add_block(forms.mass_p, -params.kappa1 * kw.r_new, xo, eo);
    add_block(forms.k_mixed_u, params.lambda_star * params.kappa1 / tau, eo, uo);
    add_block(forms.k_stiff, 0.5 * params.kappa1, eo, xo);
    add_block(forms.mass_p, 1.0 / tau, eo, eo);
    add_block(forms.k_stiff, 0.5 * params.kappa2, eo, eo);
  } else {
    const KernelWeights kw = exp_kernel_weights(tau, sigma);
    add_block(forms.b_div_t, 1.0, xo, uo);
    add_block(forms.mass_p, params.kappa3 * kw.r_new, xo, xo);
    add_block(forms.mass_p, -params.kappa1 * kw.r_new, xo, eo);
    add_block(forms.k_mixed_u, params.lambda_star * params.kappa1 / tau, eo, uo);
    add_block(forms.k_stiff, params.kappa1, eo, xo);
    add_block(forms.mass_p, 1.0 / tau, eo, eo);
    add_block(forms.k_stiff, params.kappa2, eo, eo);
  }
  return coo_to_csr(acc);
}

/// Pressure recovery p = k1 xi + k2 eta + lambda* k1 Pi(d_t div u), with the
/// divergence rate L2-projected onto the P1 pressure space.
inline std::vector<double> recover_pressure(const std::vector<double>& u_new,
                                            const std::vector<double>& u_old,
                                            const std::vector<double>& xi_new,
                                            const std::vector<double>& eta_new,
                                            const PhysicalParams& params, double tau,
                                            const FormMatrices& forms,
                                            const LinearSolver& mass_solver) {
  std::vector<double> p(xi_new.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    p[i] = params.kappa1 * xi_new[i] + params.kappa2 * eta_new[i];
  if (params.lambda_star != 0.0) {
    std::vector<double> du(u_new.size());
    for (std::size_t i = 0; i < du.size(); ++i) du[i] = (u_new[i] - u_old[i]) / tau;
    std::vector<double> rhs = forms.b_div_t.multiply(du);
    std::vector<double> w = mass_solver.solve(rhs);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += params.lambda_star * params.kappa1 * w[i];
  }
  return p;
}

/// The quantity bounded by the discrete energy estimate:
///   mu lambda* k3 |eps(u_h)|^2 + k1 |xi_h|^2 + k2 |eta_h|^2.
inline double discrete_energy(const StateVec& s, const FormMatrices& forms,
                              const PhysicalParams& params) {
  // a_eps already carries the factor mu
  const double strain = vecops::dot(s.u, forms.a_eps.multiply(s.u));
  const double xi2 = vecops::dot(s.xi, forms.mass_p.multiply(s.xi));
  const double eta2 = vecops::dot(s.eta, forms.mass_p.multiply(s.eta));
  return params.lambda_star * params.kappa3 * strain + params.kappa1 * xi2 +
         params.kappa2 * eta2;
}

/// Time-dependent data feeding one run: loads, Dirichlet traces and the
/// (div u_0, psi_i) functional for the memory term.
class ProblemData {
 public:
  virtual ~ProblemData() = default;
  virtual std::vector<double> load_at(double t) const = 0;
  virtual const std::vector<int>& dirichlet_dofs() const = 0;
  virtual std::vector<double> dirichlet_values_at(double t) const = 0;
  virtual const std::vector<double>& div_u0_functional() const = 0;
};

/// Manufactured-solution data: loads from the printed f, phi and the exact
/// traction; Dirichlet traces of u on u_parts and of xi, eta on p_parts.
class MmsProblem final : public ProblemData {
 public:
  MmsProblem(const TriMesh& mesh, const DofLayout& layout, const QuadratureRule& quad,
             const ManufacturedSolution& ms, DirichletLayout parts = example_dirichlet_layout())
      : mesh_(mesh), layout_(layout), quad_(quad), ms_(ms), parts_(std::move(parts)) {
    dofs_ = dirichlet_dof_list(mesh, layout, parts_);
    g0_.assign(static_cast<std::size_t>(layout.n_scalar_p), 0.0);
    const RefElement p1 = make_ref_element(1);
    std::array<double, 3> vals;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      const AffineMapData map = affine_map(mesh, t);
      const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
      const Vec2 p0 = mesh.vertices[tri[0]];
      const auto& pd = layout.p_cell_dofs[static_cast<std::size_t>(t)];
      for (int kq = 0; kq < quad_.size(); ++kq) {
        const Vec2 x = p0 + map.jacobian.apply(quad_.points[static_cast<std::size_t>(kq)]);
        const double dx = map.det * quad_.weights[static_cast<std::size_t>(kq)];
        const double val = ms.div_u(x.x, x.y, 0.0);
        p1.eval(quad_.points[static_cast<std::size_t>(kq)], vals.data());
        for (int i = 0; i < 3; ++i)
          g0_[static_cast<std::size_t>(pd[static_cast<std::size_t>(i)])] +=
              dx * val * vals[static_cast<std::size_t>(i)];
      }
    }
  }

  std::vector<double> load_at(double t) const override {
    return assemble_mms_load(mesh_, layout_, quad_, ms_, t, parts_.traction_parts);
  }
  const std::vector<int>& dirichlet_dofs() const override { return dofs_; }
  std::vector<double> dirichlet_values_at(double t) const override {
    return dirichlet_values(mesh_, layout_, parts_, ms_, t);
  }
  const std::vector<double>& div_u0_functional() const override { return g0_; }

 private:
  const TriMesh& mesh_;
  const DofLayout& layout_;
  QuadratureRule quad_;
  const ManufacturedSolution& ms_;
  DirichletLayout parts_;
  std::vector<int> dofs_;
  std::vector<double> g0_;
};

/// Zero loads and homogeneous Dirichlet values; used by stability tests.
class HomogeneousProblem final : public ProblemData {
 public:
  HomogeneousProblem(const DofLayout& layout, std::vector<int> dirichlet_dofs,
                     std::vector<double> g0 = {})
      : total_(layout.total), n_p_(layout.n_scalar_p), dofs_(std::move(dirichlet_dofs)),
        g0_(std::move(g0)) {
    if (g0_.empty()) g0_.assign(static_cast<std::size_t>(n_p_), 0.0);
  }
  std::vector<double> load_at(double) const override {
    return std::vector<double>(static_cast<std::size_t>(total_), 0.0);
  }
  const std::vector<int>& dirichlet_dofs() const override { return dofs_; }
  std::vector<double> dirichlet_values_at(double) const override {
    return std::vector<double>(dofs_.size(), 0.0);
  }
  const std::vector<double>& div_u0_functional() const override { return g0_; }

 private:
  int total_;
  int n_p_;
  std::vector<int> dofs_;
  std::vector<double> g0_;
};

/// Fully synthetic data with caller-supplied vectors; used by linearity tests.
class SyntheticProblem final : public ProblemData {
 public:
  SyntheticProblem(std::vector<double> load, std::vector<int> dofs, std::vector<double> bc_values,
                   std::vector<double> g0)
      : load_(std::move(load)), dofs_(std::move(dofs)), bc_values_(std::move(bc_values)),
        g0_(std::move(g0)) {}
  std::vector<double> load_at(double) const override { return load_; }
  const std::vector<int>& dirichlet_dofs() const override { return dofs_; }
  std::vector<double> dirichlet_values_at(double) const override { return bc_values_; }
  const std::vector<double>& div_u0_functional() const override { return g0_; }

 private:
  std::vector<double> load_;
  std::vector<int> dofs_;
  std::vector<double> bc_values_;
  std::vector<double> g0_;
};

/// L2 projection onto the P1 pressure space.
inline std::vector<double> project_p(const TriMesh& mesh, const DofLayout& layout,
                                     const QuadratureRule& quad, const LinearSolver& mass_solver,
                                     const std::function<double(double, double)>& fn) {
  std::vector<double> rhs(static_cast<std::size_t>(layout.n_scalar_p), 0.0);
  const RefElement p1 = make_ref_element(1);
  std::array<double, 3> vals;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const AffineMapData map = affine_map(mesh, t);
    const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
    const Vec2 p0 = mesh.vertices[tri[0]];
    const auto& pd = layout.p_cell_dofs[static_cast<std::size_t>(t)];
    for (int q = 0; q < quad.size(); ++q) {
      const Vec2 x = p0 + map.jacobian.apply(quad.points[static_cast<std::size_t>(q)]);
      const double dx = map.det * quad.weights[static_cast<std::size_t>(q)];
      const double f = fn(x.x, x.y);
      p1.eval(quad.points[static_cast<std::size_t>(q)], vals.data());
      for (int i = 0; i < 3; ++i)
        rhs[static_cast<std::size_t>(pd[static_cast<std::size_t>(i)])] +=
            dx * f * vals[static_cast<std::size_t>(i)];
    }
  }
  return mass_solver.solve(rhs);
}

/// Elastic projection of the exact initial displacement: strain-orthogonal in
/// the a_eps inner product, with exact Dirichlet data on u_parts pinning
/// rigid motions.
inline std::vector<double> elastic_project(const TriMesh& mesh, const DofLayout& layout,
                                           const PhysicalParams& params,
                                           const QuadratureRule& quad, const FormMatrices& forms,
                                           const ManufacturedSolution& ms, double t,
                                           const std::set<BoundaryTag>& u_parts) {
  std::vector<double> rhs(static_cast<std::size_t>(layout.n_u()), 0.0);
  const RefElement p2 = make_ref_element(2);
  std::array<Vec2, 6> ref_grads;
  for (int tri_i = 0; tri_i < mesh.num_triangles(); ++tri_i) {
    const AffineMapData map = affine_map(mesh, tri_i);
    const auto& tri = mesh.triangles[static_cast<std::size_t>(tri_i)];
    const Vec2 p0 = mesh.vertices[tri[0]];
    const auto& ud = layout.u_cell_dofs[static_cast<std::size_t>(tri_i)];
    for (int q = 0; q < quad.size(); ++q) {
      const Vec2 ref = quad.points[static_cast<std::size_t>(q)];
      const Vec2 x = p0 + map.jacobian.apply(ref);
      const double dx = map.det * quad.weights[static_cast<std::size_t>(q)];
      const Mat2 g = ms.grad_u(x.x, x.y, t);
      // eps(u0) : eps(e_c phi_i) = (eps(u0) grad phi_i)_c
      const Mat2 eps{g.a00, 0.5 * (g.a01 + g.a10), 0.5 * (g.a01 + g.a10), g.a11};
      p2.grad(ref, ref_grads.data());
      for (int i = 0; i < 6; ++i) {
        const Vec2 gi = map.inv_transpose.apply(ref_grads[static_cast<std::size_t>(i)]);
        const Vec2 ei = eps.apply(gi);
        rhs[static_cast<std::size_t>(layout.u_dof(0, ud[static_cast<std::size_t>(i)]))] +=
            dx * params.mu * ei.x;
        rhs[static_cast<std::size_t>(layout.u_dof(1, ud[static_cast<std::size_t>(i)]))] +=
            dx * params.mu * ei.y;
      }
    }
  }

  BoundaryDofs bd = compute_boundary_dofs(mesh, layout, u_parts);
  std::vector<std::pair<int, double>> entries;
  for (int d : bd.u_dofs) {
    int comp = d / layout.n_scalar_u;
    int s = d % layout.n_scalar_u;
    Vec2 p = layout.u_support[static_cast<std::size_t>(s)];
    Vec2 uval = ms.u(p.x, p.y, t);
    entries.emplace_back(d, comp == 0 ? uval.x : uval.y);
  }
  auto [a_bc, rhs_bc] = apply_dirichlet(forms.a_eps, rhs, make_dirichlet(std::move(entries)));
  return LinearSolver(a_bc).solve(rhs_bc);
}

/// Algorithm step (i): projection-based initial values
///   u_h^0 = R_h u_0,  p_h^0 = Q_h p_0,
///   eta^0 = c0 p^0 + alpha Q_h(div u_0),
///   xi^0  = alpha p^0 - lambda Q_h(div u_0) - lambda* Q_h(div u_t(0)),
/// and zero scaled history integrals.
inline StateVec initialize(const TriMesh& mesh, const DofLayout& layout,
                           const PhysicalParams& params, const FormMatrices& forms,
                           const ManufacturedSolution& ms, const QuadratureRule& quad,
                           const LinearSolver& mass_solver,
                           const std::set<BoundaryTag>& u_parts) {
  StateVec s;
  s.u = elastic_project(mesh, layout, params, quad, forms, ms, 0.0, u_parts);
  std::vector<double> p0 = project_p(mesh, layout, quad, mass_solver,
                                     [&](double x, double y) { return ms.p(x, y, 0.0); });
  std::vector<double> qdiv = project_p(mesh, layout, quad, mass_solver,
                                       [&](double x, double y) { return ms.div_u(x, y, 0.0); });
  std::vector<double> qdivt = project_p(mesh, layout, quad, mass_solver,
                                        [&](double x, double y) { return ms.div_u_t(x, y, 0.0); });
  const std::size_t n = p0.size();
  s.p = p0;
  s.eta.resize(n);
  s.xi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.eta[i] = params.c0 * p0[i] + params.alpha * qdiv[i];
    s.xi[i] = params.alpha * p0[i] - params.lambda * qdiv[i] - params.lambda_star * qdivt[i];
  }
  s.jxi_scaled.assign(n, 0.0);
  s.jeta_scaled.assign(n, 0.0);
  s.t = 0.0;
  s.step_index = 0;
  return s;
}

/// Runs Algorithm step (ii): one factorization of the constrained block
/// system reused across all time steps, with per-step right-hand sides.
class SchemeRunner {
 public:
  SchemeRunner(const TriMesh& mesh, const DofLayout& layout, const PhysicalParams& params,
               const FormMatrices& forms, SchemeConfig config, const ProblemData& data)
      : layout_(layout), params_(params), forms_(forms), config_(config), data_(data),
        constrained_(build_step_system(forms, params, layout, config.tau, config.kind),
                     data.dirichlet_dofs()),
        system_solver_(constrained_.matrix()), mass_solver_(forms.mass_p),
        gravity_load_(assemble_gravity_load(mesh, layout, params, make_quadrature(2))) {
    num_steps(config_);  // validates tau against T_final
  }

  const LinearSolver& mass_solver() const { return mass_solver_; }

  StateVec advance(const StateVec& state) {
    const double tau = config_.tau;
    const double sigma = params_.sigma();
    const double t0 = state.t;
    const double t1 = t0 + tau;
    const int n_u = layout_.n_u();
    const int n_p = layout_.n_scalar_p;

    std::vector<double> rhs(static_cast<std::size_t>(layout_.total), 0.0);
    const double k1 = params_.kappa1, k2 = params_.kappa2, k3 = params_.kappa3;

    if (config_.kind == SchemeKind::CrankNicolson) {
      const std::vector<double>& load0 = load_at_cached(t0);
      std::vector<double> load1 = data_.load_at(t1);
      for (int i = 0; i < n_u; ++i)
        rhs[static_cast<std::size_t>(i)] = load0[static_cast<std::size_t>(i)] + load1[static_cast<std::size_t>(i)];
      for (int i = 0; i < n_p; ++i) {
        const std::size_t g = static_cast<std::size_t>(layout_.eta_dof(i));
        rhs[g] = 0.5 * (load0[g] + load1[g]);
      }
      cache_load(t1, std::move(load1));

      // u rows: -A_eps u^n + B_div xi^n
      add_block(rhs, layout_.u_offset, forms_.a_eps.multiply(state.u), -1.0);
      add_block(rhs, layout_.u_offset, forms_.b_div.multiply(state.xi), 1.0);

      // xi rows, memory integral split at the half node
      const KernelWeights kw = exp_kernel_weights(0.5 * tau, sigma);
      add_block(rhs, layout_.xi_offset, forms_.b_div_t.multiply(state.u), -1.0);
      std::vector<double> mxi = forms_.mass_p.multiply(state.xi);
      std::vector<double> meta = forms_.mass_p.multiply(state.eta);
      std::vector<double> mjxi = forms_.mass_p.multiply(state.jxi_scaled);
      std::vector<double> mjeta = forms_.mass_p.multiply(state.jeta_scaled);
      const double jfac = 2.0 * kw.decay / sigma;
      for (int i = 0; i < n_p; ++i) {
        const std::size_t g = static_cast<std::size_t>(layout_.xi_dof(i));
        const std::size_t ii = static_cast<std::size_t>(i);
        rhs[g] += -k3 * kw.r_new * mxi[ii] + k1 * kw.r_new * meta[ii];
        rhs[g] += 2.0 * kw.r_old * (k1 * meta[ii] - k3 * mxi[ii]);
        rhs[g] += jfac * (k1 * mjeta[ii] - k3 * mjxi[ii]);
      }
      const double half_node_decay = std::exp(-(t0 + 0.5 * tau) / sigma);
      if (half_node_decay > 0.0) {
        const std::vector<double>& g0 = data_.div_u0_functional();
        for (int i = 0; i < n_p; ++i)
          rhs[static_cast<std::size_t>(layout_.xi_dof(i))] +=
              2.0 * half_node_decay * g0[static_cast<std::size_t>(i)];
      }

      // eta rows
      std::vector<double> keta = forms_.k_stiff.multiply(state.eta);
      std::vector<double> kxi = forms_.k_stiff.multiply(state.xi);
      std::vector<double> kmu = forms_.k_mixed_u.multiply(state.u);
      for (int i = 0; i < n_p; ++i) {
        const std::size_t g = static_cast<std::size_t>(layout_.eta_dof(i));
        const std::size_t ii = static_cast<std::size_t>(i);
        rhs[g] += meta[ii] / tau - 0.5 * k1 * kxi[ii] - 0.5 * k2 * keta[ii];
        rhs[g] += params_.lambda_star * k1 / tau * kmu[ii];
      }
    } else {
      std::vector<double> load1 = data_.load_at(t1);
      for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = load1[i];
      cache_load(t1, std::move(load1));

      // xi rows, memory integral up to the full node t_{n+1}
      const KernelWeights kw = exp_kernel_weights(tau, sigma);
      std::vector<double> mxi = forms_.mass_p.multiply(state.xi);
      std::vector<double> meta = forms_.mass_p.multiply(state.eta);
      std::vector<double> mjxi = forms_.mass_p.multiply(state.jxi_scaled);
      std::vector<double> mjeta = forms_.mass_p.multiply(state.jeta_scaled);
      const double jfac = kw.decay / sigma;
      for (int i = 0; i < n_p; ++i) {
        const std::size_t g = static_cast<std::size_t>(layout_.xi_dof(i));
        const std::size_t ii = static_cast<std::size_t>(i);
        rhs[g] += kw.r_old * (k1 * meta[ii] - k3 * mxi[ii]);
        rhs[g] += jfac * (k1 * mjeta[ii] - k3 * mjxi[ii]);
      }
      const double node_decay = std::exp(-t1 / sigma);
      if (node_decay > 0.0) {
        const std::vector<double>& g0 = data_.div_u0_functional();
        for (int i = 0; i < n_p; ++i)
          rhs[static_cast<std::size_t>(layout_.xi_dof(i))] +=
              node_decay * g0[static_cast<std::size_t>(i)];
      }
      std::vector<double> kmu = forms_.k_mixed_u.multiply(state.u);
      for (int i = 0; i < n_p; ++i) {
        const std::size_t g = static_cast<std::size_t>(layout_.eta_dof(i));
        const std::size_t ii = static_cast<std::size_t>(i);
        rhs[g] += meta[ii] / tau + params_.lambda_star * k1 / tau * kmu[ii];
      }
    }

    for (int i = 0; i < n_p; ++i)
      rhs[static_cast<std::size_t>(layout_.eta_dof(i))] += gravity_load_[static_cast<std::size_t>(i)];

    constrained_.apply(rhs, data_.dirichlet_values_at(t1));
    std::vector<double> x = system_solver_.solve(rhs);
    if (!vecops::all_finite(x))
      throw DivergenceError("scheme: non-finite solution at step " +
                                std::to_string(state.step_index + 1),
                            state.step_index + 1);

    StateVec next;
    next.u.assign(x.begin(), x.begin() + n_u);
    next.xi.assign(x.begin() + n_u, x.begin() + n_u + n_p);
    next.eta.assign(x.begin() + n_u + n_p, x.end());
    next.p = recover_pressure(next.u, state.u, next.xi, next.eta, params_, tau, forms_,
                              mass_solver_);
    next.jxi_scaled = update_history(state.jxi_scaled, state.xi, next.xi, tau, sigma);
    next.jeta_scaled = update_history(state.jeta_scaled, state.eta, next.eta, tau, sigma);
    next.t = t1;
    next.step_index = state.step_index + 1;
    return next;
  }

  /// CSV diagnostic row: n, t, energy, |u|, |xi|, |eta|, |p|.
  void log_diagnostics(const StateVec& s, std::ostream& os) const {
    const double energy = discrete_energy(s, forms_, params_);
    auto l2 = [&](const std::vector<double>& v, const CsrMatrix& m) {
      return std::sqrt(std::max(0.0, vecops::dot(v, m.multiply(v))));
    };
    std::vector<double> ux(s.u.begin(), s.u.begin() + layout_.n_scalar_u);
    std::vector<double> uy(s.u.begin() + layout_.n_scalar_u, s.u.end());
    const double unorm = std::sqrt(vecops::dot(ux, forms_.mass_u.multiply(ux)) +
                                   vecops::dot(uy, forms_.mass_u.multiply(uy)));
    os << s.step_index << "," << s.t << "," << energy << "," << unorm << ","
       << l2(s.xi, forms_.mass_p) << "," << l2(s.eta, forms_.mass_p) << ","
       << l2(s.p, forms_.mass_p) << "\n";
  }

 private:
  void add_block(std::vector<double>& rhs, int offset, const std::vector<double>& v, double s) {
    if (s == 0.0) return;
    for (std::size_t i = 0; i < v.size(); ++i) rhs[static_cast<std::size_t>(offset) + i] += s * v[i];
  }

  const std::vector<double>& load_at_cached(double t) {
    if (!cached_load_ || cached_time_ != t) {
      cached_load_ = data_.load_at(t);
      cached_time_ = t;
    }
    return *cached_load_;
  }

  void cache_load(double t, std::vector<double>&& load) {
    cached_load_ = std::move(load);
    cached_time_ = t;
  }

  const DofLayout& layout_;
  const PhysicalParams& params_;
  const FormMatrices& forms_;
  SchemeConfig config_;
  const ProblemData& data_;
  ConstrainedSystem constrained_;
  LinearSolver system_solver_;
  LinearSolver mass_solver_;
  std::vector<double> gravity_load_;
  std::optional<std::vector<double>> cached_load_;
  double cached_time_ = -1.0;
};

}  // namespace porofem

#endif
