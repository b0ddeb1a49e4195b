#ifndef POROFEM_FE_BASIS_HPP
#define POROFEM_FE_BASIS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "porofem/common.hpp"
#include "porofem/mesh.hpp"

namespace porofem {

// ---------------------------------------------------------------------------
// Lagrange reference elements on the unit triangle {(0,0),(1,0),(0,1)}
// ---------------------------------------------------------------------------

/// P1 or P2 Lagrange basis on the reference triangle.
///
/// Node order: the 3 vertices, then (P2 only) the midpoints of the edges
/// opposite vertex 0, 1, 2 in that order.
struct RefElement {
  int order = 1;
  int node_count = 3;
  std::vector<Vec2> nodes;

  void eval(Vec2 p, double* vals) const {
    const double l0 = 1.0 - p.x - p.y, l1 = p.x, l2 = p.y;
    if (order == 1) {
      vals[0] = l0; vals[1] = l1; vals[2] = l2;
    } else {
      vals[0] = l0 * (2.0 * l0 - 1.0);
      vals[1] = l1 * (2.0 * l1 - 1.0);
      vals[2] = l2 * (2.0 * l2 - 1.0);
      vals[3] = 4.0 * l1 * l2;
      vals[4] = 4.0 * l2 * l0;
      vals[5] = 4.0 * l0 * l1;
    }
  }

  void grad(Vec2 p, Vec2* grads) const {
    if (order == 1) {
      grads[0] = {-1.0, -1.0}; grads[1] = {1.0, 0.0}; grads[2] = {0.0, 1.0};
    } else {
      const double l0 = 1.0 - p.x - p.y, l1 = p.x, l2 = p.y;
      const Vec2 g0{-1.0, -1.0}, g1{1.0, 0.0}, g2{0.0, 1.0};
      grads[0] = g0 * (4.0 * l0 - 1.0);
      grads[1] = g1 * (4.0 * l1 - 1.0);
      grads[2] = g2 * (4.0 * l2 - 1.0);
      grads[3] = 4.0 * (g1 * l2 + g2 * l1);
      grads[4] = 4.0 * (g2 * l0 + g0 * l2);
      grads[5] = 4.0 * (g0 * l1 + g1 * l0);
    }
  }

  /// Second derivatives (constant over the triangle; zero for P1).
  void hess(Mat2* hessians) const {
    if (order == 1) {
      for (int i = 0; i < 3; ++i) hessians[i] = {};
      return;
    }
    hessians[0] = {4.0, 4.0, 4.0, 4.0};
    hessians[1] = {4.0, 0.0, 0.0, 0.0};
    hessians[2] = {0.0, 0.0, 0.0, 4.0};
    hessians[3] = {0.0, 4.0, 4.0, 0.0};
    hessians[4] = {0.0, -4.0, -4.0, -8.0};
    hessians[5] = {-8.0, -4.0, -4.0, 0.0};
  }
};

inline RefElement make_ref_element(int order) {
  if (order != 1 && order != 2) throw ConfigError("make_ref_element: order must be 1 or 2");
  RefElement el;
  el.order = order;
  el.node_count = order == 1 ? 3 : 6;
  el.nodes = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  if (order == 2) {
    el.nodes.push_back({0.5, 0.5});
    el.nodes.push_back({0.0, 0.5});
    el.nodes.push_back({0.5, 0.0});
  }
  return el;
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

namespace detail {

/// Eigenvalues of a symmetric tridiagonal matrix together with the first
/// component of each normalized eigenvector (QL with implicit shifts).
/// d: diagonal, e: subdiagonal (e[0] unused), z: in/out row of eigenvectors.
inline void tridiag_eigen(std::vector<double>& d, std::vector<double>& e, std::vector<double>& z) {
  const int n = static_cast<int>(d.size());
  for (int i = 1; i < n; ++i) e[static_cast<std::size_t>(i - 1)] = e[static_cast<std::size_t>(i)];
  e[static_cast<std::size_t>(n - 1)] = 0.0;
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        double dd = std::abs(d[static_cast<std::size_t>(m)]) + std::abs(d[static_cast<std::size_t>(m + 1)]);
        if (std::abs(e[static_cast<std::size_t>(m)]) <= 1e-15 * dd) break;
      }
      if (m != l) {
        if (iter++ == 50) throw std::runtime_error("tridiag_eigen: too many iterations");
        double g = (d[static_cast<std::size_t>(l + 1)] - d[static_cast<std::size_t>(l)]) / (2.0 * e[static_cast<std::size_t>(l)]);
        double r = std::hypot(g, 1.0);
        g = d[static_cast<std::size_t>(m)] - d[static_cast<std::size_t>(l)] +
            e[static_cast<std::size_t>(l)] / (g + (g >= 0.0 ? std::abs(r) : -std::abs(r)));
        double s = 1.0, c = 1.0, p = 0.0;
        int i = m - 1;
        for (; i >= l; --i) {
          double f = s * e[static_cast<std::size_t>(i)];
          double b = c * e[static_cast<std::size_t>(i)];
          r = std::hypot(f, g);
          e[static_cast<std::size_t>(i + 1)] = r;
          if (r == 0.0) {
            d[static_cast<std::size_t>(i + 1)] -= p;
            e[static_cast<std::size_t>(m)] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[static_cast<std::size_t>(i + 1)] - p;
          r = (d[static_cast<std::size_t>(i)] - g) * s + 2.0 * c * b;
          p = s * r;
          d[static_cast<std::size_t>(i + 1)] = g + p;
          g = c * r - b;
          // update first-row eigenvector components
          f = z[static_cast<std::size_t>(i + 1)];
          z[static_cast<std::size_t>(i + 1)] = s * z[static_cast<std::size_t>(i)] + c * f;
          z[static_cast<std::size_t>(i)] = c * z[static_cast<std::size_t>(i)] - s * f;
        }
        if (r == 0.0 && i >= l) continue;
        d[static_cast<std::size_t>(l)] -= p;
        e[static_cast<std::size_t>(l)] = g;
        e[static_cast<std::size_t>(m)] = 0.0;
      }
    } while (m != l);
  }
}

/// m-point Gauss rule on [0,1] for the weight (1-x)^alpha via Golub-Welsch.
/// alpha = 0 gives Gauss-Legendre, alpha = 1 the rule for the conical product.
inline void gauss_jacobi01(int m, int alpha, std::vector<double>& x, std::vector<double>& w) {
  const double a = static_cast<double>(alpha), b = 0.0;
  std::vector<double> d(static_cast<std::size_t>(m)), e(static_cast<std::size_t>(m), 0.0),
      z(static_cast<std::size_t>(m), 0.0);
  for (int k = 0; k < m; ++k) {
    if (k == 0)
      d[0] = (b - a) / (a + b + 2.0);
    else {
      double den = (2.0 * k + a + b) * (2.0 * k + a + b + 2.0);
      d[static_cast<std::size_t>(k)] = (b * b - a * a) / den;
    }
    if (k >= 1) {
      double kk = static_cast<double>(k);
      double num = 4.0 * kk * (kk + a) * (kk + b) * (kk + a + b);
      double den = (2.0 * kk + a + b) * (2.0 * kk + a + b) *
                   (2.0 * kk + a + b + 1.0) * (2.0 * kk + a + b - 1.0);
      e[static_cast<std::size_t>(k)] = std::sqrt(num / den);
    }
  }
  z[0] = 1.0;
  tridiag_eigen(d, e, z);
  // mu0 = integral of (1-t)^a over [-1,1]
  const double mu0 = std::pow(2.0, a + 1.0) / (a + 1.0);
  x.resize(static_cast<std::size_t>(m));
  w.resize(static_cast<std::size_t>(m));
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::sort(idx.begin(), idx.end(), [&](int i, int j) { return d[static_cast<std::size_t>(i)] < d[static_cast<std::size_t>(j)]; });
  for (int i = 0; i < m; ++i) {
    int j = idx[static_cast<std::size_t>(i)];
    // map t in [-1,1] to x in [0,1]; weight (1-t)^a dt = (2(1-x))^a 2 dx
    x[static_cast<std::size_t>(i)] = 0.5 * (1.0 + d[static_cast<std::size_t>(j)]);
    w[static_cast<std::size_t>(i)] =
        mu0 * z[static_cast<std::size_t>(j)] * z[static_cast<std::size_t>(j)] / std::pow(2.0, a + 1.0);
  }
}

}  // namespace detail

/// Quadrature rule on the reference triangle (weights sum to 1/2).
struct QuadratureRule {
  std::vector<Vec2> points;
  std::vector<double> weights;
  int exactness_degree = 0;

  int size() const { return static_cast<int>(points.size()); }
};

constexpr int kMaxQuadratureDegree = 12;

/// Conical-product Gauss rule exact for polynomials of total degree
/// >= min_degree. Weights are positive by construction.
inline QuadratureRule make_quadrature(int min_degree) {
  if (min_degree < 1 || min_degree > kMaxQuadratureDegree)
    throw ConfigError("make_quadrature: degree out of range [1," +
                      std::to_string(kMaxQuadratureDegree) + "]");
  const int m = (min_degree + 2) / 2;  // 2m-1 >= min_degree
  std::vector<double> xj, wj, xl, wl;
  detail::gauss_jacobi01(m, 1, xj, wj);  // weight (1-x) direction
  detail::gauss_jacobi01(m, 0, xl, wl);  // plain direction
  QuadratureRule rule;
  rule.exactness_degree = 2 * m - 1;
  rule.points.reserve(static_cast<std::size_t>(m) * m);
  rule.weights.reserve(static_cast<std::size_t>(m) * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      double x = xj[static_cast<std::size_t>(i)];
      double u = xl[static_cast<std::size_t>(j)];
      rule.points.push_back({x, (1.0 - x) * u});
      rule.weights.push_back(wj[static_cast<std::size_t>(i)] * wl[static_cast<std::size_t>(j)]);
    }
  return rule;
}

/// m-point Gauss-Legendre rule on [0,1], used for boundary edge integrals.
inline void gauss_segment(int min_degree, std::vector<double>& x, std::vector<double>& w) {
  const int m = (min_degree + 2) / 2;
  detail::gauss_jacobi01(m, 0, x, w);
}

// ---------------------------------------------------------------------------
// Taylor-Hood degree-of-freedom layout
// ---------------------------------------------------------------------------

/// Block layout [u | xi | eta] for the P_{r+1}/P_r pair on one mesh.
///
/// u is vector valued and component-major: u-dof (c, s) sits at c*n_scalar_u+s.
/// P2 scalar dofs are vertices then edge midpoints (keyed by global edge id).
struct DofLayout {
  int r = 1;
  int n_scalar_u = 0;  // P_{r+1} scalar dof count
  int n_scalar_p = 0;  // P_r scalar dof count (shared by xi and eta)
  int u_offset = 0;
  int xi_offset = 0;
  int eta_offset = 0;
  int total = 0;

  std::vector<std::array<int, 6>> u_cell_dofs;  // scalar P2 dofs per triangle
  std::vector<std::array<int, 3>> p_cell_dofs;  // scalar P1 dofs per triangle
  std::vector<Vec2> u_support;                  // support point of each scalar u-dof
  std::vector<Vec2> p_support;

  int u_dof(int comp, int scalar) const { return u_offset + comp * n_scalar_u + scalar; }
  int xi_dof(int scalar) const { return xi_offset + scalar; }
  int eta_dof(int scalar) const { return eta_offset + scalar; }
  int n_u() const { return 2 * n_scalar_u; }
};

inline DofLayout build_dof_layout(const TriMesh& mesh, int r = 1) {
  if (r != 1) throw ConfigError("build_dof_layout: only r = 1 (P2/P1) is implemented");
  DofLayout layout;
  layout.r = r;
  const int nv = mesh.num_vertices();
  const int ne = mesh.num_edges();
  layout.n_scalar_u = nv + ne;
  layout.n_scalar_p = nv;
  layout.u_offset = 0;
  layout.xi_offset = 2 * layout.n_scalar_u;
  layout.eta_offset = layout.xi_offset + layout.n_scalar_p;
  layout.total = layout.eta_offset + layout.n_scalar_p;

  layout.u_cell_dofs.resize(mesh.triangles.size());
  layout.p_cell_dofs.resize(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto& te = mesh.triangle_edges[t];
    layout.u_cell_dofs[t] = {tri[0], tri[1], tri[2], nv + te[0], nv + te[1], nv + te[2]};
    layout.p_cell_dofs[t] = {tri[0], tri[1], tri[2]};
  }

  layout.u_support.resize(static_cast<std::size_t>(layout.n_scalar_u));
  for (int v = 0; v < nv; ++v) layout.u_support[static_cast<std::size_t>(v)] = mesh.vertices[static_cast<std::size_t>(v)];
  for (int e = 0; e < ne; ++e) layout.u_support[static_cast<std::size_t>(nv + e)] = mesh.edge_midpoint(e);
  layout.p_support.assign(mesh.vertices.begin(), mesh.vertices.end());
  return layout;
}

}  // namespace porofem

#endif
