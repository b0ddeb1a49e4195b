#ifndef POROFEM_ANALYSIS_HPP
#define POROFEM_ANALYSIS_HPP

#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "porofem/assembly.hpp"
#include "porofem/common.hpp"
#include "porofem/fe_basis.hpp"
#include "porofem/mesh.hpp"
#include "porofem/mms.hpp"
#include "porofem/scheme.hpp"

namespace porofem {

struct FieldErrors {
  double u_l2 = 0.0;
  double u_h1 = 0.0;
  double p_l2 = 0.0;
  double p_h1 = 0.0;
};

/// L2 and H1 errors of the discrete state against the exact fields at time t.
/// The pressure is evaluated through its P1 representation.
inline FieldErrors error_norms(const StateVec& state, const ManufacturedSolution& exact, double t,
                               const TriMesh& mesh, const DofLayout& layout,
                               const QuadratureRule& quad) {
  const RefElement p2 = make_ref_element(2);
  const RefElement p1 = make_ref_element(1);
  const detail::BasisTab tab(p2, p1, quad);
  double u_l2 = 0.0, u_grad = 0.0, p_l2 = 0.0, p_grad = 0.0;

  for (int tri_i = 0; tri_i < mesh.num_triangles(); ++tri_i) {
    const AffineMapData map = affine_map(mesh, tri_i);
    const auto& tri = mesh.triangles[static_cast<std::size_t>(tri_i)];
    const Vec2 pt0 = mesh.vertices[tri[0]];
    const auto& ud = layout.u_cell_dofs[static_cast<std::size_t>(tri_i)];
    const auto& pd = layout.p_cell_dofs[static_cast<std::size_t>(tri_i)];
    for (int q = 0; q < quad.size(); ++q) {
      const Vec2 x = pt0 + map.jacobian.apply(quad.points[static_cast<std::size_t>(q)]);
      const double dx = map.det * quad.weights[static_cast<std::size_t>(q)];
      const auto& v2 = tab.u_vals[static_cast<std::size_t>(q)];
      const auto& v1 = tab.p_vals[static_cast<std::size_t>(q)];

      Vec2 uh{0.0, 0.0};
      Mat2 guh{};
      for (int i = 0; i < 6; ++i) {
        const double cx = state.u[static_cast<std::size_t>(layout.u_dof(0, ud[static_cast<std::size_t>(i)]))];
        const double cy = state.u[static_cast<std::size_t>(layout.u_dof(1, ud[static_cast<std::size_t>(i)]))];
        const double v = v2[static_cast<std::size_t>(i)];
        const Vec2 g = map.inv_transpose.apply(tab.u_grads[static_cast<std::size_t>(q)][static_cast<std::size_t>(i)]);
        uh.x += cx * v;
        uh.y += cy * v;
        guh.a00 += cx * g.x;
        guh.a01 += cx * g.y;
        guh.a10 += cy * g.x;
        guh.a11 += cy * g.y;
      }
      double ph = 0.0;
      Vec2 gph{0.0, 0.0};
      for (int i = 0; i < 3; ++i) {
        const double c = state.p[static_cast<std::size_t>(pd[static_cast<std::size_t>(i)])];
        const Vec2 g = map.inv_transpose.apply(tab.p_grads[static_cast<std::size_t>(q)][static_cast<std::size_t>(i)]);
        ph += c * v1[static_cast<std::size_t>(i)];
        gph.x += c * g.x;
        gph.y += c * g.y;
      }

      const Vec2 ue = exact.u(x.x, x.y, t) - uh;
      const Mat2 gue = exact.grad_u(x.x, x.y, t) - guh;
      const double pe = exact.p(x.x, x.y, t) - ph;
      const Vec2 gpe = exact.grad_p(x.x, x.y, t) - gph;
      u_l2 += dx * (ue.x * ue.x + ue.y * ue.y);
      u_grad += dx * gue.frobenius_sq();
      p_l2 += dx * pe * pe;
      p_grad += dx * gpe.dot(gpe);
    }
  }
  FieldErrors e;
  e.u_l2 = std::sqrt(u_l2);
  e.u_h1 = std::sqrt(u_l2 + u_grad);
  e.p_l2 = std::sqrt(p_l2);
  e.p_h1 = std::sqrt(p_l2 + p_grad);
  return e;
}

/// Errors recorded at every time node of one run, plus their max over time.
struct ErrorRecord {
  double h = 0.0;    // nominal grid pitch 1/n
  double tau = 0.0;
  std::vector<double> times;
  std::vector<FieldErrors> nodes;

  FieldErrors r_max() const {
    if (nodes.empty()) throw UsageError("ErrorRecord::r_max: no recorded nodes");
    FieldErrors r = nodes.front();
    for (const auto& e : nodes) {
      r.u_l2 = std::max(r.u_l2, e.u_l2);
      r.u_h1 = std::max(r.u_h1, e.u_h1);
      r.p_l2 = std::max(r.p_l2, e.p_l2);
      r.p_h1 = std::max(r.p_h1, e.p_h1);
    }
    return r;
  }
};

/// Componentwise max over time nodes, R(h, tau).
inline FieldErrors max_over_time(const std::vector<FieldErrors>& records) {
  if (records.empty()) throw UsageError("max_over_time: empty record set");
  FieldErrors r = records.front();
  for (const auto& e : records) {
    r.u_l2 = std::max(r.u_l2, e.u_l2);
    r.u_h1 = std::max(r.u_h1, e.u_h1);
    r.p_l2 = std::max(r.p_l2, e.p_l2);
    r.p_h1 = std::max(r.p_h1, e.p_h1);
  }
  return r;
}

/// log(e_coarse / e_fine) / log(ratio)
inline double observed_order(double e_coarse, double e_fine, double refinement_ratio = 2.0) {
  if (!(e_coarse > 0.0) || !(e_fine > 0.0))
    throw OrderUndefined("observed_order: errors must be positive");
  return std::log(e_coarse / e_fine) / std::log(refinement_ratio);
}

struct ConvergenceRow {
  double h = 0.0;
  double tau = 0.0;
  double error = 0.0;
  std::optional<double> order;
};

struct ConvergenceTable {
  std::string field;  // "u" or "p"
  std::string norm;   // "L2" or "H1"
  std::vector<ConvergenceRow> rows;
};

/// One table per (field, norm) from the R values of a refinement sequence.
inline std::vector<ConvergenceTable> build_tables(const std::vector<ErrorRecord>& records) {
  auto pick = [](const FieldErrors& e, int which) {
    switch (which) {
      case 0: return e.u_l2;
      case 1: return e.u_h1;
      case 2: return e.p_l2;
      default: return e.p_h1;
    }
  };
  const char* fields[4] = {"u", "u", "p", "p"};
  const char* norms[4] = {"L2", "H1", "L2", "H1"};
  std::vector<ConvergenceTable> tables;
  for (int w = 0; w < 4; ++w) {
    ConvergenceTable t;
    t.field = fields[w];
    t.norm = norms[w];
    for (std::size_t k = 0; k < records.size(); ++k) {
      ConvergenceRow row;
      row.h = records[k].h;
      row.tau = records[k].tau;
      row.error = pick(records[k].r_max(), w);
      if (k > 0) {
        const double prev = t.rows.back().error;
        if (prev > 0.0 && row.error > 0.0) row.order = observed_order(prev, row.error);
      }
      t.rows.push_back(row);
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

/// CSV schema: h, tau, field, norm, error, order (fixed column order).
inline void write_tables_csv(std::ostream& os, const std::vector<ConvergenceTable>& tables,
                             const std::vector<std::string>& config_echo = {}) {
  for (const auto& line : config_echo) os << "# " << line << "\n";
  os << "h,tau,field,norm,error,order\n";
  os << std::setprecision(12);
  for (const auto& t : tables)
    for (const auto& r : t.rows) {
      os << r.h << "," << r.tau << "," << t.field << "," << t.norm << "," << r.error << ",";
      if (r.order)
        os << *r.order;
      else
        os << "n/a";
      os << "\n";
    }
}

}  // namespace porofem

#endif
