#ifndef POROFEM_MMS_HPP
#define POROFEM_MMS_HPP

#include <cmath>
#include <memory>

#include "porofem/common.hpp"

namespace porofem {

/// Symmetric 2x2 permeability tensor; constructible from an isotropic scalar.
struct PermTensor {
  double xx = 0.0, xy = 0.0, yy = 0.0;
  PermTensor() = default;
  PermTensor(double iso) : xx(iso), yy(iso) {}  // NOLINT(google-explicit-constructor)
  PermTensor(double xx_, double xy_, double yy_) : xx(xx_), xy(xy_), yy(yy_) {}
  Vec2 apply(Vec2 g) const { return {xx * g.x + xy * g.y, xy * g.x + yy * g.y}; }
};

/// Raw model constants as given in an experiment table.
struct RawParams {
  double E;
  double nu;
  double alpha;
  double c0;
  double lambda_star;
  double K;
  double mu_f;
};

/// Model constants plus the derived Lame and kappa coefficients.
struct PhysicalParams {
  double E = 0.0;
  double nu = 0.0;
  double alpha = 0.0;
  double c0 = 0.0;
  double lambda_star = 0.0;
  PermTensor K;
  double mu_f = 1.0;
  Vec2 rho_f_g{0.0, 0.0};  // body force density from gravity; zero in the examples

  double lambda = 0.0;
  double mu = 0.0;
  double kappa1 = 0.0;
  double kappa2 = 0.0;
  double kappa3 = 0.0;

  /// Memory-kernel time constant lambda* kappa3.
  double sigma() const { return lambda_star * kappa3; }
};

inline PhysicalParams derive_params(const RawParams& raw) {
  if (!(raw.E > 0.0)) throw ConfigError("derive_params: E must be positive");
  if (raw.nu >= 0.5)
    throw IncompressibleLimitError("derive_params: nu >= 0.5, lambda undefined");
  if (!(raw.nu > 0.0))
    throw ConfigError("derive_params: nu must be in (0, 0.5), lambda must be positive");
  if (!(raw.alpha > 0.0)) throw ConfigError("derive_params: alpha must be positive");
  if (!(raw.c0 > 0.0)) throw ConfigError("derive_params: c0 must be positive");
  if (!(raw.lambda_star > 0.0)) throw ConfigError("derive_params: lambda_star must be positive");
  if (!(raw.K > 0.0)) throw ConfigError("derive_params: K must be positive");
  if (!(raw.mu_f > 0.0)) throw ConfigError("derive_params: mu_f must be positive");

  PhysicalParams p;
  p.E = raw.E;
  p.nu = raw.nu;
  p.alpha = raw.alpha;
  p.c0 = raw.c0;
  p.lambda_star = raw.lambda_star;
  p.K = PermTensor(raw.K);
  p.mu_f = raw.mu_f;
  p.lambda = raw.E * raw.nu / ((1.0 + raw.nu) * (1.0 - 2.0 * raw.nu));
  p.mu = raw.E / (2.0 * (1.0 + raw.nu));
  const double denom = raw.alpha * raw.alpha + p.lambda * raw.c0;
  p.kappa1 = raw.alpha / denom;
  p.kappa2 = p.lambda / denom;
  p.kappa3 = raw.c0 / denom;
  return p;
}

/// Closed-form exact solution with consistent forcing data.
///
/// The auxiliary fields xi, eta and the traction are derived from the primary
/// evaluators, so they satisfy the variable transforms identically.
class ManufacturedSolution {
 public:
  explicit ManufacturedSolution(PhysicalParams params) : params_(params) {}
  virtual ~ManufacturedSolution() = default;

  const PhysicalParams& params() const { return params_; }

  virtual Vec2 u(double x, double y, double t) const = 0;
  /// Displacement gradient: row i is the gradient of component i.
  virtual Mat2 grad_u(double x, double y, double t) const = 0;
  virtual double p(double x, double y, double t) const = 0;
  virtual Vec2 grad_p(double x, double y, double t) const = 0;
  virtual double div_u(double x, double y, double t) const = 0;
  virtual double div_u_t(double x, double y, double t) const = 0;
  virtual Vec2 body_force(double x, double y, double t) const = 0;
  virtual double source(double x, double y, double t) const = 0;

  double xi(double x, double y, double t) const {
    return params_.alpha * p(x, y, t) - params_.lambda * div_u(x, y, t) -
           params_.lambda_star * div_u_t(x, y, t);
  }

  double eta(double x, double y, double t) const {
    return params_.c0 * p(x, y, t) + params_.alpha * div_u(x, y, t);
  }

  /// Effective stress sigma(u) = mu eps(u) + lambda (div u) I.
  Mat2 stress(double x, double y, double t) const {
    Mat2 g = grad_u(x, y, t);
    double d = g.a00 + g.a11;
    double offdiag = 0.5 * (g.a01 + g.a10);
    return {params_.mu * g.a00 + params_.lambda * d, params_.mu * offdiag,
            params_.mu * offdiag, params_.mu * g.a11 + params_.lambda * d};
  }

  /// Natural boundary datum lambda* (div u)_t n + sigma(u) n - alpha p n.
  Vec2 traction(double x, double y, double t, Vec2 normal) const {
    Mat2 s = stress(x, y, t);
    double scal = params_.lambda_star * div_u_t(x, y, t) - params_.alpha * p(x, y, t);
    return {s.a00 * normal.x + s.a01 * normal.y + scal * normal.x,
            s.a10 * normal.x + s.a11 * normal.y + scal * normal.y};
  }

 private:
  PhysicalParams params_;
};

namespace detail {

constexpr double kPi = 3.14159265358979323846;

class Example41 final : public ManufacturedSolution {
 public:
  using ManufacturedSolution::ManufacturedSolution;

  Vec2 u(double x, double y, double t) const override {
    const double t3 = t * t * t;
    return {t3 * std::sin(kPi * x) * std::sin(kPi * y), t3 * x * (x - 1.0) * y * (y - 1.0)};
  }

  Mat2 grad_u(double x, double y, double t) const override {
    const double t3 = t * t * t;
    return {t3 * kPi * std::cos(kPi * x) * std::sin(kPi * y),
            t3 * kPi * std::sin(kPi * x) * std::cos(kPi * y),
            t3 * (2.0 * x - 1.0) * y * (y - 1.0),
            t3 * x * (x - 1.0) * (2.0 * y - 1.0)};
  }

  double p(double x, double y, double t) const override {
    return t * t * t * std::cos(2.0 * kPi * x) * std::cos(2.0 * kPi * y);
  }

  Vec2 grad_p(double x, double y, double t) const override {
    const double t3 = t * t * t;
    return {-2.0 * kPi * t3 * std::sin(2.0 * kPi * x) * std::cos(2.0 * kPi * y),
            -2.0 * kPi * t3 * std::cos(2.0 * kPi * x) * std::sin(2.0 * kPi * y)};
  }

  double div_u(double x, double y, double t) const override {
    return t * t * t * shape_div(x, y);
  }

  double div_u_t(double x, double y, double t) const override {
    return 3.0 * t * t * shape_div(x, y);
  }

  Vec2 body_force(double x, double y, double t) const override {
    const auto& pp = params();
    const double t2 = t * t, t3 = t2 * t;
    const double sxsy = std::sin(kPi * x) * std::sin(kPi * y);
    const double cxcy = std::cos(kPi * x) * std::cos(kPi * y);
    const double fx =
        t3 * (kPi * kPi * (1.5 * pp.mu + pp.lambda) * sxsy -
              2.0 * pp.alpha * kPi * std::sin(2.0 * kPi * x) * std::cos(2.0 * kPi * y)) +
        t2 * 3.0 * pp.lambda_star * (kPi * kPi * sxsy - (2.0 * x - 1.0) * (2.0 * y - 1.0)) -
        t3 * (0.5 * pp.mu + pp.lambda) * (2.0 * x - 1.0) * (2.0 * y - 1.0);
    const double fy =
        t3 * (-kPi * kPi * (0.5 * pp.mu + pp.lambda) * cxcy -
              2.0 * pp.alpha * kPi * std::cos(2.0 * kPi * x) * std::sin(2.0 * kPi * y)) -
        t2 * 3.0 * pp.lambda_star * (kPi * kPi * cxcy + 2.0 * x * (x - 1.0)) -
        t3 * (2.0 * (pp.mu + pp.lambda) * x * (x - 1.0) + pp.mu * y * (y - 1.0));
    return {fx, fy};
  }

  double source(double x, double y, double t) const override {
    const auto& pp = params();
    const double t2 = t * t, t3 = t2 * t;
    const double c2c2 = std::cos(2.0 * kPi * x) * std::cos(2.0 * kPi * y);
    return 3.0 * t2 *
               (pp.c0 * c2c2 + pp.alpha * kPi * std::cos(kPi * x) * std::sin(kPi * y) +
                pp.alpha * x * (x - 1.0) * (2.0 * y - 1.0)) +
           8.0 * kPi * kPi * (pp.K.xx / pp.mu_f) * t3 * c2c2;
  }

 private:
  static double shape_div(double x, double y) {
    return kPi * std::cos(kPi * x) * std::sin(kPi * y) + x * (x - 1.0) * (2.0 * y - 1.0);
  }
};

class Example42 final : public ManufacturedSolution {
 public:
  using ManufacturedSolution::ManufacturedSolution;

  Vec2 u(double x, double y, double t) const override {
    const double w = std::exp(t) * x * (x - 1.0) * y * (y - 1.0);
    return {w, w};
  }

  Mat2 grad_u(double x, double y, double t) const override {
    const double et = std::exp(t);
    const double wx = (2.0 * x - 1.0) * y * (y - 1.0);
    const double wy = x * (x - 1.0) * (2.0 * y - 1.0);
    return {et * wx, et * wy, et * wx, et * wy};
  }

  double p(double x, double y, double t) const override {
    return std::exp(t) * std::cos(2.0 * kPi * x) * std::cos(2.0 * kPi * y);
  }

  Vec2 grad_p(double x, double y, double t) const override {
    const double et = std::exp(t);
    return {-2.0 * kPi * et * std::sin(2.0 * kPi * x) * std::cos(2.0 * kPi * y),
            -2.0 * kPi * et * std::cos(2.0 * kPi * x) * std::sin(2.0 * kPi * y)};
  }

  double div_u(double x, double y, double t) const override {
    return std::exp(t) * shape_div(x, y);
  }

  double div_u_t(double x, double y, double t) const override {
    return std::exp(t) * shape_div(x, y);
  }

  Vec2 body_force(double x, double y, double t) const override {
    const auto& pp = params();
    const double et = std::exp(t);
    const double q = (2.0 * x - 1.0) * (2.0 * y - 1.0);
    const double yy = y * (y - 1.0), xx = x * (x - 1.0);
    const double ls = pp.lambda + pp.lambda_star;
    const double fx = et * (-pp.mu * (2.0 * yy + xx + 0.5 * q) - ls * (2.0 * yy + q) -
                            2.0 * pp.alpha * kPi * std::sin(2.0 * kPi * x) * std::cos(2.0 * kPi * y));
    const double fy = et * (-pp.mu * (yy + 2.0 * xx + 0.5 * q) - ls * (q + 2.0 * xx) -
                            2.0 * pp.alpha * kPi * std::cos(2.0 * kPi * x) * std::sin(2.0 * kPi * y));
    return {fx, fy};
  }

  double source(double x, double y, double t) const override {
    const auto& pp = params();
    const double et = std::exp(t);
    return et * ((pp.c0 + 8.0 * kPi * kPi * pp.K.xx / pp.mu_f) * std::cos(2.0 * kPi * x) *
                     std::cos(2.0 * kPi * y) +
                 pp.alpha * shape_div(x, y));
  }

 private:
  static double shape_div(double x, double y) {
    return (2.0 * x - 1.0) * y * (y - 1.0) + x * (x - 1.0) * (2.0 * y - 1.0);
  }
};

}  // namespace detail

inline constexpr RawParams kExample41Params{1e7, 0.4, 0.5, 0.5, 1e-6, 1e-9, 1.0};
inline constexpr RawParams kExample42Params{1e9, 0.4, 0.5, 0.5, 1e-6, 1e-9, 1.0};

inline std::unique_ptr<ManufacturedSolution> example41(const RawParams& raw = kExample41Params) {
  return std::make_unique<detail::Example41>(derive_params(raw));
}

inline std::unique_ptr<ManufacturedSolution> example42(const RawParams& raw = kExample42Params) {
  return std::make_unique<detail::Example42>(derive_params(raw));
}

inline Vec2 traction_data(const ManufacturedSolution& ms, double x, double y, double t, Vec2 normal) {
  return ms.traction(x, y, t, normal);
}

}  // namespace porofem

#endif
