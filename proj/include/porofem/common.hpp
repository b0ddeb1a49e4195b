#ifndef POROFEM_COMMON_HPP
#define POROFEM_COMMON_HPP

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace porofem {

/// Bad run configuration (unknown option, inconsistent values, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Linear algebra failure (singular pivot, failed factorization).
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what, long pivot = -1)
      : std::runtime_error(what), pivot_location(pivot) {}
  long pivot_location;
};

/// Non-finite values detected in a solution vector.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what, long step = -1)
      : std::runtime_error(what), step_index(step) {}
  long step_index;
};

/// API misuse (dimension mismatch, empty input where data is required).
struct UsageError : std::logic_error {
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

/// Requested convergence order from a zero or negative error.
struct OrderUndefined : std::runtime_error {
  explicit OrderUndefined(const std::string& what) : std::runtime_error(what) {}
};

/// Poisson ratio at the incompressible limit, lambda is undefined.
struct IncompressibleLimitError : ConfigError {
  explicit IncompressibleLimitError(const std::string& what) : ConfigError(what) {}
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::sqrt(x * x + y * y); }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

/// Row-major 2x2 matrix, used for Jacobians, gradients and stresses.
struct Mat2 {
  double a00 = 0.0, a01 = 0.0;
  double a10 = 0.0, a11 = 0.0;

  Vec2 apply(Vec2 v) const { return {a00 * v.x + a01 * v.y, a10 * v.x + a11 * v.y}; }
  Vec2 apply_transpose(Vec2 v) const { return {a00 * v.x + a10 * v.y, a01 * v.x + a11 * v.y}; }
  double det() const { return a00 * a11 - a01 * a10; }
  double trace() const { return a00 + a11; }
  Mat2 operator+(const Mat2& o) const { return {a00 + o.a00, a01 + o.a01, a10 + o.a10, a11 + o.a11}; }
  Mat2 operator-(const Mat2& o) const { return {a00 - o.a00, a01 - o.a01, a10 - o.a10, a11 - o.a11}; }
  Mat2 operator*(double s) const { return {a00 * s, a01 * s, a10 * s, a11 * s}; }
  double frobenius_sq() const { return a00 * a00 + a01 * a01 + a10 * a10 + a11 * a11; }
};

namespace vecops {

inline void axpy(double a, const std::vector<double>& x, std::vector<double>& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(const std::vector<double>& a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace vecops

}  // namespace porofem

#endif
