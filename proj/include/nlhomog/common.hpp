#pragma once

// Small fixed-capacity vector/matrix types for spatial dimension d <= 3,
// plus the error taxonomy shared by all modules.

#include <array>
#include <cmath>
#include <cstdint>
#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlhomog {

inline constexpr int kMaxDim = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EnsembleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Requested evaluation outside the tabulated slope range.
struct CoverageError : std::runtime_error {
  std::array<double, kMaxDim> needed_lo{}, needed_hi{};
  CoverageError(const std::string& msg, std::array<double, kMaxDim> lo,
                std::array<double, kMaxDim> hi)
      : std::runtime_error(msg), needed_lo(lo), needed_hi(hi) {}
};

struct Vec {
  int dim = 0;
  std::array<double, kMaxDim> a{0.0, 0.0, 0.0};

  Vec() = default;
  explicit Vec(int d) : dim(d) {}
  Vec(int d, const double* p) : dim(d) {
    for (int i = 0; i < d; ++i) a[i] = p[i];
  }

  double& operator[](int i) { return a[i]; }
  double operator[](int i) const { return a[i]; }

  Vec& operator+=(const Vec& o) {
    for (int i = 0; i < dim; ++i) a[i] += o.a[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) {
    for (int i = 0; i < dim; ++i) a[i] -= o.a[i];
    return *this;
  }
  Vec& operator*=(double s) {
    for (int i = 0; i < dim; ++i) a[i] *= s;
    return *this;
  }
};

inline Vec vec1(double x) {
  Vec v(1);
  v[0] = x;
  return v;
}
inline Vec vec2(double x, double y) {
  Vec v(2);
  v[0] = x;
  v[1] = y;
  return v;
}
inline Vec vec3(double x, double y, double z) {
  Vec v(3);
  v[0] = x;
  v[1] = y;
  v[2] = z;
  return v;
}
inline Vec basis_vec(int dim, int i) {
  Vec v(dim);
  v[i] = 1.0;
  return v;
}

inline Vec operator+(Vec x, const Vec& y) { return x += y; }
inline Vec operator-(Vec x, const Vec& y) { return x -= y; }
inline Vec operator*(double s, Vec x) { return x *= s; }

inline double dot(const Vec& x, const Vec& y) {
  double s = 0;
  for (int i = 0; i < x.dim; ++i) s += x.a[i] * y.a[i];
  return s;
}
inline double norm2(const Vec& x) { return std::sqrt(dot(x, x)); }

// Symmetric d x d matrix, stored as full row-major 3x3.
struct SymMat {
  int dim = 0;
  std::array<double, kMaxDim * kMaxDim> m{};

  SymMat() = default;
  explicit SymMat(int d) : dim(d) {}

  double& operator()(int i, int j) { return m[i * kMaxDim + j]; }
  double operator()(int i, int j) const { return m[i * kMaxDim + j]; }

  SymMat& operator+=(const SymMat& o) {
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) (*this)(i, j) += o(i, j);
    return *this;
  }
  SymMat& operator*=(double s) {
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) (*this)(i, j) *= s;
    return *this;
  }
};

inline SymMat sym_identity(int d, double s = 1.0) {
  SymMat A(d);
  for (int i = 0; i < d; ++i) A(i, i) = s;
  return A;
}
inline SymMat sym_outer(const Vec& v, double s = 1.0) {
  SymMat A(v.dim);
  for (int i = 0; i < v.dim; ++i)
    for (int j = 0; j < v.dim; ++j) A(i, j) = s * v[i] * v[j];
  return A;
}
inline SymMat operator+(SymMat x, const SymMat& y) { return x += y; }
inline SymMat operator*(double s, SymMat x) { return x *= s; }

inline Vec mat_vec(const SymMat& A, const Vec& x) {
  Vec y(A.dim);
  for (int i = 0; i < A.dim; ++i) {
    double s = 0;
    for (int j = 0; j < A.dim; ++j) s += A(i, j) * x[j];
    y[i] = s;
  }
  return y;
}
inline double quad_form(const SymMat& A, const Vec& x, const Vec& y) {
  return dot(x, mat_vec(A, y));
}

// Eigenvalues of a symmetric matrix, ascending. Closed forms for d <= 3.
inline std::array<double, kMaxDim> sym_eigenvalues(const SymMat& A) {
  std::array<double, kMaxDim> ev{0, 0, 0};
  if (A.dim == 1) {
    ev[0] = A(0, 0);
  } else if (A.dim == 2) {
    const double tr = A(0, 0) + A(1, 1);
    const double det = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
    double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    ev[0] = tr / 2 - disc;
    ev[1] = tr / 2 + disc;
  } else {
    // trigonometric method for 3x3 symmetric matrices
    const double q = (A(0, 0) + A(1, 1) + A(2, 2)) / 3.0;
    const double a00 = A(0, 0) - q, a11 = A(1, 1) - q, a22 = A(2, 2) - q;
    const double a01 = A(0, 1), a02 = A(0, 2), a12 = A(1, 2);
    const double p2 =
        (a00 * a00 + a11 * a11 + a22 * a22) / 6.0 +
        (a01 * a01 + a02 * a02 + a12 * a12) / 3.0;
    const double p = std::sqrt(std::max(p2, 0.0));
    if (p < 1e-300) {
      ev[0] = ev[1] = ev[2] = q;
      return ev;
    }
    // det(B)/2 with B = (A - q I)/p
    const double detB =
        (a00 * (a11 * a22 - a12 * a12) - a01 * (a01 * a22 - a12 * a02) +
         a02 * (a01 * a12 - a11 * a02)) /
        (p * p * p);
    double r = std::clamp(detB / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    ev[2] = q + 2 * p * std::cos(phi);
    ev[0] = q + 2 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    ev[1] = 3 * q - ev[0] - ev[2];
    if (ev[0] > ev[1]) std::swap(ev[0], ev[1]);
    if (ev[1] > ev[2]) std::swap(ev[1], ev[2]);
    if (ev[0] > ev[1]) std::swap(ev[0], ev[1]);
  }
  return ev;
}

inline double sym_eig_min(const SymMat& A) { return sym_eigenvalues(A)[0]; }
inline double sym_eig_max(const SymMat& A) {
  return sym_eigenvalues(A)[A.dim - 1];
}

inline std::int64_t ipow(std::int64_t b, int e) {
  std::int64_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}
inline std::int64_t pow3(int n) { return ipow(3, n); }

}  // namespace nlhomog
