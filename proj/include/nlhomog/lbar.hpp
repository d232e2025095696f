#pragma once

// Tabulated homogenized Lagrangian on a tensor grid of slopes with a C1
// tensor-product cubic Hermite interpolant.  Node data comes from ensemble
// cell-problem estimates: values, slope gradients and slope Hessians, each
// with a recorded uncertainty.  Construction validates ellipticity of the
// interpolated Hessian and midpoint convexity; violations throw.

#include <cmath>
#include <string>
#include <vector>

#include "nlhomog/cell_problems.hpp"

namespace nlhomog {

struct LbarAxis {
  double min = 0;
  double spacing = 0;
  std::int64_t count = 0;
  double max() const { return min + spacing * static_cast<double>(count - 1); }
};

struct LbarGrid {
  int dim = 0;
  std::array<LbarAxis, kMaxDim> axes{};
};

inline LbarGrid grid_centered(int dim, double radius, std::int64_t count) {
  if (count < 2) throw ConfigError("grid_centered: need at least two nodes");
  LbarGrid g;
  g.dim = dim;
  for (int i = 0; i < dim; ++i)
    g.axes[i] = {-radius, 2 * radius / static_cast<double>(count - 1), count};
  return g;
}

struct LbarNode {
  double value = 0, value_unc = 0;
  Vec grad, grad_unc;
  SymMat hess, hess_unc;
};

namespace detail {

// cubic Hermite basis on [0,1]; rows: value-left, value-right, slope-left,
// slope-right; k is the derivative order in t
inline double hermite_basis(int which, int k, double t) {
  switch (which * 3 + k) {
    case 0: return ((2 * t - 3) * t) * t + 1;   // h00
    case 1: return (6 * t - 6) * t;
    case 2: return 12 * t - 6;
    case 3: return (3 - 2 * t) * t * t;         // h01
    case 4: return (6 - 6 * t) * t;
    case 5: return 6 - 12 * t;
    case 6: return ((t - 2) * t + 1) * t;       // h10
    case 7: return (3 * t - 4) * t + 1;
    case 8: return 6 * t - 4;
    case 9: return (t - 1) * t * t;             // h11
    case 10: return (3 * t - 2) * t;
    case 11: return 6 * t - 2;
  }
  throw DomainError("hermite_basis: bad index");
}

}  // namespace detail

class HomogenizedLagrangian {
 public:
  int dim = 0;
  double lambda = 1;
  std::array<LbarAxis, kMaxDim> axes{};
  std::vector<LbarNode> nodes;  // axis 0 fastest

  std::size_t node_count() const {
    std::size_t n = 1;
    for (int i = 0; i < dim; ++i)
      n *= static_cast<std::size_t>(axes[i].count);
    return n;
  }

  std::size_t node_index(const std::array<std::int64_t, kMaxDim>& idx) const {
    std::size_t flat = 0, stride = 1;
    for (int i = 0; i < dim; ++i) {
      flat += stride * static_cast<std::size_t>(idx[i]);
      stride *= static_cast<std::size_t>(axes[i].count);
    }
    return flat;
  }

  Vec node_xi(const std::array<std::int64_t, kMaxDim>& idx) const {
    Vec xi(dim);
    for (int i = 0; i < dim; ++i)
      xi[i] = axes[i].min + axes[i].spacing * static_cast<double>(idx[i]);
    return xi;
  }

  bool covers(const Vec& xi) const {
    for (int i = 0; i < dim; ++i) {
      double pad = 1e-9 * axes[i].spacing;
      if (xi[i] < axes[i].min - pad || xi[i] > axes[i].max() + pad)
        return false;
    }
    return true;
  }

  EvalResult eval(const Vec& xi) const {
    if (xi.dim != dim) throw DomainError("table eval: dimension mismatch");
    if (!covers(xi)) {
      std::array<double, kMaxDim> lo{}, hi{};
      for (int i = 0; i < dim; ++i) {
        lo[i] = std::min(xi[i], axes[i].min);
        hi[i] = std::max(xi[i], axes[i].max());
      }
      throw CoverageError("slope outside the tabulated range", lo, hi);
    }

    std::array<std::int64_t, kMaxDim> cell{};
    // B[axis][m][side][k]: basis factor for derivative data (m=1) or value
    // data (m=0) at the low/high corner, k-th derivative in the coordinate
    double B[kMaxDim][2][2][3];
    for (int i = 0; i < dim; ++i) {
      const double hs = axes[i].spacing;
      double u = (xi[i] - axes[i].min) / hs;
      std::int64_t c = static_cast<std::int64_t>(std::floor(u));
      c = std::max<std::int64_t>(0, std::min(c, axes[i].count - 2));
      cell[i] = c;
      const double t = u - static_cast<double>(c);
      for (int side = 0; side < 2; ++side) {
        int vrow = side;       // h00, h01
        int drow = 2 + side;   // h10, h11
        for (int k = 0; k < 3; ++k) {
          double scale = std::pow(hs, -k);
          B[i][0][side][k] = detail::hermite_basis(vrow, k, t) * scale;
          B[i][1][side][k] = detail::hermite_basis(drow, k, t) * hs * scale;
        }
      }
    }

    EvalResult out;
    out.value = 0;
    out.dp = Vec(dim);
    out.d2p = SymMat(dim);
    const int corners = 1 << dim;
    for (int s = 0; s < corners; ++s) {
      std::array<std::int64_t, kMaxDim> idx{};
      for (int i = 0; i < dim; ++i) idx[i] = cell[i] + ((s >> i) & 1);
      const LbarNode& nd = nodes[node_index(idx)];
      for (int m = 0; m < corners; ++m) {
        double data;
        int bits = m & ((1 << dim) - 1);
        int pc = __builtin_popcount(static_cast<unsigned>(bits));
        if (pc == 0) {
          data = nd.value;
        } else if (pc == 1) {
          data = nd.grad[__builtin_ctz(static_cast<unsigned>(bits))];
        } else if (pc == 2) {
          int a = __builtin_ctz(static_cast<unsigned>(bits));
          int b = 31 - __builtin_clz(static_cast<unsigned>(bits));
          data = nd.hess(a, b);
        } else {
          continue;  // third mixed partial is not tabulated
        }
        if (data == 0) continue;

        double prod = 1;
        for (int i = 0; i < dim; ++i)
          prod *= B[i][(m >> i) & 1][(s >> i) & 1][0];
        out.value += data * prod;

        for (int j = 0; j < dim; ++j) {
          double pj = 1;
          for (int i = 0; i < dim; ++i)
            pj *= B[i][(m >> i) & 1][(s >> i) & 1][i == j ? 1 : 0];
          out.dp[j] += data * pj;
          for (int k = j; k < dim; ++k) {
            double pjk = 1;
            for (int i = 0; i < dim; ++i) {
              int ord = (i == j ? 1 : 0) + (i == k ? 1 : 0);
              pjk *= B[i][(m >> i) & 1][(s >> i) & 1][ord];
            }
            out.d2p(j, k) += data * pjk;
          }
        }
      }
    }
    for (int j = 0; j < dim; ++j)
      for (int k = j + 1; k < dim; ++k) out.d2p(k, j) = out.d2p(j, k);
    return out;
  }

  double max_uncertainty() const {
    double u = 0;
    for (const auto& nd : nodes) u = std::max(u, nd.value_unc);
    return u;
  }

  // ellipticity of the interpolated Hessian on a dense probe grid, then
  // midpoint convexity between tabulated slopes
  void validate() const {
    if (dim < 1 || dim > kMaxDim)
      throw ConfigError("table: dimension out of range");
    for (int i = 0; i < dim; ++i) {
      if (axes[i].count < 2) throw ConfigError("table: axis needs two nodes");
      if (!(axes[i].spacing > 0)) throw ConfigError("table: bad spacing");
    }
    if (nodes.size() != node_count())
      throw ConfigError("table: node storage size mismatch");

    const int sub = 4;
    std::array<std::int64_t, kMaxDim> pts{1, 1, 1};
    std::size_t total = 1;
    for (int i = 0; i < dim; ++i) {
      pts[i] = sub * (axes[i].count - 1) + 1;
      total *= static_cast<std::size_t>(pts[i]);
    }
    for (std::size_t t = 0; t < total; ++t) {
      std::size_t rem = t;
      Vec xi(dim);
      for (int i = 0; i < dim; ++i) {
        std::int64_t q = static_cast<std::int64_t>(
            rem % static_cast<std::size_t>(pts[i]));
        rem /= static_cast<std::size_t>(pts[i]);
        xi[i] = axes[i].min +
                axes[i].spacing * static_cast<double>(q) / sub;
      }
      auto ev = eval(xi);
      auto eig = sym_eigenvalues(ev.d2p);
      if (eig[0] < 0.95 - 1e-12 || eig[dim - 1] > 1.05 * lambda + 1e-12) {
        std::string msg = "table: interpolated Hessian out of range at xi = (";
        for (int i = 0; i < dim; ++i)
          msg += (i ? ", " : "") + std::to_string(xi[i]);
        msg += "), eigenvalues [" + std::to_string(eig[0]) + ", " +
               std::to_string(eig[dim - 1]) + "]";
        throw ConsistencyError(msg);
      }
    }

    const std::size_t n = node_count();
    std::uint64_t rs = 0x6c62272e07bb0142ULL;
    const std::size_t pair_cap = 20000;
    const bool all = n * n <= pair_cap;
    const std::size_t trials = all ? n * n : pair_cap;
    for (std::size_t t = 0; t < trials; ++t) {
      std::size_t ia, ib;
      if (all) {
        ia = t / n;
        ib = t % n;
      } else {
        rs = splitmix64(rs);
        ia = static_cast<std::size_t>(rs % n);
        rs = splitmix64(rs);
        ib = static_cast<std::size_t>(rs % n);
      }
      if (ia == ib) continue;
      Vec a = flat_xi(ia), b = flat_xi(ib);
      double fa = eval(a).value, fb = eval(b).value;
      Vec mid = a;
      for (int i = 0; i < dim; ++i) mid[i] = 0.5 * (a[i] + b[i]);
      double fm = eval(mid).value;
      if (fm > 0.5 * (fa + fb) +
                   1e-10 * (1 + std::abs(fa) + std::abs(fb)))
        throw ConsistencyError("table: midpoint convexity violated");
    }
  }

  Vec flat_xi(std::size_t flat) const {
    std::array<std::int64_t, kMaxDim> idx{};
    for (int i = 0; i < dim; ++i) {
      idx[i] = static_cast<std::int64_t>(
          flat % static_cast<std::size_t>(axes[i].count));
      flat /= static_cast<std::size_t>(axes[i].count);
    }
    return node_xi(idx);
  }
};

// fill a table from a closed-form Lagrangian (controls and tests)
template <class F>
HomogenizedLagrangian table_from_function(const LbarGrid& grid, double lambda,
                                          F&& fn) {
  HomogenizedLagrangian H;
  H.dim = grid.dim;
  H.lambda = lambda;
  H.axes = grid.axes;
  H.nodes.resize(H.node_count());
  for (std::size_t t = 0; t < H.nodes.size(); ++t) {
    EvalResult ev = fn(H.flat_xi(t));
    LbarNode nd;
    nd.value = ev.value;
    nd.grad = ev.dp;
    nd.hess = ev.d2p;
    nd.grad_unc = Vec(H.dim);
    nd.hess_unc = SymMat(H.dim);
    H.nodes[t] = nd;
  }
  H.validate();
  return H;
}

// Monte-Carlo table: every node reuses the same master seed, so all slopes
// see identical realization sets (differences across xi are low-noise).
inline HomogenizedLagrangian tabulate_Lbar(
    const CoefficientLaw& law, const NonlinearitySpec& nl,
    const LbarGrid& grid, const std::vector<int>& n_list,
    std::size_t ensemble, std::uint64_t master_seed, double h,
    const SolverOptions& opts = {}, const EnsembleOptions& eopts = {}) {
  for (int i = 0; i < grid.dim; ++i)
    if (grid.axes[i].spacing > 0.25 + 1e-12)
      throw ConfigError("tabulate_Lbar: grid spacing above 0.25");

  HomogenizedLagrangian H;
  H.dim = grid.dim;
  H.axes = grid.axes;
  H.nodes.resize(H.node_count());
  {
    LagrangianRealization probe =
        sample_realization(law, nl, centered_box(grid.dim, 1), 0);
    H.lambda = probe.lambda_max();
  }
  for (std::size_t t = 0; t < H.nodes.size(); ++t) {
    Vec xi = H.flat_xi(t);
    auto est = estimate_Lbar_point(law, nl, grid.dim, xi, n_list, ensemble,
                                   master_seed, h, opts, eopts);
    LbarNode nd;
    nd.value = est.value;
    nd.value_unc = est.value_unc;
    nd.grad = est.grad;
    nd.grad_unc = est.grad_unc;
    nd.hess = est.hess;
    nd.hess_unc = est.hess_unc;
    H.nodes[t] = nd;
  }
  H.validate();
  return H;
}

}  // namespace nlhomog
