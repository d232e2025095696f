#pragma once

// Diagnostics on the tabulated homogenized Lagrangian: eigenvalue bounds of
// the Hessian data, Holder quotients of the Hessian across the slope grid,
// level-gap trends, and cross-validation of the two independent Hessian
// estimators on shared realization sets.

#include "nlhomog/cell_problems.hpp"
#include "nlhomog/lbar.hpp"
#include "nlhomog/stats.hpp"

namespace nlhomog {

struct HessianBounds {
  double min_eig = 0;
  double max_eig = 0;
};

// extremal eigenvalues over every tabulated Hessian node
inline HessianBounds hessian_bounds_scan(const HomogenizedLagrangian& H) {
  HessianBounds b{std::numeric_limits<double>::infinity(),
                  -std::numeric_limits<double>::infinity()};
  for (const LbarNode& nd : H.nodes) {
    b.min_eig = std::min(b.min_eig, sym_eig_min(nd.hess));
    b.max_eig = std::max(b.max_eig, sym_eig_max(nd.hess));
  }
  return b;
}

namespace detail {

inline double frob_dist(const SymMat& a, const SymMat& b) {
  double acc = 0;
  for (int i = 0; i < a.dim; ++i)
    for (int j = 0; j < a.dim; ++j) {
      double d = a(i, j) - b(i, j);
      acc += d * d;
    }
  return std::sqrt(acc);
}

}  // namespace detail

struct HolderQuotient {
  double gamma = 1;
  double max_quotient = 0;
  Vec xi_a, xi_b;          // attaining pair
  double grid_spacing = 0;  // largest axis spacing
  double noise_floor = 0;   // minimal pair separation admitted
};

// max over admissible node pairs inside B_M of
//   |hess(xi_a) - hess(xi_b)|_F / |xi_a - xi_b|^gamma,
// skipping pairs closer than twice the grid spacing so MC noise is never
// divided by a vanishing separation
inline HolderQuotient holder_quotient_scan(const HomogenizedLagrangian& H,
                                           double gamma, double M) {
  if (!(gamma > 0) || gamma > 1)
    throw ConfigError("holder_quotient_scan: gamma must lie in (0, 1]");
  HolderQuotient q;
  q.gamma = gamma;
  for (int i = 0; i < H.dim; ++i)
    q.grid_spacing = std::max(q.grid_spacing, H.axes[i].spacing);
  q.noise_floor = 2 * q.grid_spacing;

  const std::size_t count = H.node_count();
  std::vector<Vec> xis(count);
  for (std::size_t t = 0; t < count; ++t) xis[t] = H.flat_xi(t);

  for (std::size_t a = 0; a < count; ++a) {
    if (std::sqrt(dot(xis[a], xis[a])) > M) continue;
    for (std::size_t b = a + 1; b < count; ++b) {
      if (std::sqrt(dot(xis[b], xis[b])) > M) continue;
      Vec d = xis[a] - xis[b];
      double sep = std::sqrt(dot(d, d));
      if (sep < q.noise_floor - 1e-12) continue;
      double quot = detail::frob_dist(H.nodes[a].hess, H.nodes[b].hess) /
                    std::pow(sep, gamma);
      if (quot > q.max_quotient) {
        q.max_quotient = quot;
        q.xi_a = xis[a];
        q.xi_b = xis[b];
      }
    }
  }
  return q;
}

struct CrossValidation {
  SymMat ahom;     // frozen-field estimator, ensemble mean
  SymMat fd;       // symmetrized slope differences of the mean flux
  double discrepancy = 0;   // Frobenius distance of the two means
  double uncertainty = 0;   // 3x combined standard errors, Frobenius
  double fd_asymmetry = 0;  // worst raw asymmetry before symmetrizing
  std::vector<double> per_seed;  // per-seed Frobenius discrepancies
  int n = 0, k = 0;
};

// Both Hessian estimators on identical realization sets: the frozen-field
// matrix at scale k against centered slope differences of D_xi nu at step
// delta, solved on the same n-cube.
inline CrossValidation cross_validate_d2(
    const CoefficientLaw& law, const NonlinearitySpec& nl, const Vec& xi,
    int n, int k, double delta, std::size_t ensemble,
    std::uint64_t master_seed, double h, const SolverOptions& opts = {},
    const EnsembleOptions& eopts = {}) {
  if (!(delta > 0)) throw ConfigError("cross_validate_d2: delta must be > 0");
  const int dim = xi.dim;

  struct PerSeed {
    SymMat a;
    SymMat f;
    double asym = 0;
  };
  auto results = ensemble_run<PerSeed>(
      ensemble, master_seed,
      [&](std::size_t, std::uint64_t seed) {
        auto real =
            sample_realization(law, nl, centered_box(dim, pow3(n)), seed);
        PerSeed ps;
        ps.a = ahom_frozen(real, n, k, xi, h, opts).ahom;

        std::vector<Vec> cols;
        for (int j = 0; j < dim; ++j) {
          Vec ej(dim);
          ej[j] = 1.0;
          Vec dplus =
              nu_on_cube(real, n, xi + 0.5 * delta * ej, h, opts, false).d_nu;
          Vec dminus =
              nu_on_cube(real, n, xi - 0.5 * delta * ej, h, opts, false).d_nu;
          cols.push_back((1.0 / delta) * (dplus - dminus));
        }
        ps.f = SymMat(dim);
        for (int i = 0; i < dim; ++i)
          for (int j = i; j < dim; ++j) {
            ps.asym = std::max(ps.asym, std::abs(cols[j][i] - cols[i][j]));
            ps.f(i, j) = 0.5 * (cols[j][i] + cols[i][j]);
            ps.f(j, i) = ps.f(i, j);
          }
        return ps;
      },
      eopts);

  CrossValidation cv;
  cv.n = n;
  cv.k = k;
  cv.ahom = SymMat(dim);
  cv.fd = SymMat(dim);
  std::size_t cnt = 0;
  for (const auto& r : results) {
    if (!r) continue;
    ++cnt;
    cv.ahom += r->a;
    cv.fd += r->f;
    cv.fd_asymmetry = std::max(cv.fd_asymmetry, r->asym);
    cv.per_seed.push_back(detail::frob_dist(r->a, r->f));
  }
  if (cnt == 0) throw EnsembleError("cross_validate_d2: all members failed");
  const double N = static_cast<double>(cnt);
  cv.ahom *= 1.0 / N;
  cv.fd *= 1.0 / N;
  cv.discrepancy = detail::frob_dist(cv.ahom, cv.fd);

  if (cnt > 1) {
    double va = 0, vf = 0;
    for (const auto& r : results) {
      if (!r) continue;
      double da = detail::frob_dist(r->a, cv.ahom);
      double df = detail::frob_dist(r->f, cv.fd);
      va += da * da;
      vf += df * df;
    }
    cv.uncertainty = 3.0 * std::sqrt((va + vf) / (N - 1) / N);
  }
  return cv;
}

// Sup over the slope grid of the Frobenius gap between each level's mean
// Hessian and the finest level's, one entry per level (the last is zero).
inline std::vector<double> hessian_level_gaps(
    const CoefficientLaw& law, const NonlinearitySpec& nl,
    const LbarGrid& grid, const std::vector<int>& n_list, std::size_t ensemble,
    std::uint64_t master_seed, double h, const SolverOptions& opts = {},
    const EnsembleOptions& eopts = {}) {
  HomogenizedLagrangian shape;
  shape.dim = grid.dim;
  shape.axes = grid.axes;
  std::vector<double> gaps(n_list.size(), 0.0);
  for (std::size_t t = 0; t < shape.node_count(); ++t) {
    auto est = estimate_Lbar_point(law, nl, grid.dim, shape.flat_xi(t), n_list,
                                   ensemble, master_seed, h, opts, eopts);
    for (std::size_t li = 0; li < est.levels.size(); ++li)
      gaps[li] = std::max(gaps[li], detail::frob_dist(est.levels[li].d2_mean,
                                                      est.levels.back().d2_mean));
  }
  return gaps;
}

}  // namespace nlhomog
