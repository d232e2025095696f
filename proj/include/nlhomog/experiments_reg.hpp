#pragma once

// Interior regularity diagnostics on lattice balls: Lipschitz scans for
// differences of solutions and for linearized solutions, normalized corrector
// differences, the superlinear linearization error, and first-order excess
// decay against finite-volume surrogates.

#include <limits>

#include "nlhomog/experiments_homog.hpp"

namespace nlhomog {

constexpr double kNoMinimalScale = std::numeric_limits<double>::infinity();

struct RadiusScan {
  std::uint64_t seed = 0;
  double R = 0;
  std::vector<double> radii;   // increasing
  std::vector<double> values;  // one per radius, >= 0
  double reference = 0;
  double minimal_scale_hat = kNoMinimalScale;  // in radii, or +inf
};

namespace detail {

// powers of 2 times h clipped to [lo, hi]
inline std::vector<double> dyadic_radii(double h, double lo, double hi) {
  std::vector<double> out;
  for (double r = h; r <= hi + 1e-12; r *= 2)
    if (r >= lo - 1e-12) out.push_back(r);
  return out;
}

// smallest scanned radius after which every value stays below the threshold
inline double minimal_scale(const std::vector<double>& radii,
                            const std::vector<double>& values,
                            double threshold) {
  double hat = kNoMinimalScale;
  double worst = 0;
  for (std::size_t j = radii.size(); j-- > 0;) {
    worst = std::max(worst, values[j]);
    if (worst <= threshold) hat = radii[j];
  }
  return hat;
}

inline ScalarField nodal_sum(const ScalarField& a, const ScalarField& b) {
  ScalarField out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
  return out;
}

inline ScalarField nodal_diff(const ScalarField& a, const ScalarField& b) {
  ScalarField out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.v[i];
  return out;
}

inline double ls_slope(const std::vector<double>& x,
                       const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    den += (x[i] - mx) * (x[i] - mx);
  }
  return num / den;
}

}  // namespace detail

// Gradient of u - v on interior balls against the whole-ball amplitude of
// u - v; u and v share the realization and differ by f in their boundary
// data. The minimal scale is the smallest scanned radius from which the
// Lipschitz ratio stays below K_ratio.
inline RadiusScan difference_lipschitz_scan(const LagrangianRealization& real,
                                            double R,
                                            const BoundaryProfile& g,
                                            const BoundaryProfile& f,
                                            double K_ratio, double h,
                                            const SolverOptions& opts = {},
                                            std::uint64_t seed_tag = 0) {
  MeshDomain mesh = mesh_ball(R, h, real.dim());
  const double side = 2.0 * R;
  RealizationModel model(mesh, real);

  ScalarField u = interpolate_profile(mesh, g, side);
  minimize_energy(mesh, model, u, opts);
  ScalarField v = detail::nodal_sum(interpolate_profile(mesh, g, side),
                                    interpolate_profile(mesh, f, side));
  minimize_energy(mesh, model, v, opts);

  ScalarField d = detail::nodal_diff(u, v);
  VectorField gd = gradient(d);

  RadiusScan scan;
  scan.seed = seed_tag;
  scan.R = R;
  scan.reference = norm_L2_mean(d) / R;
  scan.radii = detail::dyadic_radii(h, 4 * h, R / 2);
  Vec center(mesh.dim);
  for (double r : scan.radii)
    scan.values.push_back(norm_L2_mean(gd, subdomain_ball(mesh, r, center)));
  scan.minimal_scale_hat =
      detail::minimal_scale(scan.radii, scan.values, K_ratio * scan.reference);
  return scan;
}

// Same scan for the linearized solution w around u, with the centered
// whole-ball amplitude of w as reference.
inline RadiusScan linearized_lipschitz_scan(const LagrangianRealization& real,
                                            double R,
                                            const BoundaryProfile& g,
                                            const BoundaryProfile& f,
                                            double K_ratio, double h,
                                            const SolverOptions& opts = {},
                                            std::uint64_t seed_tag = 0) {
  MeshDomain mesh = mesh_ball(R, h, real.dim());
  const double side = 2.0 * R;
  RealizationModel model(mesh, real);

  ScalarField u = interpolate_profile(mesh, g, side);
  minimize_energy(mesh, model, u, opts);
  CoeffField A = linearized_coefficients(mesh, model, u);
  ScalarField w =
      solve_linear_dirichlet(mesh, A, interpolate_profile(mesh, f, side), opts);
  VectorField gw = gradient(w);

  RadiusScan scan;
  scan.seed = seed_tag;
  scan.R = R;
  scan.reference = norm_L2_mean_centered(w, subdomain_all(mesh)) / R;
  scan.radii = detail::dyadic_radii(h, 4 * h, R / 2);
  Vec center(mesh.dim);
  for (double r : scan.radii)
    scan.values.push_back(norm_L2_mean(gw, subdomain_ball(mesh, r, center)));
  scan.minimal_scale_hat =
      detail::minimal_scale(scan.radii, scan.values, K_ratio * scan.reference);
  return scan;
}

// Normalized gradient difference of two finite-volume minimizers on the
// 3^N cube, scanned on interior balls up to 3^N / 4; values are already
// divided by |xi1 - xi2| and the reference is 1.
inline RadiusScan corrector_difference(const CoefficientLaw& law,
                                       const NonlinearitySpec& nonlin, int N,
                                       const Vec& xi1, const Vec& xi2,
                                       std::uint64_t seed, double h,
                                       const SolverOptions& opts = {}) {
  Vec dxi = xi1 - xi2;
  const double sep = std::sqrt(dot(dxi, dxi));
  if (!(sep > 0)) throw ConfigError("corrector_difference: xi1 == xi2");
  const int dim = xi1.dim;
  auto real =
      sample_realization(law, nonlin, centered_box(dim, pow3(N)), seed);
  MeshDomain mesh = mesh_cube(N, h, dim);

  auto r1 = solve_cell_problem(mesh, real, xi1, opts, false);
  auto r2 = solve_cell_problem(mesh, real, xi2, opts, false);
  ScalarField d = detail::nodal_diff(r1.v, r2.v);
  VectorField gd = gradient(d);

  RadiusScan scan;
  scan.seed = seed;
  scan.R = static_cast<double>(pow3(N)) / 4.0;
  scan.reference = 1.0;
  scan.radii = detail::dyadic_radii(h, 4 * h, scan.R);
  Vec center(dim);
  for (double r : scan.radii)
    scan.values.push_back(norm_L2_mean(gd, subdomain_ball(mesh, r, center)) /
                          sep);
  scan.minimal_scale_hat = detail::minimal_scale(scan.radii, scan.values, 10.0);
  return scan;
}

struct LinearizationFit {
  std::vector<double> s_list;
  std::vector<double> errors;  // L2 means of grad(u[g+sf] - u[g] - s w)
  double slope = 0;            // log error against log s
  bool inconclusive = false;   // too few errors above the solver noise floor
};

// Error of the first-order expansion u[g+sf] ~ u[g] + s w over a geometric
// list of perturbation sizes; w is linearized around u[g] once. Errors below
// 100x the solver tolerance are excluded from the fit.
inline LinearizationFit superlinear_linearization(
    const LagrangianRealization& real, int n, const BoundaryProfile& g,
    const BoundaryProfile& f, const std::vector<double>& s_list, double h,
    const SolverOptions& opts = {}) {
  const int dim = real.dim();
  MeshDomain mesh = mesh_cube(n, h, dim);
  const double side = static_cast<double>(pow3(n));
  RealizationModel model(mesh, real);

  ScalarField gI = interpolate_profile(mesh, g, side);
  ScalarField u0 = gI;
  minimize_energy(mesh, model, u0, opts);
  CoeffField A = linearized_coefficients(mesh, model, u0);
  ScalarField fI = interpolate_profile(mesh, f, side);
  ScalarField w = solve_linear_dirichlet(mesh, A, fI, opts);

  LinearizationFit fit;
  fit.s_list = s_list;
  for (double s : s_list) {
    ScalarField us = u0;
    for (std::size_t i = 0; i < us.v.size(); ++i)
      us.v[i] = gI.v[i] + s * fI.v[i];
    minimize_energy(mesh, model, us, opts);
    ScalarField comb = us;
    for (std::size_t i = 0; i < comb.v.size(); ++i)
      comb.v[i] -= u0.v[i] + s * w.v[i];
    fit.errors.push_back(norm_L2_mean(gradient(comb)));
  }

  std::vector<double> lx, ly;
  const double floor = 100.0 * opts.tol;
  for (std::size_t i = 0; i < s_list.size(); ++i)
    if (fit.errors[i] >= floor) {
      lx.push_back(std::log(s_list[i]));
      ly.push_back(std::log(fit.errors[i]));
    }
  if (lx.size() < 3) {
    fit.inconclusive = true;
    return fit;
  }
  fit.slope = detail::ls_slope(lx, ly);
  return fit;
}

struct ExcessFit {
  std::vector<double> radii;
  std::vector<double> excess;
  double exponent = 0;
  Vec xi_star;
  bool degenerate = false;  // excess at the noise floor, exponent undefined
};

// Distance of u to the best finite-volume surrogate (a cell minimizer with
// affine data xi.x plus a constant) on shrinking balls; xi ranges over a
// 3^d grid around xi_match, or around the mean slope of u when xi_match is
// empty, and is fixed at the smallest-radius winner before the decay fit.
inline ExcessFit excess_decay_fit(const LagrangianRealization& real, double R,
                                  const BoundaryProfile& g, const Vec& xi_match,
                                  double h, const SolverOptions& opts = {},
                                  double grid_step = 0.05) {
  const int dim = real.dim();
  const BoxSpec& box = real.box();
  int minext = box.ext[0];
  for (int i = 1; i < dim; ++i) minext = std::min(minext, box.ext[i]);
  if (4.0 * R > static_cast<double>(minext))
    throw ConfigError("excess_decay_fit: need R <= box side / 4");

  MeshDomain mesh = mesh_box(box, h);
  const double side = static_cast<double>(minext);
  RealizationModel model(mesh, real);
  ScalarField u = interpolate_profile(mesh, g, side);
  minimize_energy(mesh, model, u, opts);

  Vec center_xi(dim);
  if (xi_match.dim > 0) {
    center_xi = xi_match;
  } else {
    Vec z(dim);
    center_xi = mean(gradient(u), subdomain_ball(mesh, R, z));
  }

  ExcessFit fit;
  fit.radii = detail::dyadic_radii(h, std::max(4 * h, R / 16), R / 2);
  if (fit.radii.empty())
    throw ConfigError("excess_decay_fit: no radii between 4h and R/2");

  Vec z(dim);
  std::vector<Subdomain> balls;
  for (double r : fit.radii) balls.push_back(subdomain_ball(mesh, r, z));

  // grid search: surrogate quality judged on the smallest ball
  std::int64_t npts = 1;
  for (int i = 0; i < dim; ++i) npts *= 3;
  double best = std::numeric_limits<double>::infinity();
  ScalarField vbest;
  for (std::int64_t t = 0; t < npts; ++t) {
    Vec xi = center_xi;
    std::int64_t r = t;
    for (int i = 0; i < dim; ++i) {
      xi[i] += grid_step * static_cast<double>(r % 3 - 1);
      r /= 3;
    }
    auto cell = solve_cell_problem(mesh, real, xi, opts, false);
    double e0 =
        norm_L2_mean_centered(detail::nodal_diff(u, cell.v), balls.front());
    if (e0 < best) {
      best = e0;
      fit.xi_star = xi;
      vbest = cell.v;
    }
  }

  ScalarField d = detail::nodal_diff(u, vbest);
  for (const Subdomain& b : balls)
    fit.excess.push_back(norm_L2_mean_centered(d, b));

  const double floor = 100.0 * opts.tol;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < fit.radii.size(); ++i)
    if (fit.excess[i] >= floor) {
      lx.push_back(std::log(fit.radii[i]));
      ly.push_back(std::log(fit.excess[i]));
    }
  if (lx.size() < 2) {
    fit.degenerate = true;
    return fit;
  }
  fit.exponent = detail::ls_slope(lx, ly);
  return fit;
}

}  // namespace nlhomog
