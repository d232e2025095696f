#pragma once

// Finite-volume cell problems on triadic cubes: the subadditive energy
//   nu(U, xi) = inf { mean_U L(grad u, x) : u = xi.x on the boundary },
// its slope derivative (mean flux of the minimizer), and its Hessian in xi
// assembled from d linearized Dirichlet solves.  Monte Carlo estimates of the
// homogenized Lagrangian come from ensembles of these solves across scales.

#include "nlhomog/ensemble.hpp"
#include "nlhomog/solvers.hpp"

namespace nlhomog {

struct CellProblemResult {
  double nu = 0;
  Vec d_nu;
  SymMat d2_nu;
  bool has_d2 = false;
  SolveReport report;
  ScalarField v;
};

// minimizer of the mean energy over mesh with boundary data xi.x
inline CellProblemResult solve_cell_problem(const MeshDomain& mesh,
                                            const LagrangianRealization& real,
                                            const Vec& xi,
                                            const SolverOptions& opts = {},
                                            bool with_d2 = true) {
  CellProblemResult res;
  RealizationModel model(mesh, real);
  res.v = interpolate(mesh, [&](const Vec& x) { return dot(xi, x); });
  res.report = minimize_energy(mesh, model, res.v, opts);

  res.nu = detail::assemble_energy(mesh, model, res.v) / mesh.volume();

  VectorField gv = gradient(res.v);
  res.d_nu = Vec(mesh.dim);
  CoeffField A(mesh.elem_count());
  for (std::size_t e = 0; e < mesh.elem_count(); ++e) {
    EvalResult ev = model(e, gv.at(e));
    res.d_nu += ev.dp;
    A[e] = ev.d2p;
  }
  res.d_nu *= 1.0 / static_cast<double>(mesh.elem_count());

  if (with_d2) {
    // columns of D_xi grad v solve the linearized problem with slope e_i
    std::vector<VectorField> gw;
    for (int i = 0; i < mesh.dim; ++i) {
      ScalarField bi = interpolate(
          mesh, [&](const Vec& x) { return x[i]; });
      ScalarField wi = solve_linear_dirichlet(mesh, A, bi, opts);
      gw.push_back(gradient(wi));
    }
    res.d2_nu = SymMat(mesh.dim);
    for (std::size_t e = 0; e < mesh.elem_count(); ++e)
      for (int i = 0; i < mesh.dim; ++i) {
        Vec Agi = mat_vec(A[e], gw[static_cast<std::size_t>(i)].at(e));
        for (int j = i; j < mesh.dim; ++j)
          res.d2_nu(i, j) += dot(Agi, gw[static_cast<std::size_t>(j)].at(e));
      }
    for (int i = 0; i < mesh.dim; ++i)
      for (int j = i; j < mesh.dim; ++j) {
        res.d2_nu(i, j) /= static_cast<double>(mesh.elem_count());
        res.d2_nu(j, i) = res.d2_nu(i, j);
      }
    res.has_d2 = true;
  }
  return res;
}

inline CellProblemResult nu_on_cube(const LagrangianRealization& real, int n,
                                    const Vec& xi, double h,
                                    const SolverOptions& opts = {},
                                    bool with_d2 = true,
                                    const std::array<std::int64_t, kMaxDim>&
                                        center = {0, 0, 0}) {
  MeshDomain mesh = mesh_cube(n, h, real.dim(), center);
  return solve_cell_problem(mesh, real, xi, opts, with_d2);
}

// ---------------------------------------------------------------------------

struct SubadditivityResult {
  double lhs = 0;         // nu on the parent cube
  double rhs = 0;         // average over the 3^d children
  double slack = 0;       // rhs - lhs, nonnegative up to solver tolerance
  std::vector<double> children;
};

// Gluing inequality on an arbitrary box partition: the parent value never
// exceeds the equal-volume average over children of side child_side.
inline SubadditivityResult subadditivity_check_box(
    const LagrangianRealization& real, const BoxSpec& parent,
    std::int64_t child_side, const Vec& xi, double h,
    const SolverOptions& opts = {}) {
  const int dim = parent.dim;
  if (child_side <= 0)
    throw ConfigError("subadditivity: child side must be positive");
  std::array<std::int64_t, kMaxDim> counts{1, 1, 1};
  std::size_t total = 1;
  for (int i = 0; i < dim; ++i) {
    if (parent.ext[i] % child_side != 0)
      throw ConfigError("subadditivity: child side must divide the parent");
    counts[i] = parent.ext[i] / child_side;
    total *= static_cast<std::size_t>(counts[i]);
  }
  SubadditivityResult r;
  r.lhs = solve_cell_problem(mesh_box(parent, h), real, xi, opts, false).nu;
  for (std::size_t t = 0; t < total; ++t) {
    std::size_t rem = t;
    BoxSpec child = parent;
    for (int i = 0; i < dim; ++i) {
      std::int64_t j = static_cast<std::int64_t>(
          rem % static_cast<std::size_t>(counts[i]));
      rem /= static_cast<std::size_t>(counts[i]);
      child.lo[i] = parent.lo[i] + j * child_side;
      child.ext[i] = child_side;
    }
    r.children.push_back(
        solve_cell_problem(mesh_box(child, h), real, xi, opts, false).nu);
  }
  for (double v : r.children) r.rhs += v;
  r.rhs /= static_cast<double>(total);
  r.slack = r.rhs - r.lhs;
  return r;
}

inline SubadditivityResult subadditivity_check(const LagrangianRealization& real,
                                               int n, const Vec& xi, double h,
                                               const SolverOptions& opts = {}) {
  return subadditivity_check_box(real, centered_box(real.dim(), pow3(n + 1)),
                                 pow3(n), xi, h, opts);
}

// ---------------------------------------------------------------------------

struct LbarLevelStats {
  int n = 0;
  double nu_mean = 0, nu_se = 0;
  Vec dnu_mean, dnu_se;
  SymMat d2_mean, d2_se;
};

struct LbarPointEstimate {
  Vec xi;
  std::vector<LbarLevelStats> levels;
  // last-level values with the level-gap + 2 stderr uncertainty
  double value = 0, value_unc = 0;
  Vec grad, grad_unc;
  SymMat hess, hess_unc;
};

// Monte Carlo estimate of (Lbar, D Lbar, D^2 Lbar)(xi): ensembles of cell
// problems on nested cubes n in n_list, one realization per seed covering the
// largest cube (common random numbers across levels).
inline LbarPointEstimate estimate_Lbar_point(
    const CoefficientLaw& law, const NonlinearitySpec& nl, int dim,
    const Vec& xi, std::vector<int> n_list, std::size_t ensemble,
    std::uint64_t master_seed, double h, const SolverOptions& opts = {},
    const EnsembleOptions& eopts = {}) {
  if (n_list.empty()) throw ConfigError("estimate_Lbar_point: empty n_list");
  std::sort(n_list.begin(), n_list.end());
  if (ensemble == 0) throw ConfigError("estimate_Lbar_point: empty ensemble");
  const int n_max = n_list.back();

  struct PerSeed {
    std::vector<CellProblemResult> levels;
  };
  auto results = ensemble_run<PerSeed>(
      ensemble, master_seed,
      [&](std::size_t, std::uint64_t seed) {
        LagrangianRealization real = sample_realization(
            law, nl, centered_box(dim, pow3(n_max)), seed);
        PerSeed ps;
        for (int n : n_list) {
          auto r = nu_on_cube(real, n, xi, h, opts, true);
          r.v = ScalarField{};  // fields are not aggregated
          ps.levels.push_back(std::move(r));
        }
        return ps;
      },
      eopts);

  LbarPointEstimate est;
  est.xi = xi;
  for (std::size_t li = 0; li < n_list.size(); ++li) {
    LbarLevelStats st;
    st.n = n_list[li];
    st.dnu_mean = Vec(dim);
    st.dnu_se = Vec(dim);
    st.d2_mean = SymMat(dim);
    st.d2_se = SymMat(dim);
    std::size_t cnt = 0;
    for (const auto& r : results) {
      if (!r) continue;
      ++cnt;
      const auto& c = r->levels[li];
      st.nu_mean += c.nu;
      st.dnu_mean += c.d_nu;
      st.d2_mean += c.d2_nu;
    }
    if (cnt == 0) throw EnsembleError("estimate_Lbar_point: all members failed");
    const double N = static_cast<double>(cnt);
    st.nu_mean /= N;
    st.dnu_mean *= 1.0 / N;
    st.d2_mean *= 1.0 / N;
    if (cnt > 1) {
      double vs = 0;
      Vec vg(dim);
      SymMat vh(dim);
      for (const auto& r : results) {
        if (!r) continue;
        const auto& c = r->levels[li];
        vs += (c.nu - st.nu_mean) * (c.nu - st.nu_mean);
        for (int i = 0; i < dim; ++i) {
          vg[i] += (c.d_nu[i] - st.dnu_mean[i]) * (c.d_nu[i] - st.dnu_mean[i]);
          for (int j = 0; j < dim; ++j)
            vh(i, j) += (c.d2_nu(i, j) - st.d2_mean(i, j)) *
                        (c.d2_nu(i, j) - st.d2_mean(i, j));
        }
      }
      st.nu_se = std::sqrt(vs / (N - 1) / N);
      for (int i = 0; i < dim; ++i) {
        st.dnu_se[i] = std::sqrt(vg[i] / (N - 1) / N);
        for (int j = 0; j < dim; ++j)
          st.d2_se(i, j) = std::sqrt(vh(i, j) / (N - 1) / N);
      }
    }
    est.levels.push_back(st);
  }

  const auto& last = est.levels.back();
  est.value = last.nu_mean;
  est.grad = last.dnu_mean;
  est.hess = last.d2_mean;
  est.grad_unc = Vec(dim);
  est.hess_unc = SymMat(dim);
  if (est.levels.size() >= 2) {
    const auto& prev = est.levels[est.levels.size() - 2];
    est.value_unc = std::abs(last.nu_mean - prev.nu_mean) + 2 * last.nu_se;
    for (int i = 0; i < dim; ++i) {
      est.grad_unc[i] = std::abs(last.dnu_mean[i] - prev.dnu_mean[i]) +
                        2 * last.dnu_se[i];
      for (int j = 0; j < dim; ++j)
        est.hess_unc(i, j) = std::abs(last.d2_mean(i, j) - prev.d2_mean(i, j)) +
                             2 * last.d2_se(i, j);
    }
  } else {
    est.value_unc = 2 * last.nu_se;
    for (int i = 0; i < dim; ++i) {
      est.grad_unc[i] = 2 * last.dnu_se[i];
      for (int j = 0; j < dim; ++j) est.hess_unc(i, j) = 2 * last.d2_se(i, j);
    }
  }
  return est;
}

// ---------------------------------------------------------------------------

// Frozen-gradient coefficient field: partition the mesh box into triadic
// subcubes of side 3^k, solve the nonlinear cell problem with slope xi on
// each, and freeze D^2_p L(grad v, x) elementwise.
namespace detail {

// Solves the k-cube problems tiling `region` (unit cells inside mesh.lat) at
// slope xi and writes D2_pL(grad v, x) into A on the covered elements.
inline void freeze_region(const MeshDomain& mesh,
                          const LagrangianRealization& real, const Vec& xi,
                          int k, const BoxSpec& region,
                          const SolverOptions& opts, CoeffField& A) {
  if (mesh.shape != MeshShape::box)
    throw DomainError("freeze_region needs a box mesh");
  const int dim = mesh.dim;
  const std::int64_t sub = pow3(k);
  std::array<std::int64_t, kMaxDim> counts{};
  for (int i = 0; i < dim; ++i) {
    if (region.ext[i] % sub != 0)
      throw DomainError("freeze_region: region side not divisible by 3^k");
    counts[i] = region.ext[i] / sub;
  }
  std::int64_t total = 1;
  for (int i = 0; i < dim; ++i) total *= counts[i];

  const int nperm = static_cast<int>(mesh.perms.size());
  const std::int64_t cells_h = sub * mesh.per_unit;  // h-cells per subcube axis

  for (std::int64_t t = 0; t < total; ++t) {
    std::int64_t r = t;
    std::array<std::int64_t, kMaxDim> jc{};
    for (int i = dim - 1; i >= 0; --i) {
      jc[i] = r % counts[i];
      r /= counts[i];
    }
    // center of subcube jc: region lo + jc*sub + (sub-1)/2
    std::array<std::int64_t, kMaxDim> center{};
    for (int i = 0; i < dim; ++i)
      center[i] = region.lo[i] + jc[i] * sub + (sub - 1) / 2;
    MeshDomain local = mesh_cube(k, mesh.h, dim, center);
    auto cell = solve_cell_problem(local, real, xi, opts, false);
    VectorField gv = gradient(cell.v);
    RealizationModel lm(local, real);

    std::array<std::int64_t, kMaxDim> gcell{}, lcell{};
    for (std::size_t le = 0; le < local.elem_count(); ++le) {
      // local h-cell of this element, then the parent h-cell
      std::int64_t lr = static_cast<std::int64_t>(le) / nperm;
      int perm = static_cast<int>(le % static_cast<std::size_t>(nperm));
      for (int i = dim - 1; i >= 0; --i) {
        lcell[i] = lr % cells_h;
        lr /= cells_h;
      }
      for (int i = 0; i < dim; ++i)
        gcell[i] = (region.lo[i] - mesh.lat.lo[i]) * mesh.per_unit +
                   jc[i] * cells_h + lcell[i];
      A[mesh.box_element_at(gcell, perm)] = lm(le, gv.at(le)).d2p;
    }
  }
}

}  // namespace detail

inline CoeffField frozen_field(const MeshDomain& mesh,
                               const LagrangianRealization& real, const Vec& xi,
                               int k, const SolverOptions& opts = {}) {
  CoeffField A(mesh.elem_count());
  detail::freeze_region(mesh, real, xi, k, mesh.lat, opts, A);
  return A;
}

struct AhomResult {
  SymMat ahom;
  int n = 0, k = 0;
};

// Homogenized matrix of the frozen linear field by Dirichlet energy:
//   e_i . ahom e_j = mean( grad w_i . a_xi grad w_j ),  w_i = x_i on boundary
inline AhomResult ahom_frozen(const LagrangianRealization& real, int n, int k,
                              const Vec& xi, double h,
                              const SolverOptions& opts = {}) {
  if (k > n) throw ConfigError("ahom_frozen needs k <= n");
  MeshDomain mesh = mesh_cube(n, h, real.dim(), {0, 0, 0});
  CoeffField A = frozen_field(mesh, real, xi, k, opts);

  const int dim = real.dim();
  std::vector<VectorField> gw;
  for (int i = 0; i < dim; ++i) {
    ScalarField bi = interpolate(mesh, [&](const Vec& x) { return x[i]; });
    gw.push_back(gradient(solve_linear_dirichlet(mesh, A, bi, opts)));
  }
  AhomResult res;
  res.n = n;
  res.k = k;
  res.ahom = SymMat(dim);
  for (std::size_t e = 0; e < mesh.elem_count(); ++e)
    for (int i = 0; i < dim; ++i) {
      Vec Agi = mat_vec(A[e], gw[static_cast<std::size_t>(i)].at(e));
      for (int j = i; j < dim; ++j)
        res.ahom(i, j) += dot(Agi, gw[static_cast<std::size_t>(j)].at(e));
    }
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j) {
      res.ahom(i, j) /= static_cast<double>(mesh.elem_count());
      res.ahom(j, i) = res.ahom(i, j);
    }
  return res;
}

}  // namespace nlhomog
