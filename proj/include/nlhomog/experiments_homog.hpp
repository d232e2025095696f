#pragma once

// Dirichlet-problem homogenization harnesses on the cube: the four-solve
// commutativity trial (nonlinear and linearized, heterogeneous against
// homogenized), rate scans over nested scales, and the mesoscopic two-scale
// expansion diagnostic with its locally stationary coefficient field.

#include "nlhomog/ensemble.hpp"
#include "nlhomog/lbar.hpp"
#include "nlhomog/norms.hpp"
#include "nlhomog/stats.hpp"

namespace nlhomog {

enum class ProfileKind { affine, quadratic_bump, sinusoidal };

inline const char* profile_name(ProfileKind k) {
  switch (k) {
    case ProfileKind::affine: return "affine";
    case ProfileKind::quadratic_bump: return "quadratic_bump";
    case ProfileKind::sinusoidal: return "sinusoidal";
  }
  throw ConfigError("profile_name: bad kind");
}

// boundary data g(x) = slope . x + amp * shape(x / side); the perturbation
// gradient stays below amp per component for every profile
struct BoundaryProfile {
  ProfileKind kind = ProfileKind::affine;
  Vec slope;
  double amp = 0;
};

inline double profile_value(const BoundaryProfile& p, const Vec& x,
                            double side) {
  double v = dot(p.slope, x);
  switch (p.kind) {
    case ProfileKind::affine:
      return v;
    case ProfileKind::quadratic_bump:
      return v + p.amp * dot(x, x) / side;
    case ProfileKind::sinusoidal: {
      double s = 0;
      constexpr double pi = 3.141592653589793238462643;
      for (int i = 0; i < x.dim; ++i) s += std::sin(pi * x[i] / side);
      return v + p.amp * side / pi * s;
    }
  }
  throw ConfigError("profile_value: bad kind");
}

inline ScalarField interpolate_profile(const MeshDomain& m,
                                       const BoundaryProfile& p, double side) {
  return interpolate(m, [&](const Vec& x) { return profile_value(p, x, side); });
}

// x-independent energy density from the tabulated homogenized Lagrangian
struct HomogenizedModel {
  const HomogenizedLagrangian* H;
  EvalResult operator()(std::size_t, const Vec& g) const { return H->eval(g); }
};

inline ScalarField solve_homogenized(const MeshDomain& m,
                                     const HomogenizedLagrangian& table,
                                     const ScalarField& bdry,
                                     const SolverOptions& opts = {},
                                     SolveReport* out = nullptr) {
  ScalarField u = bdry;
  SolveReport r = minimize_energy(m, HomogenizedModel{&table}, u, opts);
  if (out) *out = r;
  return u;
}

inline CoeffField homogenized_coefficients(const MeshDomain& m,
                                           const HomogenizedLagrangian& table,
                                           const ScalarField& u) {
  VectorField gu = gradient(u);
  CoeffField A(m.elem_count());
  for (std::size_t e = 0; e < m.elem_count(); ++e)
    A[e] = table.eval(gu.at(e)).d2p;
  return A;
}

struct CommutativitySample {
  int n = 0;
  std::uint64_t seed = 0;
  int profile = 0;
  double err_grad_Hm1 = 0;       // linearized pair, gradients
  double err_flux_Hm1 = 0;       // linearized pair, fluxes
  double err_nonlinear_Hm1 = 0;  // nonlinear pair, gradients
  double norm_f = 0;             // L2 mean of grad f, the relative scale
  int newton_iterations = 0;
};

// the four Dirichlet solves on the n-cube; errors are H^-1 norms divided by
// the box side
inline CommutativitySample commutativity_trial(
    const LagrangianRealization& real, int n,
    const HomogenizedLagrangian& table, const BoundaryProfile& g,
    const BoundaryProfile& f, double h, const SolverOptions& opts = {},
    std::uint64_t seed_tag = 0) {
  const int dim = real.dim();
  MeshDomain mesh = mesh_cube(n, h, dim);
  const double side = static_cast<double>(pow3(n));

  CommutativitySample s;
  s.n = n;
  s.seed = seed_tag;
  s.profile = static_cast<int>(g.kind);

  ScalarField u = interpolate_profile(mesh, g, side);
  RealizationModel het(mesh, real);
  SolveReport rep_u = minimize_energy(mesh, het, u, opts);

  ScalarField uh = interpolate_profile(mesh, g, side);
  SolveReport rep_uh;
  uh = solve_homogenized(mesh, table, uh, opts, &rep_uh);
  s.newton_iterations = rep_u.iterations + rep_uh.iterations;

  ScalarField fI = interpolate_profile(mesh, f, side);
  CoeffField Ahet = linearized_coefficients(mesh, het, u);
  CoeffField Ahom = homogenized_coefficients(mesh, table, uh);
  ScalarField w = solve_linear_dirichlet(mesh, Ahet, fI, opts);
  ScalarField wh = solve_linear_dirichlet(mesh, Ahom, fI, opts);

  Hminus1Solver hm(mesh);
  VectorField gu = gradient(u), guh = gradient(uh);
  VectorField gw = gradient(w), gwh = gradient(wh);
  VectorField diff(mesh), flux(mesh);
  for (std::size_t e = 0; e < mesh.elem_count(); ++e)
    diff.set(e, gu.at(e) - guh.at(e));
  s.err_nonlinear_Hm1 = hm.of_vector(diff) / side;
  for (std::size_t e = 0; e < mesh.elem_count(); ++e)
    diff.set(e, gw.at(e) - gwh.at(e));
  s.err_grad_Hm1 = hm.of_vector(diff) / side;
  for (std::size_t e = 0; e < mesh.elem_count(); ++e)
    flux.set(e, mat_vec(Ahet[e], gw.at(e)) - mat_vec(Ahom[e], gwh.at(e)));
  s.err_flux_Hm1 = hm.of_vector(flux) / side;
  s.norm_f = norm_L2_mean(gradient(fI));
  return s;
}

struct CommutativityScan {
  std::vector<int> n_list;
  // by_n[level][member]; members use common seeds across levels
  std::vector<std::vector<CommutativitySample>> by_n;
};

inline CommutativityScan commutativity_scan(
    const CoefficientLaw& law, const NonlinearitySpec& nl, int dim,
    const HomogenizedLagrangian& table, std::vector<int> n_list,
    std::size_t count, std::uint64_t master_seed, const BoundaryProfile& g,
    const BoundaryProfile& f, double h, const SolverOptions& opts = {},
    const EnsembleOptions& eopts = {}) {
  if (n_list.empty()) throw ConfigError("commutativity_scan: empty n_list");
  std::sort(n_list.begin(), n_list.end());
  const int n_max = n_list.back();

  auto rows = ensemble_run<std::vector<CommutativitySample>>(
      count, master_seed,
      [&](std::size_t, std::uint64_t seed) {
        LagrangianRealization real =
            sample_realization(law, nl, centered_box(dim, pow3(n_max)), seed);
        std::vector<CommutativitySample> per;
        for (int n : n_list)
          per.push_back(
              commutativity_trial(real, n, table, g, f, h, opts, seed));
        return per;
      },
      eopts);

  CommutativityScan scan;
  scan.n_list = n_list;
  scan.by_n.resize(n_list.size());
  for (const auto& r : rows) {
    if (!r) continue;
    for (std::size_t li = 0; li < n_list.size(); ++li)
      scan.by_n[li].push_back((*r)[li]);
  }
  return scan;
}

template <class F>
std::vector<std::vector<double>> extract_levels(const CommutativityScan& scan,
                                                F&& fn) {
  std::vector<std::vector<double>> out;
  for (const auto& level : scan.by_n) {
    std::vector<double> v;
    v.reserve(level.size());
    for (const auto& s : level) v.push_back(fn(s));
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// two-scale expansion

struct Mesoscales {
  int k = 1;  // freezing scale of the coefficient field
  int l = 2;  // corrector / partition-of-unity scale
  int m = 3;  // boundary cutoff scale
};

struct TwoScaleOptions {
  bool zeta_one = false;   // disable the boundary cutoff
  double psi_width = -1;   // mollifier width; <0 picks 3^(l-1), 0 disables
};

struct TwoScaleLedger {
  int k = 0, l = 0, m = 0, n = 0;
  double glue_error = 0;           // partition-of-unity commutator
  double expansion_residual = 0;   // L2 mean of grad(T - wtilde)
  double flux_residual = 0;        // H^-1 norm of div(a grad T) / side
  double wtilde_norm = 0;          // L2 mean of grad wtilde
  double corrector_linf = 0;
};

namespace detail {

inline double b2_spline(double t) {
  double a = std::abs(t);
  if (a <= 0.5) return 0.75 - a * a;
  if (a < 1.5) {
    double u = 1.5 - a;
    return 0.5 * u * u;
  }
  return 0;
}

inline double smoothstep01(double t) {
  t = std::max(0.0, std::min(1.0, t));
  return t * t * (3 - 2 * t);
}

// separable convolution of nodal values with the tensor quartic bump of
// width rho; weights near the boundary renormalize to preserve constants
inline std::vector<double> mollify_nodal(const MeshDomain& m,
                                         const std::vector<double>& in,
                                         double rho) {
  if (rho <= 0) return in;
  std::vector<double> cur = in, next(in.size());
  const std::int64_t reach =
      static_cast<std::int64_t>(std::ceil(rho / m.h + 0.5));
  std::vector<double> W(static_cast<std::size_t>(2 * reach + 1));
  for (std::int64_t o = -reach; o <= reach; ++o) {
    double up = (static_cast<double>(o) + 0.5) * m.h;
    double lo = (static_cast<double>(o) - 0.5) * m.h;
    W[static_cast<std::size_t>(o + reach)] =
        bump_cdf(up, rho) - bump_cdf(lo, rho);
  }
  std::size_t strides[kMaxDim];
  std::size_t total = 1;
  for (int i = m.dim - 1; i >= 0; --i) {
    strides[i] = total;
    total *= static_cast<std::size_t>(m.ngrid[i]);
  }
  for (int axis = 0; axis < m.dim; ++axis) {
    const std::int64_t len = m.ngrid[axis];
    const std::size_t stride = strides[axis];
    for (std::size_t base = 0; base < total; ++base) {
      // walk only the line starts (coordinate 0 along `axis`)
      std::size_t coord = (base / stride) % static_cast<std::size_t>(len);
      if (coord != 0) continue;
      for (std::int64_t i = 0; i < len; ++i) {
        double acc = 0, mass = 0;
        for (std::int64_t o = -reach; o <= reach; ++o) {
          std::int64_t j = i + o;
          if (j < 0 || j >= len) continue;
          double w = W[static_cast<std::size_t>(o + reach)];
          acc += w * cur[base + static_cast<std::size_t>(j) * stride];
          mass += w;
        }
        next[base + static_cast<std::size_t>(i) * stride] = acc / mass;
      }
    }
    std::swap(cur, next);
  }
  return cur;
}

// volume-weighted projection of an elementwise field to nodes
inline std::vector<double> elemwise_to_nodal(const MeshDomain& m,
                                             const std::vector<double>& per_elem) {
  std::vector<double> acc(m.node_count(), 0.0);
  std::vector<double> cnt(m.node_count(), 0.0);
  for (std::size_t e = 0; e < m.elem_count(); ++e)
    for (int k = 0; k < m.nverts(); ++k) {
      auto v = static_cast<std::size_t>(m.vertex(e, k));
      acc[v] += per_elem[e];
      cnt[v] += 1;
    }
  for (std::size_t i = 0; i < acc.size(); ++i)
    if (cnt[i] > 0) acc[i] /= cnt[i];
  return acc;
}

}  // namespace detail

inline TwoScaleLedger two_scale_expansion(
    const LagrangianRealization& real, int n, const Mesoscales& meso,
    const HomogenizedLagrangian& table, const ScalarField& u_hom,
    const BoundaryProfile& f, double h, const SolverOptions& opts = {},
    const TwoScaleOptions& tso = {}) {
  if (!(meso.k < meso.l && meso.l < meso.m && meso.m < n))
    throw ConfigError("two_scale_expansion: need k < l < m < n");
  const MeshDomain& mesh = *u_hom.mesh;
  const int dim = mesh.dim;
  if (mesh.shape != MeshShape::box)
    throw ConfigError("two_scale_expansion: cube mesh required");
  for (int i = 0; i < dim; ++i)
    if (mesh.lat.ext[i] != pow3(n))
      throw ConfigError("two_scale_expansion: mesh is not the n-cube");
  const double side = static_cast<double>(pow3(n));

  TwoScaleLedger led;
  led.k = meso.k;
  led.l = meso.l;
  led.m = meso.m;
  led.n = n;

  // locally stationary coefficient field: slopes frozen per m-cube
  VectorField guh = gradient(u_hom);
  CoeffField afield(mesh.elem_count());
  {
    const std::int64_t sub = pow3(meso.m);
    const std::int64_t per = pow3(n - meso.m);
    const std::int64_t cells_h = sub * mesh.per_unit;
    const int nperm = static_cast<int>(mesh.perms.size());
    std::int64_t total = 1;
    for (int i = 0; i < dim; ++i) total *= per;
    for (std::int64_t t = 0; t < total; ++t) {
      std::int64_t r = t;
      BoxSpec region;
      region.dim = dim;
      std::array<std::int64_t, kMaxDim> jc{};
      for (int i = dim - 1; i >= 0; --i) {
        jc[i] = r % per;
        r /= per;
      }
      for (int i = 0; i < dim; ++i) {
        region.lo[i] = mesh.lat.lo[i] + jc[i] * sub;
        region.ext[i] = sub;
      }
      // mean slope of u_hom over the m-cube
      Vec xi(dim);
      std::int64_t cnt = 0;
      std::array<std::int64_t, kMaxDim> hc{};
      std::int64_t hcells_total = 1;
      for (int i = 0; i < dim; ++i) hcells_total *= cells_h;
      for (std::int64_t u = 0; u < hcells_total; ++u) {
        std::int64_t ur = u;
        for (int i = dim - 1; i >= 0; --i) {
          hc[i] = (region.lo[i] - mesh.lat.lo[i]) * mesh.per_unit +
                  ur % cells_h;
          ur /= cells_h;
        }
        for (int p = 0; p < nperm; ++p) {
          xi += guh.at(mesh.box_element_at(hc, p));
          ++cnt;
        }
      }
      xi *= 1.0 / static_cast<double>(cnt);
      detail::freeze_region(mesh, real, xi, meso.k, region, opts, afield);
    }
  }

  // linearized homogenized reference and its boundary data
  ScalarField fI = interpolate_profile(mesh, f, side);
  CoeffField Ahom = homogenized_coefficients(mesh, table, u_hom);
  ScalarField w_hom = solve_linear_dirichlet(mesh, Ahom, fI, opts);

  // correctors on l-cubes over the 3^(l-1)-lattice partition of unity
  const std::int64_t sp = pow3(meso.l - 1);
  const double spf = static_cast<double>(sp);
  std::vector<std::vector<double>> glued(static_cast<std::size_t>(dim));
  std::vector<VectorField> sharp;
  for (int j = 0; j < dim; ++j) {
    glued[static_cast<std::size_t>(j)].assign(mesh.node_count(), 0.0);
    sharp.emplace_back(mesh);
  }
  double corrector_linf = 0;

  std::array<std::int64_t, kMaxDim> tmin{}, tmax{};
  for (int i = 0; i < dim; ++i) {
    tmin[i] = (mesh.lat.lo[i] - sp) / sp - 2;
    tmax[i] = (mesh.lat.lo[i] + mesh.lat.ext[i] + sp) / sp + 2;
  }
  std::array<std::int64_t, kMaxDim> tt = tmin;
  for (;;) {
    // support box of chi_z, clipped to the domain
    BoxSpec supp;
    supp.dim = dim;
    bool empty = false;
    Vec z(dim);
    for (int i = 0; i < dim; ++i) {
      z[i] = static_cast<double>(tt[i]) * spf;
      std::int64_t lo = tt[i] * sp - (3 * sp - 1) / 2;
      std::int64_t hi = lo + 3 * sp;
      lo = std::max(lo, mesh.lat.lo[i]);
      hi = std::min(hi, mesh.lat.lo[i] + mesh.lat.ext[i]);
      if (lo >= hi) {
        empty = true;
        break;
      }
      supp.lo[i] = lo;
      supp.ext[i] = hi - lo;
    }
    if (!empty) {
      MeshDomain local = mesh_box(supp, h);
      // coefficients restricted to the support
      CoeffField Aloc(local.elem_count());
      const int nperm = static_cast<int>(mesh.perms.size());
      std::array<std::int64_t, kMaxDim> off{};
      for (int i = 0; i < dim; ++i)
        off[i] = (supp.lo[i] - mesh.lat.lo[i]) * mesh.per_unit;
      std::array<std::int64_t, kMaxDim> lc{}, gc{};
      for (std::size_t le = 0; le < local.elem_count(); ++le) {
        std::int64_t lr = static_cast<std::int64_t>(le) / nperm;
        int p = static_cast<int>(le % static_cast<std::size_t>(nperm));
        for (int i = dim - 1; i >= 0; --i) {
          std::int64_t cpa = local.lat.ext[i] * local.per_unit;
          lc[i] = lr % cpa;
          lr /= cpa;
        }
        for (int i = 0; i < dim; ++i) gc[i] = off[i] + lc[i];
        Aloc[le] = afield[mesh.box_element_at(gc, p)];
      }

      for (int j = 0; j < dim; ++j) {
        ScalarField phi;
        if (local.interior_count() == 0)
          phi = ScalarField(local);
        else
          phi = solve_corrector(local, Aloc, basis_vec(dim, j), opts);
        for (double v : phi.v)
          corrector_linf = std::max(corrector_linf, std::abs(v));

        // nodal gluing: chi_z(node) * phi(node)
        std::array<std::int64_t, kMaxDim> goff{};
        for (int i = 0; i < dim; ++i)
          goff[i] = static_cast<std::int64_t>(
              std::llround((local.origin[i] - mesh.origin[i]) / h));
        std::array<std::int64_t, kMaxDim> lg{};
        for (std::size_t ln = 0; ln < local.node_count(); ++ln) {
          std::size_t r = ln;
          for (int i = dim - 1; i >= 0; --i) {
            lg[i] = static_cast<std::int64_t>(
                r % static_cast<std::size_t>(local.ngrid[i]));
            r /= static_cast<std::size_t>(local.ngrid[i]);
          }
          std::array<std::int64_t, kMaxDim> gg{};
          for (int i = 0; i < dim; ++i) gg[i] = goff[i] + lg[i];
          Vec x = local.node(ln);
          double chi = 1;
          for (int i = 0; i < dim; ++i)
            chi *= detail::b2_spline((x[i] - z[i]) / spf);
          if (chi == 0) continue;
          glued[static_cast<std::size_t>(j)][mesh.box_node_at(gg)] +=
              chi * phi.v[ln];
        }

        // elementwise sharp gradient sum: chi_z(bary) * grad phi
        VectorField gphi = gradient(phi);
        for (std::size_t le = 0; le < local.elem_count(); ++le) {
          std::int64_t lr = static_cast<std::int64_t>(le) / nperm;
          int p = static_cast<int>(le % static_cast<std::size_t>(nperm));
          for (int i = dim - 1; i >= 0; --i) {
            std::int64_t cpa = local.lat.ext[i] * local.per_unit;
            lc[i] = lr % cpa;
            lr /= cpa;
          }
          for (int i = 0; i < dim; ++i) gc[i] = off[i] + lc[i];
          std::size_t ge = mesh.box_element_at(gc, p);
          Vec bx = mesh.bary(ge);
          double chi = 1;
          for (int i = 0; i < dim; ++i)
            chi *= detail::b2_spline((bx[i] - z[i]) / spf);
          if (chi == 0) continue;
          sharp[static_cast<std::size_t>(j)].set(
              ge, sharp[static_cast<std::size_t>(j)].at(ge) +
                      chi * gphi.at(le));
        }
      }
    }
    // advance the lattice counter
    int ax = dim - 1;
    for (; ax >= 0; --ax) {
      if (++tt[ax] <= tmax[ax]) break;
      tt[ax] = tmin[ax];
    }
    if (ax < 0) break;
  }
  led.corrector_linf = corrector_linf;

  // glue error: gradient of the glued corrector against the chi-weighted
  // per-cube gradients
  {
    double acc = 0;
    for (int j = 0; j < dim; ++j) {
      ScalarField pj(mesh);
      pj.v = glued[static_cast<std::size_t>(j)];
      VectorField gg = gradient(pj);
      VectorField diffj(mesh);
      for (std::size_t e = 0; e < mesh.elem_count(); ++e)
        diffj.set(e, gg.at(e) - sharp[static_cast<std::size_t>(j)].at(e));
      double nj = norm_L2_mean(diffj);
      acc += nj * nj;
    }
    led.glue_error = std::sqrt(acc);
  }

  // cutoff, mollified homogenized fields, and the ansatz T
  const double rho = tso.psi_width < 0
                         ? static_cast<double>(pow3(meso.l - 1))
                         : tso.psi_width;
  std::vector<double> whm = detail::mollify_nodal(mesh, w_hom.v, rho);
  VectorField gwh = gradient(w_hom);
  std::vector<std::vector<double>> gm(static_cast<std::size_t>(dim));
  for (int j = 0; j < dim; ++j) {
    std::vector<double> per_elem(mesh.elem_count());
    for (std::size_t e = 0; e < mesh.elem_count(); ++e)
      per_elem[e] = gwh.at(e)[j];
    gm[static_cast<std::size_t>(j)] = detail::mollify_nodal(
        mesh, detail::elemwise_to_nodal(mesh, per_elem), rho);
  }

  ScalarField T(mesh);
  const double cutoff_len = static_cast<double>(pow3(meso.m));
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    Vec x = mesh.node(i);
    double dist = side;
    for (int a = 0; a < dim; ++a)
      dist = std::min(dist, 0.5 * side - std::abs(x[a]));
    double zeta =
        tso.zeta_one ? 1.0 : detail::smoothstep01(dist / cutoff_len);
    double corr = 0;
    for (int j = 0; j < dim; ++j)
      corr += gm[static_cast<std::size_t>(j)][i] *
              glued[static_cast<std::size_t>(j)][i];
    T.v[i] = (1 - zeta) * w_hom.v[i] + zeta * (whm[i] + corr);
  }

  // reference solution with the locally stationary coefficients
  ScalarField wt = solve_linear_dirichlet(mesh, afield, fI, opts);
  VectorField gT = gradient(T), gwt = gradient(wt);
  VectorField dT(mesh);
  for (std::size_t e = 0; e < mesh.elem_count(); ++e)
    dT.set(e, gT.at(e) - gwt.at(e));
  led.expansion_residual = norm_L2_mean(dT);
  led.wtilde_norm = norm_L2_mean(gwt);

  VectorField fluxT(mesh);
  for (std::size_t e = 0; e < mesh.elem_count(); ++e)
    fluxT.set(e, mat_vec(afield[e], gT.at(e)));
  Hminus1Solver hm(mesh);
  led.flux_residual = hm.of_divergence(fluxT) / side;
  return led;
}

}  // namespace nlhomog
