#pragma once

// Energy minimization for E(u) = sum_e vol * L(grad u|_e, x_e) - <load, u>
// over P1 fields with fixed boundary values: damped Newton (Armijo
// backtracking) with diagonally preconditioned CG inner solves.
//
// A model is any callable (element index, gradient) -> EvalResult with a
// convex value; linear Dirichlet problems reuse the same machinery through
// QuadFormModel and converge in one Newton step.

#include <Eigen/Sparse>
#include <functional>

#include "nlhomog/mesh.hpp"

namespace nlhomog {

struct SolverOptions {
  double tol = 1e-9;
  int max_newton = 50;
  double armijo = 1e-4;
  int max_backtrack = 40;
};

struct SolveReport {
  int iterations = 0;      // accepted Newton steps
  int cg_iterations = 0;   // summed over inner solves
  double residual = 0.0;   // scaled interior gradient norm at exit
  double scale = 1.0;
  bool converged = false;
};

using SpMat = Eigen::SparseMatrix<double>;

// Relative-residual CG with diagonal preconditioner and the iteration cap
// 50 * sqrt(unknowns).  Throws on stagnation.
inline Eigen::VectorXd solve_spd(const SpMat& K, const Eigen::VectorXd& b,
                                 double rel_tol, int* iters = nullptr) {
  if (K.rows() != K.cols() || K.rows() != b.size())
    throw SolverError("solve_spd: shape mismatch");
  {
    SpMat D = SpMat(K.transpose()) - K;
    if (D.coeffs().size() > 0 &&
        D.coeffs().cwiseAbs().maxCoeff() >
            1e-12 * (1.0 + K.coeffs().cwiseAbs().maxCoeff()))
      throw SolverError("solve_spd: matrix is not symmetric");
  }
  Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper,
                           Eigen::DiagonalPreconditioner<double>>
      cg;
  cg.setTolerance(std::max(rel_tol, 1e-15));
  cg.setMaxIterations(
      50 * static_cast<int>(std::ceil(std::sqrt(double(K.rows())))) + 10);
  cg.compute(K);
  Eigen::VectorXd x = cg.solve(b);
  if (iters) *iters += static_cast<int>(cg.iterations());
  if (cg.info() != Eigen::Success)
    throw SolverError("solve_spd: CG stagnated at relative residual " +
                      std::to_string(cg.error()));
  return x;
}

namespace detail {

template <class Model>
double assemble_energy(const MeshDomain& m, Model&& model,
                       const ScalarField& u) {
  double acc = 0;
  for (std::size_t e = 0; e < m.elem_count(); ++e) {
    Vec g(m.dim);
    for (int k = 0; k < m.nverts(); ++k)
      g += u.v[static_cast<std::size_t>(m.vertex(e, k))] * m.shape_grad(e, k);
    acc += model(e, g).value;
  }
  return acc * m.elem_vol;
}

template <class Model>
void assemble_gradient(const MeshDomain& m, Model&& model,
                       const ScalarField& u, Eigen::VectorXd& grad) {
  grad.setZero(static_cast<Eigen::Index>(m.interior_count()));
  for (std::size_t e = 0; e < m.elem_count(); ++e) {
    Vec g(m.dim);
    for (int k = 0; k < m.nverts(); ++k)
      g += u.v[static_cast<std::size_t>(m.vertex(e, k))] * m.shape_grad(e, k);
    Vec dp = model(e, g).dp;
    for (int k = 0; k < m.nverts(); ++k) {
      std::int32_t id = m.interior_id[static_cast<std::size_t>(m.vertex(e, k))];
      if (id >= 0) grad[id] += m.elem_vol * dot(dp, m.shape_grad(e, k));
    }
  }
}

template <class Model>
SpMat assemble_hessian(const MeshDomain& m, Model&& model,
                       const ScalarField& u) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(m.elem_count() * (m.nverts() * m.nverts()));
  for (std::size_t e = 0; e < m.elem_count(); ++e) {
    Vec g(m.dim);
    for (int k = 0; k < m.nverts(); ++k)
      g += u.v[static_cast<std::size_t>(m.vertex(e, k))] * m.shape_grad(e, k);
    SymMat A = model(e, g).d2p;
    for (int k = 0; k < m.nverts(); ++k) {
      std::int32_t rk = m.interior_id[static_cast<std::size_t>(m.vertex(e, k))];
      if (rk < 0) continue;
      Vec Agk = mat_vec(A, m.shape_grad(e, k));
      for (int l = 0; l < m.nverts(); ++l) {
        std::int32_t rl =
            m.interior_id[static_cast<std::size_t>(m.vertex(e, l))];
        if (rl < 0) continue;
        trip.emplace_back(rk, rl, m.elem_vol * dot(Agk, m.shape_grad(e, l)));
      }
    }
  }
  SpMat K(static_cast<Eigen::Index>(m.interior_count()),
          static_cast<Eigen::Index>(m.interior_count()));
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

}  // namespace detail

// Minimizes the model energy over interior nodes of `u` (boundary values are
// kept fixed; `u` doubles as the initial guess).  `load` is an optional nodal
// linear term indexed by interior id.
template <class Model>
SolveReport minimize_energy(const MeshDomain& m, Model&& model, ScalarField& u,
                            const SolverOptions& opts = {},
                            const Eigen::VectorXd* load = nullptr) {
  SolveReport rpt;
  const auto n = static_cast<Eigen::Index>(m.interior_count());

  // residual convention: gradient 2-norm relative to
  // (1 + initial mean slope) * sqrt(element count)
  Subdomain all = subdomain_all(m);
  double slope0 = norm_L2_mean(gradient(u), all);
  rpt.scale = (1.0 + slope0) * std::sqrt(double(m.elem_count()));
  const double tol_abs = opts.tol * rpt.scale;

  auto energy_of = [&](const ScalarField& w) {
    double E = detail::assemble_energy(m, model, w);
    if (load)
      for (Eigen::Index i = 0; i < n; ++i)
        E -= (*load)[i] * w.v[static_cast<std::size_t>(m.interior_nodes[i])];
    return E;
  };

  // roundoff in the assembled gradient caps the reachable residual; treat a
  // stall below sqrt(eps) as converged rather than a failure
  const double stall_abs =
      std::sqrt(std::numeric_limits<double>::epsilon()) * rpt.scale;

  Eigen::VectorXd g(n);
  double E = energy_of(u);
  double gn_prev = std::numeric_limits<double>::infinity();
  int slow = 0;
  for (int it = 0;; ++it) {
    detail::assemble_gradient(m, model, u, g);
    if (load) g -= *load;
    double gn = g.norm();
    rpt.residual = gn / rpt.scale;
    if (gn <= tol_abs) {
      rpt.converged = true;
      return rpt;
    }
    slow = gn > 0.5 * gn_prev ? slow + 1 : 0;
    gn_prev = gn;
    if (slow >= 6 && gn <= stall_abs) {
      rpt.converged = true;
      return rpt;
    }
    if (it >= opts.max_newton)
      throw SolverError("minimize_energy: no convergence after " +
                        std::to_string(it) + " Newton steps, residual " +
                        std::to_string(rpt.residual));

    SpMat K = detail::assemble_hessian(m, model, u);
    double cg_tol = std::clamp(0.5 * tol_abs / gn, 1e-14, 1e-4);
    Eigen::VectorXd delta = solve_spd(K, -g, cg_tol, &rpt.cg_iterations);

    double slope = g.dot(delta);  // negative for SPD Hessians
    double t = 1.0;
    ScalarField trial = u;
    int bt = 0;
    for (;; ++bt) {
      if (bt > opts.max_backtrack) {
        if (gn <= stall_abs) {
          rpt.converged = true;
          return rpt;
        }
        throw SolverError("minimize_energy: line search failed");
      }
      for (Eigen::Index i = 0; i < n; ++i)
        trial.v[static_cast<std::size_t>(m.interior_nodes[i])] =
            u.v[static_cast<std::size_t>(m.interior_nodes[i])] + t * delta[i];
      double Et = energy_of(trial);
      // an Armijo comparison below the energy's floating-point resolution
      // carries no information; accept the step as long as the energy does
      // not measurably increase, and let the gradient test decide
      double fp_floor = 64 * std::numeric_limits<double>::epsilon() *
                        (std::abs(E) + std::abs(Et));
      if (Et <= E + opts.armijo * t * slope ||
          (std::abs(t * slope) <= fp_floor && Et <= E + fp_floor)) {
        u = trial;
        E = Et;
        break;
      }
      t *= 0.5;
    }
    rpt.iterations = it + 1;
  }
}

// ---------------------------------------------------------------------------
// linear problems

using CoeffField = std::vector<SymMat>;  // one symmetric matrix per element

// 1/2 (g + shift) . A (g + shift)
struct QuadFormModel {
  const CoeffField* A;
  Vec shift;

  explicit QuadFormModel(const CoeffField& a) : A(&a), shift(0) {}
  QuadFormModel(const CoeffField& a, const Vec& s) : A(&a), shift(s) {}

  EvalResult operator()(std::size_t e, Vec g) const {
    if (shift.dim) g += shift;
    EvalResult r;
    r.dp = mat_vec((*A)[e], g);
    r.value = 0.5 * dot(g, r.dp);
    r.d2p = (*A)[e];
    return r;
  }
};

// nonlinear energy of a sampled Lagrangian; coefficients frozen per element
// at the barycenter (one-point quadrature)
struct RealizationModel {
  const LagrangianRealization* real;
  std::vector<double> a;

  RealizationModel(const MeshDomain& m, const LagrangianRealization& r)
      : real(&r), a(m.elem_count()) {
    for (std::size_t e = 0; e < m.elem_count(); ++e)
      a[e] = r.coefficient(m.bary(e));
  }
  EvalResult operator()(std::size_t e, const Vec& g) const {
    return real->eval_frozen(g, a[e]);
  }
};

// coefficients D2_p L(grad u, x), the linearization of a nonlinear state
inline CoeffField linearized_coefficients(const MeshDomain& m,
                                          const RealizationModel& model,
                                          const ScalarField& u) {
  VectorField gu = gradient(u);
  CoeffField A(m.elem_count());
  for (std::size_t e = 0; e < m.elem_count(); ++e)
    A[e] = model(e, gu.at(e)).d2p;
  return A;
}

inline ScalarField solve_linear_dirichlet(const MeshDomain& m,
                                          const CoeffField& A,
                                          const ScalarField& bdry,
                                          const SolverOptions& opts = {},
                                          const Eigen::VectorXd* load = nullptr,
                                          SolveReport* out = nullptr) {
  ScalarField u = bdry;
  SolveReport r = minimize_energy(m, QuadFormModel(A), u, opts, load);
  if (out) *out = r;
  return u;
}

// -div(A (shift + grad phi)) = 0, phi = 0 on the boundary
inline ScalarField solve_corrector(const MeshDomain& m, const CoeffField& A,
                                   const Vec& shift,
                                   const SolverOptions& opts = {},
                                   SolveReport* out = nullptr) {
  ScalarField u(m);
  SolveReport r = minimize_energy(m, QuadFormModel(A, shift), u, opts);
  if (out) *out = r;
  return u;
}

// consistent-mass load vector of a nodal P1 density, restricted to interior
inline Eigen::VectorXd load_from_scalar(const MeshDomain& m,
                                        const ScalarField& g) {
  Eigen::VectorXd b =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.interior_count()));
  const int nv = m.nverts();
  for (std::size_t e = 0; e < m.elem_count(); ++e) {
    double sum = 0;
    for (int k = 0; k < nv; ++k)
      sum += g.v[static_cast<std::size_t>(m.vertex(e, k))];
    for (int k = 0; k < nv; ++k) {
      std::int32_t id = m.interior_id[static_cast<std::size_t>(m.vertex(e, k))];
      if (id >= 0)
        b[id] += m.elem_vol *
                 (sum + g.v[static_cast<std::size_t>(m.vertex(e, k))]) /
                 (nv * (nv + 1));
    }
  }
  return b;
}

// load vector of an elementwise-constant density
inline Eigen::VectorXd load_from_elemwise(const MeshDomain& m,
                                          const std::vector<double>& c) {
  Eigen::VectorXd b =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.interior_count()));
  for (std::size_t e = 0; e < m.elem_count(); ++e) {
    for (int k = 0; k < m.nverts(); ++k) {
      std::int32_t id = m.interior_id[static_cast<std::size_t>(m.vertex(e, k))];
      if (id >= 0) b[id] += m.elem_vol * c[e] / m.nverts();
    }
  }
  return b;
}

// weak divergence of an elementwise flux F: v -> -sum vol F . grad v
inline Eigen::VectorXd load_from_divergence(const MeshDomain& m,
                                            const VectorField& F) {
  Eigen::VectorXd b =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.interior_count()));
  for (std::size_t e = 0; e < m.elem_count(); ++e) {
    Vec f = F.at(e);
    for (int k = 0; k < m.nverts(); ++k) {
      std::int32_t id = m.interior_id[static_cast<std::size_t>(m.vertex(e, k))];
      if (id >= 0) b[id] -= m.elem_vol * dot(f, m.shape_grad(e, k));
    }
  }
  return b;
}

}  // namespace nlhomog
