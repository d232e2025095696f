#pragma once

// Negative-norm evaluation through the equivalent Poisson characterization:
// ||g||_{H^-1(U)} = ||grad phi||_{L2(U)} with -Lap phi = g, phi in H^1_0(U),
// reported in volume-normalized form.  For the discrete solution the energy
// identity ||grad phi||^2 = <b, phi> holds, so no gradient field is formed.

#include "nlhomog/solvers.hpp"

namespace nlhomog {

class Hminus1Solver {
 public:
  explicit Hminus1Solver(const MeshDomain& m, double cg_tol = 1e-11)
      : mesh_(&m), cg_tol_(cg_tol) {
    CoeffField id(m.elem_count(), sym_identity(m.dim));
    ScalarField zero(m);
    K_ = detail::assemble_hessian(m, QuadFormModel(id), zero);
  }

  double from_load(const Eigen::VectorXd& b) const {
    if (mesh_->interior_count() == 0) return 0.0;
    Eigen::VectorXd x = solve_spd(K_, b, cg_tol_);
    return std::sqrt(std::max(0.0, b.dot(x)) / mesh_->volume());
  }

  double of_scalar(const ScalarField& g) const {
    return from_load(load_from_scalar(*mesh_, g));
  }

  // componentwise with l2 combination
  double of_vector(const VectorField& G) const {
    if (mesh_->interior_count() == 0) return 0.0;
    double acc = 0;
    std::vector<double> comp(mesh_->elem_count());
    for (int c = 0; c < mesh_->dim; ++c) {
      for (std::size_t e = 0; e < mesh_->elem_count(); ++e)
        comp[e] = G.v[e * mesh_->dim + c];
      Eigen::VectorXd b = load_from_elemwise(*mesh_, comp);
      Eigen::VectorXd x = solve_spd(K_, b, cg_tol_);
      acc += std::max(0.0, b.dot(x));
    }
    return std::sqrt(acc / mesh_->volume());
  }

  // || div F ||_{H^-1} of an elementwise flux
  double of_divergence(const VectorField& F) const {
    return from_load(load_from_divergence(*mesh_, F));
  }

 private:
  const MeshDomain* mesh_;
  double cg_tol_;
  SpMat K_;
};

inline double norm_Hminus1(const ScalarField& g, double cg_tol = 1e-11) {
  return Hminus1Solver(*g.mesh, cg_tol).of_scalar(g);
}
inline double norm_Hminus1(const VectorField& G, double cg_tol = 1e-11) {
  return Hminus1Solver(*G.mesh, cg_tol).of_vector(G);
}

}  // namespace nlhomog
