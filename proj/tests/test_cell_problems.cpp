#include <catch2/catch_amalgamated.hpp>

#include "nlhomog/cell_problems.hpp"

using namespace nlhomog;

namespace {

CoefficientLaw law_of(LawKind k, double lo, double hi) {
  return CoefficientLaw{k, lo, hi, 0.25};
}

double unit(std::uint64_t& s) {
  s = splitmix64(s);
  return uniform01(s);
}

}  // namespace

TEST_CASE("constant coefficients: nu equals the Lagrangian at the slope") {
  auto law = law_of(LawKind::constant, 1.0, 1.0);
  NonlinearitySpec nl{NonlinKind::perturbed_sqrt};
  auto real = sample_realization(law, nl, centered_box(2, 9), 3);
  auto r = nu_on_cube(real, 2, vec2(1.0, 0.0), 0.5);
  REQUIRE(r.nu == Catch::Approx(0.5 + std::sqrt(2.0)).margin(1e-9));
  REQUIRE(r.report.iterations == 0);

  // mean flux and slope Hessian match the frozen closed forms
  REQUIRE(r.d_nu[0] == Catch::Approx(1.0 + 1.0 / std::sqrt(2.0)).margin(1e-9));
  REQUIRE(r.d_nu[1] == Catch::Approx(0.0).margin(1e-10));
  auto ev = sym_eigenvalues(r.d2_nu);
  REQUIRE(ev[0] == Catch::Approx(1.0 + std::pow(2.0, -1.5)).margin(1e-8));
  REQUIRE(ev[1] == Catch::Approx(1.0 + std::pow(2.0, -0.5)).margin(1e-8));
}

TEST_CASE("1d periodic pattern reproduces the harmonic mean") {
  auto law = law_of(LawKind::periodic_two_point, 1.0, 4.0);
  NonlinearitySpec nl{NonlinKind::quadratic};
  // two cells (values 4,1): harmonic mean 1.6, nu = 0.8 xi^2
  auto real = sample_realization(law, nl, centered_box(1, 2), 0);
  MeshDomain mesh = mesh_box(centered_box(1, 2), 1.0);
  auto r = solve_cell_problem(mesh, real, vec1(1.0), {}, false);
  REQUIRE(r.nu == Catch::Approx(0.8).margin(1e-10));

  MeshDomain fine = mesh_box(centered_box(1, 2), 0.125);
  auto rf = solve_cell_problem(fine, real, vec1(1.0), {}, false);
  REQUIRE(rf.nu == Catch::Approx(0.8).margin(1e-10));

  // larger even box, still alternating
  auto real2 = sample_realization(law, nl, centered_box(1, 8), 0);
  MeshDomain wide = mesh_box(centered_box(1, 8), 0.5);
  auto rw = solve_cell_problem(wide, real2, vec1(1.5), {}, false);
  REQUIRE(rw.nu == Catch::Approx(0.8 * 1.5 * 1.5).margin(1e-9));
}

TEST_CASE("1d triadic periodic cube: exact slack against hand computation") {
  auto law = law_of(LawKind::periodic_two_point, 1.0, 4.0);
  NonlinearitySpec nl{NonlinKind::quadratic};
  auto real = sample_realization(law, nl, centered_box(1, 3), 0);
  auto r = subadditivity_check(real, 0, vec1(1.0), 0.5);
  // parent cells (4,1,4): nu = 1; children 2, 0.5, 2
  REQUIRE(r.lhs == Catch::Approx(1.0).margin(1e-10));
  REQUIRE(r.children[0] == Catch::Approx(2.0).margin(1e-12));
  REQUIRE(r.children[1] == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(r.children[2] == Catch::Approx(2.0).margin(1e-12));
  REQUIRE(r.slack == Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("periodic box split into whole periods glues with zero slack") {
  auto law = law_of(LawKind::periodic_two_point, 1.0, 4.0);
  NonlinearitySpec nl{NonlinKind::quadratic};
  auto real = sample_realization(law, nl, centered_box(1, 4), 0);
  double xi = 1.3;
  auto r = subadditivity_check_box(real, centered_box(1, 4), 2, vec1(xi), 0.5);
  // every piece sees one full (1,4) period: harmonic mean 1.6 on both sides
  REQUIRE(r.lhs == Catch::Approx(0.8 * xi * xi).margin(1e-9));
  REQUIRE(r.rhs == Catch::Approx(0.8 * xi * xi).margin(1e-9));
  REQUIRE(std::abs(r.slack) <= 1e-9);
}

TEST_CASE("constant coefficients glue with zero slack") {
  auto law = law_of(LawKind::constant, 1.0, 1.0);
  NonlinearitySpec nl{NonlinKind::perturbed_sqrt};
  auto real = sample_realization(law, nl, centered_box(2, 3), 0);
  auto r = subadditivity_check(real, 0, vec2(1.0, 0.0), 0.5);
  REQUIRE(r.lhs == Catch::Approx(0.5 + std::sqrt(2.0)).margin(1e-9));
  REQUIRE(std::abs(r.slack) <= 1e-9);
}

TEST_CASE("subadditivity slack is nonnegative across seeds") {
  NonlinearitySpec nl{NonlinKind::perturbed_sqrt};
  auto law = law_of(LawKind::iid_uniform, 0.0, 2.0);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto real = sample_realization(law, nl, centered_box(2, 3), seed);
    auto r = subadditivity_check(real, 0, vec2(1.0, -0.5), 0.5);
    REQUIRE(r.slack >= -1e-8);
  }
  auto lawq = law_of(LawKind::iid_two_point, 1.0, 4.0);
  NonlinearitySpec nlq{NonlinKind::quadratic};
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto real = sample_realization(lawq, nlq, centered_box(1, 9), seed);
    auto r = subadditivity_check(real, 1, vec1(0.7), 0.5);
    REQUIRE(r.slack >= -1e-8);
  }
}

TEST_CASE("slope derivative matches finite differences of nu") {
  NonlinearitySpec nl{NonlinKind::perturbed_sqrt};
  auto law = law_of(LawKind::iid_uniform, 0.0, 1.5);
  auto real = sample_realization(law, nl, centered_box(2, 3), 11);
  Vec xi = vec2(0.8, -0.4);
  auto r = nu_on_cube(real, 1, xi, 0.5);

  const double step = 1e-3;
  for (int i = 0; i < 2; ++i) {
    Vec xp = xi, xm = xi;
    xp[i] += step;
    xm[i] -= step;
    double fd = (nu_on_cube(real, 1, xp, 0.5, {}, false).nu -
                 nu_on_cube(real, 1, xm, 0.5, {}, false).nu) /
                (2 * step);
    REQUIRE(r.d_nu[i] == Catch::Approx(fd).epsilon(1e-4).margin(1e-8));
  }
}

TEST_CASE("slope Hessian matches finite differences of the flux") {
  NonlinearitySpec nl{NonlinKind::perturbed_sqrt};
  auto law = law_of(LawKind::iid_two_point, 0.0, 1.0);
  auto real = sample_realization(law, nl, centered_box(2, 3), 17);
  Vec xi = vec2(0.5, 0.25);
  SolverOptions tight;
  tight.tol = 1e-11;
  auto r = nu_on_cube(real, 1, xi, 0.5, tight);

  const double step = 1e-2;
  for (int j = 0; j < 2; ++j) {
    Vec xp = xi, xm = xi;
    xp[j] += step;
    xm[j] -= step;
    auto rp = nu_on_cube(real, 1, xp, 0.5, tight, false);
    auto rm = nu_on_cube(real, 1, xm, 0.5, tight, false);
    for (int i = 0; i < 2; ++i) {
      double fd = (rp.d_nu[i] - rm.d_nu[i]) / (2 * step);
      REQUIRE(r.d2_nu(i, j) == Catch::Approx(fd).epsilon(1e-3).margin(1e-6));
    }
  }
  // symmetric by construction, eigenvalues inside [1, Lambda]
  REQUIRE(r.d2_nu(0, 1) == r.d2_nu(1, 0));
  auto ev = sym_eigenvalues(r.d2_nu);
  REQUIRE(ev[0] >= 1.0 - 1e-9);
  REQUIRE(ev[1] <= real.lambda_max() + 1e-9);
}

TEST_CASE("nu is uniformly convex in the slope") {
  NonlinearitySpec nl{NonlinKind::perturbed_sqrt};
  auto law = law_of(LawKind::iid_uniform, 0.0, 2.0);
  auto real = sample_realization(law, nl, centered_box(2, 3), 23);
  const double Lam = real.lambda_max();
  std::uint64_t s = 5;
  for (int trial = 0; trial < 25; ++trial) {
    Vec x1 = vec2(3 * unit(s) - 1.5, 3 * unit(s) - 1.5);
    Vec x2 = vec2(3 * unit(s) - 1.5, 3 * unit(s) - 1.5);
    auto r1 = nu_on_cube(real, 1, x1, 0.5, {}, false);
    auto r2 = nu_on_cube(real, 1, x2, 0.5, {}, false);
    Vec d = x2 - x1;
    double lin = r2.nu - r1.nu - dot(r1.d_nu, d);
    REQUIRE(lin >= 0.5 * dot(d, d) - 1e-8);
    REQUIRE(lin <= 0.5 * Lam * dot(d, d) + 1e-8);
  }
}

TEST_CASE("1d two-point ensemble estimate converges to the harmonic mean") {
  auto law = law_of(LawKind::iid_two_point, 1.0, 4.0);
  NonlinearitySpec nl{NonlinKind::quadratic};
  // E[1/a] = (1 + 1/4)/2 = 5/8, Lbar(xi) = 0.8 xi^2 / 2 * 2 -> 0.8 at xi=1...
  // Lbar(xi) = 1/2 (E[1/a])^-1 xi^2 = 0.8 xi^2
  auto est = estimate_Lbar_point(law, nl, 1, vec1(1.0), {2, 3}, 64, 1234, 0.5);
  REQUIRE(std::abs(est.value - 0.8) <= est.value_unc + 0.02);
  // means are nonincreasing in the scale up to noise
  REQUIRE(est.levels[1].nu_mean <=
          est.levels[0].nu_mean + 2 * (est.levels[0].nu_se +
                                       est.levels[1].nu_se));
  // derivative estimate: D Lbar = 1.6 xi
  REQUIRE(std::abs(est.grad[0] - 1.6) <= est.grad_unc[0] + 0.05);
  // Hessian estimate: D^2 Lbar = 1.6
  REQUIRE(std::abs(est.hess(0, 0) - 1.6) <= est.hess_unc(0, 0) + 0.1);
}

TEST_CASE("ensemble reruns are bit-identical and seeds decorrelate members") {
  auto law = law_of(LawKind::iid_uniform, 1.0, 3.0);
  NonlinearitySpec nl{NonlinKind::quadratic};
  auto a = estimate_Lbar_point(law, nl, 1, vec1(1.0), {1}, 8, 99, 0.5);
  auto b = estimate_Lbar_point(law, nl, 1, vec1(1.0), {1}, 8, 99, 0.5);
  REQUIRE(a.value == b.value);
  REQUIRE(a.levels[0].nu_se == b.levels[0].nu_se);
  auto c = estimate_Lbar_point(law, nl, 1, vec1(1.0), {1}, 8, 100, 0.5);
  REQUIRE(a.value != c.value);
  REQUIRE(a.levels[0].nu_se > 0.0);
}

TEST_CASE("ensemble runner: slot order is fixed and failures are capped") {
  std::vector<EnsembleFailure> fails;
  EnsembleOptions opts;
  opts.workers = 4;
  opts.max_failure_frac = 0.25;
  auto out = ensemble_run<double>(
      20, 42,
      [](std::size_t i, std::uint64_t seed) {
        if (i == 3 || i == 11) throw SolverError("stalled");
        return double(splitmix64(seed) % 1000) + double(i);
      },
      opts, &fails);
  REQUIRE(out.size() == 20);
  REQUIRE(fails.size() == 2);
  REQUIRE(fails[0].index == 3);
  REQUIRE(fails[1].index == 11);

  EnsembleOptions serial;
  auto ref = ensemble_run<double>(
      20, 42,
      [](std::size_t i, std::uint64_t seed) {
        if (i == 3 || i == 11) throw SolverError("stalled");
        return double(splitmix64(seed) % 1000) + double(i);
      },
      serial, &fails);
  for (std::size_t i = 0; i < 20; ++i)
    if (i != 3 && i != 11) REQUIRE(out[i] == ref[i]);

  EnsembleOptions strict;
  strict.max_failure_frac = 0.05;
  REQUIRE_THROWS_AS(ensemble_run<double>(
                        20, 42,
                        [](std::size_t i, std::uint64_t) {
                          if (i % 2 == 0) throw SolverError("bad");
                          return 1.0;
                        },
                        strict, nullptr),
                    EnsembleError);
}

TEST_CASE("frozen-field homogenized matrix: constant law is exact") {
  auto law = law_of(LawKind::constant, 1.0, 1.0);
  NonlinearitySpec nl{NonlinKind::perturbed_sqrt};
  auto real = sample_realization(law, nl, centered_box(2, 9), 0);
  Vec xi = vec2(1.0, 0.0);
  auto res = ahom_frozen(real, 2, 1, xi, 0.5);
  // frozen coefficients are D^2_p L(xi) everywhere
  auto d2 = real.eval_frozen(xi, 1.0).d2p;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      REQUIRE(res.ahom(i, j) == Catch::Approx(d2(i, j)).margin(1e-9));
}

TEST_CASE("frozen-field matrix ignores the slope for quadratic models") {
  auto law = law_of(LawKind::iid_uniform, 1.0, 4.0);
  NonlinearitySpec nl{NonlinKind::quadratic};
  auto real = sample_realization(law, nl, centered_box(2, 9), 7);
  auto r1 = ahom_frozen(real, 2, 1, vec2(1.0, 0.0), 0.5);
  auto r2 = ahom_frozen(real, 2, 1, vec2(-0.3, 0.9), 0.5);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      REQUIRE(r1.ahom(i, j) == Catch::Approx(r2.ahom(i, j)).margin(1e-10));
  // symmetric, elliptic
  auto ev = sym_eigenvalues(r1.ahom);
  REQUIRE(ev[0] >= 1.0 - 1e-9);
  REQUIRE(ev[1] <= 4.0 + 1e-9);
}

TEST_CASE("frozen field at k = n reduces to the single cell problem") {
  auto law = law_of(LawKind::iid_uniform, 0.5, 1.5);
  NonlinearitySpec nl{NonlinKind::perturbed_sqrt};
  auto real = sample_realization(law, nl, centered_box(2, 3), 13);
  Vec xi = vec2(0.6, 0.2);
  auto res = ahom_frozen(real, 1, 1, xi, 0.5);
  auto cell = nu_on_cube(real, 1, xi, 0.5, {}, true);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      REQUIRE(res.ahom(i, j) ==
              Catch::Approx(cell.d2_nu(i, j)).margin(1e-9));
}
