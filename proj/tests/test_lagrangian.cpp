#include <catch2/catch_amalgamated.hpp>

#include "nlhomog/lagrangian.hpp"

using namespace nlhomog;

namespace {

LagrangianRealization make(LawKind law, NonlinKind nl, int dim, int side,
                           std::uint64_t seed, double lo, double hi,
                           double width = 0.25) {
  CoefficientLaw l;
  l.kind = law;
  l.lo = lo;
  l.hi = hi;
  l.width = width;
  NonlinearitySpec n;
  n.kind = nl;
  return sample_realization(l, n, centered_box(dim, side), seed);
}

// deterministic test point stream
double unit(std::uint64_t& s) {
  s = splitmix64(s);
  return uniform01(s);
}

}  // namespace

TEST_CASE("evaluation at p = 0") {
  auto L = make(LawKind::constant, NonlinKind::perturbed_sqrt, 2, 3, 1, 1.0, 1.0);
  Vec x = vec2(0.1, 0.2);
  auto r = L.eval(Vec(2), x);
  REQUIRE(r.value == Catch::Approx(1.0).margin(1e-15));
  REQUIRE(norm2(r.dp) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(r.d2p(0, 0) == Catch::Approx(2.0).margin(1e-15));
  REQUIRE(r.d2p(1, 1) == Catch::Approx(2.0).margin(1e-15));
  REQUIRE(r.d2p(0, 1) == Catch::Approx(0.0).margin(1e-15));

  auto Q = make(LawKind::constant, NonlinKind::quadratic, 2, 3, 1, 1.5, 1.5);
  auto rq = Q.eval(vec2(2.0, 0.0), x);
  REQUIRE(rq.value == Catch::Approx(3.0));
  REQUIRE(rq.dp[0] == Catch::Approx(3.0));
  REQUIRE(rq.d2p(0, 0) == Catch::Approx(1.5));
}

TEST_CASE("perturbed_sqrt Hessian eigenvalues at p=(1,0), a=1") {
  auto L = make(LawKind::constant, NonlinKind::perturbed_sqrt, 2, 3, 1, 1.0, 1.0);
  auto r = L.eval(vec2(1.0, 0.0), Vec(2));
  auto ev = sym_eigenvalues(r.d2p);
  REQUIRE(ev[0] == Catch::Approx(1.0 + std::pow(2.0, -1.5)).epsilon(1e-12));
  REQUIRE(ev[1] == Catch::Approx(1.0 + std::pow(2.0, -0.5)).epsilon(1e-12));
  REQUIRE(r.value == Catch::Approx(0.5 + std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("derivatives match centered finite differences") {
  std::uint64_t s = 42;
  for (NonlinKind nl : {NonlinKind::quadratic, NonlinKind::perturbed_sqrt}) {
    double lo = nl == NonlinKind::quadratic ? 1.0 : 0.0;
    for (int dim = 1; dim <= 3; ++dim) {
      auto L = make(LawKind::iid_uniform, nl, dim, 3, 7, lo, lo + 2.0);
      for (int trial = 0; trial < 8; ++trial) {
        Vec p(dim), x(dim);
        for (int i = 0; i < dim; ++i) {
          p[i] = 4.0 * unit(s) - 2.0;
          x[i] = 2.0 * unit(s) - 1.0;
        }
        auto r = L.eval(p, x);
        const double dstep = 1e-5;
        for (int i = 0; i < dim; ++i) {
          Vec pp = p, pm = p;
          pp[i] += dstep;
          pm[i] -= dstep;
          auto rp = L.eval(pp, x), rm = L.eval(pm, x);
          double fd1 = (rp.value - rm.value) / (2 * dstep);
          REQUIRE(r.dp[i] == Catch::Approx(fd1).epsilon(1e-6).margin(1e-9));
          for (int j = 0; j < dim; ++j) {
            double fd2 = (rp.dp[j] - rm.dp[j]) / (2 * dstep);
            REQUIRE(r.d2p(i, j) ==
                    Catch::Approx(fd2).epsilon(1e-5).margin(1e-8));
          }
        }
      }
    }
  }
}

TEST_CASE("Hessian eigenvalues stay inside [1, Lambda]") {
  std::uint64_t s = 99;
  for (NonlinKind nl : {NonlinKind::quadratic, NonlinKind::perturbed_sqrt}) {
    double lo = nl == NonlinKind::quadratic ? 1.0 : 0.0;
    auto L = make(LawKind::iid_uniform, nl, 2, 9, 11, lo, lo + 3.0);
    double Lam = L.lambda_max();
    REQUIRE(Lam == Catch::Approx(4.0));
    for (int trial = 0; trial < 200; ++trial) {
      Vec p = vec2(20 * unit(s) - 10, 20 * unit(s) - 10);
      Vec x = vec2(8 * unit(s) - 4, 8 * unit(s) - 4);
      auto ev = sym_eigenvalues(L.eval(p, x).d2p);
      REQUIRE(ev[0] >= 1.0 - 1e-12);
      REQUIRE(ev[1] <= Lam + 1e-12);
    }
  }
}

TEST_CASE("sampling is deterministic and box-independent") {
  auto A = make(LawKind::iid_uniform, NonlinKind::quadratic, 2, 9, 123, 1.0, 4.0);
  auto B = make(LawKind::iid_uniform, NonlinKind::quadratic, 2, 9, 123, 1.0, 4.0);
  REQUIRE(A.cell_values() == B.cell_values());

  auto C = make(LawKind::iid_uniform, NonlinKind::quadratic, 2, 9, 124, 1.0, 4.0);
  REQUIRE(A.cell_values() != C.cell_values());

  // stationarity: a wider box reproduces the same values on shared cells
  auto W = make(LawKind::iid_uniform, NonlinKind::quadratic, 2, 27, 123, 1.0, 4.0);
  for (std::int64_t zx = -4; zx <= 4; ++zx)
    for (std::int64_t zy = -4; zy <= 4; ++zy) {
      std::array<std::int64_t, kMaxDim> z{zx, zy, 0};
      REQUIRE(A.raw_cell_value(z) == W.raw_cell_value(z));
      Vec x = vec2(double(zx) + 0.25, double(zy) - 0.25);
      REQUIRE(A.coefficient(x) == W.coefficient(x));
    }
}

TEST_CASE("two-point law hits both atoms with roughly equal frequency") {
  auto L = make(LawKind::iid_two_point, NonlinKind::quadratic, 2, 27, 5, 1.0, 4.0);
  int nlo = 0, nhi = 0;
  for (double v : L.cell_values()) {
    REQUIRE((v == 1.0 || v == 4.0));
    (v == 1.0 ? nlo : nhi)++;
  }
  double frac = double(nlo) / (nlo + nhi);
  REQUIRE(frac > 0.4);
  REQUIRE(frac < 0.6);
}

TEST_CASE("mollified field matches brute-force quadrature of the bump") {
  const double w = 0.375;
  auto L = make(LawKind::mollified_iid, NonlinKind::quadratic, 2, 9, 77, 1.0,
                3.0, w);

  auto psi1 = [&](double t) {
    if (std::abs(t) >= w) return 0.0;
    double u = 1.0 - (t / w) * (t / w);
    return 15.0 / (16.0 * w) * u * u;
  };

  std::uint64_t s = 3;
  for (int trial = 0; trial < 10; ++trial) {
    Vec x = vec2(6 * unit(s) - 3, 6 * unit(s) - 3);
    // midpoint rule per overlapped cell, clipped to the bump support so the
    // integrand is smooth on each patch
    const int N = 640;
    double acc = 0;
    for (std::int64_t zx = static_cast<std::int64_t>(std::floor(x[0] - w));
         zx <= static_cast<std::int64_t>(std::ceil(x[0] + w)); ++zx)
      for (std::int64_t zy = static_cast<std::int64_t>(std::floor(x[1] - w));
           zy <= static_cast<std::int64_t>(std::ceil(x[1] + w)); ++zy) {
        double ax = std::max(zx - 0.5, x[0] - w), bx = std::min(zx + 0.5, x[0] + w);
        double ay = std::max(zy - 0.5, x[1] - w), by = std::min(zy + 0.5, x[1] + w);
        if (ax >= bx || ay >= by) continue;
        double cell = 0;
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < N; ++j) {
            double yx = ax + (i + 0.5) * (bx - ax) / N;
            double yy = ay + (j + 0.5) * (by - ay) / N;
            cell += psi1(x[0] - yx) * psi1(x[1] - yy);
          }
        std::array<std::int64_t, kMaxDim> z{zx, zy, 0};
        acc += cell * (bx - ax) * (by - ay) / (double(N) * N) *
               L.raw_cell_value(z);
      }
    REQUIRE(L.coefficient(x) == Catch::Approx(acc).epsilon(2e-6));
    REQUIRE(L.coefficient(x) >= 1.0);
    REQUIRE(L.coefficient(x) <= 3.0);
  }
}

TEST_CASE("mollified field is Lipschitz at the bump scale") {
  const double w = 0.25;
  auto L = make(LawKind::mollified_iid, NonlinKind::perturbed_sqrt, 2, 9, 8,
                0.0, 1.0, w);
  // |psi1'| <= 15/(16 w^2) * (4/3) / ... conservative numeric bound instead
  std::uint64_t s = 17;
  double max_quot = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Vec x = vec2(6 * unit(s) - 3, 6 * unit(s) - 3);
    Vec y = x;
    y[trial % 2] += 1e-4;
    max_quot = std::max(
        max_quot, std::abs(L.coefficient(x) - L.coefficient(y)) / 1e-4);
  }
  // crude: Lipschitz constant of the convolution is at most range * |psi'|_1
  REQUIRE(max_quot < 50.0);
}

TEST_CASE("law validation") {
  REQUIRE_THROWS_AS(
      make(LawKind::iid_uniform, NonlinKind::quadratic, 2, 3, 1, 0.5, 2.0),
      ConfigError);
  REQUIRE_THROWS_AS(make(LawKind::iid_uniform, NonlinKind::perturbed_sqrt, 2,
                         3, 1, -0.25, 2.0),
                    ConfigError);
  REQUIRE_THROWS_AS(make(LawKind::mollified_iid, NonlinKind::quadratic, 2, 3,
                         1, 1.0, 2.0, 0.75),
                    ConfigError);
  REQUIRE_THROWS_AS(make(LawKind::iid_uniform, NonlinKind::quadratic, 4, 3, 1,
                         1.0, 2.0),
                    ConfigError);
}

TEST_CASE("coefficient lookup outside the sampled box fails") {
  auto L = make(LawKind::iid_uniform, NonlinKind::quadratic, 2, 3, 1, 1.0, 2.0);
  REQUIRE_THROWS_AS(L.coefficient(vec2(5.0, 0.0)), DomainError);
}

TEST_CASE("derived ensemble seeds differ and are reproducible") {
  REQUIRE(derive_seed(1234, 0) == derive_seed(1234, 0));
  REQUIRE(derive_seed(1234, 0) != derive_seed(1234, 1));
  REQUIRE(derive_seed(1234, 1) != derive_seed(4321, 1));
  // nearby masters must not alias each other's seed sets
  REQUIRE(derive_seed(99, 3) != derive_seed(100, 4));
}
