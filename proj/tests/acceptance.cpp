// Acceptance gate: end-to-end checks of the numerical laboratory against
// closed-form controls, oracle values, and pinned regression fixtures.
// Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "nlhomog/cell_problems.hpp"
#include "nlhomog/experiments_homog.hpp"
#include "nlhomog/experiments_lbar.hpp"
#include "nlhomog/experiments_reg.hpp"
#include "nlhomog/io.hpp"
#include "nlhomog/lbar.hpp"
#include "nlhomog/stats.hpp"

using namespace nlhomog;

namespace {

struct Gate {
  int failures = 0;
  int index = 0;

  void run(const char* name, const std::function<std::string(bool&)>& body) {
    ++index;
    auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string note;
    try {
      note = body(ok);
    } catch (const std::exception& e) {
      ok = false;
      note = std::string("exception: ") + e.what();
    }
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("[%s] %d %-34s %s (%.1fs)\n", ok ? "PASS" : "FAIL", index,
                name, note.c_str(), secs);
    std::fflush(stdout);
    if (!ok) ++failures;
  }
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

bool within(double x, double ref, double band) {
  return std::abs(x - ref) <= band * std::abs(ref);
}

double quadratic_value(double a, const Vec& p) { return 0.5 * a * dot(p, p); }

double sqrt_value(double a, const Vec& p) {
  return 0.5 * dot(p, p) + a * std::sqrt(1.0 + dot(p, p));
}

// deterministic stream of uniforms in [-1, 1]
double signed_uniform(std::uint64_t stream, std::uint64_t t) {
  return 2.0 * uniform01(splitmix64(derive_seed(stream, t))) - 1.0;
}

double slope_of(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / sxx;
}

double frob_norm(const SymMat& m, int dim) {
  double s = 0;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) s += m(i, j) * m(i, j);
  return std::sqrt(s);
}

const NonlinearitySpec kQuad{NonlinKind::quadratic};
const NonlinearitySpec kSqrt{NonlinKind::perturbed_sqrt};
const CoefficientLaw kIid{LawKind::iid_uniform, 1.0, 4.0, 0.25};
const CoefficientLaw kTwo{LawKind::iid_two_point, 1.0, 4.0, 0.25};

}  // namespace

int main() {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  Gate gate;

  // 1. Constant coefficients: the cell value equals the integrand, the
  //    heterogeneous and homogenized solves coincide, and corrector
  //    differences are exactly affine.
  gate.run("constant-coefficient controls", [](bool& ok) {
    CoefficientLaw cq{LawKind::constant, 2.0, 2.0, 0.25};
    CoefficientLaw cs{LawKind::constant, 0.5, 0.5, 0.25};
    double worst_nu = 0;
    std::vector<Vec> xis = {vec2(0.7, 0.0), vec2(0.4, -0.2), vec2(1.0, 1.0)};
    for (int n : {1, 2}) {
      auto rq = sample_realization(cq, kQuad, centered_box(2, pow3(n)), 1);
      auto rs = sample_realization(cs, kSqrt, centered_box(2, pow3(n)), 1);
      for (const Vec& xi : xis) {
        worst_nu = std::max(worst_nu, std::abs(nu_on_cube(rq, n, xi, 0.5).nu -
                                               quadratic_value(2.0, xi)));
        worst_nu = std::max(worst_nu, std::abs(nu_on_cube(rs, n, xi, 0.5).nu -
                                               sqrt_value(0.5, xi)));
      }
    }
    auto r3 = sample_realization(cs, kSqrt, centered_box(3, 3), 1);
    Vec xi3 = vec3(0.4, -0.2, 0.1);
    worst_nu = std::max(
        worst_nu, std::abs(nu_on_cube(r3, 1, xi3, 0.5).nu - sqrt_value(0.5, xi3)));
    ok = ok && worst_nu <= 1e-7;

    // quadratic integrand: the tabulated surrogate is exact, so all four
    // Dirichlet solves of the trial must agree to solver tolerance
    auto H = tabulate_Lbar(cq, kQuad, grid_centered(2, 0.75, 7), {1}, 1, 1, 0.5);
    auto real = sample_realization(cq, kQuad, centered_box(2, 9), 1);
    BoundaryProfile g{ProfileKind::affine, vec2(0.4, -0.2), 0.0};
    BoundaryProfile f{ProfileKind::sinusoidal, vec2(0.0, 0.0), 0.25};
    auto tr = commutativity_trial(real, 2, H, g, f, 0.5);
    double worst_err =
        std::max({tr.err_grad_Hm1, tr.err_flux_Hm1, tr.err_nonlinear_Hm1});
    ok = ok && worst_err <= 1e-7;

    auto cd = corrector_difference(cs, kSqrt, 2, vec2(0.7, 0.0),
                                   vec2(0.2, 0.3), 11, 0.5);
    double worst_ratio = 0;
    for (double v : cd.values) worst_ratio = std::max(worst_ratio, std::abs(v - 1.0));
    ok = ok && worst_ratio <= 1e-6 && cd.minimal_scale_hat == cd.radii.front();

    return fmt("nu err %.1e, homog err %.1e, ratio dev %.1e", worst_nu,
               worst_err, worst_ratio);
  });

  // 2. One-dimensional oracles: periodic checkerboard cell values equal the
  //    harmonic-mean formula per realization, the iid Monte Carlo estimate
  //    matches it within two standard errors, and the discrete negative-norm
  //    of a constant reproduces 1/sqrt(12) at second order.
  gate.run("one-dimensional oracles", [](bool& ok) {
    CoefficientLaw per{LawKind::periodic_two_point, 1.0, 4.0, 0.25};
    const double hm = 2.0 / (1.0 / 1.0 + 1.0 / 4.0);
    double worst_exact = 0;
    for (std::uint64_t seed : {3u, 17u})
      for (double xi : {1.0, -0.7})
        for (double h : {1.0, 0.5}) {
          auto real = sample_realization(per, kQuad, centered_box(1, 4), seed);
          double nu = solve_cell_problem(mesh_box(real.box(), h), real,
                                         vec1(xi), {})
                          .nu;
          worst_exact = std::max(worst_exact,
                                 std::abs(nu - 0.5 * hm * xi * xi));
        }
    ok = ok && worst_exact <= 1e-8;

    auto est = estimate_Lbar_point(kTwo, kQuad, 1, vec1(1.0), {4}, 64, 4242, 0.5);
    const auto& lv = est.levels.back();
    double mc_diff = std::abs(lv.nu_mean - 0.5 * hm);
    ok = ok && mc_diff <= 2.0 * lv.nu_se;

    const double exact = 1.0 / std::sqrt(12.0);
    std::vector<double> errs;
    for (double h : {0.125, 0.0625, 0.03125}) {
      MeshDomain m = mesh_cube(0, h, 1);
      ScalarField one = interpolate(m, [](const Vec&) { return 1.0; });
      errs.push_back(std::abs(norm_Hminus1(one) - exact));
    }
    double o1 = std::log2(errs[0] / errs[1]);
    double o2 = std::log2(errs[1] / errs[2]);
    ok = ok && o1 >= 1.9 && o2 >= 1.9;

    return fmt("exact dev %.1e, mc |mean-ref| %.1e vs 2se %.1e, orders %.2f %.2f",
               worst_exact, mc_diff, 2.0 * lv.nu_se, o1, o2);
  });

  // 3. Structure of the cell value: gluing subadditivity per realization,
  //    quadratic convexity bounds in the slope, and assembled first and
  //    second derivatives against centered differences.
  gate.run("subadditivity and convexity", [](bool& ok) {
    std::vector<Vec> slopes = {vec2(1.0, 0.0), vec2(0.4, -0.2),
                               vec2(-0.3, 0.8)};
    double worst_slack = 1e300;
    for (int n : {1, 2}) {
      auto per_seed = ensemble_run<double>(
          32, 9000 + static_cast<std::uint64_t>(n),
          [&](std::size_t, std::uint64_t seed) {
            auto real = sample_realization(kIid, kSqrt,
                                           centered_box(2, pow3(n + 1)), seed);
            double w = 1e300;
            for (const Vec& xi : slopes)
              w = std::min(w, subadditivity_check(real, n, xi, 0.5).slack);
            return w;
          });
      for (const auto& v : per_seed)
        if (v) worst_slack = std::min(worst_slack, *v);
    }
    ok = ok && worst_slack >= -1e-8;

    auto real = sample_realization(kIid, kSqrt, centered_box(2, 9), 31);
    MeshDomain mesh = mesh_cube(2, 0.5, 2);
    const double lam = 1.0, Lam = 1.0 + kIid.hi;
    auto nu_at = [&](const Vec& xi) {
      return solve_cell_problem(mesh, real, xi, {}).nu;
    };
    double worst_low = 1e300, worst_high = 1e300;
    for (std::uint64_t k = 0; k < 100; ++k) {
      Vec a = vec2(signed_uniform(1, 4 * k), signed_uniform(1, 4 * k + 1));
      Vec b = vec2(signed_uniform(1, 4 * k + 2), signed_uniform(1, 4 * k + 3));
      Vec d = a - b;
      double sep2 = dot(d, d);
      if (sep2 < 0.0025) continue;
      Vec mid = a + b;
      mid *= 0.5;
      double gap = 0.5 * (nu_at(a) + nu_at(b)) - nu_at(mid);
      worst_low = std::min(worst_low, gap - lam / 8.0 * sep2 + 1e-7);
      worst_high = std::min(worst_high, Lam / 8.0 * sep2 - gap + 1e-7);
    }
    ok = ok && worst_low >= 0 && worst_high >= 0;

    Vec xi0 = vec2(0.4, -0.2);
    auto res = solve_cell_problem(mesh, real, xi0, {}, true);
    const double delta = 1e-3;
    double d1_err = 0, d2_err = 0;
    for (int i = 0; i < 2; ++i) {
      Vec ei(2);
      ei[i] = delta;
      auto plus = solve_cell_problem(mesh, real, xi0 + ei, {});
      auto minus = solve_cell_problem(mesh, real, xi0 - ei, {});
      double fd = (plus.nu - minus.nu) / (2.0 * delta);
      d1_err = std::max(d1_err, std::abs(fd - res.d_nu[i]) /
                                    std::max(1.0, std::abs(res.d_nu[i])));
      for (int j = 0; j < 2; ++j) {
        double fd2 = (plus.d_nu[j] - minus.d_nu[j]) / (2.0 * delta);
        d2_err = std::max(d2_err, std::abs(fd2 - res.d2_nu(j, i)) /
                                      std::max(1.0, std::abs(res.d2_nu(j, i))));
      }
    }
    ok = ok && d1_err <= 1e-4 && d2_err <= 1e-3;

    return fmt("slack >= %.1e, convexity margins %.1e/%.1e, fd errs %.1e/%.1e",
               worst_slack, worst_low, worst_high, d1_err, d2_err);
  });

  // 4. Homogenized surrogate convergence: ensemble medians of the relative
  //    negative-norm errors of gradients and fluxes decrease strictly in the
  //    cube level, the fitted rate is positive with its bootstrap band, and
  //    the medians stay inside pinned regression windows.
  gate.run("gradient and flux convergence", [](bool& ok) {
    auto H = tabulate_Lbar(kIid, kSqrt, grid_centered(2, 0.75, 7), {1, 2}, 32,
                           777, 0.5);
    BoundaryProfile g{ProfileKind::affine, vec2(0.4, -0.2), 0.0};
    BoundaryProfile f{ProfileKind::sinusoidal, vec2(0.0, 0.0), 0.25};
    auto scan = commutativity_scan(kIid, kSqrt, 2, H, {2, 3, 4}, 16, 20260814,
                                   g, f, 0.5);
    auto rel_grad = [](const CommutativitySample& s) {
      return s.err_grad_Hm1 / s.norm_f;
    };
    auto rel_flux = [](const CommutativitySample& s) {
      return s.err_flux_Hm1 / s.norm_f;
    };
    auto grad_lv = extract_levels(scan, rel_grad);
    auto flux_lv = extract_levels(scan, rel_flux);
    std::vector<double> gm, fm;
    for (std::size_t i = 0; i < grad_lv.size(); ++i) {
      gm.push_back(median(grad_lv[i]));
      fm.push_back(median(flux_lv[i]));
    }
    ok = ok && gm[0] > gm[1] && gm[1] > gm[2];
    ok = ok && fm[0] > fm[1] && fm[1] > fm[2];

    const double pin_g[3] = {7.126625e-3, 3.643709e-3, 1.501554e-3};
    const double pin_f[3] = {3.046554e-2, 1.363278e-2, 7.516601e-3};
    for (int i = 0; i < 3; ++i) {
      ok = ok && within(gm[static_cast<std::size_t>(i)], pin_g[i], 0.30);
      ok = ok && within(fm[static_cast<std::size_t>(i)], pin_f[i], 0.30);
    }

    auto fg = fit_rate(scan.n_list, grad_lv);
    auto ff = fit_rate(scan.n_list, flux_lv);
    ok = ok && fg.alpha_hat > 0 && fg.alpha_hat - fg.half_width > 0;
    ok = ok && ff.alpha_hat > 0 && ff.alpha_hat - ff.half_width > 0;

    return fmt("grad med %.2e/%.2e/%.2e alpha %.3f+-%.3f, flux alpha %.3f+-%.3f",
               gm[0], gm[1], gm[2], fg.alpha_hat, fg.half_width, ff.alpha_hat,
               ff.half_width);
  });

  // 5. Linearization error is superlinear in the perturbation size: log-log
  //    slope at least 1.5 for a smooth constant coefficient, at least 1.05
  //    for checkerboard ensemble medians.
  gate.run("superlinear linearization error", [](bool& ok) {
    std::vector<double> s_list;
    for (int t = 0; t <= 8; ++t) s_list.push_back(std::pow(0.5, t));
    BoundaryProfile g{ProfileKind::affine, vec2(0.4, 0.0), 0.0};
    BoundaryProfile f{ProfileKind::sinusoidal, vec2(0.0, 0.0), 0.5};

    auto smooth = sample_realization({LawKind::constant, 1.0, 1.0, 0.25},
                                     kSqrt, centered_box(2, 9), 7);
    auto fs = superlinear_linearization(smooth, 2, g, f, s_list, 0.5);
    ok = ok && !fs.inconclusive && fs.slope >= 1.5;

    auto fits = ensemble_run<LinearizationFit>(
        8, 505, [&](std::size_t, std::uint64_t seed) {
          auto real =
              sample_realization(kTwo, kSqrt, centered_box(2, 9), seed);
          return superlinear_linearization(real, 2, g, f, s_list, 0.5);
        });
    std::vector<double> xs, ys;
    for (std::size_t t = 0; t < s_list.size(); ++t) {
      std::vector<double> col;
      for (const auto& f0 : fits)
        if (f0 && t < f0->errors.size()) col.push_back(f0->errors[t]);
      double med = median(col);
      if (med >= 1e-7) {
        xs.push_back(std::log(s_list[t]));
        ys.push_back(std::log(med));
      }
    }
    double med_slope = slope_of(xs, ys);
    ok = ok && xs.size() >= 3 && med_slope >= 1.05;

    return fmt("smooth slope %.2f, checkerboard median slope %.2f (%zu sizes)",
               fs.slope, med_slope, xs.size());
  });

  // 6. Difference regularity: the estimated minimal scale is finite for at
  //    least 90 percent of seeds with a nondegenerate tail fit, and corrector
  //    difference ratios stay bounded at unit and small slope separations.
  gate.run("difference regularity scales", [](bool& ok) {
    BoundaryProfile g{ProfileKind::affine, vec2(0.4, -0.2), 0.0};
    BoundaryProfile f{ProfileKind::sinusoidal, vec2(0.0, 0.0), 0.25};
    auto scans = ensemble_run<RadiusScan>(
        64, 606, [&](std::size_t, std::uint64_t seed) {
          auto real = sample_realization(kIid, kSqrt, centered_box(2, 57), seed);
          return difference_lipschitz_scan(real, 27.0, g, f, 10.0, 0.5, {},
                                           seed);
        });
    std::vector<double> finite;
    int done = 0;
    for (const auto& s : scans) {
      if (!s) continue;
      ++done;
      if (std::isfinite(s->minimal_scale_hat))
        finite.push_back(s->minimal_scale_hat);
    }
    double frac = static_cast<double>(finite.size()) / std::max(1, done);
    auto tail = fit_Osigma(finite, 1.0);
    ok = ok && frac >= 0.9 && !tail.degenerate && tail.theta_hat > 0;

    double worst[2] = {0, 0};
    int w = 0;
    for (double sep : {1.0, 0.1}) {
      for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        Vec a = vec2(0.5 + 0.5 * sep, 0.2);
        Vec b = vec2(0.5 - 0.5 * sep, 0.2);
        auto rs = corrector_difference(kIid, kSqrt, 3, a, b, seed, 0.5);
        for (double v : rs.values) worst[w] = std::max(worst[w], v);
      }
      ok = ok && worst[w] <= 1.6;
      ++w;
    }

    return fmt("finite %zu/%d, theta %.2f, ratio bounds %.3f/%.3f", finite.size(),
               done, tail.theta_hat, worst[0], worst[1]);
  });

  // 7. Excess decay: a constant-coefficient solve reproduces the quadratic
  //    benchmark exponent, and the checkerboard ensemble median exponent
  //    stays above 1.5 without degenerate fits.
  gate.run("excess decay exponents", [](bool& ok) {
    BoundaryProfile bump{ProfileKind::quadratic_bump, vec2(0.1, 0.0), 1.0};
    BoxSpec box = centered_box(2, 65);
    box.lo[0] += 12;
    box.lo[1] += 7;

    CoefficientLaw cs{LawKind::constant, 2.0, 2.0, 0.25};
    auto creal = sample_realization(cs, kQuad, box, 5);
    auto cfit = excess_decay_fit(creal, 16.0, bump, Vec(), 0.5);
    ok = ok && !cfit.degenerate && std::abs(cfit.exponent - 2.0) <= 0.1;

    auto fits = ensemble_run<ExcessFit>(
        8, 707, [&](std::size_t, std::uint64_t seed) {
          auto real = sample_realization(kTwo, kQuad, box, seed);
          return excess_decay_fit(real, 16.0, bump, Vec(), 0.5);
        });
    std::vector<double> expo;
    int degen = 0;
    for (const auto& f0 : fits) {
      if (!f0) continue;
      if (f0->degenerate)
        ++degen;
      else
        expo.push_back(f0->exponent);
    }
    double med = median(expo);
    ok = ok && degen <= 1 && med >= 1.5;

    return fmt("constant exponent %.3f, checkerboard median %.3f (degen %d/8)",
               cfit.exponent, med, degen);
  });

  // 8. Regularity of the tabulated integrand: every Hessian node satisfies
  //    the ellipticity window up to three standard errors, the Lipschitz
  //    quotient is stable under grid refinement, and the two Hessian
  //    estimators agree within their combined uncertainty.
  gate.run("tabulated Hessian regularity", [](bool& ok) {
    auto H17 = tabulate_Lbar(kIid, kSqrt, grid_centered(1, 2.0, 17), {2}, 16,
                             99, 0.5);
    const double Lam = 1.0 + kIid.hi;
    double worst_lo = 1e300, worst_hi = -1e300;
    for (const auto& nd : H17.nodes) {
      double u = frob_norm(nd.hess_unc, H17.dim);
      worst_lo = std::min(worst_lo, sym_eig_min(nd.hess) + 3.0 * u);
      worst_hi = std::max(worst_hi, sym_eig_max(nd.hess) - 3.0 * u);
    }
    ok = ok && worst_lo >= 1.0 && worst_hi <= Lam;

    auto H33 = tabulate_Lbar(kIid, kSqrt, grid_centered(1, 2.0, 33), {2}, 16,
                             99, 0.5);
    double q17 = holder_quotient_scan(H17, 1.0, 2.0).max_quotient;
    double q33 = holder_quotient_scan(H33, 1.0, 2.0).max_quotient;
    double change = std::abs(q33 - q17) / q17;
    ok = ok && change <= 0.5;

    auto cv = cross_validate_d2(kIid, kSqrt, vec2(0.3, 0.1), 2, 2, 0.05, 8, 13,
                                0.5);
    ok = ok && cv.discrepancy <= cv.uncertainty;

    return fmt("eig window [%.3f, %.3f] in [1, %.0f], quotient change %.1f%%, "
               "cross-val %.1e <= %.1e",
               worst_lo, worst_hi, Lam, 100.0 * change, cv.discrepancy,
               cv.uncertainty);
  });

  // 9. Determinism: the serialized artifact of an ensemble estimate is
  //    byte-identical no matter how many workers computed it.
  gate.run("worker-count determinism", [](bool& ok) {
    auto serialize = [](int workers) {
      EnsembleOptions eo;
      eo.workers = workers;
      auto est = estimate_Lbar_point(kIid, kSqrt, 2, vec2(0.4, -0.2), {1, 2},
                                     8, 2025, 0.5, {}, eo);
      CsvTable t({"n", "nu_mean", "nu_se", "d1", "d2", "h11", "h12", "h22"});
      for (const auto& lv : est.levels)
        t.row({fmt_g17(lv.n), fmt_g17(lv.nu_mean), fmt_g17(lv.nu_se),
               fmt_g17(lv.dnu_mean[0]), fmt_g17(lv.dnu_mean[1]),
               fmt_g17(lv.d2_mean(0, 0)), fmt_g17(lv.d2_mean(0, 1)),
               fmt_g17(lv.d2_mean(1, 1))});
      return t.text();
    };
    std::string one = serialize(1);
    std::string four = serialize(4);
    ok = ok && !one.empty() && one == four;
    return fmt("artifacts %s across 1 vs 4 workers (%zu bytes)",
               one == four ? "byte-identical" : "DIFFER", one.size());
  });

  if (gate.failures == 0) {
    std::printf("acceptance: all %d criteria passed\n", gate.index);
    return 0;
  }
  std::printf("acceptance: %d of %d criteria FAILED\n", gate.failures,
              gate.index);
  return 1;
}
