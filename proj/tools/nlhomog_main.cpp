// Command-line laboratory driver.  Every subcommand reads one strict JSON
// config, runs a deterministic experiment, and writes a run directory
// containing resolved_config.json, summary.json, and CSV tables.  Identical
// config + seed give byte-identical artifacts for any worker count; only the
// directory name carries a timestamp.
//
// Exit codes: 0 success, 2 config error, 3 solver or ensemble error,
// 4 a --check threshold failed.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlhomog/cell_problems.hpp"
#include "nlhomog/config.hpp"
#include "nlhomog/ensemble.hpp"
#include "nlhomog/experiments_homog.hpp"
#include "nlhomog/experiments_lbar.hpp"
#include "nlhomog/experiments_reg.hpp"
#include "nlhomog/io.hpp"
#include "nlhomog/lbar.hpp"
#include "nlhomog/stats.hpp"

namespace {

using namespace nlhomog;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct RunContext {
  RunConfig cfg;
  bool check = false;
  bool timing = false;
  int workers = 1;
  std::filesystem::path dir;
  Json resolved;  // full-provenance config; runners refine ["experiment"]
};

EnsembleOptions ensemble_opts(const RunContext& ctx) {
  EnsembleOptions e;
  e.workers = ctx.workers;
  e.max_failure_frac = ctx.cfg.max_failure_frac;
  return e;
}

// threshold evaluation; only keys present in the check section are enforced
struct CheckEval {
  Json report = Json::object();
  bool pass = true;

  void le(const char* name, double value, double limit) {
    add(name, value, limit, value <= limit);
  }
  void ge(const char* name, double value, double limit) {
    add(name, value, limit, value >= limit);
  }
  void truth(const char* name, bool ok) {
    report[name] = Json{{"pass", ok}};
    pass = pass && ok;
  }

 private:
  void add(const char* name, double value, double limit, bool ok) {
    report[name] = Json{{"value", value}, {"limit", limit}, {"pass", ok}};
    pass = pass && ok;
  }
};

Vec vec_from(StrictView& v, const char* key, int dim,
             const std::vector<double>& dflt) {
  std::vector<double> s = v.nums(key, dflt);
  if (static_cast<int>(s.size()) != dim)
    throw ConfigError(v.path() + "." + std::string(key) + ": expected " +
                      std::to_string(dim) + " components");
  return Vec(dim, s.data());
}

BoundaryProfile default_base_profile(int dim) {
  BoundaryProfile p;
  const double s[3] = {0.4, -0.2, 0.1};
  p.slope = Vec(dim, s);
  return p;
}

BoundaryProfile default_perturbation(int dim) {
  BoundaryProfile p;
  p.kind = ProfileKind::sinusoidal;
  p.slope = Vec(dim);
  p.amp = 0.25;
  return p;
}

BoundaryProfile profile_from(StrictView& v, const char* key, int dim,
                             const BoundaryProfile& dflt) {
  const Json* p = v.child(key);
  BoundaryProfile out =
      p ? parse_profile(*p, v.path() + "." + key, dim) : dflt;
  v.set(key, profile_to_json(out));
  return out;
}

// homogenized input table: either loaded from "table_file" or tabulated from
// a "table" subsection; the tabulated copy is saved as table.json
HomogenizedLagrangian acquire_table(StrictView& v, RunContext& ctx) {
  std::string file = v.str("table_file", "");
  const Json* sub = v.child("table");
  if (!file.empty()) {
    if (sub)
      throw ConfigError(v.path() +
                        ": give either table_file or table, not both");
    return table_from_json(
        load_config_text(read_text_file(file), file));
  }
  const Json empty = Json::object();
  StrictView tv(sub ? *sub : empty, v.path() + ".table");
  double radius = tv.number("radius", 0.75);
  std::int64_t nodes = tv.integer("nodes_per_axis", 7);
  std::vector<int> n_list = tv.ints("n_list", {1, 2});
  std::int64_t count = tv.integer(
      "count", static_cast<std::int64_t>(ctx.cfg.ensemble_count));
  std::uint64_t seed =
      tv.u64("seed", derive_seed(ctx.cfg.master_seed, 1000003));
  tv.done();
  v.set("table", tv.resolved());

  auto H = tabulate_Lbar(ctx.cfg.law, ctx.cfg.nonlin,
                         grid_centered(ctx.cfg.dim, radius, nodes), n_list,
                         static_cast<std::size_t>(count), seed, ctx.cfg.h,
                         ctx.cfg.solver, ensemble_opts(ctx));
  write_text_file(ctx.dir / "table.json", table_to_json(H).dump(2) + "\n");
  return H;
}

int finish(RunContext& ctx, Json summary, const CheckEval* eval,
           long long wall_ms) {
  summary["wall_ms"] = ctx.timing ? wall_ms : 0;
  if (eval) {
    Json c = eval->report;
    c["pass"] = eval->pass;
    summary["check"] = c;
  }
  write_text_file(ctx.dir / "summary.json", summary.dump(2) + "\n");
  write_text_file(ctx.dir / "resolved_config.json",
                  ctx.resolved.dump(2) + "\n");
  std::cout << ctx.dir.string();
  if (eval) std::cout << (eval->pass ? "  check PASS" : "  check FAIL");
  std::cout << "\n";
  return eval && !eval->pass ? 4 : 0;
}

StrictView check_view(RunContext& ctx) {
  if (ctx.cfg.check.is_null())
    throw ConfigError(
        "--check requested but the config has no check section");
  return StrictView(ctx.cfg.check, "check");
}

// ---------------------------------------------------------------------------
// sample: draw one coefficient field and dump it cell by cell

int run_sample(RunContext& ctx) {
  StrictView v(ctx.cfg.experiment, "experiment");
  std::int64_t side = v.integer("side", 9);
  std::uint64_t seed = v.u64("seed", ctx.cfg.master_seed);
  v.done();
  ctx.resolved["experiment"] = v.resolved();

  const int dim = ctx.cfg.dim;
  auto real = sample_realization(ctx.cfg.law, ctx.cfg.nonlin,
                                 centered_box(dim, side), seed);
  const BoxSpec& box = real.box();

  std::vector<std::string> cols;
  for (int i = 0; i < dim; ++i) cols.push_back("z" + std::to_string(i));
  cols.push_back("a");
  CsvTable csv(cols);

  double amin = kInf, amax = -kInf, asum = 0;
  std::array<std::int64_t, kMaxDim> z{};
  const std::int64_t total = box.cell_count();
  for (std::int64_t flat = 0; flat < total; ++flat) {
    std::int64_t r = flat;
    for (int i = dim - 1; i >= 0; --i) {
      z[i] = box.lo[i] + r % box.ext[i];
      r /= box.ext[i];
    }
    double a = real.raw_cell_value(z);
    amin = std::min(amin, a);
    amax = std::max(amax, a);
    asum += a;
    std::vector<std::string> row;
    for (int i = 0; i < dim; ++i) row.push_back(std::to_string(z[i]));
    row.push_back(fmt_g17(a));
    csv.row(row);
  }
  if (ctx.cfg.output.csv)
    write_text_file(ctx.dir / "coefficients.csv", csv.text());

  Json summary;
  summary["experiment"] = "sample";
  summary["side"] = side;
  summary["seed"] = seed;
  summary["cells"] = total;
  summary["a_min"] = amin;
  summary["a_max"] = amax;
  summary["a_mean"] = asum / static_cast<double>(total);

  CheckEval eval;
  if (ctx.check) {
    StrictView cv = check_view(ctx);
    if (cv.has("lo")) eval.ge("lo", amin, cv.number("lo"));
    if (cv.has("hi")) eval.le("hi", amax, cv.number("hi"));
    cv.done();
  }
  return finish(ctx, std::move(summary), ctx.check ? &eval : nullptr, 0);
}

// ---------------------------------------------------------------------------
// cell: ensemble estimate of the homogenized triple at one slope

int run_cell(RunContext& ctx) {
  auto t0 = std::chrono::steady_clock::now();
  StrictView v(ctx.cfg.experiment, "experiment");
  const int dim = ctx.cfg.dim;
  Vec xi = vec_from(v, "xi", dim, std::vector<double>(dim, 0.5));
  std::vector<int> n_list = v.ints("n_list", {1, 2, 3});
  v.done();
  ctx.resolved["experiment"] = v.resolved();

  auto est = estimate_Lbar_point(ctx.cfg.law, ctx.cfg.nonlin, dim, xi, n_list,
                                 ctx.cfg.ensemble_count, ctx.cfg.master_seed,
                                 ctx.cfg.h, ctx.cfg.solver,
                                 ensemble_opts(ctx));

  std::vector<std::string> cols = {"n", "nu_mean", "nu_se"};
  for (int i = 0; i < dim; ++i) cols.push_back("dnu_" + std::to_string(i));
  for (int i = 0; i < dim; ++i) cols.push_back("dnu_se_" + std::to_string(i));
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      cols.push_back("d2_" + std::to_string(i) + std::to_string(j));
  CsvTable csv(cols);
  for (const LbarLevelStats& lv : est.levels) {
    std::vector<std::string> row = {std::to_string(lv.n),
                                    fmt_g17(lv.nu_mean), fmt_g17(lv.nu_se)};
    for (int i = 0; i < dim; ++i) row.push_back(fmt_g17(lv.dnu_mean[i]));
    for (int i = 0; i < dim; ++i) row.push_back(fmt_g17(lv.dnu_se[i]));
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) row.push_back(fmt_g17(lv.d2_mean(i, j)));
    csv.row(row);
  }
  if (ctx.cfg.output.csv)
    write_text_file(ctx.dir / "levels.csv", csv.text());

  Json summary;
  summary["experiment"] = "cell";
  summary["xi"] = json_vec(est.xi);
  summary["value"] = est.value;
  summary["value_unc"] = est.value_unc;
  summary["grad"] = json_vec(est.grad);
  summary["grad_unc"] = json_vec(est.grad_unc);
  summary["hess"] = json_mat(est.hess);
  summary["hess_unc"] = json_mat(est.hess_unc);

  CheckEval eval;
  if (ctx.check) {
    StrictView cv = check_view(ctx);
    if (cv.has("max_value_unc"))
      eval.le("max_value_unc", est.value_unc, cv.number("max_value_unc"));
    if (cv.has("max_grad_unc")) {
      double g = 0;
      for (int i = 0; i < dim; ++i) g = std::max(g, est.grad_unc[i]);
      eval.le("max_grad_unc", g, cv.number("max_grad_unc"));
    }
    cv.done();
  }
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  return finish(ctx, std::move(summary), ctx.check ? &eval : nullptr, ms);
}

// ---------------------------------------------------------------------------
// lbar: tabulate the homogenized Lagrangian on a slope grid

int run_lbar(RunContext& ctx) {
  auto t0 = std::chrono::steady_clock::now();
  StrictView v(ctx.cfg.experiment, "experiment");
  const int dim = ctx.cfg.dim;
  double radius = v.number("radius", 0.75);
  std::int64_t nodes = v.integer("nodes_per_axis", 7);
  std::vector<int> n_list = v.ints("n_list", {1, 2});
  v.done();
  ctx.resolved["experiment"] = v.resolved();

  auto H = tabulate_Lbar(ctx.cfg.law, ctx.cfg.nonlin,
                         grid_centered(dim, radius, nodes), n_list,
                         ctx.cfg.ensemble_count, ctx.cfg.master_seed,
                         ctx.cfg.h, ctx.cfg.solver, ensemble_opts(ctx));
  write_text_file(ctx.dir / "table.json", table_to_json(H).dump(2) + "\n");

  std::vector<std::string> cols;
  for (int i = 0; i < dim; ++i) cols.push_back("xi" + std::to_string(i));
  cols.push_back("value");
  cols.push_back("value_unc");
  CsvTable csv(cols);
  for (std::size_t t = 0; t < H.node_count(); ++t) {
    Vec xi = H.flat_xi(t);
    std::vector<std::string> row;
    for (int i = 0; i < dim; ++i) row.push_back(fmt_g17(xi[i]));
    row.push_back(fmt_g17(H.nodes[t].value));
    row.push_back(fmt_g17(H.nodes[t].value_unc));
    csv.row(row);
  }
  if (ctx.cfg.output.csv)
    write_text_file(ctx.dir / "nodes.csv", csv.text());

  HessianBounds hb = hessian_bounds_scan(H);
  Json summary;
  summary["experiment"] = "lbar";
  summary["lambda"] = H.lambda;
  summary["node_count"] = H.node_count();
  summary["min_eig"] = hb.min_eig;
  summary["max_eig"] = hb.max_eig;

  CheckEval eval;
  if (ctx.check) {
    StrictView cv = check_view(ctx);
    if (cv.has("min_eig")) eval.ge("min_eig", hb.min_eig, cv.number("min_eig"));
    if (cv.has("max_eig")) eval.le("max_eig", hb.max_eig, cv.number("max_eig"));
    cv.done();
  }
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  return finish(ctx, std::move(summary), ctx.check ? &eval : nullptr, ms);
}

// ---------------------------------------------------------------------------
// commute: homogenization/linearization commutativity across cube sizes

int run_commute(RunContext& ctx) {
  auto t0 = std::chrono::steady_clock::now();
  StrictView v(ctx.cfg.experiment, "experiment");
  const int dim = ctx.cfg.dim;
  std::vector<int> n_list = v.ints("n_list", {1, 2, 3});
  BoundaryProfile g = profile_from(v, "g", dim, default_base_profile(dim));
  BoundaryProfile f = profile_from(v, "f", dim, default_perturbation(dim));
  HomogenizedLagrangian H = acquire_table(v, ctx);
  v.done();
  ctx.resolved["experiment"] = v.resolved();

  auto scan = commutativity_scan(ctx.cfg.law, ctx.cfg.nonlin, dim, H, n_list,
                                 ctx.cfg.ensemble_count, ctx.cfg.master_seed,
                                 g, f, ctx.cfg.h, ctx.cfg.solver,
                                 ensemble_opts(ctx));

  CsvTable csv({"n", "seed", "err_grad", "err_flux", "err_nonlinear",
                "norm_f", "newton_iterations"});
  for (const auto& level : scan.by_n)
    for (const CommutativitySample& s : level)
      csv.row({std::to_string(s.n), std::to_string(s.seed),
               fmt_g17(s.err_grad_Hm1), fmt_g17(s.err_flux_Hm1),
               fmt_g17(s.err_nonlinear_Hm1), fmt_g17(s.norm_f),
               std::to_string(s.newton_iterations)});
  if (ctx.cfg.output.csv)
    write_text_file(ctx.dir / "samples.csv", csv.text());

  auto grad_lv = extract_levels(
      scan, [](const CommutativitySample& s) { return s.err_grad_Hm1; });
  auto flux_lv = extract_levels(
      scan, [](const CommutativitySample& s) { return s.err_flux_Hm1; });
  auto nonlin_lv = extract_levels(
      scan, [](const CommutativitySample& s) { return s.err_nonlinear_Hm1; });

  auto medians = [](const std::vector<std::vector<double>>& lv) {
    Json out = Json::array();
    for (const auto& level : lv) out.push_back(median(level));
    return out;
  };

  Json summary;
  summary["experiment"] = "commute";
  summary["n_list"] = scan.n_list;
  summary["median_err_grad"] = medians(grad_lv);
  summary["median_err_flux"] = medians(flux_lv);
  summary["median_err_nonlinear"] = medians(nonlin_lv);

  double alpha_lo = kInf;
  if (scan.n_list.size() >= 3) {
    RateFit fg = fit_rate(scan.n_list, grad_lv);
    RateFit ff = fit_rate(scan.n_list, flux_lv);
    summary["rate_grad"] = {{"alpha_hat", fg.alpha_hat},
                            {"half_width", fg.half_width},
                            {"intercept", fg.intercept}};
    summary["rate_flux"] = {{"alpha_hat", ff.alpha_hat},
                            {"half_width", ff.half_width},
                            {"intercept", ff.intercept}};
    alpha_lo = std::min(fg.alpha_hat - fg.half_width,
                        ff.alpha_hat - ff.half_width);
  }

  CheckEval eval;
  if (ctx.check) {
    StrictView cv = check_view(ctx);
    if (cv.has("max_err")) {
      double worst = 0;
      for (const Json& m : summary["median_err_grad"])
        worst = std::max(worst, m.get<double>());
      for (const Json& m : summary["median_err_flux"])
        worst = std::max(worst, m.get<double>());
      for (const Json& m : summary["median_err_nonlinear"])
        worst = std::max(worst, m.get<double>());
      eval.le("max_err", worst, cv.number("max_err"));
    }
    if (cv.has("min_alpha")) eval.ge("min_alpha", alpha_lo, cv.number("min_alpha"));
    if (cv.flag("monotone", false)) {
      bool mono = true;
      for (const auto* lv : {&grad_lv, &flux_lv})
        for (std::size_t i = 1; i < lv->size(); ++i)
          mono = mono && median((*lv)[i]) < median((*lv)[i - 1]);
      eval.truth("monotone", mono);
    }
    cv.done();
  }
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  return finish(ctx, std::move(summary), ctx.check ? &eval : nullptr, ms);
}

// ---------------------------------------------------------------------------
// twoscale: mesoscale two-scale expansion ledger for one realization

int run_twoscale(RunContext& ctx) {
  auto t0 = std::chrono::steady_clock::now();
  StrictView v(ctx.cfg.experiment, "experiment");
  const int dim = ctx.cfg.dim;
  int n = static_cast<int>(v.integer("n", 3));
  Mesoscales meso;
  meso.k = static_cast<int>(v.integer("k", 0));
  meso.l = static_cast<int>(v.integer("l", 1));
  meso.m = static_cast<int>(v.integer("m", 2));
  std::uint64_t seed = v.u64("seed", ctx.cfg.master_seed);
  TwoScaleOptions tso;
  tso.zeta_one = v.flag("zeta_one", tso.zeta_one);
  tso.psi_width = v.number("psi_width", tso.psi_width);
  BoundaryProfile g = profile_from(v, "g", dim, default_base_profile(dim));
  HomogenizedLagrangian H = acquire_table(v, ctx);
  v.done();
  ctx.resolved["experiment"] = v.resolved();

  auto real = sample_realization(ctx.cfg.law, ctx.cfg.nonlin,
                                 centered_box(dim, pow3(n)), seed);
  MeshDomain mesh = mesh_cube(n, ctx.cfg.h, dim);
  const double side = static_cast<double>(pow3(n));
  ScalarField uh = interpolate_profile(mesh, g, side);
  uh = solve_homogenized(mesh, H, uh);
  TwoScaleLedger led = two_scale_expansion(real, n, meso, H, uh, g, ctx.cfg.h,
                                           ctx.cfg.solver, tso);

  Json summary;
  summary["experiment"] = "twoscale";
  summary["n"] = led.n;
  summary["k"] = led.k;
  summary["l"] = led.l;
  summary["m"] = led.m;
  summary["seed"] = seed;
  summary["glue_error"] = led.glue_error;
  summary["expansion_residual"] = led.expansion_residual;
  summary["flux_residual"] = led.flux_residual;
  summary["wtilde_norm"] = led.wtilde_norm;
  summary["corrector_linf"] = led.corrector_linf;

  CheckEval eval;
  if (ctx.check) {
    StrictView cv = check_view(ctx);
    if (cv.has("max_glue_error"))
      eval.le("max_glue_error", led.glue_error, cv.number("max_glue_error"));
    if (cv.has("max_expansion_residual"))
      eval.le("max_expansion_residual", led.expansion_residual,
              cv.number("max_expansion_residual"));
    if (cv.has("max_flux_residual"))
      eval.le("max_flux_residual", led.flux_residual,
              cv.number("max_flux_residual"));
    cv.done();
  }
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  return finish(ctx, std::move(summary), ctx.check ? &eval : nullptr, ms);
}

// ---------------------------------------------------------------------------
// diffreg / linreg: large-scale Lipschitz scans over an ensemble of balls

int run_lipschitz(RunContext& ctx, bool linearized) {
  auto t0 = std::chrono::steady_clock::now();
  StrictView v(ctx.cfg.experiment, "experiment");
  const int dim = ctx.cfg.dim;
  double R = v.number("R", 12.0);
  double K_ratio = v.number("K_ratio", 10.0);
  double sigma = v.number("sigma", 1.0);
  BoundaryProfile g = profile_from(v, "g", dim, default_base_profile(dim));
  BoundaryProfile f = profile_from(v, "f", dim, default_perturbation(dim));
  v.done();
  ctx.resolved["experiment"] = v.resolved();

  const std::int64_t side = 2 * static_cast<std::int64_t>(std::ceil(R)) + 3;
  auto scans = ensemble_run<RadiusScan>(
      ctx.cfg.ensemble_count, ctx.cfg.master_seed,
      [&](std::size_t, std::uint64_t seed) {
        auto real = sample_realization(ctx.cfg.law, ctx.cfg.nonlin,
                                       centered_box(dim, side), seed);
        return linearized
                   ? linearized_lipschitz_scan(real, R, g, f, K_ratio,
                                               ctx.cfg.h, ctx.cfg.solver, seed)
                   : difference_lipschitz_scan(real, R, g, f, K_ratio,
                                               ctx.cfg.h, ctx.cfg.solver,
                                               seed);
      },
      ensemble_opts(ctx));

  CsvTable rows({"member", "seed", "radius", "value"});
  CsvTable per({"member", "seed", "reference", "minimal_scale", "finite"});
  std::vector<double> finite_scales;
  std::size_t done = 0;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    if (!scans[i]) continue;
    const RadiusScan& s = *scans[i];
    ++done;
    for (std::size_t r = 0; r < s.radii.size(); ++r)
      rows.row({std::to_string(i), std::to_string(s.seed),
                fmt_g17(s.radii[r]), fmt_g17(s.values[r])});
    bool finite = std::isfinite(s.minimal_scale_hat);
    if (finite) finite_scales.push_back(s.minimal_scale_hat);
    per.row({std::to_string(i), std::to_string(s.seed), fmt_g17(s.reference),
             finite ? fmt_g17(s.minimal_scale_hat) : "inf",
             finite ? "1" : "0"});
  }
  if (ctx.cfg.output.csv) {
    write_text_file(ctx.dir / "scans.csv", rows.text());
    write_text_file(ctx.dir / "minimal_scales.csv", per.text());
  }

  double finite_frac =
      done ? static_cast<double>(finite_scales.size()) /
                 static_cast<double>(done)
           : 0.0;

  Json summary;
  summary["experiment"] = linearized ? "linreg" : "diffreg";
  summary["R"] = R;
  summary["K_ratio"] = K_ratio;
  summary["members"] = done;
  summary["finite_frac"] = finite_frac;
  if (finite_scales.size() >= 8) {
    TailFit tf = fit_Osigma(finite_scales, sigma);
    summary["tail"] = {{"sigma", tf.sigma},
                       {"theta_hat", tf.theta_hat},
                       {"sample_count", tf.sample_count},
                       {"degenerate", tf.degenerate}};
  }

  CheckEval eval;
  if (ctx.check) {
    StrictView cv = check_view(ctx);
    if (cv.has("min_finite_frac"))
      eval.ge("min_finite_frac", finite_frac, cv.number("min_finite_frac"));
    if (cv.has("max_theta")) {
      double th = summary.contains("tail")
                      ? summary["tail"]["theta_hat"].get<double>()
                      : kInf;
      eval.le("max_theta", th, cv.number("max_theta"));
    }
    cv.done();
  }
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  return finish(ctx, std::move(summary), ctx.check ? &eval : nullptr, ms);
}

// ---------------------------------------------------------------------------
// superlin: superlinear accuracy of the first-order expansion in s

int run_superlin(RunContext& ctx) {
  auto t0 = std::chrono::steady_clock::now();
  StrictView v(ctx.cfg.experiment, "experiment");
  const int dim = ctx.cfg.dim;
  int n = static_cast<int>(v.integer("n", 2));
  std::vector<double> s_default;
  for (int t = 0; t < 8; ++t) s_default.push_back(0.4 * std::pow(0.5, t));
  std::vector<double> s_list = v.nums("s_list", s_default);
  BoundaryProfile g = profile_from(v, "g", dim, default_base_profile(dim));
  BoundaryProfile f = profile_from(v, "f", dim, default_perturbation(dim));
  v.done();
  ctx.resolved["experiment"] = v.resolved();

  auto fits = ensemble_run<LinearizationFit>(
      ctx.cfg.ensemble_count, ctx.cfg.master_seed,
      [&](std::size_t, std::uint64_t seed) {
        auto real = sample_realization(ctx.cfg.law, ctx.cfg.nonlin,
                                       centered_box(dim, pow3(n)), seed);
        return superlinear_linearization(real, n, g, f, s_list, ctx.cfg.h,
                                         ctx.cfg.solver);
      },
      ensemble_opts(ctx));

  CsvTable rows({"member", "s", "error"});
  CsvTable per({"member", "slope", "inconclusive"});
  std::vector<double> slopes;
  std::size_t done = 0, inconclusive = 0;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (!fits[i]) continue;
    const LinearizationFit& fit = *fits[i];
    ++done;
    for (std::size_t k = 0; k < fit.s_list.size(); ++k)
      rows.row({std::to_string(i), fmt_g17(fit.s_list[k]),
                fmt_g17(fit.errors[k])});
    per.row({std::to_string(i), fmt_g17(fit.slope),
             fit.inconclusive ? "1" : "0"});
    if (fit.inconclusive)
      ++inconclusive;
    else
      slopes.push_back(fit.slope);
  }
  if (ctx.cfg.output.csv) {
    write_text_file(ctx.dir / "errors.csv", rows.text());
    write_text_file(ctx.dir / "slopes.csv", per.text());
  }

  Json summary;
  summary["experiment"] = "superlin";
  summary["n"] = n;
  summary["members"] = done;
  summary["inconclusive"] = inconclusive;
  if (!slopes.empty()) summary["median_slope"] = median(slopes);

  CheckEval eval;
  if (ctx.check) {
    StrictView cv = check_view(ctx);
    if (cv.has("min_slope"))
      eval.ge("min_slope", slopes.empty() ? -kInf : median(slopes),
              cv.number("min_slope"));
    if (cv.has("max_inconclusive_frac"))
      eval.le("max_inconclusive_frac",
              done ? static_cast<double>(inconclusive) /
                         static_cast<double>(done)
                   : 1.0,
              cv.number("max_inconclusive_frac"));
    cv.done();
  }
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  return finish(ctx, std::move(summary), ctx.check ? &eval : nullptr, ms);
}

// ---------------------------------------------------------------------------
// excess: decay of the excess against finite-volume surrogates

int run_excess(RunContext& ctx) {
  auto t0 = std::chrono::steady_clock::now();
  StrictView v(ctx.cfg.experiment, "experiment");
  const int dim = ctx.cfg.dim;
  double R = v.number("R", 16.0);
  std::int64_t side =
      v.integer("box_side", 4 * static_cast<std::int64_t>(std::ceil(R)) + 1);
  std::vector<double> off_d(dim, 0.0);
  std::vector<double> offsets = v.nums("box_offset", off_d);
  if (static_cast<int>(offsets.size()) != dim)
    throw ConfigError("experiment.box_offset: expected " +
                      std::to_string(dim) + " components");
  double grid_step = v.number("grid_step", 0.05);
  BoundaryProfile g = profile_from(v, "g", dim, [&] {
    BoundaryProfile p = default_base_profile(dim);
    p.kind = ProfileKind::quadratic_bump;
    p.amp = 1.0;
    return p;
  }());
  Vec xi_match = v.has("xi_match")
                     ? vec_from(v, "xi_match", dim, {})
                     : Vec();
  if (!v.has("xi_match")) v.set("xi_match", Json::array());
  v.done();
  ctx.resolved["experiment"] = v.resolved();

  BoxSpec box = centered_box(dim, side);
  for (int i = 0; i < dim; ++i)
    box.lo[i] += static_cast<std::int64_t>(std::llround(offsets[i]));

  auto fits = ensemble_run<ExcessFit>(
      ctx.cfg.ensemble_count, ctx.cfg.master_seed,
      [&](std::size_t, std::uint64_t seed) {
        auto real = sample_realization(ctx.cfg.law, ctx.cfg.nonlin, box, seed);
        return excess_decay_fit(real, R, g, xi_match, ctx.cfg.h,
                                ctx.cfg.solver, grid_step);
      },
      ensemble_opts(ctx));

  CsvTable rows({"member", "radius", "excess"});
  CsvTable per({"member", "exponent", "degenerate"});
  std::vector<double> exponents;
  std::size_t done = 0, degenerate = 0;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (!fits[i]) continue;
    const ExcessFit& fit = *fits[i];
    ++done;
    for (std::size_t k = 0; k < fit.radii.size(); ++k)
      rows.row({std::to_string(i), fmt_g17(fit.radii[k]),
                fmt_g17(fit.excess[k])});
    per.row({std::to_string(i), fmt_g17(fit.exponent),
             fit.degenerate ? "1" : "0"});
    if (fit.degenerate)
      ++degenerate;
    else
      exponents.push_back(fit.exponent);
  }
  if (ctx.cfg.output.csv) {
    write_text_file(ctx.dir / "excess.csv", rows.text());
    write_text_file(ctx.dir / "exponents.csv", per.text());
  }

  Json summary;
  summary["experiment"] = "excess";
  summary["R"] = R;
  summary["members"] = done;
  summary["degenerate"] = degenerate;
  if (!exponents.empty()) summary["median_exponent"] = median(exponents);

  CheckEval eval;
  if (ctx.check) {
    StrictView cv = check_view(ctx);
    double med = exponents.empty() ? -kInf : median(exponents);
    if (cv.has("min_exponent"))
      eval.ge("min_exponent", med, cv.number("min_exponent"));
    if (cv.has("max_exponent"))
      eval.le("max_exponent", exponents.empty() ? kInf : med,
              cv.number("max_exponent"));
    if (cv.has("max_degenerate_frac"))
      eval.le("max_degenerate_frac",
              done ? static_cast<double>(degenerate) /
                         static_cast<double>(done)
                   : 1.0,
              cv.number("max_degenerate_frac"));
    cv.done();
  }
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  return finish(ctx, std::move(summary), ctx.check ? &eval : nullptr, ms);
}

// ---------------------------------------------------------------------------
// lbarreg: regularity of the homogenized Lagrangian itself

int run_lbarreg(RunContext& ctx) {
  auto t0 = std::chrono::steady_clock::now();
  StrictView v(ctx.cfg.experiment, "experiment");
  const int dim = ctx.cfg.dim;
  double gamma = v.number("gamma", 0.5);
  double M = v.number("M", 2.0);
  Vec xi = vec_from(v, "xi", dim, std::vector<double>(dim, 0.5));
  int n = static_cast<int>(v.integer("n", 2));
  int k = static_cast<int>(v.integer("k", 1));
  double delta = v.number("delta", 0.05);
  HomogenizedLagrangian H = acquire_table(v, ctx);
  v.done();
  ctx.resolved["experiment"] = v.resolved();

  HessianBounds hb = hessian_bounds_scan(H);
  HolderQuotient hq = holder_quotient_scan(H, gamma, M);
  CrossValidation cv2 =
      cross_validate_d2(ctx.cfg.law, ctx.cfg.nonlin, xi, n, k, delta,
                        ctx.cfg.ensemble_count, ctx.cfg.master_seed,
                        ctx.cfg.h, ctx.cfg.solver, ensemble_opts(ctx));

  Json summary;
  summary["experiment"] = "lbarreg";
  summary["min_eig"] = hb.min_eig;
  summary["max_eig"] = hb.max_eig;
  summary["holder"] = {{"gamma", hq.gamma},
                       {"max_quotient", hq.max_quotient},
                       {"xi_a", json_vec(hq.xi_a)},
                       {"xi_b", json_vec(hq.xi_b)},
                       {"grid_spacing", hq.grid_spacing},
                       {"noise_floor", hq.noise_floor}};
  summary["cross_validation"] = {{"ahom", json_mat(cv2.ahom)},
                                 {"fd", json_mat(cv2.fd)},
                                 {"discrepancy", cv2.discrepancy},
                                 {"uncertainty", cv2.uncertainty},
                                 {"fd_asymmetry", cv2.fd_asymmetry},
                                 {"n", cv2.n},
                                 {"k", cv2.k}};

  CheckEval eval;
  if (ctx.check) {
    StrictView cv = check_view(ctx);
    if (cv.has("eig_lo")) eval.ge("eig_lo", hb.min_eig, cv.number("eig_lo"));
    if (cv.has("eig_hi")) eval.le("eig_hi", hb.max_eig, cv.number("eig_hi"));
    if (cv.has("max_quotient"))
      eval.le("max_quotient", hq.max_quotient, cv.number("max_quotient"));
    if (cv.has("max_discrepancy_ratio")) {
      double ratio = cv2.uncertainty > 0 ? cv2.discrepancy / cv2.uncertainty
                                         : kInf;
      eval.le("max_discrepancy_ratio", ratio,
              cv.number("max_discrepancy_ratio"));
    }
    cv.done();
  }
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  return finish(ctx, std::move(summary), ctx.check ? &eval : nullptr, ms);
}

// ---------------------------------------------------------------------------
// report: merge summaries of earlier runs into one JSON document

int run_report(const std::vector<std::string>& dirs, const std::string& out) {
  if (dirs.empty()) throw ConfigError("report: no run directories given");
  Json combined;
  combined["runs"] = Json::array();
  for (const std::string& d : dirs) {
    std::filesystem::path p(d);
    Json entry;
    entry["dir"] = p.filename().string();
    entry["summary"] = Json::parse(read_text_file(p / "summary.json"));
    entry["config"] =
        Json::parse(read_text_file(p / "resolved_config.json"));
    combined["runs"].push_back(std::move(entry));
  }
  std::string text = combined.dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    write_text_file(out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for nonlinear stochastic homogenization"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_root;
  int workers = 1;
  bool check = false, timing = false;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--set", overrides,
                 "dotted-path override, e.g. --set law.hi=4.0");
  app.add_option("--out-root", out_root,
                 "output root (overrides config and NLHOMOG_OUT_ROOT)");
  app.add_option("--workers", workers, "ensemble worker threads");
  app.add_flag("--check", check, "evaluate the config's check thresholds");
  app.add_flag("--timing", timing,
               "record wall time in summaries (breaks byte reproducibility)");

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"sample", "draw one coefficient field and dump it as CSV"},
      {"cell", "ensemble estimate of the homogenized triple at one slope"},
      {"lbar", "tabulate the homogenized Lagrangian on a slope grid"},
      {"commute", "linearization/homogenization commutativity across scales"},
      {"twoscale", "mesoscale two-scale expansion ledger"},
      {"diffreg", "Lipschitz scan of minimizer differences on balls"},
      {"linreg", "Lipschitz scan of linearized solutions on balls"},
      {"superlin", "superlinear accuracy of the first-order expansion"},
      {"excess", "excess decay against finite-volume surrogates"},
      {"lbarreg", "convexity, Holder quotients, Hessian cross-validation"},
      {"report", "merge run summaries into one JSON document"},
  };
  for (const Sub& s : subs) app.add_subcommand(s.name, s.help);

  std::vector<std::string> report_dirs;
  std::string report_out;
  CLI::App* rep = app.get_subcommand("report");
  rep->add_option("dirs", report_dirs, "run directories to merge");
  rep->add_option("--out", report_out, "write the merged report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "report") return run_report(report_dirs, report_out);

    Json raw = config_path.empty() ? Json::object()
                                   : load_config_file(config_path);
    for (const std::string& s : overrides) apply_override(raw, s);

    RunContext ctx;
    ctx.cfg = parse_config(raw);
    ctx.check = check;
    ctx.timing = timing;
    ctx.workers = workers;
    if (const char* env = std::getenv("NLHOMOG_OUT_ROOT"))
      ctx.cfg.output.root = env;
    if (!out_root.empty()) ctx.cfg.output.root = out_root;
    ctx.dir = make_run_dir(ctx.cfg.output.root, name, config_hash(raw));
    // resolved config records config-derived values only; flag and env
    // redirections change where artifacts land, not what they contain
    RunConfig provenance = parse_config(raw);
    ctx.resolved = resolved_config(provenance);

    if (name == "sample") return run_sample(ctx);
    if (name == "cell") return run_cell(ctx);
    if (name == "lbar") return run_lbar(ctx);
    if (name == "commute") return run_commute(ctx);
    if (name == "twoscale") return run_twoscale(ctx);
    if (name == "diffreg") return run_lipschitz(ctx, false);
    if (name == "linreg") return run_lipschitz(ctx, true);
    if (name == "superlin") return run_superlin(ctx);
    if (name == "excess") return run_excess(ctx);
    if (name == "lbarreg") return run_lbarreg(ctx);
    throw ConfigError("unknown subcommand " + name);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const EnsembleError& e) {
    std::cerr << "ensemble error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
