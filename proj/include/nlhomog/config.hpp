#pragma once

// Strict JSON run configuration.  Every key is checked against the schema of
// its section; unknown keys abort with their dotted paths so a typo can never
// silently fall back to a default.  Parsing also records the value actually
// used for every key, so a fully resolved copy of the configuration can be
// written next to the results.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "nlhomog/ensemble.hpp"
#include "nlhomog/experiments_homog.hpp"
#include "nlhomog/io.hpp"
#include "nlhomog/solvers.hpp"

namespace nlhomog {

// Object view that tracks which keys were consumed and what value each
// resolved to (default or explicit).  Call done() after the last getter.
class StrictView {
 public:
  StrictView(const Json& j, std::string path)
      : j_(&j), path_(std::move(path)) {
    if (!j_->is_object())
      throw ConfigError(path_ + ": expected a JSON object");
  }

  bool has(const char* key) const { return j_->contains(key); }

  double number(const char* key) { return as_number(need(key), key); }
  double number(const char* key, double dflt) {
    const Json* p = get(key);
    double v = p ? as_number(*p, key) : dflt;
    resolved_[key] = v;
    return v;
  }

  std::int64_t integer(const char* key) { return as_integer(need(key), key); }
  std::int64_t integer(const char* key, std::int64_t dflt) {
    const Json* p = get(key);
    std::int64_t v = p ? as_integer(*p, key) : dflt;
    resolved_[key] = v;
    return v;
  }

  std::uint64_t u64(const char* key, std::uint64_t dflt) {
    const Json* p = get(key);
    std::uint64_t v = dflt;
    if (p) {
      if (!p->is_number_integer() && !p->is_number_unsigned()) fail_type(key);
      if (p->is_number_integer() && p->get<std::int64_t>() < 0)
        throw ConfigError(path_ + "." + key + ": must be nonnegative");
      v = p->get<std::uint64_t>();
    }
    resolved_[key] = v;
    return v;
  }

  bool flag(const char* key, bool dflt) {
    const Json* p = get(key);
    if (p && !p->is_boolean()) fail_type(key);
    bool v = p ? p->get<bool>() : dflt;
    resolved_[key] = v;
    return v;
  }

  std::string str(const char* key) {
    const Json& v = need(key);
    if (!v.is_string()) fail_type(key);
    return (resolved_[key] = v.get<std::string>());
  }
  std::string str(const char* key, const std::string& dflt) {
    const Json* p = get(key);
    if (p && !p->is_string()) fail_type(key);
    std::string v = p ? p->get<std::string>() : dflt;
    resolved_[key] = v;
    return v;
  }

  std::vector<double> nums(const char* key) {
    return as_nums(need(key), key);
  }
  std::vector<double> nums(const char* key, const std::vector<double>& dflt) {
    const Json* p = get(key);
    std::vector<double> v = p ? as_nums(*p, key) : dflt;
    resolved_[key] = v;
    return v;
  }

  std::vector<int> ints(const char* key, const std::vector<int>& dflt) {
    const Json* p = get(key);
    std::vector<int> v = dflt;
    if (p) {
      if (!p->is_array()) fail_type(key);
      v.clear();
      for (const Json& e : *p)
        v.push_back(static_cast<int>(as_integer(e, key)));
    }
    resolved_[key] = v;
    return v;
  }

  // marks the key; the caller parses the subobject and stores the resolved
  // copy back through set()
  const Json* child(const char* key) {
    const Json* p = get(key);
    if (p && !p->is_object()) fail_type(key);
    return p;
  }

  void set(const char* key, Json resolved) {
    resolved_[key] = std::move(resolved);
  }

  const std::string& path() const { return path_; }
  const Json& resolved() const { return resolved_; }

  void done() const {
    std::string unknown;
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!seen_.count(it.key()))
        unknown += (unknown.empty() ? "" : ", ") + path_ + "." + it.key();
    if (!unknown.empty())
      throw ConfigError("unknown config keys: " + unknown);
  }

 private:
  const Json* get(const char* key) {
    if (!j_->contains(key)) return nullptr;
    seen_.insert(key);
    return &(*j_)[key];
  }
  const Json& need(const char* key) {
    const Json* p = get(key);
    if (!p) throw ConfigError(path_ + "." + key + ": required key missing");
    return *p;
  }
  [[noreturn]] void fail_type(const char* key) const {
    throw ConfigError(path_ + "." + key + ": wrong JSON type");
  }
  double as_number(const Json& v, const char* key) {
    if (!v.is_number()) fail_type(key);
    double d = v.get<double>();
    resolved_[key] = d;
    return d;
  }
  std::int64_t as_integer(const Json& v, const char* key) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) fail_type(key);
    std::int64_t d = v.get<std::int64_t>();
    resolved_[key] = d;
    return d;
  }
  std::vector<double> as_nums(const Json& v, const char* key) {
    if (!v.is_array()) fail_type(key);
    std::vector<double> out;
    for (const Json& e : v) {
      if (!e.is_number()) fail_type(key);
      out.push_back(e.get<double>());
    }
    resolved_[key] = out;
    return out;
  }

  const Json* j_;
  std::string path_;
  std::set<std::string> seen_;
  Json resolved_ = Json::object();
};

// ---------------------------------------------------------------------------
// enum names

inline LawKind law_kind_from(const std::string& s) {
  for (LawKind k :
       {LawKind::constant, LawKind::iid_uniform, LawKind::iid_two_point,
        LawKind::mollified_iid, LawKind::periodic_two_point})
    if (s == law_name(k)) return k;
  throw ConfigError("unknown coefficient law '" + s + "'");
}

inline NonlinKind nonlin_kind_from(const std::string& s) {
  for (NonlinKind k : {NonlinKind::quadratic, NonlinKind::perturbed_sqrt})
    if (s == nonlin_name(k)) return k;
  throw ConfigError("unknown nonlinearity '" + s + "'");
}

inline ProfileKind profile_kind_from(const std::string& s) {
  for (ProfileKind k : {ProfileKind::affine, ProfileKind::quadratic_bump,
                        ProfileKind::sinusoidal})
    if (s == profile_name(k)) return k;
  throw ConfigError("unknown boundary profile '" + s + "'");
}

// ---------------------------------------------------------------------------
// sections

struct OutputConfig {
  std::string root = "runs";
  bool csv = true;
};

struct RunConfig {
  CoefficientLaw law;
  NonlinearitySpec nonlin;
  int dim = 2;
  double h = 0.5;
  SolverOptions solver;
  std::size_t ensemble_count = 8;
  std::uint64_t master_seed = 1;
  double max_failure_frac = 0.1;
  OutputConfig output;
  Json experiment = Json::object();  // interpreted by the chosen subcommand
  Json check;                        // optional pass/fail thresholds
};

inline Json law_to_json(const CoefficientLaw& l) {
  return {{"kind", law_name(l.kind)},
          {"lo", l.lo},
          {"hi", l.hi},
          {"width", l.width}};
}

inline Json nonlin_to_json(const NonlinearitySpec& n) {
  return {{"kind", nonlin_name(n.kind)}};
}

inline Json profile_to_json(const BoundaryProfile& p) {
  return {{"kind", profile_name(p.kind)},
          {"slope", json_vec(p.slope)},
          {"amp", p.amp}};
}

inline CoefficientLaw parse_law(const Json& j, const std::string& path) {
  StrictView v(j, path);
  CoefficientLaw law;
  law.kind = law_kind_from(v.str("kind", law_name(law.kind)));
  law.lo = v.number("lo", law.lo);
  law.hi = v.number("hi", law.hi);
  law.width = v.number("width", law.width);
  v.done();
  if (!(law.lo > 0) || law.hi < law.lo)
    throw ConfigError(path + ": need 0 < lo <= hi");
  return law;
}

inline NonlinearitySpec parse_nonlin(const Json& j, const std::string& path) {
  StrictView v(j, path);
  NonlinearitySpec nl;
  nl.kind = nonlin_kind_from(v.str("kind", nonlin_name(nl.kind)));
  v.done();
  return nl;
}

inline BoundaryProfile parse_profile(const Json& j, const std::string& path,
                                     int dim) {
  StrictView v(j, path);
  BoundaryProfile p;
  std::vector<double> s = v.nums("slope", std::vector<double>(dim, 0.0));
  if (static_cast<int>(s.size()) != dim)
    throw ConfigError(path + ".slope: expected " + std::to_string(dim) +
                      " components");
  p.slope = Vec(dim, s.data());
  p.kind = profile_kind_from(v.str("kind", profile_name(p.kind)));
  p.amp = v.number("amp", p.amp);
  v.done();
  return p;
}

inline RunConfig parse_config(const Json& j) {
  StrictView top(j, "config");
  RunConfig c;

  if (const Json* p = top.child("law")) c.law = parse_law(*p, "law");
  top.set("law", law_to_json(c.law));

  if (const Json* p = top.child("nonlinearity"))
    c.nonlin = parse_nonlin(*p, "nonlinearity");
  top.set("nonlinearity", nonlin_to_json(c.nonlin));

  if (const Json* p = top.child("mesh")) {
    StrictView v(*p, "mesh");
    c.dim = static_cast<int>(v.integer("dim", c.dim));
    c.h = v.number("h", c.h);
    v.done();
  }
  if (c.dim < 1 || c.dim > kMaxDim)
    throw ConfigError("mesh.dim: supported dimensions are 1.." +
                      std::to_string(kMaxDim));
  detail::validate_h(c.h);
  top.set("mesh", Json{{"dim", c.dim}, {"h", c.h}});

  if (const Json* p = top.child("solver")) {
    StrictView v(*p, "solver");
    c.solver.tol = v.number("tol", c.solver.tol);
    c.solver.max_newton =
        static_cast<int>(v.integer("max_newton", c.solver.max_newton));
    c.solver.armijo = v.number("armijo", c.solver.armijo);
    c.solver.max_backtrack =
        static_cast<int>(v.integer("max_backtrack", c.solver.max_backtrack));
    v.done();
  }
  top.set("solver", Json{{"tol", c.solver.tol},
                         {"max_newton", c.solver.max_newton},
                         {"armijo", c.solver.armijo},
                         {"max_backtrack", c.solver.max_backtrack}});

  if (const Json* p = top.child("ensemble")) {
    StrictView v(*p, "ensemble");
    std::int64_t n =
        v.integer("count", static_cast<std::int64_t>(c.ensemble_count));
    if (n < 1) throw ConfigError("ensemble.count: must be >= 1");
    c.ensemble_count = static_cast<std::size_t>(n);
    c.master_seed = v.u64("master_seed", c.master_seed);
    c.max_failure_frac = v.number("max_failure_frac", c.max_failure_frac);
    v.done();
  }
  top.set("ensemble",
          Json{{"count", c.ensemble_count},
               {"master_seed", c.master_seed},
               {"max_failure_frac", c.max_failure_frac}});

  if (const Json* p = top.child("output")) {
    StrictView v(*p, "output");
    c.output.root = v.str("root", c.output.root);
    c.output.csv = v.flag("csv", c.output.csv);
    v.done();
  }
  top.set("output", Json{{"root", c.output.root}, {"csv", c.output.csv}});

  if (const Json* p = top.child("experiment")) c.experiment = *p;
  top.set("experiment", c.experiment);

  if (const Json* p = top.child("check")) {
    if (!p->is_object()) throw ConfigError("check: expected a JSON object");
    c.check = *p;
  }
  if (!c.check.is_null()) top.set("check", c.check);

  top.done();
  return c;
}

// full provenance copy: every section present, every default spelled out;
// the experiment/check parts are refined again by the subcommand runner
inline Json resolved_config(const RunConfig& c) {
  Json j;
  j["law"] = law_to_json(c.law);
  j["nonlinearity"] = nonlin_to_json(c.nonlin);
  j["mesh"] = {{"dim", c.dim}, {"h", c.h}};
  j["solver"] = {{"tol", c.solver.tol},
                 {"max_newton", c.solver.max_newton},
                 {"armijo", c.solver.armijo},
                 {"max_backtrack", c.solver.max_backtrack}};
  j["ensemble"] = {{"count", c.ensemble_count},
                   {"master_seed", c.master_seed},
                   {"max_failure_frac", c.max_failure_frac}};
  j["output"] = {{"root", c.output.root}, {"csv", c.output.csv}};
  j["experiment"] = c.experiment;
  if (!c.check.is_null()) j["check"] = c.check;
  return j;
}

// ---------------------------------------------------------------------------
// file loading and dotted-path overrides

inline Json load_config_text(const std::string& text,
                             const std::string& origin) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded())
    throw ConfigError(origin + ": invalid JSON");
  if (!j.is_object())
    throw ConfigError(origin + ": top level must be an object");
  return j;
}

inline Json load_config_file(const std::string& path) {
  return load_config_text(read_text_file(path), path);
}

// "--set a.b.c=value"; the value is parsed as JSON, with a bare-word
// fallback to a string so --set law.kind=constant works unquoted
inline void apply_override(Json& j, const std::string& spec) {
  std::size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + spec + "' is not of the form key=value");
  std::string path = spec.substr(0, eq);
  std::string raw = spec.substr(eq + 1);

  Json val = Json::parse(raw, nullptr, false);
  if (val.is_discarded()) val = raw;

  Json* cur = &j;
  std::size_t pos = 0;
  for (;;) {
    std::size_t dot = path.find('.', pos);
    std::string key = path.substr(pos, dot - pos);
    if (key.empty())
      throw ConfigError("override '" + spec + "' has an empty path segment");
    if (!cur->is_object())
      throw ConfigError("override '" + spec + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*cur)[key] = std::move(val);
      return;
    }
    cur = &(*cur)[key];
    if (cur->is_null()) *cur = Json::object();
    pos = dot + 1;
  }
}

}  // namespace nlhomog
