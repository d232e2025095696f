#pragma once

// Random uniformly convex Lagrangians L(p,x) = nonlinearity(p; a(x)) with a
// piecewise-constant (or mollified) coefficient field on unit lattice cells.
// Cells are centered at integer points: cell z covers z + (-1/2,1/2)^d.

#include <cstdint>
#include <vector>

#include "nlhomog/common.hpp"
#include "nlhomog/rng.hpp"

namespace nlhomog {

enum class LawKind {
  constant,
  iid_uniform,
  iid_two_point,
  mollified_iid,
  // deterministic alternating pattern (lo/hi by cell parity); used to pin
  // exact periodic-homogenization values in validation runs
  periodic_two_point,
};
enum class NonlinKind { quadratic, perturbed_sqrt };

inline const char* law_name(LawKind k) {
  switch (k) {
    case LawKind::constant: return "constant";
    case LawKind::iid_uniform: return "iid_uniform";
    case LawKind::iid_two_point: return "iid_two_point";
    case LawKind::mollified_iid: return "mollified_iid";
    case LawKind::periodic_two_point: return "periodic_two_point";
  }
  return "?";
}
inline const char* nonlin_name(NonlinKind k) {
  return k == NonlinKind::quadratic ? "quadratic" : "perturbed_sqrt";
}

struct CoefficientLaw {
  LawKind kind = LawKind::constant;
  double lo = 1.0;
  double hi = 1.0;
  double width = 0.25;  // mollifier half-width, only for mollified_iid
};

struct NonlinearitySpec {
  NonlinKind kind = NonlinKind::quadratic;
};

struct EvalResult {
  double value = 0;
  Vec dp;
  SymMat d2p;
};

// Axis box of whole lattice cells: indices z in [lo, lo+ext).
struct BoxSpec {
  int dim = 0;
  std::array<std::int64_t, kMaxDim> lo{};
  std::array<int, kMaxDim> ext{};

  std::int64_t cell_count() const {
    std::int64_t n = 1;
    for (int i = 0; i < dim; ++i) n *= ext[i];
    return n;
  }
  bool contains(const std::array<std::int64_t, kMaxDim>& z) const {
    for (int i = 0; i < dim; ++i)
      if (z[i] < lo[i] || z[i] >= lo[i] + ext[i]) return false;
    return true;
  }
};

// Centered box of side 3^n (side cells per axis), i.e. the triadic cube.
inline BoxSpec centered_box(int dim, std::int64_t side) {
  if (side < 1) throw ConfigError("box side must be >= 1");
  BoxSpec b;
  b.dim = dim;
  for (int i = 0; i < dim; ++i) {
    // odd side: centered at 0; even side: off-center by one half cell
    b.lo[i] = -(side / 2);
    b.ext[i] = static_cast<int>(side);
  }
  return b;
}

inline std::array<std::int64_t, kMaxDim> cell_of(const Vec& x) {
  std::array<std::int64_t, kMaxDim> z{};
  for (int i = 0; i < x.dim; ++i)
    z[i] = static_cast<std::int64_t>(std::floor(x[i] + 0.5));
  return z;
}

namespace detail {
// Antiderivative of the normalized quartic bump on [-w,w], shifted so that
// Psi(-w)=0, Psi(w)=1.
inline double bump_cdf(double s, double w) {
  double u = std::clamp(s / w, -1.0, 1.0);
  double u3 = u * u * u;
  return 0.9375 * (u - 2.0 * u3 / 3.0 + u3 * u * u / 5.0) + 0.5;
}
// Integral of the width-w bump over the unit cell centered at offset t.
inline double bump_cell_weight(double t, double w) {
  if (std::abs(t) >= 0.5 + w) return 0.0;
  return bump_cdf(t + 0.5, w) - bump_cdf(t - 0.5, w);
}
}  // namespace detail

class LagrangianRealization {
 public:
  LagrangianRealization() = default;
  LagrangianRealization(CoefficientLaw law, NonlinearitySpec nonlin,
                        BoxSpec box, std::uint64_t seed)
      : law_(law), nonlin_(nonlin), box_(box), seed_(seed) {
    validate();
    cache_.resize(static_cast<std::size_t>(box_.cell_count()));
    std::array<std::int64_t, kMaxDim> z{};
    for (std::int64_t flat = 0; flat < box_.cell_count(); ++flat) {
      std::int64_t r = flat;
      for (int i = box_.dim - 1; i >= 0; --i) {
        z[i] = box_.lo[i] + r % box_.ext[i];
        r /= box_.ext[i];
      }
      cache_[static_cast<std::size_t>(flat)] = raw_cell_value(z);
    }
  }

  int dim() const { return box_.dim; }
  const BoxSpec& box() const { return box_; }
  std::uint64_t seed() const { return seed_; }
  const CoefficientLaw& law() const { return law_; }
  const NonlinearitySpec& nonlinearity() const { return nonlin_; }
  const std::vector<double>& cell_values() const { return cache_; }

  // iid value attached to a lattice cell; pure in (seed, z)
  double raw_cell_value(const std::array<std::int64_t, kMaxDim>& z) const {
    if (law_.kind == LawKind::constant) return law_.lo;
    if (law_.kind == LawKind::periodic_two_point) {
      std::int64_t s = 0;
      for (int i = 0; i < box_.dim; ++i) s += z[i];
      return ((s % 2) + 2) % 2 == 0 ? law_.lo : law_.hi;
    }
    double u = uniform01(cell_hash(seed_, box_.dim, z));
    if (law_.kind == LawKind::iid_two_point)
      return u < 0.5 ? law_.lo : law_.hi;
    return law_.lo + u * (law_.hi - law_.lo);
  }

  double coefficient(const Vec& x) const {
    if (law_.kind == LawKind::mollified_iid) return mollified_at(x);
    auto z = cell_of(x);
    if (!box_.contains(z))
      throw DomainError("coefficient evaluated outside the sampled box");
    std::int64_t flat = 0;
    for (int i = 0; i < box_.dim; ++i)
      flat = flat * box_.ext[i] + (z[i] - box_.lo[i]);
    return cache_[static_cast<std::size_t>(flat)];
  }

  EvalResult eval(const Vec& p, const Vec& x) const {
    return eval_frozen(p, coefficient(x));
  }

  // nonlinearity with the coefficient held fixed
  EvalResult eval_frozen(const Vec& p, double a) const {
    EvalResult r;
    const int d = p.dim;
    if (nonlin_.kind == NonlinKind::quadratic) {
      r.value = 0.5 * a * dot(p, p);
      r.dp = a * p;
      r.d2p = sym_identity(d, a);
    } else {
      const double s2 = 1.0 + dot(p, p);
      const double s = std::sqrt(s2);
      r.value = 0.5 * dot(p, p) + a * s;
      r.dp = (1.0 + a / s) * p;
      r.d2p = sym_identity(d, 1.0 + a / s) + sym_outer(p, -a / (s2 * s));
    }
    return r;
  }

  // ellipticity interval [1, Lambda]
  double lambda_max() const {
    return nonlin_.kind == NonlinKind::quadratic ? law_.hi : 1.0 + law_.hi;
  }

 private:
  void validate() const {
    if (box_.dim < 1 || box_.dim > kMaxDim)
      throw ConfigError("dimension must be 1, 2, or 3");
    if (law_.lo > law_.hi) throw ConfigError("coefficient law needs lo <= hi");
    if (nonlin_.kind == NonlinKind::quadratic && law_.lo < 1.0)
      throw ConfigError("quadratic nonlinearity needs coefficients >= 1");
    if (nonlin_.kind == NonlinKind::perturbed_sqrt && law_.lo < 0.0)
      throw ConfigError("perturbed_sqrt nonlinearity needs coefficients >= 0");
    if (law_.kind == LawKind::mollified_iid &&
        (law_.width <= 0.0 || law_.width > 0.5))
      throw ConfigError("mollifier width must lie in (0, 1/2]");
    for (int i = 0; i < box_.dim; ++i)
      if (box_.ext[i] < 1) throw ConfigError("box extent must be >= 1");
  }

  // Exact convolution of the cell field with the tensor-product quartic bump.
  // Neighbor cells just outside the box are resampled on demand; the value is
  // a convex combination, so the law's range is preserved.
  double mollified_at(const Vec& x) const {
    const int d = box_.dim;
    const double w = law_.width;
    std::array<std::int64_t, kMaxDim> zlo{}, zhi{};
    for (int i = 0; i < d; ++i) {
      zlo[i] = static_cast<std::int64_t>(std::ceil(x[i] - 0.5 - w));
      zhi[i] = static_cast<std::int64_t>(std::floor(x[i] + 0.5 + w));
    }
    double acc = 0.0;
    std::array<std::int64_t, kMaxDim> z = zlo;
    while (true) {
      double wgt = 1.0;
      for (int i = 0; i < d; ++i)
        wgt *= detail::bump_cell_weight(x[i] - static_cast<double>(z[i]), w);
      if (wgt != 0.0) acc += wgt * raw_cell_value(z);
      int i = 0;
      for (; i < d; ++i) {
        if (++z[i] <= zhi[i]) break;
        z[i] = zlo[i];
      }
      if (i == d) break;
    }
    return acc;
  }

  CoefficientLaw law_;
  NonlinearitySpec nonlin_;
  BoxSpec box_;
  std::uint64_t seed_ = 0;
  std::vector<double> cache_;
};

inline LagrangianRealization sample_realization(const CoefficientLaw& law,
                                                const NonlinearitySpec& nl,
                                                const BoxSpec& box,
                                                std::uint64_t seed) {
  return LagrangianRealization(law, nl, box, seed);
}

}  // namespace nlhomog
