#pragma once

// Structured P1 simplicial meshes over lattice-aligned boxes and lattice
// balls.  Grid cells of side h = 2^-k are split by the Kuhn triangulation
// (d! simplices per cell), so every simplex lies inside one coefficient cell
// and all simplices share the volume h^d / d!.

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "nlhomog/common.hpp"
#include "nlhomog/lagrangian.hpp"

namespace nlhomog {

enum class MeshShape { box, ball };

struct MeshDomain {
  int dim = 0;
  double h = 1.0;
  int per_unit = 1;  // 1/h
  BoxSpec lat;       // lattice cells covered by the bounding box
  MeshShape shape = MeshShape::box;
  double ball_radius = 0.0;

  std::array<int, kMaxDim> ngrid{};   // grid nodes per axis
  std::array<double, kMaxDim> origin{};  // physical corner of the grid

  std::vector<double> node_x;         // dim-strided coordinates
  std::vector<std::int32_t> elem_node;  // (dim+1)-strided vertex ids
  std::vector<std::uint8_t> elem_perm;
  std::vector<double> elem_bary;      // dim-strided
  double elem_vol = 0.0;

  std::vector<std::uint8_t> node_boundary;
  std::vector<std::int32_t> interior_id;  // node -> interior index, -1 if fixed
  std::vector<std::int32_t> interior_nodes;

  std::vector<std::array<int, kMaxDim>> perms;
  // shape-function gradients: [perm][vertex] -> Vec
  std::vector<std::array<Vec, kMaxDim + 1>> grad_table;

  int nverts() const { return dim + 1; }
  std::size_t node_count() const { return node_x.size() / dim; }
  std::size_t elem_count() const { return elem_perm.size(); }
  std::size_t interior_count() const { return interior_nodes.size(); }
  double volume() const { return static_cast<double>(elem_count()) * elem_vol; }

  // Box meshes enumerate elements as (grid cell, permutation) row-major; the
  // inverse map lets aligned submeshes address parent elements directly.
  std::size_t box_element_at(const std::array<std::int64_t, kMaxDim>& hcell,
                             int perm) const {
    if (shape != MeshShape::box)
      throw DomainError("box_element_at needs a box mesh");
    std::int64_t flat = 0;
    for (int i = 0; i < dim; ++i)
      flat = flat * (static_cast<std::int64_t>(lat.ext[i]) * per_unit) +
             hcell[i];
    return static_cast<std::size_t>(flat) * perms.size() +
           static_cast<std::size_t>(perm);
  }

  // flat node id from per-axis grid coordinates (axis 0 slowest)
  std::size_t box_node_at(const std::array<std::int64_t, kMaxDim>& g) const {
    std::int64_t f = 0;
    for (int i = 0; i < dim; ++i) f = f * ngrid[i] + g[i];
    return static_cast<std::size_t>(f);
  }

  Vec node(std::size_t i) const { return Vec(dim, &node_x[i * dim]); }
  Vec bary(std::size_t e) const { return Vec(dim, &elem_bary[e * dim]); }
  std::int32_t vertex(std::size_t e, int k) const {
    return elem_node[e * nverts() + k];
  }
  const Vec& shape_grad(std::size_t e, int k) const {
    return grad_table[elem_perm[e]][k];
  }
};

namespace detail {

inline std::int64_t grid_flat(const MeshDomain& m,
                              const std::array<int, kMaxDim>& g) {
  std::int64_t f = 0;
  for (int i = 0; i < m.dim; ++i) f = f * m.ngrid[i] + g[i];
  return f;
}

inline void build_perm_tables(MeshDomain& m) {
  std::array<int, kMaxDim> p{};
  for (int i = 0; i < m.dim; ++i) p[i] = i;
  do {
    m.perms.push_back(p);
    std::array<Vec, kMaxDim + 1> g;
    const int d = m.dim;
    g[0] = (-1.0 / m.h) * basis_vec(d, p[0]);
    for (int k = 1; k < d; ++k)
      g[k] = (1.0 / m.h) * (basis_vec(d, p[k - 1]) - basis_vec(d, p[k]));
    g[d] = (1.0 / m.h) * basis_vec(d, p[d - 1]);
    m.grad_table.push_back(g);
  } while (std::next_permutation(p.begin(), p.begin() + m.dim));
}

// vertex k of the Kuhn simplex for permutation p, as a grid offset
inline std::array<int, kMaxDim> kuhn_offset(int dim,
                                            const std::array<int, kMaxDim>& p,
                                            int k) {
  std::array<int, kMaxDim> off{};
  for (int j = 0; j < k; ++j) off[p[j]] += 1;
  (void)dim;
  return off;
}

inline void mark_boundary_by_facets(MeshDomain& m) {
  struct KeyHash {
    std::size_t operator()(const std::array<std::int32_t, kMaxDim>& k) const {
      std::uint64_t h = 0x9E3779B97F4A7C15ull;
      for (auto v : k) h = splitmix64(h ^ (static_cast<std::uint64_t>(v) + 1));
      return static_cast<std::size_t>(h);
    }
  };
  std::unordered_map<std::array<std::int32_t, kMaxDim>, int, KeyHash> count;
  const int nv = m.nverts();
  std::array<std::int32_t, kMaxDim> key{};
  for (std::size_t e = 0; e < m.elem_count(); ++e) {
    for (int skip = 0; skip < nv; ++skip) {
      int t = 0;
      for (int k = 0; k < nv; ++k)
        if (k != skip) key[t++] = m.elem_node[e * nv + k];
      std::sort(key.begin(), key.begin() + m.dim);
      ++count[key];
    }
  }
  m.node_boundary.assign(m.node_count(), 0);
  for (const auto& [k, c] : count) {
    if (c == 1)
      for (int i = 0; i < m.dim; ++i) m.node_boundary[k[i]] = 1;
  }
  // grid nodes not referenced by any kept element are fixed as well
  std::vector<std::uint8_t> used(m.node_count(), 0);
  for (auto n : m.elem_node) used[static_cast<std::size_t>(n)] = 1;
  for (std::size_t i = 0; i < m.node_count(); ++i)
    if (!used[i]) m.node_boundary[i] = 1;
}

inline void finalize_interior(MeshDomain& m) {
  m.interior_id.assign(m.node_count(), -1);
  m.interior_nodes.clear();
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    if (!m.node_boundary[i]) {
      m.interior_id[i] = static_cast<std::int32_t>(m.interior_nodes.size());
      m.interior_nodes.push_back(static_cast<std::int32_t>(i));
    }
  }
}

inline int validate_h(double h) {
  if (!(h > 0) || h > 1)
    throw ConfigError("mesh size h must lie in (0, 1]");
  double inv = 1.0 / h;
  int m = static_cast<int>(std::lround(inv));
  if (std::abs(inv - m) > 1e-9 || (m & (m - 1)) != 0)
    throw ConfigError("mesh size h must be 2^-k");
  return m;
}

inline MeshDomain mesh_grid(const BoxSpec& lat, double h,
                            MeshShape shape, double radius) {
  MeshDomain m;
  m.dim = lat.dim;
  m.h = h;
  m.per_unit = validate_h(h);
  m.lat = lat;
  m.shape = shape;
  m.ball_radius = radius;

  std::array<std::int64_t, kMaxDim> ncell{};
  for (int i = 0; i < m.dim; ++i) {
    ncell[i] = static_cast<std::int64_t>(lat.ext[i]) * m.per_unit;
    m.ngrid[i] = static_cast<int>(ncell[i] + 1);
    m.origin[i] = static_cast<double>(lat.lo[i]) - 0.5;
  }

  std::int64_t nnode = 1;
  for (int i = 0; i < m.dim; ++i) nnode *= m.ngrid[i];
  if (nnode > (std::int64_t(1) << 31))
    throw ConfigError("mesh too large");
  m.node_x.resize(static_cast<std::size_t>(nnode) * m.dim);
  std::array<int, kMaxDim> g{};
  for (std::int64_t f = 0; f < nnode; ++f) {
    std::int64_t r = f;
    for (int i = m.dim - 1; i >= 0; --i) {
      g[i] = static_cast<int>(r % m.ngrid[i]);
      r /= m.ngrid[i];
    }
    for (int i = 0; i < m.dim; ++i)
      m.node_x[static_cast<std::size_t>(f) * m.dim + i] =
          m.origin[i] + g[i] * h;
  }

  build_perm_tables(m);
  const int d = m.dim;
  const int nv = d + 1;
  double vol = 1.0;
  for (int i = 0; i < d; ++i) vol *= h;
  for (int i = 2; i <= d; ++i) vol /= i;
  m.elem_vol = vol;

  std::int64_t totcell = 1;
  for (int i = 0; i < d; ++i) totcell *= ncell[i];
  std::array<int, kMaxDim> c{};
  for (std::int64_t cf = 0; cf < totcell; ++cf) {
    std::int64_t r = cf;
    for (int i = d - 1; i >= 0; --i) {
      c[i] = static_cast<int>(r % ncell[i]);
      r /= ncell[i];
    }
    for (std::size_t pi = 0; pi < m.perms.size(); ++pi) {
      std::array<double, kMaxDim> bary{};
      std::array<std::int32_t, kMaxDim + 1> nodes{};
      for (int k = 0; k < nv; ++k) {
        auto off = kuhn_offset(d, m.perms[pi], k);
        std::array<int, kMaxDim> gv{};
        for (int i = 0; i < d; ++i) gv[i] = c[i] + off[i];
        nodes[k] = static_cast<std::int32_t>(grid_flat(m, gv));
        for (int i = 0; i < d; ++i)
          bary[i] += m.origin[i] + gv[i] * h;
      }
      bool keep = true;
      if (shape == MeshShape::ball) {
        double r2 = 0;
        for (int i = 0; i < d; ++i) {
          double b = bary[i] / nv;
          r2 += b * b;
        }
        keep = r2 <= radius * radius;
      }
      if (!keep) continue;
      for (int k = 0; k < nv; ++k) m.elem_node.push_back(nodes[k]);
      m.elem_perm.push_back(static_cast<std::uint8_t>(pi));
      for (int i = 0; i < d; ++i) m.elem_bary.push_back(bary[i] / nv);
    }
  }
  if (m.elem_count() == 0) throw ConfigError("empty mesh");

  if (shape == MeshShape::box) {
    m.node_boundary.assign(m.node_count(), 0);
    for (std::int64_t f = 0; f < nnode; ++f) {
      std::int64_t r = f;
      bool bdry = false;
      for (int i = m.dim - 1; i >= 0; --i) {
        int gi = static_cast<int>(r % m.ngrid[i]);
        r /= m.ngrid[i];
        if (gi == 0 || gi == m.ngrid[i] - 1) bdry = true;
      }
      m.node_boundary[static_cast<std::size_t>(f)] = bdry ? 1 : 0;
    }
  } else {
    mark_boundary_by_facets(m);
  }
  finalize_interior(m);
  return m;
}

}  // namespace detail

// Box mesh over explicit lattice cells.
inline MeshDomain mesh_box(const BoxSpec& lat, double h) {
  return detail::mesh_grid(lat, h, MeshShape::box, 0.0);
}

// The triadic cube of side 3^n centered at `center` (a lattice point).
inline MeshDomain mesh_cube(int n, double h, int dim,
                            const std::array<std::int64_t, kMaxDim>& center =
                                {0, 0, 0}) {
  if (n < 0) throw ConfigError("cube scale n must be >= 0");
  std::int64_t side = pow3(n);
  BoxSpec b = centered_box(dim, side);
  for (int i = 0; i < dim; ++i) b.lo[i] += center[i];
  return mesh_box(b, h);
}

// Lattice ball of radius R centered at the origin: all simplices of the
// bounding grid whose barycenter lies within radius R.
inline MeshDomain mesh_ball(double R, double h, int dim) {
  if (!(R > 0)) throw ConfigError("ball radius must be positive");
  std::int64_t half = static_cast<std::int64_t>(std::ceil(R - 0.5));
  BoxSpec b = centered_box(dim, 2 * half + 1);
  return detail::mesh_grid(b, h, MeshShape::ball, R);
}

// ---------------------------------------------------------------------------
// fields

struct ScalarField {
  const MeshDomain* mesh = nullptr;
  std::vector<double> v;  // nodal values

  ScalarField() = default;
  explicit ScalarField(const MeshDomain& m) : mesh(&m), v(m.node_count(), 0.0) {}
};

struct VectorField {
  const MeshDomain* mesh = nullptr;
  std::vector<double> v;  // per-element constants, dim-strided

  VectorField() = default;
  explicit VectorField(const MeshDomain& m)
      : mesh(&m), v(m.elem_count() * m.dim, 0.0) {}

  Vec at(std::size_t e) const { return Vec(mesh->dim, &v[e * mesh->dim]); }
  void set(std::size_t e, const Vec& g) {
    for (int i = 0; i < mesh->dim; ++i) v[e * mesh->dim + i] = g[i];
  }
};

template <class F>
ScalarField interpolate(const MeshDomain& m, F&& f) {
  ScalarField u(m);
  for (std::size_t i = 0; i < m.node_count(); ++i) u.v[i] = f(m.node(i));
  return u;
}

inline VectorField gradient(const ScalarField& u) {
  const MeshDomain& m = *u.mesh;
  VectorField g(m);
  for (std::size_t e = 0; e < m.elem_count(); ++e) {
    Vec acc(m.dim);
    for (int k = 0; k < m.nverts(); ++k)
      acc += u.v[static_cast<std::size_t>(m.vertex(e, k))] * m.shape_grad(e, k);
    g.set(e, acc);
  }
  return g;
}

// ---------------------------------------------------------------------------
// subdomains (unions of whole elements) and exact P1 quadrature norms

struct Subdomain {
  const MeshDomain* mesh = nullptr;
  std::vector<std::int32_t> elems;

  double volume() const {
    return static_cast<double>(elems.size()) * mesh->elem_vol;
  }
};

inline Subdomain subdomain_all(const MeshDomain& m) {
  Subdomain s;
  s.mesh = &m;
  s.elems.resize(m.elem_count());
  for (std::size_t e = 0; e < m.elem_count(); ++e)
    s.elems[e] = static_cast<std::int32_t>(e);
  return s;
}

inline Subdomain subdomain_ball(const MeshDomain& m, double r,
                                const Vec& center) {
  Subdomain s;
  s.mesh = &m;
  for (std::size_t e = 0; e < m.elem_count(); ++e) {
    Vec b = m.bary(e);
    double r2 = 0;
    for (int i = 0; i < m.dim; ++i) {
      double t = b[i] - center[i];
      r2 += t * t;
    }
    if (r2 <= r * r) s.elems.push_back(static_cast<std::int32_t>(e));
  }
  if (s.elems.empty()) throw DomainError("empty subdomain ball");
  return s;
}

inline double integral(const ScalarField& u, const Subdomain& s) {
  const MeshDomain& m = *s.mesh;
  const int nv = m.nverts();
  double acc = 0;
  for (auto e : s.elems) {
    double sum = 0;
    for (int k = 0; k < nv; ++k)
      sum += u.v[static_cast<std::size_t>(m.vertex(e, k))];
    acc += sum;
  }
  return acc * m.elem_vol / nv;
}

inline double mean(const ScalarField& u, const Subdomain& s) {
  return integral(u, s) / s.volume();
}

// exact: int_T u^2 = |T| ((sum v)^2 + sum v^2) / ((d+1)(d+2))
inline double norm_L2_mean(const ScalarField& u, const Subdomain& s) {
  const MeshDomain& m = *s.mesh;
  const int nv = m.nverts();
  double acc = 0;
  for (auto e : s.elems) {
    double sum = 0, sq = 0;
    for (int k = 0; k < nv; ++k) {
      double w = u.v[static_cast<std::size_t>(m.vertex(e, k))];
      sum += w;
      sq += w * w;
    }
    acc += (sum * sum + sq);
  }
  acc *= m.elem_vol / (nv * (nv + 1));
  return std::sqrt(std::max(0.0, acc / s.volume()));
}

// L2 mean of u - (u)_S
inline double norm_L2_mean_centered(const ScalarField& u, const Subdomain& s) {
  double mu = mean(u, s);
  double msq = norm_L2_mean(u, s);
  return std::sqrt(std::max(0.0, msq * msq - mu * mu));
}

inline Vec mean(const VectorField& g, const Subdomain& s) {
  Vec acc(s.mesh->dim);
  for (auto e : s.elems) acc += g.at(static_cast<std::size_t>(e));
  return (1.0 / static_cast<double>(s.elems.size())) * acc;
}

inline double norm_L2_mean(const VectorField& g, const Subdomain& s) {
  double acc = 0;
  for (auto e : s.elems) {
    Vec v = g.at(static_cast<std::size_t>(e));
    acc += dot(v, v);
  }
  return std::sqrt(acc / static_cast<double>(s.elems.size()));
}

inline double norm_L2_mean(const ScalarField& u) {
  return norm_L2_mean(u, subdomain_all(*u.mesh));
}

inline double norm_L2_mean(const VectorField& g) {
  return norm_L2_mean(g, subdomain_all(*g.mesh));
}

inline double norm_Lq_mean(const VectorField& g, double q,
                           const Subdomain& s) {
  double acc = 0;
  for (auto e : s.elems) {
    Vec v = g.at(static_cast<std::size_t>(e));
    acc += std::pow(dot(v, v), q / 2.0);
  }
  return std::pow(acc / static_cast<double>(s.elems.size()), 1.0 / q);
}

}  // namespace nlhomog
