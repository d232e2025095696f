#pragma once

// Deterministic artifacts: CSV tables with a versioned header line and fixed
// %.17g float formatting, JSON serialization of the homogenized table, and a
// stable content hash used to name run directories.  Identical inputs must
// produce byte-identical files, so nothing here consults locale, time, or
// iteration order of unordered containers.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nlhomog/lbar.hpp"

namespace nlhomog {

// std::map-backed, so keys serialize alphabetically: dumps are canonical
using Json = nlohmann::json;

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvTable {
 public:
  explicit CsvTable(const std::vector<std::string>& cols)
      : ncols_(cols.size()) {
    buf_ = "nlhomog-csv v1\n";
    append(cols);
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != ncols_)
      throw ConfigError("csv row has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(ncols_));
    append(cells);
  }

  const std::string& text() const { return buf_; }

 private:
  void append(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) buf_ += ',';
      buf_ += cells[i];
    }
    buf_ += '\n';
  }

  std::size_t ncols_;
  std::string buf_;
};

inline void write_text_file(const std::filesystem::path& p,
                            const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + p.string() + " for writing");
  f << s;
  if (!f) throw ConfigError("short write to " + p.string());
}

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// JSON pieces

inline Json json_vec(const Vec& v) {
  Json j = Json::array();
  for (int i = 0; i < v.dim; ++i) j.push_back(v[i]);
  return j;
}

inline Json json_mat(const SymMat& M) {
  Json j = Json::array();
  for (int i = 0; i < M.dim; ++i) {
    Json r = Json::array();
    for (int k = 0; k < M.dim; ++k) r.push_back(M(i, k));
    j.push_back(r);
  }
  return j;
}

inline Vec vec_from_json(const Json& j) {
  if (!j.is_array() || j.size() > kMaxDim)
    throw ConfigError("expected a vector of at most " +
                      std::to_string(kMaxDim) + " numbers");
  Vec v(static_cast<int>(j.size()));
  for (int i = 0; i < v.dim; ++i) v[i] = j[static_cast<std::size_t>(i)];
  return v;
}

inline SymMat mat_from_json(const Json& j) {
  if (!j.is_array() || j.size() > kMaxDim)
    throw ConfigError("expected a square matrix of dimension <= " +
                      std::to_string(kMaxDim));
  SymMat M(static_cast<int>(j.size()));
  for (int i = 0; i < M.dim; ++i) {
    const Json& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<int>(r.size()) != M.dim)
      throw ConfigError("matrix rows must all have length " +
                        std::to_string(M.dim));
    for (int k = 0; k < M.dim; ++k) M(i, k) = r[static_cast<std::size_t>(k)];
  }
  return M;
}

// ---------------------------------------------------------------------------
// homogenized table serialization

inline constexpr const char* kTableSchema = "nlhomog-lbar v1";

inline Json table_to_json(const HomogenizedLagrangian& H) {
  Json j;
  j["schema"] = kTableSchema;
  j["dim"] = H.dim;
  j["lambda"] = H.lambda;
  Json axes = Json::array();
  for (int i = 0; i < H.dim; ++i)
    axes.push_back({{"min", H.axes[i].min},
                    {"spacing", H.axes[i].spacing},
                    {"count", H.axes[i].count}});
  j["axes"] = axes;
  Json nodes = Json::array();
  for (const LbarNode& n : H.nodes) {
    Json e;
    e["value"] = n.value;
    e["value_unc"] = n.value_unc;
    e["grad"] = json_vec(n.grad);
    e["grad_unc"] = json_vec(n.grad_unc);
    e["hess"] = json_mat(n.hess);
    e["hess_unc"] = json_mat(n.hess_unc);
    nodes.push_back(std::move(e));
  }
  j["nodes"] = nodes;
  return j;
}

inline HomogenizedLagrangian table_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("schema") ||
      j["schema"] != std::string(kTableSchema))
    throw ConfigError("not a homogenized-table file (missing schema '" +
                      std::string(kTableSchema) + "')");
  HomogenizedLagrangian H;
  H.dim = j.at("dim");
  H.lambda = j.at("lambda");
  const Json& axes = j.at("axes");
  if (static_cast<int>(axes.size()) != H.dim)
    throw ConfigError("table axes do not match dim");
  for (int i = 0; i < H.dim; ++i) {
    const Json& a = axes[static_cast<std::size_t>(i)];
    H.axes[i].min = a.at("min");
    H.axes[i].spacing = a.at("spacing");
    H.axes[i].count = a.at("count");
  }
  const Json& nodes = j.at("nodes");
  H.nodes.resize(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Json& e = nodes[k];
    LbarNode& n = H.nodes[k];
    n.value = e.at("value");
    n.value_unc = e.at("value_unc");
    n.grad = vec_from_json(e.at("grad"));
    n.grad_unc = vec_from_json(e.at("grad_unc"));
    n.hess = mat_from_json(e.at("hess"));
    n.hess_unc = mat_from_json(e.at("hess_unc"));
  }
  H.validate();
  return H;
}

// ---------------------------------------------------------------------------
// run directories

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// hash of the canonical (alphabetically keyed) dump, 12 hex chars
inline std::string config_hash(const Json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%012llx",
                static_cast<unsigned long long>(fnv1a64(j.dump()) >> 16));
  return buf;
}

// root/<name>-<hash>-<UTC stamp>; a numeric suffix resolves collisions so
// rapid repeated runs never clobber each other
inline std::filesystem::path make_run_dir(const std::filesystem::path& root,
                                          const std::string& name,
                                          const std::string& hash) {
  std::filesystem::create_directories(root);
  std::time_t now = std::time(nullptr);
  std::tm tm{};
#if defined(_WIN32)
  gmtime_s(&tm, &now);
#else
  gmtime_r(&now, &tm);
#endif
  char stamp[32];
  std::snprintf(stamp, sizeof stamp, "%04d%02d%02dT%02d%02d%02dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  std::string base = name + "-" + hash + "-" + stamp;
  std::filesystem::path dir = root / base;
  for (int k = 2; std::filesystem::exists(dir); ++k)
    dir = root / (base + "-" + std::to_string(k));
  std::filesystem::create_directory(dir);
  return dir;
}

}  // namespace nlhomog
