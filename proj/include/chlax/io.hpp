#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chlax/grid.hpp"
#include "chlax/operator_algebra.hpp"

namespace chlax {

using json = nlohmann::json;

/// Full round-trip decimal formatting: 17 significant digits.
inline std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  out << text;
}

}  // namespace detail

/// Kernel dump: one-line JSON header comment with grid metadata, then the
/// n x n sample matrix in CSV.
inline void dump_kernel_csv(const std::filesystem::path& path,
                            const KernelOperator& k,
                            const std::string& role = "kernel") {
  json header;
  header["L"] = k.grid->half_width;
  header["n"] = k.grid->size();
  header["scheme"] = to_string(k.grid->scheme);
  header["role"] = role;
  if (k.grid->scheme == Scheme::Unit) {
    json nodes = json::array();
    for (int i = 0; i < k.grid->size(); ++i) nodes.push_back(k.grid->nodes[i]);
    header["nodes"] = nodes;
  }
  std::ostringstream out;
  out << "# " << header.dump() << "\n";
  for (int i = 0; i < k.size(); ++i) {
    for (int j = 0; j < k.size(); ++j) {
      if (j) out << ",";
      out << fmt_g17(k.values(i, j));
    }
    out << "\n";
  }
  detail::write_text_file(path, out.str());
}

inline KernelOperator load_kernel_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.size() < 2 || line[0] != '#')
    throw ValidationError("kernel CSV missing JSON header: " + path.string());
  const json header = json::parse(line.substr(1));
  const int n = header.at("n").get<int>();
  const Scheme scheme = scheme_from_string(header.at("scheme").get<std::string>());
  GridPtr grid;
  if (scheme == Scheme::Unit) {
    Eigen::VectorXd nodes(n);
    const auto& arr = header.at("nodes");
    for (int i = 0; i < n; ++i) nodes[i] = arr.at(i).get<double>();
    grid = make_particle_grid(nodes);
  } else {
    grid = make_grid(header.at("L").get<double>(), n, scheme);
  }
  Eigen::MatrixXd values(n, n);
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line))
      throw ValidationError("kernel CSV truncated: " + path.string());
    std::istringstream row(line);
    std::string cell;
    for (int j = 0; j < n; ++j) {
      if (!std::getline(row, cell, ','))
        throw ValidationError("kernel CSV short row: " + path.string());
      values(i, j) = std::stod(cell);
    }
  }
  return KernelOperator(grid, std::move(values));
}

/// Per-time Lagrangian output: columns (xi, q, p).
inline void write_lagrangian_csv(const std::filesystem::path& path,
                                 const GridFunction& q, const GridFunction& p) {
  std::ostringstream out;
  out << "xi,q,p\n";
  for (int i = 0; i < q.grid->size(); ++i)
    out << fmt_g17(q.grid->nodes[i]) << "," << fmt_g17(q.values[i]) << ","
        << fmt_g17(p.values[i]) << "\n";
  detail::write_text_file(path, out.str());
}

/// Per-time Eulerian output: columns (x, u, m).
inline void write_eulerian_csv(const std::filesystem::path& path,
                               const GridFunction& u, const GridFunction& m) {
  std::ostringstream out;
  out << "x,u,m\n";
  for (int i = 0; i < u.grid->size(); ++i)
    out << fmt_g17(u.grid->nodes[i]) << "," << fmt_g17(u.values[i]) << ","
        << fmt_g17(m.values[i]) << "\n";
  detail::write_text_file(path, out.str());
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  detail::write_text_file(path, j.dump(2) + "\n");
}

}  // namespace chlax
