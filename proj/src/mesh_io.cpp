// Mesh text format:
//
//   # comment lines and blank lines are ignored
//   h_target <h>                         (optional)
//   vertices <N>
//   <i> <x> <y>                          N lines, i = 0..N-1
//   triangles <T>
//   <i> <v0> <v1> <v2> <region>          T lines, counterclockwise
//   boundary_edges <E>                   (optional section)
//   <v0> <v1> <kind> <arg>               kind in {outer, inclusion, artificial}
//
// When boundary_edges is absent every topological boundary edge is marked
// outer.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "error.hpp"
#include "mesh.hpp"

namespace hcm {
namespace {

const char* kind_name(BoundaryMarker::Kind k) {
  switch (k) {
    case BoundaryMarker::Kind::Outer: return "outer";
    case BoundaryMarker::Kind::Inclusion: return "inclusion";
    case BoundaryMarker::Kind::Artificial: return "artificial";
  }
  return "?";
}

class LineReader {
public:
  explicit LineReader(const std::string& text) : in_(text) {}

  // Next non-empty, non-comment line split into tokens; false at EOF.
  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      std::istringstream ls(line);
      tokens.clear();
      for (std::string tok; ls >> tok;) tokens.push_back(tok);
      if (!tokens.empty()) return true;
    }
    return false;
  }
  std::size_t line() const { return line_no_; }

private:
  std::istringstream in_;
  std::size_t line_no_ = 0;
};

double to_double(const std::string& s, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("expected a number, got '" + s + "'", line);
  }
}

std::size_t to_index(const std::string& s, std::size_t line) {
  try {
    std::size_t pos = 0;
    if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ParseError("expected a non-negative integer, got '" + s + "'", line);
  }
}

void expect_count(const std::vector<std::string>& tok, std::size_t n, std::size_t line) {
  if (tok.size() != n)
    throw ParseError("expected " + std::to_string(n) + " fields, got " + std::to_string(tok.size()), line);
}

}  // namespace

std::string format_mesh(const Mesh& mesh) {
  std::string out = "# hicomsfem mesh\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "h_target %.17g\n", mesh.h_target);
  out += buf;
  out += "vertices " + std::to_string(mesh.vertices.size()) + "\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu %.17g %.17g\n", i, mesh.vertices[i].x, mesh.vertices[i].y);
    out += buf;
  }
  out += "triangles " + std::to_string(mesh.triangles.size()) + "\n";
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    std::snprintf(buf, sizeof buf, "%zu %u %u %u %zu\n", t, tri[0], tri[1], tri[2], mesh.tri_region[t]);
    out += buf;
  }
  out += "boundary_edges " + std::to_string(mesh.boundary_edges.size()) + "\n";
  for (const auto& e : mesh.boundary_edges) {
    std::snprintf(buf, sizeof buf, "%u %u %s %zu\n", e.v[0], e.v[1], kind_name(e.marker.kind), e.marker.inclusion);
    out += buf;
  }
  return out;
}

void save_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << format_mesh(mesh);
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

Mesh parse_mesh(const std::string& text) {
  Mesh mesh;
  LineReader rd(text);
  std::vector<std::string> tok;
  bool have_vertices = false, have_triangles = false, have_edges = false;
  std::vector<std::size_t> tri_lines;

  while (rd.next(tok)) {
    const std::string& head = tok[0];
    if (head == "h_target") {
      expect_count(tok, 2, rd.line());
      mesh.h_target = to_double(tok[1], rd.line());
    } else if (head == "vertices") {
      expect_count(tok, 2, rd.line());
      const std::size_t n = to_index(tok[1], rd.line());
      for (std::size_t i = 0; i < n; ++i) {
        if (!rd.next(tok)) throw ParseError("unexpected end of file in vertices section", rd.line());
        expect_count(tok, 3, rd.line());
        if (to_index(tok[0], rd.line()) != i) throw ParseError("vertex index out of sequence", rd.line());
        mesh.vertices.push_back({to_double(tok[1], rd.line()), to_double(tok[2], rd.line())});
      }
      have_vertices = true;
    } else if (head == "triangles") {
      expect_count(tok, 2, rd.line());
      if (!have_vertices) throw ParseError("triangles section before vertices", rd.line());
      const std::size_t n = to_index(tok[1], rd.line());
      for (std::size_t i = 0; i < n; ++i) {
        if (!rd.next(tok)) throw ParseError("unexpected end of file in triangles section", rd.line());
        expect_count(tok, 5, rd.line());
        if (to_index(tok[0], rd.line()) != i) throw ParseError("triangle index out of sequence", rd.line());
        Triangle tri{};
        for (int k = 0; k < 3; ++k) {
          const std::size_t v = to_index(tok[1 + k], rd.line());
          if (v >= mesh.vertices.size())
            throw ParseError("triangle references missing vertex " + std::to_string(v), rd.line());
          tri[k] = static_cast<Index>(v);
        }
        mesh.triangles.push_back(tri);
        mesh.tri_region.push_back(to_index(tok[4], rd.line()));
        tri_lines.push_back(rd.line());
      }
      have_triangles = true;
    } else if (head == "boundary_edges") {
      expect_count(tok, 2, rd.line());
      const std::size_t n = to_index(tok[1], rd.line());
      for (std::size_t i = 0; i < n; ++i) {
        if (!rd.next(tok)) throw ParseError("unexpected end of file in boundary_edges section", rd.line());
        expect_count(tok, 4, rd.line());
        BoundaryEdge e;
        for (int k = 0; k < 2; ++k) {
          const std::size_t v = to_index(tok[k], rd.line());
          if (v >= mesh.vertices.size())
            throw ParseError("boundary edge references missing vertex " + std::to_string(v), rd.line());
          e.v[k] = static_cast<Index>(v);
        }
        const std::size_t arg = to_index(tok[3], rd.line());
        if (tok[2] == "outer")
          e.marker = BoundaryMarker::outer();
        else if (tok[2] == "artificial")
          e.marker = BoundaryMarker::artificial();
        else if (tok[2] == "inclusion") {
          if (arg == 0) throw ParseError("inclusion marker needs an index >= 1", rd.line());
          e.marker = BoundaryMarker::of_inclusion(arg);
        } else
          throw ParseError("unknown boundary marker kind '" + tok[2] + "'", rd.line());
        mesh.boundary_edges.push_back(e);
      }
      have_edges = true;
    } else {
      throw ParseError("unknown section '" + head + "'", rd.line());
    }
  }
  if (!have_vertices || !have_triangles) throw ParseError("missing vertices or triangles section", rd.line());

  // Orientation is checked here so the error can point at the offending line.
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    if (!(mesh.triangle_area(t) > 0.0))
      throw ParseError("triangle " + std::to_string(t) + " is degenerate or clockwise", tri_lines[t]);

  if (!have_edges) {
    std::unordered_map<std::uint64_t, int> count;
    auto key = [](Index a, Index b) { return (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b); };
    for (const auto& tri : mesh.triangles)
      for (int i = 0; i < 3; ++i) ++count[key(tri[i], tri[(i + 1) % 3])];
    for (const auto& tri : mesh.triangles)
      for (int i = 0; i < 3; ++i)
        if (count[key(tri[i], tri[(i + 1) % 3])] == 1)
          mesh.boundary_edges.push_back({{tri[i], tri[(i + 1) % 3]}, BoundaryMarker::outer()});
  }
  try {
    check_mesh(mesh);
  } catch (const Error& e) {
    throw Error(ErrorCode::MeshInvalid, std::string("mesh validation failed: ") + e.what());
  }
  return mesh;
}

Mesh load_mesh(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open mesh file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_mesh(ss.str());
}

}  // namespace hcm
