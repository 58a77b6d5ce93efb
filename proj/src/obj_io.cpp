#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "meshtrace/error.hpp"
#include "meshtrace/mesh.hpp"

namespace meshtrace {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& tok, long line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw ParseError("bad number '" + tok + "'", line);
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (...) {
    throw ParseError("bad number '" + tok + "'", line);
  }
}

// Face tokens look like "3", "3/1", "3/1/2" or "3//2". Only the vertex
// index is kept; OBJ indices are 1-based and may be negative (relative).
int parse_face_index(const std::string& tok, long line) {
  const std::size_t slash = tok.find('/');
  const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
  if (head.empty()) throw ParseError("empty face index", line);
  int v = 0;
  const auto res = std::from_chars(head.data(), head.data() + head.size(), v);
  if (res.ec != std::errc() || res.ptr != head.data() + head.size())
    throw ParseError("bad face index '" + tok + "'", line);
  return v;
}

}  // namespace

Mesh load_obj(const std::string& text) {
  Mesh mesh;
  std::istringstream input(text);
  std::string line;
  long line_number = 0;
  while (std::getline(input, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto toks = split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    const std::string& tag = toks[0];
    if (tag == "v") {
      if (toks.size() < 4)
        throw ParseError("vertex record needs 3 coordinates", line_number);
      mesh.vertices.push_back({parse_double(toks[1], line_number),
                               parse_double(toks[2], line_number),
                               parse_double(toks[3], line_number)});
    } else if (tag == "vn") {
      if (toks.size() < 4)
        throw ParseError("normal record needs 3 components", line_number);
      mesh.normals.push_back({parse_double(toks[1], line_number),
                              parse_double(toks[2], line_number),
                              parse_double(toks[3], line_number)});
    } else if (tag == "f") {
      if (toks.size() < 4)
        throw ParseError("face record needs at least 3 indices", line_number);
      const int n = static_cast<int>(mesh.vertices.size());
      std::vector<int> idx;
      for (std::size_t k = 1; k < toks.size(); ++k) {
        int v = parse_face_index(toks[k], line_number);
        if (v < 0) v = n + v + 1;  // relative index
        if (v < 1 || v > n)
          throw StructuralError("face index " + toks[k] + " out of range at line " +
                                std::to_string(line_number));
        idx.push_back(v - 1);
      }
      // Fan triangulation for polygons: (0, k, k+1).
      for (std::size_t k = 1; k + 1 < idx.size(); ++k)
        mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
    // Other record types (o, g, s, usemtl, ...) are ignored.
  }
  // Normals are kept only when they pair 1:1 with vertices.
  if (!mesh.normals.empty() && mesh.normals.size() != mesh.vertices.size())
    mesh.normals.clear();
  validate_mesh(mesh);
  return mesh;
}

std::string save_obj(const Mesh& mesh) {
  std::string out;
  out.reserve(mesh.vertices.size() * 40 + mesh.faces.size() * 16);
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
    out += buf;
  }
  for (const Vec3& n : mesh.normals) {
    std::snprintf(buf, sizeof(buf), "vn %.9g %.9g %.9g\n", n.x, n.y, n.z);
    out += buf;
  }
  for (const auto& f : mesh.faces) {
    std::snprintf(buf, sizeof(buf), "f %d %d %d\n", f[0] + 1, f[1] + 1,
                  f[2] + 1);
    out += buf;
  }
  return out;
}

Mesh load_obj_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open OBJ file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_obj(ss.str());
}

void save_obj_file(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write OBJ file: " + path);
  out << save_obj(mesh);
}

Mesh make_box(const Vec3& center, const Vec3& size) {
  const Vec3 h = size * 0.5;
  Mesh mesh;
  mesh.vertices = {
      {center.x - h.x, center.y - h.y, center.z - h.z},
      {center.x + h.x, center.y - h.y, center.z - h.z},
      {center.x + h.x, center.y + h.y, center.z - h.z},
      {center.x - h.x, center.y + h.y, center.z - h.z},
      {center.x - h.x, center.y - h.y, center.z + h.z},
      {center.x + h.x, center.y - h.y, center.z + h.z},
      {center.x + h.x, center.y + h.y, center.z + h.z},
      {center.x - h.x, center.y + h.y, center.z + h.z},
  };
  mesh.faces = {
      {0, 2, 1}, {0, 3, 2},  // z-
      {4, 5, 6}, {4, 6, 7},  // z+
      {0, 1, 5}, {0, 5, 4},  // y-
      {3, 7, 6}, {3, 6, 2},  // y+
      {0, 4, 7}, {0, 7, 3},  // x-
      {1, 2, 6}, {1, 6, 5},  // x+
  };
  return mesh;
}

Mesh make_sphere(double radius, int rings, int segments) {
  Mesh mesh;
  const double pi = 3.14159265358979323846;
  // Poles plus (rings-1) latitude circles.
  mesh.vertices.push_back({0, 0, radius});
  for (int r = 1; r < rings; ++r) {
    const double phi = pi * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double theta = 2.0 * pi * s / segments;
      mesh.vertices.push_back({radius * std::sin(phi) * std::cos(theta),
                               radius * std::sin(phi) * std::sin(theta),
                               radius * std::cos(phi)});
    }
  }
  mesh.vertices.push_back({0, 0, -radius});
  const int south = static_cast<int>(mesh.vertices.size()) - 1;
  auto ring_vertex = [&](int r, int s) {
    return 1 + (r - 1) * segments + (s % segments);
  };
  for (int s = 0; s < segments; ++s)
    mesh.faces.push_back({0, ring_vertex(1, s), ring_vertex(1, s + 1)});
  for (int r = 1; r + 1 < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      const int a = ring_vertex(r, s), b = ring_vertex(r, s + 1);
      const int c = ring_vertex(r + 1, s), d = ring_vertex(r + 1, s + 1);
      mesh.faces.push_back({a, c, d});
      mesh.faces.push_back({a, d, b});
    }
  }
  for (int s = 0; s < segments; ++s)
    mesh.faces.push_back(
        {south, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s)});
  return mesh;
}

Mesh make_cylinder(double radius, double height, int segments) {
  Mesh mesh;
  const double pi = 3.14159265358979323846;
  const double hz = height * 0.5;
  for (int s = 0; s < segments; ++s) {
    const double theta = 2.0 * pi * s / segments;
    const double x = radius * std::cos(theta), y = radius * std::sin(theta);
    mesh.vertices.push_back({x, y, -hz});
    mesh.vertices.push_back({x, y, hz});
  }
  const int bottom_center = static_cast<int>(mesh.vertices.size());
  mesh.vertices.push_back({0, 0, -hz});
  const int top_center = bottom_center + 1;
  mesh.vertices.push_back({0, 0, hz});
  for (int s = 0; s < segments; ++s) {
    const int b0 = 2 * s, t0 = 2 * s + 1;
    const int b1 = 2 * ((s + 1) % segments), t1 = 2 * ((s + 1) % segments) + 1;
    mesh.faces.push_back({b0, b1, t1});
    mesh.faces.push_back({b0, t1, t0});
    mesh.faces.push_back({bottom_center, b1, b0});
    mesh.faces.push_back({top_center, t0, t1});
  }
  return mesh;
}

}  // namespace meshtrace
