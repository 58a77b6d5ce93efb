#include "meshtrace/mean_shape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <queue>
#include <set>

#include "meshtrace/error.hpp"

namespace meshtrace {

#include "mc_tables.inc"

namespace {

// Corner offsets and the edge -> corner-pair map, Bourke numbering.
const int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                           {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
const int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0},
                                {4, 5}, {5, 6}, {6, 7}, {7, 4},
                                {0, 4}, {1, 5}, {2, 6}, {3, 7}};

double signed_volume(const Mesh& mesh) {
  double v = 0.0;
  for (const auto& f : mesh.faces)
    v += dot(mesh.vertices[f[0]],
             cross(mesh.vertices[f[1]], mesh.vertices[f[2]]));
  return v / 6.0;
}

}  // namespace

OccupancyGrid largest_component(const OccupancyGrid& grid) {
  const std::size_t n = grid.cell_count();
  std::vector<int> label(n, -1);
  std::size_t best_size = 0;
  int best_label = -1;
  int next_label = 0;

  const auto nxyz = [&](std::size_t idx) {
    const int k = static_cast<int>(idx % grid.nz);
    const int j = static_cast<int>((idx / grid.nz) % grid.ny);
    const int i = static_cast<int>(idx / (static_cast<std::size_t>(grid.ny) * grid.nz));
    return std::array<int, 3>{i, j, k};
  };

  for (std::size_t seed = 0; seed < n; ++seed) {
    if (grid.values[seed] <= 0.5 || label[seed] >= 0) continue;
    const int lab = next_label++;
    std::size_t size = 0;
    std::deque<std::size_t> queue{seed};
    label[seed] = lab;
    while (!queue.empty()) {
      const std::size_t cur = queue.front();
      queue.pop_front();
      ++size;
      const auto [i, j, k] = nxyz(cur);
      const int di[6] = {1, -1, 0, 0, 0, 0};
      const int dj[6] = {0, 0, 1, -1, 0, 0};
      const int dk[6] = {0, 0, 0, 0, 1, -1};
      for (int d = 0; d < 6; ++d) {
        const int ni = i + di[d], nj = j + dj[d], nk = k + dk[d];
        if (ni < 0 || nj < 0 || nk < 0 || ni >= grid.nx || nj >= grid.ny ||
            nk >= grid.nz)
          continue;
        const std::size_t nidx = grid.index(ni, nj, nk);
        if (grid.values[nidx] > 0.5 && label[nidx] < 0) {
          label[nidx] = lab;
          queue.push_back(nidx);
        }
      }
    }
    // Strict > keeps the earliest (lowest seed index) component on ties.
    if (size > best_size) {
      best_size = size;
      best_label = lab;
    }
  }
  if (best_label < 0)
    throw DegenerateError("no occupied cells after binarization");

  OccupancyGrid out = grid;
  for (std::size_t i = 0; i < n; ++i)
    out.values[i] = (label[i] == best_label) ? 1.0 : 0.0;
  return out;
}

Mesh marching_cubes(const OccupancyGrid& grid, double iso) {
  validate_grid(grid);
  // Field sample at lattice point (i,j,k) = value of cell (i,j,k); one
  // empty padding layer closes surfaces at the volume boundary.
  const auto field = [&](int i, int j, int k) -> double {
    if (i < 0 || j < 0 || k < 0 || i >= grid.nx || j >= grid.ny || k >= grid.nz)
      return 0.0;
    return grid.at(i, j, k);
  };
  const auto lattice_pos = [&](int i, int j, int k) {
    return grid.cell_center(i, j, k);  // formula is valid outside range too
  };

  Mesh mesh;
  std::map<std::array<int, 6>, int> edge_vertex;
  const auto vertex_on_edge = [&](std::array<int, 3> a, std::array<int, 3> b) {
    if (std::tie(b[0], b[1], b[2]) < std::tie(a[0], a[1], a[2])) std::swap(a, b);
    std::array<int, 6> key{a[0], a[1], a[2], b[0], b[1], b[2]};
    const auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double va = field(a[0], a[1], a[2]);
    const double vb = field(b[0], b[1], b[2]);
    const double t = (std::abs(vb - va) < 1e-12) ? 0.5 : (iso - va) / (vb - va);
    const Vec3 pa = lattice_pos(a[0], a[1], a[2]);
    const Vec3 pb = lattice_pos(b[0], b[1], b[2]);
    const int idx = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(pa + (pb - pa) * t);
    edge_vertex.emplace(key, idx);
    return idx;
  };

  for (int i = -1; i < grid.nx; ++i) {
    for (int j = -1; j < grid.ny; ++j) {
      for (int k = -1; k < grid.nz; ++k) {
        int case_index = 0;
        for (int c = 0; c < 8; ++c) {
          const double v =
              field(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (v < iso) case_index |= (1 << c);
        }
        if (case_index == 0 || case_index == 255) continue;
        const signed char* tri = kTriTable[case_index];
        for (int t = 0; tri[t] >= 0; t += 3) {
          int v[3];
          for (int e = 0; e < 3; ++e) {
            const int edge = tri[t + e];
            const int* c0 = kCorner[kEdgeCorner[edge][0]];
            const int* c1 = kCorner[kEdgeCorner[edge][1]];
            v[e] = vertex_on_edge({i + c0[0], j + c0[1], k + c0[2]},
                                  {i + c1[0], j + c1[1], k + c1[2]});
          }
          if (v[0] != v[1] && v[1] != v[2] && v[0] != v[2])
            mesh.faces.push_back({v[0], v[1], v[2]});
        }
      }
    }
  }

  // Normalize to outward orientation.
  if (signed_volume(mesh) < 0.0)
    for (auto& f : mesh.faces) std::swap(f[1], f[2]);
  return mesh;
}

// --- Quadric-error simplification -----------------------------------------

namespace {

// Symmetric 4x4 quadric stored as upper triangle + full evaluation.
struct Quadric {
  // a..j follow Garland-Heckbert: [a b c d; b e f g; c f h i; d g i j]
  double a = 0, b = 0, c = 0, d = 0, e = 0, f = 0, g = 0, h = 0, i = 0, j = 0;

  void add_plane(const Vec3& n, double dd, double weight) {
    a += weight * n.x * n.x;
    b += weight * n.x * n.y;
    c += weight * n.x * n.z;
    d += weight * n.x * dd;
    e += weight * n.y * n.y;
    f += weight * n.y * n.z;
    g += weight * n.y * dd;
    h += weight * n.z * n.z;
    i += weight * n.z * dd;
    j += weight * dd * dd;
  }

  Quadric& operator+=(const Quadric& o) {
    a += o.a;
    b += o.b;
    c += o.c;
    d += o.d;
    e += o.e;
    f += o.f;
    g += o.g;
    h += o.h;
    i += o.i;
    j += o.j;
    return *this;
  }

  double eval(const Vec3& v) const {
    return a * v.x * v.x + 2 * b * v.x * v.y + 2 * c * v.x * v.z +
           2 * d * v.x + e * v.y * v.y + 2 * f * v.y * v.z + 2 * g * v.y +
           h * v.z * v.z + 2 * i * v.z + j;
  }

  // Minimizer of the quadric, if the 3x3 system is well conditioned.
  // Solves [a b c; b e f; c f h] x = -[d, g, i] by Cramer's rule.
  bool minimize(Vec3& out) const {
    const double m00 = a, m01 = b, m02 = c;
    const double m10 = b, m11 = e, m12 = f;
    const double m20 = c, m21 = f, m22 = h;
    const double det = m00 * (m11 * m22 - m12 * m21) -
                       m01 * (m10 * m22 - m12 * m20) +
                       m02 * (m10 * m21 - m11 * m20);
    if (std::abs(det) < 1e-12) return false;
    const double r0 = -d, r1 = -g, r2 = -i;
    const double dx = r0 * (m11 * m22 - m12 * m21) -
                      m01 * (r1 * m22 - m12 * r2) +
                      m02 * (r1 * m21 - m11 * r2);
    const double dy = m00 * (r1 * m22 - m12 * r2) -
                      r0 * (m10 * m22 - m12 * m20) +
                      m02 * (m10 * r2 - r1 * m20);
    const double dz = m00 * (m11 * r2 - r1 * m21) -
                      m01 * (m10 * r2 - r1 * m20) +
                      r0 * (m10 * m21 - m11 * m20);
    out = {dx / det, dy / det, dz / det};
    return is_finite(out);
  }
};

}  // namespace

Mesh simplify_qem(const Mesh& input, int target_faces) {
  if (target_faces < 4) throw ArgumentError("target face count must be >= 4");
  Mesh mesh = input;
  validate_mesh(mesh);
  if (static_cast<int>(mesh.faces.size()) <= target_faces) return mesh;

  const int nv = static_cast<int>(mesh.vertices.size());
  std::vector<Quadric> quadrics(nv);
  std::map<std::pair<int, int>, int> edge_face_count;

  for (const auto& f : mesh.faces) {
    const Vec3& p0 = mesh.vertices[f[0]];
    const Vec3& p1 = mesh.vertices[f[1]];
    const Vec3& p2 = mesh.vertices[f[2]];
    const Vec3 nrm = cross(p1 - p0, p2 - p0);
    const double area2 = norm(nrm);
    if (area2 <= 0.0) continue;
    const Vec3 n = nrm / area2;
    const double dd = -dot(n, p0);
    for (int k = 0; k < 3; ++k)
      quadrics[f[k]].add_plane(n, dd, 0.5 * area2);
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      ++edge_face_count[{std::min(a, b), std::max(a, b)}];
    }
  }

  // Boundary penalty: a heavy quadric perpendicular to each boundary edge.
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      if (edge_face_count[{std::min(a, b), std::max(a, b)}] != 1) continue;
      const Vec3& pa = mesh.vertices[a];
      const Vec3& pb = mesh.vertices[b];
      const Vec3 face_n = cross(mesh.vertices[f[1]] - mesh.vertices[f[0]],
                                mesh.vertices[f[2]] - mesh.vertices[f[0]]);
      Vec3 n = cross(pb - pa, face_n);
      const double len = norm(n);
      if (len <= 0.0) continue;
      n = n / len;
      const double dd = -dot(n, pa);
      const double w = 1e3 * norm2(pb - pa);
      quadrics[a].add_plane(n, dd, w);
      quadrics[b].add_plane(n, dd, w);
    }
  }

  // Live connectivity: vertex -> set of face ids, faces mutate in place.
  std::vector<std::array<int, 3>> faces(mesh.faces.begin(), mesh.faces.end());
  std::vector<std::set<int>> vertex_faces(nv);
  std::vector<bool> face_alive(faces.size(), true);
  for (std::size_t fi = 0; fi < faces.size(); ++fi)
    for (int k = 0; k < 3; ++k) vertex_faces[faces[fi][k]].insert(static_cast<int>(fi));
  int alive_faces = static_cast<int>(faces.size());

  std::vector<int> stamp(nv, 0);

  struct Candidate {
    double cost;
    int a, b;       // collapse b into a (position moves to `pos`)
    Vec3 pos;
    int stamp_a, stamp_b;
    bool operator<(const Candidate& o) const { return cost > o.cost; }
  };
  std::priority_queue<Candidate> queue;

  const auto best_position = [&](int a, int b, Vec3& pos, double& cost) {
    Quadric q = quadrics[a];
    q += quadrics[b];
    Vec3 opt;
    const Vec3 mid = (mesh.vertices[a] + mesh.vertices[b]) * 0.5;
    double best = q.eval(mid);
    pos = mid;
    for (const Vec3& cand : {mesh.vertices[a], mesh.vertices[b]}) {
      const double c = q.eval(cand);
      if (c < best) {
        best = c;
        pos = cand;
      }
    }
    if (q.minimize(opt)) {
      const double c = q.eval(opt);
      if (c < best) {
        best = c;
        pos = opt;
      }
    }
    cost = best;
  };

  const auto push_edge = [&](int a, int b) {
    if (a == b) return;
    if (a > b) std::swap(a, b);
    Candidate c;
    c.a = a;
    c.b = b;
    best_position(a, b, c.pos, c.cost);
    c.stamp_a = stamp[a];
    c.stamp_b = stamp[b];
    queue.push(c);
  };

  {
    std::set<std::pair<int, int>> seen;
    for (const auto& f : faces)
      for (int k = 0; k < 3; ++k) {
        const int a = std::min(f[k], f[(k + 1) % 3]);
        const int b = std::max(f[k], f[(k + 1) % 3]);
        if (seen.emplace(a, b).second) push_edge(a, b);
      }
  }

  const auto face_normal = [&](const std::array<int, 3>& f) {
    return cross(mesh.vertices[f[1]] - mesh.vertices[f[0]],
                 mesh.vertices[f[2]] - mesh.vertices[f[0]]);
  };

  while (alive_faces > target_faces && !queue.empty()) {
    const Candidate cand = queue.top();
    queue.pop();
    const int a = cand.a, b = cand.b;
    if (cand.stamp_a != stamp[a] || cand.stamp_b != stamp[b]) continue;
    // Edge may have died since it was queued.
    std::vector<int> shared;
    for (int fi : vertex_faces[a])
      if (vertex_faces[b].count(fi)) shared.push_back(fi);
    if (shared.empty()) continue;

    // Link condition (light): collapsing an edge whose endpoints share
    // more than two faces would pinch the surface.
    if (shared.size() > 2) continue;

    // Reject collapses that flip any surviving face.
    bool flips = false;
    const Vec3 old_a = mesh.vertices[a];
    const Vec3 old_b = mesh.vertices[b];
    for (int vid : {a, b}) {
      for (int fi : vertex_faces[vid]) {
        if (!face_alive[fi]) continue;
        if (std::find(shared.begin(), shared.end(), fi) != shared.end())
          continue;
        const Vec3 before = face_normal(faces[fi]);
        mesh.vertices[a] = cand.pos;
        mesh.vertices[b] = cand.pos;
        const Vec3 after = face_normal(faces[fi]);
        mesh.vertices[a] = old_a;
        mesh.vertices[b] = old_b;
        if (dot(before, after) <= 0.0) {
          flips = true;
          break;
        }
      }
      if (flips) break;
    }
    if (flips) continue;

    // Commit: move a, retire b, rewrite b's faces to a.
    mesh.vertices[a] = cand.pos;
    quadrics[a] += quadrics[b];
    for (int fi : shared) {
      if (face_alive[fi]) {
        face_alive[fi] = false;
        --alive_faces;
      }
      for (int k = 0; k < 3; ++k) vertex_faces[faces[fi][k]].erase(fi);
    }
    for (int fi : std::vector<int>(vertex_faces[b].begin(), vertex_faces[b].end())) {
      vertex_faces[b].erase(fi);
      for (int k = 0; k < 3; ++k)
        if (faces[fi][k] == b) faces[fi][k] = a;
      // Degenerate after rewrite (two identical corners) -> drop.
      const auto& f = faces[fi];
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
        if (face_alive[fi]) {
          face_alive[fi] = false;
          --alive_faces;
        }
        for (int k = 0; k < 3; ++k)
          if (faces[fi][k] != b) vertex_faces[faces[fi][k]].erase(fi);
      } else {
        vertex_faces[a].insert(fi);
      }
    }
    ++stamp[a];
    ++stamp[b];

    // Refresh candidate edges around the merged vertex.
    std::set<int> neighbors;
    for (int fi : vertex_faces[a])
      for (int k = 0; k < 3; ++k)
        if (faces[fi][k] != a) neighbors.insert(faces[fi][k]);
    for (int nb : neighbors) push_edge(a, nb);
  }

  // Compact the result.
  Mesh out;
  std::vector<int> remap(nv, -1);
  for (std::size_t fi = 0; fi < faces.size(); ++fi) {
    if (!face_alive[fi]) continue;
    std::array<int, 3> nf{};
    for (int k = 0; k < 3; ++k) {
      const int v = faces[fi][k];
      if (remap[v] < 0) {
        remap[v] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[v]);
      }
      nf[k] = remap[v];
    }
    out.faces.push_back(nf);
  }
  return out;
}

Mesh mean_shape(const std::vector<Mesh>& meshes, int resolution, double iso,
                int target_faces) {
  if (meshes.empty()) throw ArgumentError("mean_shape needs >= 1 mesh");
  Aabb box;
  for (const Mesh& m : meshes) box.expand(bounding_box(m));
  if (box.empty()) throw DegenerateError("input meshes have no vertices");

  OccupancyGrid avg;
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    OccupancyGrid g = voxelize_in_box(meshes[i], box, resolution);
    if (i == 0) {
      avg = std::move(g);
    } else {
      for (std::size_t c = 0; c < avg.values.size(); ++c)
        avg.values[c] += g.values[c];
    }
  }
  for (double& v : avg.values) v /= static_cast<double>(meshes.size());

  OccupancyGrid binary = avg;
  for (double& v : binary.values) v = (v > iso) ? 1.0 : 0.0;

  const OccupancyGrid component = largest_component(binary);
  const Mesh surface = marching_cubes(component, 0.5);
  if (surface.faces.empty())
    throw DegenerateError("marching cubes produced no faces");
  return simplify_qem(surface, target_faces);
}

}  // namespace meshtrace
