#include "meshtrace/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "meshtrace/error.hpp"
#include "meshtrace/log.hpp"

namespace meshtrace {

void validate_grid(const OccupancyGrid& grid) {
  if (grid.nx < 2 || grid.ny < 2 || grid.nz < 2)
    throw ArgumentError("grid resolution must be >= 2 per axis");
  if (grid.values.size() != grid.cell_count())
    throw StructuralError("grid value count does not match resolution");
  for (double v : grid.values)
    if (!(v >= 0.0 && v <= 1.0))
      throw StructuralError("grid value outside [0,1]");
}

namespace {
// Skewed so it cannot run along edges of axis-aligned geometry.
const Vec3 kRayDir = normalized(Vec3{1.0, 1e-3, 1e-4});
}  // namespace

InsideTester::InsideTester(const Mesh& mesh) {
  Aabb box = bounding_box(mesh);
  if (box.empty()) throw DegenerateError("mesh has no vertices");
  const double x_extent = box.hi.x - box.lo.x;
  // The ray drifts in y/z while crossing the mesh; pad bucket bounds so the
  // candidate set stays a superset of the true hits.
  const double pad_y = 1e-3 * (x_extent + 1.0) + 1e-9;
  const double pad_z = 1e-4 * (x_extent + 1.0) + 1e-9;

  tris_.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    Tri t;
    t.a = mesh.vertices[f[0]];
    t.e1 = mesh.vertices[f[1]] - t.a;
    t.e2 = mesh.vertices[f[2]] - t.a;
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    t.ylo = std::min({t.a.y, b.y, c.y}) - pad_y;
    t.yhi = std::max({t.a.y, b.y, c.y}) + pad_y;
    t.zlo = std::min({t.a.z, b.z, c.z}) - pad_z;
    t.zhi = std::max({t.a.z, b.z, c.z}) + pad_z;
    tris_.push_back(t);
  }

  bn_ = std::max(1, static_cast<int>(std::sqrt(tris_.size() / 4.0)));
  by0_ = box.lo.y - pad_y;
  bz0_ = box.lo.z - pad_z;
  bsy_ = std::max((box.hi.y - box.lo.y + 2 * pad_y) / bn_, 1e-12);
  bsz_ = std::max((box.hi.z - box.lo.z + 2 * pad_z) / bn_, 1e-12);
  buckets_.assign(static_cast<std::size_t>(bn_) * bn_, {});
  for (std::size_t i = 0; i < tris_.size(); ++i) {
    const Tri& t = tris_[i];
    const int jy0 = std::clamp(static_cast<int>((t.ylo - by0_) / bsy_), 0, bn_ - 1);
    const int jy1 = std::clamp(static_cast<int>((t.yhi - by0_) / bsy_), 0, bn_ - 1);
    const int jz0 = std::clamp(static_cast<int>((t.zlo - bz0_) / bsz_), 0, bn_ - 1);
    const int jz1 = std::clamp(static_cast<int>((t.zhi - bz0_) / bsz_), 0, bn_ - 1);
    for (int jy = jy0; jy <= jy1; ++jy)
      for (int jz = jz0; jz <= jz1; ++jz)
        buckets_[static_cast<std::size_t>(jy) * bn_ + jz].push_back(
            static_cast<int>(i));
  }
}

bool InsideTester::inside(const Vec3& point) const {
  const int jy =
      std::clamp(static_cast<int>((point.y - by0_) / bsy_), 0, bn_ - 1);
  const int jz =
      std::clamp(static_cast<int>((point.z - bz0_) / bsz_), 0, bn_ - 1);
  int crossings = 0;
  for (int tri_idx : buckets_[static_cast<std::size_t>(jy) * bn_ + jz]) {
    const Tri& t = tris_[tri_idx];
    if (point.y < t.ylo || point.y > t.yhi || point.z < t.zlo ||
        point.z > t.zhi)
      continue;
    // Moller-Trumbore.
    const Vec3 pvec = cross(kRayDir, t.e2);
    const double det = dot(t.e1, pvec);
    if (std::abs(det) < 1e-14) continue;
    const double inv_det = 1.0 / det;
    const Vec3 tvec = point - t.a;
    const double u = dot(tvec, pvec) * inv_det;
    if (u < 0.0 || u > 1.0) continue;
    const Vec3 qvec = cross(tvec, t.e1);
    const double v = dot(kRayDir, qvec) * inv_det;
    if (v < 0.0 || u + v > 1.0) continue;
    const double thit = dot(t.e2, qvec) * inv_det;
    if (thit > 0.0) ++crossings;
  }
  return (crossings % 2) == 1;
}

OccupancyGrid voxelize_in_box(const Mesh& mesh, const Aabb& box,
                              int resolution) {
  if (resolution < 2) throw ArgumentError("voxel resolution must be >= 2");
  validate_mesh(mesh);
  if (has_boundary_edges(mesh))
    MT_WARN("voxelize: mesh has boundary edges; parity test may misclassify");

  OccupancyGrid grid;
  grid.nx = grid.ny = grid.nz = resolution;
  grid.origin = box.lo;
  const Vec3 extent = box.extent();
  grid.cell = {extent.x / resolution, extent.y / resolution,
               extent.z / resolution};
  grid.values.assign(grid.cell_count(), 0.0);

  const InsideTester tester(mesh);
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j)
      for (int k = 0; k < resolution; ++k)
        if (tester.inside(grid.cell_center(i, j, k))) grid.at(i, j, k) = 1.0;
  return grid;
}

OccupancyGrid voxelize(const Mesh& mesh, int resolution) {
  return voxelize_in_box(mesh, bounding_box(mesh), resolution);
}

double occupied_fraction(const OccupancyGrid& grid) {
  double sum = 0.0;
  for (double v : grid.values) sum += v;
  return grid.values.empty() ? 0.0 : sum / static_cast<double>(grid.values.size());
}

double volumetric_iou(const Mesh& a, const Mesh& b, int resolution) {
  Aabb box = bounding_box(a);
  box.expand(bounding_box(b));
  const OccupancyGrid ga = voxelize_in_box(a, box, resolution);
  const OccupancyGrid gb = voxelize_in_box(b, box, resolution);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < ga.values.size(); ++i) {
    const bool ia = ga.values[i] > 0.5, ib = gb.values[i] > 0.5;
    inter += (ia && ib) ? 1 : 0;
    uni += (ia || ib) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {
constexpr char kGridMagic[4] = {'M', 'T', 'O', 'G'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size())
    throw ParseError("occupancy grid payload truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}
}  // namespace

std::string save_grid(const OccupancyGrid& grid) {
  std::string out;
  out.append(kGridMagic, 4);
  put<std::uint32_t>(out, 1);  // version
  put<std::int32_t>(out, grid.nx);
  put<std::int32_t>(out, grid.ny);
  put<std::int32_t>(out, grid.nz);
  for (double v : {grid.origin.x, grid.origin.y, grid.origin.z}) put(out, v);
  for (double v : {grid.cell.x, grid.cell.y, grid.cell.z}) put(out, v);
  for (double v : grid.values) put<float>(out, static_cast<float>(v));
  return out;
}

OccupancyGrid load_grid(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kGridMagic, 4) != 0)
    throw ParseError("not an occupancy grid blob (bad magic)");
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != 1)
    throw ParseError("unsupported grid version " + std::to_string(version));
  OccupancyGrid grid;
  grid.nx = take<std::int32_t>(bytes, pos);
  grid.ny = take<std::int32_t>(bytes, pos);
  grid.nz = take<std::int32_t>(bytes, pos);
  grid.origin.x = take<double>(bytes, pos);
  grid.origin.y = take<double>(bytes, pos);
  grid.origin.z = take<double>(bytes, pos);
  grid.cell.x = take<double>(bytes, pos);
  grid.cell.y = take<double>(bytes, pos);
  grid.cell.z = take<double>(bytes, pos);
  if (grid.nx < 2 || grid.ny < 2 || grid.nz < 2)
    throw ParseError("grid resolution out of range");
  grid.values.resize(grid.cell_count());
  for (double& v : grid.values) v = take<float>(bytes, pos);
  validate_grid(grid);
  return grid;
}

void save_grid_file(const OccupancyGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write grid file: " + path);
  const std::string bytes = save_grid(grid);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

OccupancyGrid load_grid_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open grid file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_grid(ss.str());
}

}  // namespace meshtrace
