// Small fixed-size vector/matrix types shared across the library.
// Doubles throughout; learnable-layer math lives in Eigen, these cover
// the geometry plumbing (points, normals, rigid transforms, cameras).
#pragma once

#include <array>
#include <cmath>
#include <limits>

namespace meshtrace {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  bool operator==(const Vec3& o) const = default;
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm2(const Vec3& v) { return dot(v, v); }
inline double norm(const Vec3& v) { return std::sqrt(norm2(v)); }

inline Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  return n > 0.0 ? v / n : Vec3{0.0, 0.0, 0.0};
}

inline bool is_finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

// Column-major 3x3 used for rotations.
struct Mat3 {
  // m[row][col]
  std::array<std::array<double, 3>, 3> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m[0][0] = r.m[1][1] = r.m[2][2] = 1.0;
    return r;
  }

  double& operator()(int r, int c) { return m[r][c]; }
  double operator()(int r, int c) const { return m[r][c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += m[i][k] * o.m[k][j];
        r.m[i][j] = s;
      }
    return r;
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
    return r;
  }
};

// Intrinsic Z-Y-X Euler composition: R = Rz(a) * Ry(b) * Rx(c).
inline Mat3 rotation_zyx(double az, double ay, double ax) {
  const double cz = std::cos(az), sz = std::sin(az);
  const double cy = std::cos(ay), sy = std::sin(ay);
  const double cx = std::cos(ax), sx = std::sin(ax);
  Mat3 rz = Mat3::identity();
  rz(0, 0) = cz;
  rz(0, 1) = -sz;
  rz(1, 0) = sz;
  rz(1, 1) = cz;
  Mat3 ry = Mat3::identity();
  ry(0, 0) = cy;
  ry(0, 2) = sy;
  ry(2, 0) = -sy;
  ry(2, 2) = cy;
  Mat3 rx = Mat3::identity();
  rx(1, 1) = cx;
  rx(1, 2) = -sx;
  rx(2, 1) = sx;
  rx(2, 2) = cx;
  return rz * ry * rx;
}

struct Vec4 {
  double x = 0.0, y = 0.0, z = 0.0, w = 0.0;
};

// Row-major 4x4, column-vector convention: p' = M * p.
struct Mat4 {
  std::array<std::array<double, 4>, 4> m{};

  static Mat4 identity() {
    Mat4 r;
    r.m[0][0] = r.m[1][1] = r.m[2][2] = r.m[3][3] = 1.0;
    return r;
  }

  double& operator()(int r, int c) { return m[r][c]; }
  double operator()(int r, int c) const { return m[r][c]; }

  Mat4 operator*(const Mat4& o) const {
    Mat4 r;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = 0.0;
        for (int k = 0; k < 4; ++k) s += m[i][k] * o.m[k][j];
        r.m[i][j] = s;
      }
    return r;
  }

  Vec4 mul_point(const Vec3& v) const {
    Vec4 r;
    r.x = m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z + m[0][3];
    r.y = m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z + m[1][3];
    r.z = m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z + m[2][3];
    r.w = m[3][0] * v.x + m[3][1] * v.y + m[3][2] * v.z + m[3][3];
    return r;
  }

  static Mat4 translation(const Vec3& t) {
    Mat4 r = identity();
    r(0, 3) = t.x;
    r(1, 3) = t.y;
    r(2, 3) = t.z;
    return r;
  }

  static Mat4 from_rotation(const Mat3& rot) {
    Mat4 r = identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = rot(i, j);
    return r;
  }
};

struct Aabb {
  Vec3 lo{std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  void expand(const Vec3& p) {
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
    lo.z = std::min(lo.z, p.z);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
    hi.z = std::max(hi.z, p.z);
  }
  void expand(const Aabb& b) {
    expand(b.lo);
    expand(b.hi);
  }
  bool empty() const { return lo.x > hi.x; }
  Vec3 extent() const { return hi - lo; }
  double longest_edge() const {
    const Vec3 e = extent();
    return std::max(e.x, std::max(e.y, e.z));
  }
  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y &&
           p.z >= lo.z && p.z <= hi.z;
  }
};

}  // namespace meshtrace
