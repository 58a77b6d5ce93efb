#pragma once

#include <vector>

#include "meshtrace/detection.hpp"
#include "meshtrace/geometry.hpp"

namespace meshtrace {

struct Viewport {
  double x = 0.0, y = 0.0, width = 0.0, height = 0.0;
};

// Model -> world -> camera -> clip transform chain plus the pixel viewport.
// Column-vector convention throughout: clip = projection * view * world * p.
struct CameraRig {
  Mat4 world = Mat4::identity();
  Mat4 view = Mat4::identity();
  Mat4 projection = Mat4::identity();
  Viewport viewport;
};

void validate_camera(const CameraRig& cam);

// Symmetric pinhole projection with the given focal length in pixels for a
// width x height viewport; the camera looks down +z and clip w equals
// camera-space z. NDC z maps [z_near, z_far] to [0, 1].
Mat4 perspective_projection(double focal_px, double width, double height,
                            double z_near, double z_far);

struct ProjectedVertex {
  double u = 0.0, v = 0.0;  // ROI-normalized coordinates in [0,1]^2
  bool behind = false;      // clip-space w <= 0; feature becomes zero
  bool clamped_u = false, clamped_v = false;
  // d(u,v)/d(model-space position); rows (u,v), cols (x,y,z). Zero rows for
  // clamped axes and behind-camera vertices.
  double jac[2][3] = {};
};

// Projects model-space vertices through the rig into pixels, then normalizes
// into the ROI box. Out-of-ROI coordinates clamp to the box edge.
std::vector<ProjectedVertex> project_vertices(const std::vector<Vec3>& verts,
                                              const CameraRig& cam,
                                              const Box& roi);

// ROI feature grid, channels-first, row-major per channel.
struct RoiFeature {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;  // index (c * height + y) * width + x
  Box box;                   // pixel box the grid was extracted over

  double at(int c, int y, int x) const {
    return data[(std::size_t(c) * height + y) * width + x];
  }
  double& at(int c, int y, int x) {
    return data[(std::size_t(c) * height + y) * width + x];
  }
};

void validate_feature(const RoiFeature& feat);

}  // namespace meshtrace
