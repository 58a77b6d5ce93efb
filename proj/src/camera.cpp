#include "meshtrace/camera.hpp"

#include <cmath>

#include "meshtrace/error.hpp"

namespace meshtrace {

void validate_camera(const CameraRig& cam) {
  if (!(cam.viewport.width > 0.0 && cam.viewport.height > 0.0))
    throw ArgumentError("camera viewport must have positive size");
  for (const Mat4* m : {&cam.world, &cam.view, &cam.projection})
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        if (!std::isfinite((*m)(r, c)))
          throw ArgumentError("camera matrix has non-finite entry");
}

Mat4 perspective_projection(double focal_px, double width, double height,
                            double z_near, double z_far) {
  if (focal_px <= 0.0 || width <= 0.0 || height <= 0.0)
    throw ArgumentError("perspective_projection: nonpositive focal/size");
  if (!(z_far > z_near && z_near > 0.0))
    throw ArgumentError("perspective_projection: need 0 < z_near < z_far");
  Mat4 p;
  p(0, 0) = 2.0 * focal_px / width;
  p(1, 1) = 2.0 * focal_px / height;
  p(2, 2) = z_far / (z_far - z_near);
  p(2, 3) = -z_far * z_near / (z_far - z_near);
  p(3, 2) = 1.0;
  return p;
}

void validate_feature(const RoiFeature& feat) {
  if (feat.channels < 1 || feat.height < 2 || feat.width < 2)
    throw ArgumentError("roi feature needs >=1 channel and >=2x2 grid");
  if (feat.data.size() !=
      std::size_t(feat.channels) * feat.height * feat.width)
    throw ArgumentError("roi feature data size mismatch");
  for (double v : feat.data)
    if (!std::isfinite(v)) throw ArgumentError("roi feature has non-finite value");
}

std::vector<ProjectedVertex> project_vertices(const std::vector<Vec3>& verts,
                                              const CameraRig& cam,
                                              const Box& roi) {
  validate_camera(cam);
  if (!roi.valid()) throw ArgumentError("project_vertices: empty ROI box");
  const Mat4 combined = cam.projection * cam.view * cam.world;
  const double bw = roi.x1 - roi.x0;
  const double bh = roi.y1 - roi.y0;
  const Viewport& vp = cam.viewport;

  std::vector<ProjectedVertex> out(verts.size());
  for (std::size_t i = 0; i < verts.size(); ++i) {
    ProjectedVertex& pv = out[i];
    const Vec4 clip = combined.mul_point(verts[i]);
    if (clip.w <= 0.0) {
      pv.behind = true;
      continue;
    }
    const double inv_w = 1.0 / clip.w;
    const double ndc_x = clip.x * inv_w;
    const double ndc_y = clip.y * inv_w;
    const double px = vp.x + (ndc_x + 1.0) * 0.5 * vp.width;
    const double py = vp.y + (1.0 - ndc_y) * 0.5 * vp.height;
    const double u = (px - roi.x0) / bw;
    const double v = (py - roi.y0) / bh;
    pv.u = std::min(1.0, std::max(0.0, u));
    pv.v = std::min(1.0, std::max(0.0, v));
    pv.clamped_u = u != pv.u;
    pv.clamped_v = v != pv.v;

    // d(clip)/dp rows come straight out of the combined matrix; u and v are
    // quotients, so d(ndc_x)/dp = (cx_row - ndc_x * cw_row) / w.
    for (int a = 0; a < 3; ++a) {
      const double dcx = combined(0, a);
      const double dcy = combined(1, a);
      const double dcw = combined(3, a);
      const double dndc_x = (dcx - ndc_x * dcw) * inv_w;
      const double dndc_y = (dcy - ndc_y * dcw) * inv_w;
      pv.jac[0][a] =
          pv.clamped_u ? 0.0 : dndc_x * 0.5 * vp.width / bw;
      pv.jac[1][a] =
          pv.clamped_v ? 0.0 : -dndc_y * 0.5 * vp.height / bh;
    }
  }
  return out;
}

}  // namespace meshtrace
