#pragma once

#include <optional>
#include <string>

#include "meshtrace/mask.hpp"
#include "meshtrace/mesh.hpp"

namespace meshtrace {

// Axis-aligned pixel box, half-open semantics are not assumed: area is
// (x1-x0)*(y1-y0) on real-valued corners.
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double area() const { return (x1 - x0) * (y1 - y0); }
  bool valid() const { return x0 < x1 && y0 < y1; }
};

bool operator==(const Box& a, const Box& b);

struct Detection {
  Box box;
  int class_id = 0;
  double score = 1.0;
  std::optional<BinaryMask> mask;
  std::optional<Mesh> mesh;
  int frame_id = 0;
  int instance_id = -1;
  int track_id = -1;
  std::string clip_id;
};

struct GroundTruthObject {
  Box box;
  int class_id = 0;
  std::optional<BinaryMask> mask;
  std::optional<Mesh> mesh;
  double occlusion_rate = 0.0;
  int frame_id = 0;
  int instance_id = -1;
  std::string clip_id;
};

void validate_detection(const Detection& d);
void validate_ground_truth(const GroundTruthObject& g);

}  // namespace meshtrace
