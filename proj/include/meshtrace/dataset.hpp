#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshtrace/camera.hpp"
#include "meshtrace/detection.hpp"
#include "meshtrace/infer.hpp"
#include "meshtrace/train.hpp"

namespace meshtrace {

// ---- file plumbing shared by the formats below -----------------------------

std::string read_text_file(const std::string& path);
// Writes to `<path>.tmp` and renames into place; creates parent directories.
void write_text_file_atomic(const std::string& path, const std::string& bytes);

// ---- manifest records --------------------------------------------------

struct InstanceRecord {
  int instance_id = 0;
  int class_id = 0;
  Box box;
  Mat4 world = Mat4::identity();  // model -> world for this instance
  std::string mask;         // modal mask path, relative to the dataset root
  std::string amodal_mask;  // amodal mask path
  std::string mesh;         // ground-truth OBJ path
  std::string feature;      // ROI feature blob path
  double occlusion_rate = 0.0;
  bool visible = true;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

struct FrameRecord {
  int frame_id = 0;
  CameraRig camera;
  bool shot_transition = false;
  std::vector<InstanceRecord> instances;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

struct ClipManifest {
  int schema_version = 1;
  std::string clip_id;
  std::vector<FrameRecord> frames;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

void validate_manifest(const ClipManifest& manifest);

// JSON-lines round trip: a schema-versioned header line opens each clip,
// followed by one frame record per line. A stream may hold several clips.
// Unknown fields survive a read/write cycle, and writing a freshly read
// manifest reproduces the input byte-for-byte (canonical form).
std::string manifest_to_jsonl(const ClipManifest& manifest);
std::vector<ClipManifest> manifests_from_jsonl(const std::string& text);
std::vector<ClipManifest> read_manifests(const std::string& path);
void write_manifest(const ClipManifest& manifest, const std::string& path);

// ---- detections JSONL (tracking input/output) -----------------------------

std::string detections_to_jsonl(const std::vector<Detection>& dets);
std::vector<Detection> detections_from_jsonl(const std::string& text);
std::vector<Detection> read_detections(const std::string& path);
void write_detections(const std::vector<Detection>& dets,
                      const std::string& path);

// ---- ROI feature blobs ---------------------------------------------------

std::string feature_to_bytes(const RoiFeature& feat);
RoiFeature feature_from_bytes(const std::string& bytes);
RoiFeature read_feature(const std::string& path);
void write_feature(const RoiFeature& feat, const std::string& path);

// ---- fixture generation -------------------------------------------------

struct ObjectSpec {
  std::string primitive = "cube";  // cube | sphere | cylinder
  int class_id = 1;
  double size = 1.0;
  Vec3 position{0.0, 0.0, 6.0};  // world position at frame 0
  Vec3 velocity;                 // world translation per frame
  Vec3 spin;                     // Euler rates per frame (z, y, x; radians)
  bool annotated = true;         // false: pure occluder, no records emitted
  double jitter = 0.0;           // one-time Gaussian vertex noise on the base
};

struct FixtureSpec {
  std::string clip_id = "clip0";
  int frames = 5;
  int width = 128;
  int height = 128;
  double focal = 160.0;
  int feature_size = 28;
  Vec3 camera_velocity;
  std::vector<int> shot_transitions;
  std::vector<ObjectSpec> objects;
  std::uint64_t seed = 0;
};

FixtureSpec fixture_spec_from_json(const nlohmann::json& j);
std::vector<FixtureSpec> fixture_specs_from_file(const std::string& path);

// Renders the clip (z-buffered triangle rasterization), writes meshes,
// masks, features, and the manifest under `root`, and returns the manifest.
// Deterministic for a fixed spec. Throws DegenerateError when an annotated
// object is never visible in the whole clip.
ClipManifest generate_fixtures(const FixtureSpec& spec,
                               const std::string& root);

// ---- loading fixtures back ------------------------------------------------

struct LoadedInstance {
  InstanceRecord rec;
  Mesh gt;
  RoiFeature feat;
  BinaryMask modal;
  BinaryMask amodal;
};

struct LoadedClip {
  ClipManifest manifest;
  std::vector<std::vector<LoadedInstance>> frames;  // parallel to manifest
};

LoadedClip load_clip(const std::string& root, const std::string& clip_id);

std::vector<TrainExample> to_train_examples(const LoadedClip& clip);
std::vector<std::vector<InferObservation>> to_observations(
    const LoadedClip& clip);
std::vector<GroundTruthObject> to_ground_truth(const LoadedClip& clip);
std::vector<int> shot_transition_frames(const ClipManifest& manifest);

}  // namespace meshtrace
