#include "meshtrace/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "meshtrace/error.hpp"
#include "meshtrace/log.hpp"
#include "meshtrace/rng.hpp"

namespace meshtrace {

namespace fs = std::filesystem;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file_atomic(const std::string& path,
                            const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError("cannot write file: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ArgumentError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

namespace {

using ojson = nlohmann::ordered_json;

std::string read_text(const std::string& path) { return read_text_file(path); }

void write_file_atomic(const std::string& path, const std::string& bytes) {
  write_text_file_atomic(path, bytes);
}

// ---- json helpers ----------------------------------------------------------

ojson vec_json(const Vec3& v) { return ojson::array({v.x, v.y, v.z}); }
ojson box_json(const Box& b) { return ojson::array({b.x0, b.y0, b.x1, b.y1}); }

ojson mat4_json(const Mat4& m) {
  ojson a = ojson::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) a.push_back(m(r, c));
  return a;
}

[[noreturn]] void field_error(const std::string& field, const std::string& why,
                              long line) {
  throw ParseError("field '" + field + "' " + why, line);
}

const ojson& require(const ojson& obj, const char* key, long line) {
  auto it = obj.find(key);
  if (it == obj.end()) field_error(key, "is missing", line);
  return *it;
}

double num_field(const ojson& obj, const char* key, long line) {
  const ojson& v = require(obj, key, line);
  if (!v.is_number()) field_error(key, "must be a number", line);
  return v.get<double>();
}

int int_field(const ojson& obj, const char* key, long line) {
  const ojson& v = require(obj, key, line);
  if (!v.is_number_integer()) field_error(key, "must be an integer", line);
  return v.get<int>();
}

bool bool_field(const ojson& obj, const char* key, long line) {
  const ojson& v = require(obj, key, line);
  if (!v.is_boolean()) field_error(key, "must be a boolean", line);
  return v.get<bool>();
}

std::string str_field(const ojson& obj, const char* key, long line) {
  const ojson& v = require(obj, key, line);
  if (!v.is_string()) field_error(key, "must be a string", line);
  return v.get<std::string>();
}

std::vector<double> num_array(const ojson& obj, const char* key,
                              std::size_t count, long line) {
  const ojson& v = require(obj, key, line);
  if (!v.is_array() || v.size() != count)
    field_error(key, "must be an array of " + std::to_string(count) +
                         " numbers",
                line);
  std::vector<double> out;
  out.reserve(count);
  for (const auto& e : v) {
    if (!e.is_number()) field_error(key, "must hold only numbers", line);
    out.push_back(e.get<double>());
  }
  return out;
}

Box box_field(const ojson& obj, const char* key, long line) {
  const auto a = num_array(obj, key, 4, line);
  return Box{a[0], a[1], a[2], a[3]};
}

Mat4 mat4_field(const ojson& obj, const char* key, long line) {
  const auto a = num_array(obj, key, 16, line);
  Mat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = a[std::size_t(r) * 4 + c];
  return m;
}

bool is_known(const char* key, std::initializer_list<const char*> known) {
  for (const char* k : known)
    if (std::strcmp(k, key) == 0) return true;
  return false;
}

ojson extras_of(const ojson& obj, std::initializer_list<const char*> known) {
  ojson extra = ojson::object();
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!is_known(it.key().c_str(), known)) extra[it.key()] = it.value();
  return extra;
}

void append_extras(ojson& obj, const ojson& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it)
    obj[it.key()] = it.value();
}

ojson parse_line(const std::string& line, long line_no) {
  try {
    return ojson::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON (") + e.what() + ")", line_no);
  }
}

// ---- manifest <-> json -----------------------------------------------------

constexpr std::initializer_list<const char*> kHeaderKeys = {
    "type", "schema_version", "clip_id"};
constexpr std::initializer_list<const char*> kFrameKeys = {
    "type", "frame_id", "camera", "shot_transition", "instances"};
constexpr std::initializer_list<const char*> kInstanceKeys = {
    "instance_id", "class_id",  "box",  "world",          "mask",
    "amodal_mask", "mesh",      "feature", "occlusion_rate", "visible"};

ojson camera_json(const CameraRig& cam) {
  ojson o;
  o["view"] = mat4_json(cam.view);
  o["projection"] = mat4_json(cam.projection);
  o["viewport"] = ojson::array({cam.viewport.x, cam.viewport.y,
                                cam.viewport.width, cam.viewport.height});
  return o;
}

CameraRig camera_field(const ojson& obj, const char* key, long line) {
  const ojson& v = require(obj, key, line);
  if (!v.is_object()) field_error(key, "must be an object", line);
  CameraRig cam;
  cam.view = mat4_field(v, "view", line);
  cam.projection = mat4_field(v, "projection", line);
  const auto vp = num_array(v, "viewport", 4, line);
  cam.viewport = Viewport{vp[0], vp[1], vp[2], vp[3]};
  return cam;
}

ojson instance_json(const InstanceRecord& r) {
  ojson o;
  o["instance_id"] = r.instance_id;
  o["class_id"] = r.class_id;
  o["box"] = box_json(r.box);
  o["world"] = mat4_json(r.world);
  o["mask"] = r.mask;
  o["amodal_mask"] = r.amodal_mask;
  o["mesh"] = r.mesh;
  o["feature"] = r.feature;
  o["occlusion_rate"] = r.occlusion_rate;
  o["visible"] = r.visible;
  append_extras(o, r.extra);
  return o;
}

InstanceRecord instance_from_json(const ojson& o, long line) {
  if (!o.is_object()) throw ParseError("instance must be an object", line);
  InstanceRecord r;
  r.instance_id = int_field(o, "instance_id", line);
  r.class_id = int_field(o, "class_id", line);
  r.box = box_field(o, "box", line);
  r.world = mat4_field(o, "world", line);
  r.mask = str_field(o, "mask", line);
  r.amodal_mask = str_field(o, "amodal_mask", line);
  r.mesh = str_field(o, "mesh", line);
  r.feature = str_field(o, "feature", line);
  r.occlusion_rate = num_field(o, "occlusion_rate", line);
  if (!(r.occlusion_rate >= 0.0 && r.occlusion_rate <= 1.0))
    field_error("occlusion_rate", "outside [0,1]", line);
  r.visible = bool_field(o, "visible", line);
  r.extra = extras_of(o, kInstanceKeys);
  return r;
}

ojson frame_json(const FrameRecord& f) {
  ojson o;
  o["type"] = "frame";
  o["frame_id"] = f.frame_id;
  o["camera"] = camera_json(f.camera);
  o["shot_transition"] = f.shot_transition;
  ojson insts = ojson::array();
  for (const InstanceRecord& r : f.instances) insts.push_back(instance_json(r));
  o["instances"] = std::move(insts);
  append_extras(o, f.extra);
  return o;
}

FrameRecord frame_from_json(const ojson& o, long line) {
  FrameRecord f;
  f.frame_id = int_field(o, "frame_id", line);
  f.camera = camera_field(o, "camera", line);
  f.shot_transition = bool_field(o, "shot_transition", line);
  const ojson& insts = require(o, "instances", line);
  if (!insts.is_array()) field_error("instances", "must be an array", line);
  for (const auto& e : insts) f.instances.push_back(instance_from_json(e, line));
  f.extra = extras_of(o, kFrameKeys);
  return f;
}

}  // namespace

void validate_manifest(const ClipManifest& manifest) {
  if (manifest.schema_version != 1)
    throw StructuralError("unsupported schema_version " +
                          std::to_string(manifest.schema_version));
  if (manifest.clip_id.empty()) throw StructuralError("empty clip_id");
  int prev = std::numeric_limits<int>::min();
  for (const FrameRecord& f : manifest.frames) {
    if (f.frame_id <= prev)
      throw StructuralError("frame ids must be strictly increasing (clip " +
                            manifest.clip_id + ", frame " +
                            std::to_string(f.frame_id) + ")");
    prev = f.frame_id;
    validate_camera(f.camera);
    std::set<int> seen;
    for (const InstanceRecord& r : f.instances) {
      if (!seen.insert(r.instance_id).second)
        throw StructuralError("duplicate instance_id " +
                              std::to_string(r.instance_id) + " in frame " +
                              std::to_string(f.frame_id));
      if (!r.box.valid())
        throw StructuralError("empty or inverted box for instance " +
                              std::to_string(r.instance_id) + " in frame " +
                              std::to_string(f.frame_id));
      if (!(r.occlusion_rate >= 0.0 && r.occlusion_rate <= 1.0))
        throw StructuralError("occlusion_rate outside [0,1] for instance " +
                              std::to_string(r.instance_id));
    }
  }
}

std::string manifest_to_jsonl(const ClipManifest& manifest) {
  std::string out;
  ojson header;
  header["type"] = "clip_header";
  header["schema_version"] = manifest.schema_version;
  header["clip_id"] = manifest.clip_id;
  append_extras(header, manifest.extra);
  out += header.dump();
  out += '\n';
  for (const FrameRecord& f : manifest.frames) {
    out += frame_json(f).dump();
    out += '\n';
  }
  return out;
}

std::vector<ClipManifest> manifests_from_jsonl(const std::string& text) {
  std::vector<ClipManifest> clips;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const ojson o = parse_line(line, line_no);
    if (!o.is_object())
      throw ParseError("record must be a JSON object", line_no);
    const std::string type = str_field(o, "type", line_no);
    if (type == "clip_header") {
      ClipManifest clip;
      clip.schema_version = int_field(o, "schema_version", line_no);
      if (clip.schema_version != 1)
        field_error("schema_version",
                    "unsupported (" + std::to_string(clip.schema_version) +
                        ")",
                    line_no);
      clip.clip_id = str_field(o, "clip_id", line_no);
      clip.extra = extras_of(o, kHeaderKeys);
      clips.push_back(std::move(clip));
    } else if (type == "frame") {
      if (clips.empty())
        throw ParseError("frame record before any clip_header", line_no);
      clips.back().frames.push_back(frame_from_json(o, line_no));
    } else {
      field_error("type", "must be 'clip_header' or 'frame', got '" + type +
                              "'",
                  line_no);
    }
  }
  if (clips.empty()) throw ParseError("no clip_header record found", 1);
  for (const ClipManifest& c : clips) validate_manifest(c);
  return clips;
}

std::vector<ClipManifest> read_manifests(const std::string& path) {
  try {
    return manifests_from_jsonl(read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line_number);
  }
}

void write_manifest(const ClipManifest& manifest, const std::string& path) {
  validate_manifest(manifest);
  write_file_atomic(path, manifest_to_jsonl(manifest));
}

// ---- detections JSONL -------------------------------------------------------

std::string detections_to_jsonl(const std::vector<Detection>& dets) {
  std::string out;
  for (const Detection& d : dets) {
    ojson o;
    o["clip_id"] = d.clip_id;
    o["frame_id"] = d.frame_id;
    o["class_id"] = d.class_id;
    o["score"] = d.score;
    o["box"] = box_json(d.box);
    o["instance_id"] = d.instance_id;
    o["track_id"] = d.track_id;
    out += o.dump();
    out += '\n';
  }
  return out;
}

std::vector<Detection> detections_from_jsonl(const std::string& text) {
  std::vector<Detection> dets;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const ojson o = parse_line(line, line_no);
    if (!o.is_object())
      throw ParseError("record must be a JSON object", line_no);
    Detection d;
    d.frame_id = int_field(o, "frame_id", line_no);
    d.class_id = int_field(o, "class_id", line_no);
    d.score = num_field(o, "score", line_no);
    d.box = box_field(o, "box", line_no);
    if (o.contains("clip_id")) d.clip_id = str_field(o, "clip_id", line_no);
    if (o.contains("instance_id"))
      d.instance_id = int_field(o, "instance_id", line_no);
    if (o.contains("track_id")) d.track_id = int_field(o, "track_id", line_no);
    try {
      validate_detection(d);
    } catch (const std::exception& e) {
      throw ParseError(e.what(), line_no);
    }
    dets.push_back(std::move(d));
  }
  return dets;
}

std::vector<Detection> read_detections(const std::string& path) {
  try {
    return detections_from_jsonl(read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line_number);
  }
}

void write_detections(const std::vector<Detection>& dets,
                      const std::string& path) {
  write_file_atomic(path, detections_to_jsonl(dets));
}

// ---- ROI feature blobs ------------------------------------------------------

namespace {
constexpr char kFeatMagic[4] = {'M', 'T', 'R', 'F'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size())
    throw ParseError("feature blob truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}
}  // namespace

std::string feature_to_bytes(const RoiFeature& feat) {
  validate_feature(feat);
  std::string out;
  out.append(kFeatMagic, 4);
  put<std::uint32_t>(out, 1);  // version
  put<std::int32_t>(out, feat.channels);
  put<std::int32_t>(out, feat.height);
  put<std::int32_t>(out, feat.width);
  for (double v : {feat.box.x0, feat.box.y0, feat.box.x1, feat.box.y1})
    put(out, v);
  for (double v : feat.data) put(out, v);
  return out;
}

RoiFeature feature_from_bytes(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFeatMagic, 4) != 0)
    throw ParseError("not a feature blob (bad magic)");
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != 1)
    throw ParseError("unsupported feature version " + std::to_string(version));
  RoiFeature feat;
  feat.channels = take<std::int32_t>(bytes, pos);
  feat.height = take<std::int32_t>(bytes, pos);
  feat.width = take<std::int32_t>(bytes, pos);
  if (feat.channels < 1 || feat.channels > 4096 || feat.height < 2 ||
      feat.height > 65536 || feat.width < 2 || feat.width > 65536)
    throw ParseError("feature dimensions out of range");
  feat.box.x0 = take<double>(bytes, pos);
  feat.box.y0 = take<double>(bytes, pos);
  feat.box.x1 = take<double>(bytes, pos);
  feat.box.y1 = take<double>(bytes, pos);
  const std::size_t n = std::size_t(feat.channels) * feat.height * feat.width;
  feat.data.resize(n);
  for (double& v : feat.data) v = take<double>(bytes, pos);
  if (pos != bytes.size()) throw ParseError("trailing bytes in feature blob");
  validate_feature(feat);
  return feat;
}

RoiFeature read_feature(const std::string& path) {
  return feature_from_bytes(read_text(path));
}

void write_feature(const RoiFeature& feat, const std::string& path) {
  write_file_atomic(path, feature_to_bytes(feat));
}

// ---- fixture specs ----------------------------------------------------------

namespace {

Vec3 vec_from_json(const nlohmann::json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 3)
    throw ConfigError("fixture field '" + key + "' must be [x, y, z]");
  for (const auto& e : v)
    if (!e.is_number())
      throw ConfigError("fixture field '" + key + "' must hold numbers");
  return Vec3{v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

void check_keys(const nlohmann::json& o,
                std::initializer_list<const char*> known,
                const std::string& what) {
  for (auto it = o.begin(); it != o.end(); ++it)
    if (!is_known(it.key().c_str(), known))
      throw ConfigError("unknown " + what + " field '" + it.key() + "'");
}

ObjectSpec object_spec_from_json(const nlohmann::json& o) {
  if (!o.is_object()) throw ConfigError("object spec must be a JSON object");
  check_keys(o,
             {"primitive", "class_id", "size", "position", "velocity", "spin",
              "annotated", "jitter"},
             "object");
  ObjectSpec spec;
  if (o.contains("primitive")) spec.primitive = o["primitive"].get<std::string>();
  if (o.contains("class_id")) spec.class_id = o["class_id"].get<int>();
  if (o.contains("size")) spec.size = o["size"].get<double>();
  if (o.contains("position")) spec.position = vec_from_json(o["position"], "position");
  if (o.contains("velocity")) spec.velocity = vec_from_json(o["velocity"], "velocity");
  if (o.contains("spin")) spec.spin = vec_from_json(o["spin"], "spin");
  if (o.contains("annotated")) spec.annotated = o["annotated"].get<bool>();
  if (o.contains("jitter")) spec.jitter = o["jitter"].get<double>();
  return spec;
}

void validate_fixture_spec(const FixtureSpec& spec) {
  if (spec.clip_id.empty()) throw ConfigError("fixture clip_id is empty");
  if (spec.frames < 1) throw ConfigError("fixture needs at least one frame");
  if (spec.width < 8 || spec.height < 8)
    throw ConfigError("fixture raster must be at least 8x8");
  if (!(spec.focal > 0.0)) throw ConfigError("fixture focal must be positive");
  if (spec.feature_size < 4)
    throw ConfigError("fixture feature_size must be at least 4");
  if (spec.objects.empty()) throw ConfigError("fixture has no objects");
  if (!is_finite(spec.camera_velocity))
    throw ConfigError("fixture camera_velocity must be finite");
  bool any_annotated = false;
  for (const ObjectSpec& o : spec.objects) {
    if (o.primitive != "cube" && o.primitive != "sphere" &&
        o.primitive != "cylinder")
      throw ConfigError("unknown primitive '" + o.primitive + "'");
    if (!(o.size > 0.0)) throw ConfigError("object size must be positive");
    if (o.class_id < 0) throw ConfigError("object class_id must be >= 0");
    if (!is_finite(o.position) || !is_finite(o.velocity) || !is_finite(o.spin))
      throw ConfigError("object motion must be finite");
    if (!(o.jitter >= 0.0) || !std::isfinite(o.jitter))
      throw ConfigError("object jitter must be finite and >= 0");
    any_annotated = any_annotated || o.annotated;
  }
  if (!any_annotated) throw ConfigError("fixture has no annotated objects");
  for (int t : spec.shot_transitions)
    if (t < 1 || t >= spec.frames)
      throw ConfigError("shot transition frame " + std::to_string(t) +
                        " outside [1, frames)");
}

}  // namespace

FixtureSpec fixture_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("fixture spec must be a JSON object");
  check_keys(j,
             {"clip_id", "frames", "width", "height", "focal", "feature_size",
              "camera_velocity", "shot_transitions", "objects", "seed"},
             "fixture");
  FixtureSpec spec;
  if (j.contains("clip_id")) spec.clip_id = j["clip_id"].get<std::string>();
  if (j.contains("frames")) spec.frames = j["frames"].get<int>();
  if (j.contains("width")) spec.width = j["width"].get<int>();
  if (j.contains("height")) spec.height = j["height"].get<int>();
  if (j.contains("focal")) spec.focal = j["focal"].get<double>();
  if (j.contains("feature_size"))
    spec.feature_size = j["feature_size"].get<int>();
  if (j.contains("camera_velocity"))
    spec.camera_velocity = vec_from_json(j["camera_velocity"], "camera_velocity");
  if (j.contains("shot_transitions")) {
    for (const auto& e : j["shot_transitions"])
      spec.shot_transitions.push_back(e.get<int>());
    std::sort(spec.shot_transitions.begin(), spec.shot_transitions.end());
  }
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  if (!j.contains("objects") || !j["objects"].is_array())
    throw ConfigError("fixture spec needs an 'objects' array");
  for (const auto& e : j["objects"])
    spec.objects.push_back(object_spec_from_json(e));
  validate_fixture_spec(spec);
  return spec;
}

std::vector<FixtureSpec> fixture_specs_from_file(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": invalid JSON (" + e.what() + ")");
  }
  std::vector<FixtureSpec> specs;
  if (j.is_array()) {
    for (const auto& e : j) specs.push_back(fixture_spec_from_json(e));
  } else if (j.is_object() && j.contains("clips")) {
    for (const auto& e : j["clips"]) specs.push_back(fixture_spec_from_json(e));
  } else {
    specs.push_back(fixture_spec_from_json(j));
  }
  if (specs.empty()) throw ConfigError(path + ": no fixture specs");
  std::set<std::string> ids;
  for (const FixtureSpec& s : specs)
    if (!ids.insert(s.clip_id).second)
      throw ConfigError("duplicate clip_id '" + s.clip_id + "'");
  return specs;
}

// ---- fixture generation -----------------------------------------------------

namespace {

constexpr double kZNear = 0.1;
constexpr double kZFar = 100.0;

Mesh base_primitive(const ObjectSpec& o) {
  if (o.primitive == "cube") return make_cube(o.size);
  if (o.primitive == "sphere") return make_sphere(0.5 * o.size, 8, 12);
  return make_cylinder(0.5 * o.size, o.size, 12);
}

// Per-object raster for one frame: coverage and the nearest camera-space
// depth per covered pixel.
struct ObjectRaster {
  BinaryMask cover;
  std::vector<double> depth;
  ObjectRaster(int w, int h)
      : cover(w, h),
        depth(std::size_t(w) * h, std::numeric_limits<double>::infinity()) {}
};

struct PixelVert {
  double x = 0.0, y = 0.0, z = 0.0;
  bool behind = false;
};

void raster_triangle(const PixelVert& a, const PixelVert& b,
                     const PixelVert& c, ObjectRaster& out) {
  if (a.behind || b.behind || c.behind) return;
  const int w = out.cover.width, h = out.cover.height;
  const double minx = std::min({a.x, b.x, c.x});
  const double maxx = std::max({a.x, b.x, c.x});
  const double miny = std::min({a.y, b.y, c.y});
  const double maxy = std::max({a.y, b.y, c.y});
  // Pixel centers sit at integer + 0.5.
  const int x0 = std::max(0, int(std::floor(minx - 0.5)));
  const int x1 = std::min(w - 1, int(std::ceil(maxx - 0.5)));
  const int y0 = std::max(0, int(std::floor(miny - 0.5)));
  const int y1 = std::min(h - 1, int(std::ceil(maxy - 0.5)));
  if (x0 > x1 || y0 > y1) return;
  double area = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
  if (std::abs(area) < 1e-12) return;
  double sign = area > 0.0 ? 1.0 : -1.0;
  area *= sign;
  for (int py = y0; py <= y1; ++py) {
    const double cy = py + 0.5;
    for (int px = x0; px <= x1; ++px) {
      const double cx = px + 0.5;
      const double w0 =
          sign * ((b.x - a.x) * (cy - a.y) - (cx - a.x) * (b.y - a.y));
      const double w1 =
          sign * ((c.x - b.x) * (cy - b.y) - (cx - b.x) * (c.y - b.y));
      const double w2 =
          sign * ((a.x - c.x) * (cy - c.y) - (cx - c.x) * (a.y - c.y));
      if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
      // Barycentric weights: w1 is opposite vertex a, w2 opposite b, w0
      // opposite c. Affine depth interpolation is accurate enough for
      // ordering the convex fixture primitives.
      const double l0 = w1 / area, l1 = w2 / area, l2 = w0 / area;
      const double z = l0 * a.z + l1 * b.z + l2 * c.z;
      const std::size_t idx = std::size_t(py) * w + px;
      out.cover.data[idx] = 1;
      out.depth[idx] = std::min(out.depth[idx], z);
    }
  }
}

ObjectRaster rasterize_object(const Mesh& model, const CameraRig& cam) {
  const int w = int(cam.viewport.width), h = int(cam.viewport.height);
  ObjectRaster out(w, h);
  const Mat4 combined = cam.projection * cam.view * cam.world;
  std::vector<PixelVert> pix(model.vertices.size());
  for (std::size_t i = 0; i < model.vertices.size(); ++i) {
    const Vec4 clip = combined.mul_point(model.vertices[i]);
    PixelVert& p = pix[i];
    if (clip.w <= 0.0) {
      p.behind = true;
      continue;
    }
    const double ndc_x = clip.x / clip.w;
    const double ndc_y = clip.y / clip.w;
    p.x = cam.viewport.x + (ndc_x + 1.0) * 0.5 * cam.viewport.width;
    p.y = cam.viewport.y + (1.0 - ndc_y) * 0.5 * cam.viewport.height;
    p.z = clip.w;  // camera-space depth
  }
  for (const auto& f : model.faces)
    raster_triangle(pix[f[0]], pix[f[1]], pix[f[2]], out);
  return out;
}

Box tight_box(const BinaryMask& mask) {
  int minx = mask.width, miny = mask.height, maxx = -1, maxy = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
      }
  if (maxx < 0) return Box{};
  return Box{double(minx), double(miny), double(maxx + 1), double(maxy + 1)};
}

BinaryMask boundary_of(const BinaryMask& mask) {
  BinaryMask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      const bool edge = x == 0 || x == mask.width - 1 || y == 0 ||
                        y == mask.height - 1 || !mask.at(x - 1, y) ||
                        !mask.at(x + 1, y) || !mask.at(x, y - 1) ||
                        !mask.at(x, y + 1);
      if (edge) out.set(x, y, 1);
    }
  return out;
}

// Silhouette / normalized depth / boundary channels sampled over the box on
// a feature_size x feature_size grid (nearest source pixel per cell).
RoiFeature extract_feature(const ObjectRaster& raster, const Box& box,
                           int size) {
  const BinaryMask boundary = boundary_of(raster.cover);
  double zmin = std::numeric_limits<double>::infinity();
  double zmax = -std::numeric_limits<double>::infinity();
  for (int y = int(box.y0); y < int(box.y1); ++y)
    for (int x = int(box.x0); x < int(box.x1); ++x)
      if (raster.cover.at(x, y)) {
        zmin = std::min(zmin, raster.depth[std::size_t(y) * raster.cover.width + x]);
        zmax = std::max(zmax, raster.depth[std::size_t(y) * raster.cover.width + x]);
      }
  const double range = std::max(zmax - zmin, 1e-9);

  RoiFeature feat;
  feat.channels = 3;
  feat.height = size;
  feat.width = size;
  feat.box = box;
  feat.data.assign(std::size_t(3) * size * size, 0.0);
  for (int gy = 0; gy < size; ++gy) {
    const double sy = box.y0 + (gy + 0.5) * (box.y1 - box.y0) / size;
    const int py = std::clamp(int(std::floor(sy)), 0, raster.cover.height - 1);
    for (int gx = 0; gx < size; ++gx) {
      const double sx = box.x0 + (gx + 0.5) * (box.x1 - box.x0) / size;
      const int px = std::clamp(int(std::floor(sx)), 0, raster.cover.width - 1);
      if (!raster.cover.at(px, py)) continue;
      feat.at(0, gy, gx) = 1.0;
      const double z = raster.depth[std::size_t(py) * raster.cover.width + px];
      feat.at(1, gy, gx) = (z - zmin) / range;
      feat.at(2, gy, gx) = boundary.at(px, py) ? 1.0 : 0.0;
    }
  }
  return feat;
}

std::string frame_tag(int frame, int inst) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "f%03d_i%02d", frame, inst);
  return buf;
}

}  // namespace

ClipManifest generate_fixtures(const FixtureSpec& spec,
                               const std::string& root) {
  validate_fixture_spec(spec);
  const fs::path clip_dir = fs::path(root) / "clips" / spec.clip_id;
  const std::string rel_clip = "clips/" + spec.clip_id;

  // Base meshes, optionally jittered once per object (a fixed deformation
  // that then moves rigidly through the clip).
  std::vector<Mesh> bases;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    Mesh base = base_primitive(spec.objects[i]);
    if (spec.objects[i].jitter > 0.0) {
      Rng rng(spec.seed ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
      for (Vec3& v : base.vertices) {
        v.x += spec.objects[i].jitter * rng.normal();
        v.y += spec.objects[i].jitter * rng.normal();
        v.z += spec.objects[i].jitter * rng.normal();
      }
    }
    bases.push_back(std::move(base));
  }

  const Mat4 projection =
      perspective_projection(spec.focal, spec.width, spec.height, kZNear, kZFar);
  const Viewport viewport{0.0, 0.0, double(spec.width), double(spec.height)};
  const std::set<int> transitions(spec.shot_transitions.begin(),
                                  spec.shot_transitions.end());

  ClipManifest manifest;
  manifest.clip_id = spec.clip_id;
  std::vector<bool> ever_visible(spec.objects.size(), false);

  for (int t = 0; t < spec.frames; ++t) {
    const Vec3 cam_pos = spec.camera_velocity * double(t);
    CameraRig frame_cam;
    frame_cam.view = Mat4::translation(-cam_pos);
    frame_cam.projection = projection;
    frame_cam.viewport = viewport;

    // Rasterize every object on its own; the cross-object winner per pixel
    // is the object with the nearest depth (painter-style resolution with
    // an exact per-pixel depth order).
    std::vector<ObjectRaster> rasters;
    std::vector<Mesh> models;
    std::vector<Mat4> worlds;
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
      const ObjectSpec& o = spec.objects[i];
      const Mat3 rot =
          rotation_zyx(o.spin.z * t, o.spin.y * t, o.spin.x * t);
      Mesh model = rotated(bases[i], rot);
      const Mat4 world = Mat4::translation(o.position + o.velocity * double(t));
      CameraRig cam = frame_cam;
      cam.world = world;
      rasters.push_back(rasterize_object(model, cam));
      models.push_back(std::move(model));
      worlds.push_back(world);
    }

    FrameRecord frame;
    frame.frame_id = t;
    frame.camera = frame_cam;
    frame.shot_transition = transitions.count(t) > 0;

    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
      if (!spec.objects[i].annotated) continue;
      const ObjectRaster& own = rasters[i];
      const long amodal_area = own.cover.count();
      if (amodal_area == 0) continue;  // off-screen this frame
      ever_visible[i] = true;

      BinaryMask modal(spec.width, spec.height);
      for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
          const std::size_t idx = std::size_t(y) * spec.width + x;
          if (!own.cover.data[idx]) continue;
          bool nearest = true;
          for (std::size_t j = 0; j < rasters.size() && nearest; ++j) {
            if (j == i) continue;
            if (rasters[j].depth[idx] < own.depth[idx]) nearest = false;
          }
          if (nearest) modal.data[idx] = 1;
        }
      const long modal_area = modal.count();

      InstanceRecord rec;
      rec.instance_id = int(i);
      rec.class_id = spec.objects[i].class_id;
      rec.box = tight_box(own.cover);
      rec.world = worlds[i];
      rec.occlusion_rate = std::clamp(
          1.0 - double(modal_area) / double(amodal_area), 0.0, 1.0);
      rec.visible = modal_area > 0;
      const std::string tag = frame_tag(t, int(i));
      rec.mask = rel_clip + "/masks/" + tag + "_modal.pbm";
      rec.amodal_mask = rel_clip + "/masks/" + tag + "_amodal.pbm";
      rec.mesh = rel_clip + "/meshes/" + tag + ".obj";
      rec.feature = rel_clip + "/features/" + tag + ".bin";

      write_file_atomic((fs::path(root) / rec.mask).string(), save_pbm(modal));
      write_file_atomic((fs::path(root) / rec.amodal_mask).string(),
                        save_pbm(own.cover));
      write_file_atomic((fs::path(root) / rec.mesh).string(),
                        save_obj(models[i]));
      write_file_atomic(
          (fs::path(root) / rec.feature).string(),
          feature_to_bytes(extract_feature(own, rec.box, spec.feature_size)));
      frame.instances.push_back(std::move(rec));
    }
    manifest.frames.push_back(std::move(frame));
  }

  for (std::size_t i = 0; i < spec.objects.size(); ++i)
    if (spec.objects[i].annotated && !ever_visible[i])
      throw DegenerateError("object " + std::to_string(i) + " in clip '" +
                            spec.clip_id +
                            "' is never visible (behind or outside the "
                            "camera for the whole clip)");

  write_manifest(manifest, (clip_dir / "manifest.jsonl").string());
  MT_INFO("generated clip '" << spec.clip_id << "': " << spec.frames
                             << " frames under " << clip_dir.string());
  return manifest;
}

// ---- loading ---------------------------------------------------------------

LoadedClip load_clip(const std::string& root, const std::string& clip_id) {
  const fs::path manifest_path =
      fs::path(root) / "clips" / clip_id / "manifest.jsonl";
  const auto clips = read_manifests(manifest_path.string());
  if (clips.size() != 1 || clips[0].clip_id != clip_id)
    throw StructuralError("manifest " + manifest_path.string() +
                          " does not hold exactly clip '" + clip_id + "'");
  LoadedClip out;
  out.manifest = clips[0];
  for (const FrameRecord& f : out.manifest.frames) {
    std::vector<LoadedInstance> loaded;
    for (const InstanceRecord& r : f.instances) {
      LoadedInstance inst;
      inst.rec = r;
      inst.gt = load_obj_file((fs::path(root) / r.mesh).string());
      inst.feat = read_feature((fs::path(root) / r.feature).string());
      inst.modal = load_pbm_file((fs::path(root) / r.mask).string());
      inst.amodal = load_pbm_file((fs::path(root) / r.amodal_mask).string());
      loaded.push_back(std::move(inst));
    }
    out.frames.push_back(std::move(loaded));
  }
  return out;
}

std::vector<TrainExample> to_train_examples(const LoadedClip& clip) {
  std::vector<TrainExample> out;
  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    for (const LoadedInstance& inst : clip.frames[f]) {
      if (!inst.rec.visible) continue;
      TrainExample ex;
      ex.feat = inst.feat;
      ex.camera = clip.manifest.frames[f].camera;
      ex.camera.world = inst.rec.world;
      ex.gt = inst.gt;
      ex.class_id = inst.rec.class_id;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<std::vector<InferObservation>> to_observations(
    const LoadedClip& clip) {
  std::vector<std::vector<InferObservation>> out;
  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    std::vector<InferObservation> frame;
    for (const LoadedInstance& inst : clip.frames[f]) {
      if (!inst.rec.visible) continue;
      InferObservation obs;
      obs.det.box = inst.rec.box;
      obs.det.class_id = inst.rec.class_id;
      obs.det.score = 1.0;
      obs.det.mask = inst.modal;
      obs.det.frame_id = clip.manifest.frames[f].frame_id;
      obs.det.instance_id = inst.rec.instance_id;
      obs.det.clip_id = clip.manifest.clip_id;
      obs.feat = inst.feat;
      obs.camera = clip.manifest.frames[f].camera;
      obs.camera.world = inst.rec.world;
      frame.push_back(std::move(obs));
    }
    out.push_back(std::move(frame));
  }
  return out;
}

std::vector<GroundTruthObject> to_ground_truth(const LoadedClip& clip) {
  std::vector<GroundTruthObject> out;
  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    for (const LoadedInstance& inst : clip.frames[f]) {
      if (!inst.rec.visible) continue;
      GroundTruthObject gt;
      gt.box = inst.rec.box;
      gt.class_id = inst.rec.class_id;
      gt.mask = inst.modal;
      gt.mesh = inst.gt;
      gt.occlusion_rate = inst.rec.occlusion_rate;
      gt.frame_id = clip.manifest.frames[f].frame_id;
      gt.instance_id = inst.rec.instance_id;
      gt.clip_id = clip.manifest.clip_id;
      out.push_back(std::move(gt));
    }
  }
  return out;
}

std::vector<int> shot_transition_frames(const ClipManifest& manifest) {
  std::vector<int> out;
  for (std::size_t f = 0; f < manifest.frames.size(); ++f)
    if (manifest.frames[f].shot_transition) out.push_back(int(f));
  return out;
}

}  // namespace meshtrace
