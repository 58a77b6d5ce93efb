// meshtrace CLI: fixture generation, tracking, mean shapes, training,
// inference, and evaluation over one shared library.
//
// Exit codes: 0 success, 2 usage/schema errors, 1 runtime errors. Errors are
// single-line `meshtrace: <kind> error: <message>` records on stderr.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "meshtrace/dataset.hpp"
#include "meshtrace/error.hpp"
#include "meshtrace/infer.hpp"
#include "meshtrace/log.hpp"
#include "meshtrace/mean_shape.hpp"
#include "meshtrace/metrics.hpp"
#include "meshtrace/refine.hpp"
#include "meshtrace/tracker.hpp"
#include "meshtrace/train.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace meshtrace;

namespace {

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

std::string resolve(const std::string& base, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p.string() : (fs::path(base) / p).string();
}

std::vector<std::string> discover_clips(const std::string& data) {
  const fs::path dir = fs::path(data) / "clips";
  if (!fs::is_directory(dir))
    throw ArgumentError("no clips directory under " + data);
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw ArgumentError("no clips found under " + dir.string());
  return ids;
}

std::vector<std::string> clips_or_all(const std::vector<std::string>& clips,
                                      const std::string& data) {
  return clips.empty() ? discover_clips(data) : clips;
}

// ---- gen -------------------------------------------------------------

struct GenOpts {
  std::string spec;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 1;
};

std::vector<Detection> manifest_detections(const ClipManifest& m) {
  std::vector<Detection> dets;
  for (const FrameRecord& f : m.frames)
    for (const InstanceRecord& r : f.instances) {
      if (!r.visible) continue;
      Detection d;
      d.box = r.box;
      d.class_id = r.class_id;
      d.score = 1.0;
      d.frame_id = f.frame_id;
      d.instance_id = r.instance_id;
      d.clip_id = m.clip_id;
      dets.push_back(std::move(d));
    }
  return dets;
}

int run_gen(const GenOpts& opt) {
  std::vector<FixtureSpec> specs = fixture_specs_from_file(opt.spec);
  if (opt.seed != 0)
    for (FixtureSpec& s : specs) s.seed ^= opt.seed;

  std::vector<ClipManifest> manifests(specs.size());
  const int threads =
      std::max(1, std::min<int>(opt.threads, int(specs.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < specs.size(); ++i)
      manifests[i] = generate_fixtures(specs[i], opt.out);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= specs.size()) return;
        try {
          manifests[i] = generate_fixtures(specs[i], opt.out);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (err) std::rethrow_exception(err);
  }

  ojson summary;
  summary["clips"] = ojson::array();
  std::printf("%-16s %8s %10s %12s\n", "clip", "frames", "instances",
              "detections");
  for (const ClipManifest& m : manifests) {
    std::size_t instances = 0;
    for (const FrameRecord& f : m.frames) instances += f.instances.size();
    const auto dets = manifest_detections(m);
    write_detections(
        dets, (fs::path(opt.out) / "clips" / m.clip_id / "detections.jsonl")
                  .string());
    ojson row;
    row["clip_id"] = m.clip_id;
    row["frames"] = m.frames.size();
    row["instances"] = instances;
    summary["clips"].push_back(row);
    std::printf("%-16s %8zu %10zu %12zu\n", m.clip_id.c_str(),
                m.frames.size(), instances, dets.size());
  }
  write_text_file_atomic((fs::path(opt.out) / "gen_summary.json").string(),
                         summary.dump(2) + "\n");
  return 0;
}

// ---- track -----------------------------------------------------------

struct TrackOpts {
  std::string dets;
  std::string out;
  double iou_gate = 0.5;
  std::vector<int> transitions;  // frame ids
  int threads = 1;
};

int run_track(const TrackOpts& opt) {
  const std::vector<Detection> input = read_detections(opt.dets);
  if (input.empty()) throw ArgumentError("no detections in " + opt.dets);

  std::map<std::string, std::map<int, std::vector<Detection>>> by_clip;
  for (const Detection& d : input) by_clip[d.clip_id][d.frame_id].push_back(d);

  const std::set<int> transition_ids(opt.transitions.begin(),
                                     opt.transitions.end());
  std::vector<Detection> output;
  std::printf("%-16s %8s %12s %8s\n", "clip", "frames", "detections",
              "tracks");
  for (const auto& [clip_id, frame_map] : by_clip) {
    std::vector<std::vector<Detection>> frames;
    std::vector<int> transitions;
    for (const auto& [frame_id, dets] : frame_map) {
      if (transition_ids.count(frame_id))
        transitions.push_back(int(frames.size()));
      frames.push_back(dets);
    }
    const auto tracked = track_clip(frames, transitions, opt.iou_gate);
    std::set<int> ids;
    std::size_t n = 0;
    for (const auto& frame : tracked)
      for (const Detection& d : frame) {
        ids.insert(d.track_id);
        output.push_back(d);
        ++n;
      }
    std::printf("%-16s %8zu %12zu %8zu\n", clip_id.c_str(), frames.size(), n,
                ids.size());
  }
  write_detections(output, opt.out);
  return 0;
}

// ---- meanshape ---------------------------------------------------------

struct MeanShapeOpts {
  std::string data;
  std::vector<std::string> clips;
  int class_id = -1;
  std::string out;
  int resolution = 32;
  double iso = 0.5;
  int max_faces = 4000;
  int threads = 1;
};

std::vector<Mesh> class_meshes(const std::vector<LoadedClip>& clips,
                               int class_id) {
  std::vector<Mesh> meshes;
  for (const LoadedClip& clip : clips)
    for (const auto& frame : clip.frames)
      for (const LoadedInstance& inst : frame) {
        if (!inst.rec.visible) continue;
        if (class_id >= 0 && inst.rec.class_id != class_id) continue;
        meshes.push_back(inst.gt);
      }
  return meshes;
}

int run_meanshape(const MeanShapeOpts& opt) {
  std::vector<LoadedClip> clips;
  for (const std::string& id : clips_or_all(opt.clips, opt.data))
    clips.push_back(load_clip(opt.data, id));
  const std::vector<Mesh> meshes = class_meshes(clips, opt.class_id);
  if (meshes.empty())
    throw ArgumentError("no instances of class " +
                        std::to_string(opt.class_id));
  const Mesh shape =
      mean_shape(meshes, opt.resolution, opt.iso, opt.max_faces);
  write_text_file_atomic(opt.out, save_obj(shape));
  std::printf("%-8s %8s %12s %10s %8s\n", "class", "meshes", "resolution",
              "vertices", "faces");
  std::printf("%-8d %8zu %12d %10zu %8zu\n", opt.class_id, meshes.size(),
              opt.resolution, shape.vertex_count(), shape.face_count());
  return 0;
}

// ---- train -------------------------------------------------------------

struct TrainOpts {
  std::string data;
  std::vector<std::string> clips;
  std::string out;
  std::uint64_t seed = 0;
  int steps1 = 1000;
  int steps2 = 1000;
  double lr = 0.02;
  double momentum = 0.9;
  int samples = 600;
  int stages = 3;
  int e_dim = 64;
  int hidden = 64;
  int head_hidden = 32;
  double align_weight = 1.0;
  int ms_resolution = 32;
  int ms_faces = 512;
  int threads = 1;
};

std::map<int, Mesh> build_mean_shapes(const std::vector<LoadedClip>& clips,
                                      int resolution, int faces) {
  std::set<int> classes;
  for (const LoadedClip& clip : clips)
    for (const auto& frame : clip.frames)
      for (const LoadedInstance& inst : frame)
        if (inst.rec.visible) classes.insert(inst.rec.class_id);
  std::map<int, Mesh> shapes;
  for (int c : classes)
    shapes[c] = mean_shape(class_meshes(clips, c), resolution, 0.5, faces);
  return shapes;
}

int run_train(const TrainOpts& opt) {
  std::vector<LoadedClip> clips;
  for (const std::string& id : clips_or_all(opt.clips, opt.data))
    clips.push_back(load_clip(opt.data, id));
  std::vector<TrainExample> examples;
  for (const LoadedClip& clip : clips) {
    auto ex = to_train_examples(clip);
    examples.insert(examples.end(), std::make_move_iterator(ex.begin()),
                    std::make_move_iterator(ex.end()));
  }
  if (examples.empty()) throw ArgumentError("no training examples");

  const std::map<int, Mesh> mean_shapes =
      build_mean_shapes(clips, opt.ms_resolution, opt.ms_faces);

  const PipelineParams init =
      init_params(examples[0].feat.channels, opt.e_dim, opt.hidden,
                  opt.head_hidden, opt.stages, opt.seed);
  TrainConfig config;
  config.stage1_steps = opt.steps1;
  config.stage2_steps = opt.steps2;
  config.lr = opt.lr;
  config.momentum = opt.momentum;
  config.n_samples = opt.samples;
  config.align_weight = opt.align_weight;
  config.seed = opt.seed;

  const TrainResult result = train(examples, mean_shapes, init, config);

  fs::create_directories(opt.out);
  save_checkpoint(result.params, (fs::path(opt.out) / "checkpoint.bin").string());
  write_train_log_csv(result.log, (fs::path(opt.out) / "train_log.csv").string());
  for (const auto& [c, shape] : mean_shapes)
    write_text_file_atomic((fs::path(opt.out) /
                            ("meanshape_class" + std::to_string(c) + ".obj"))
                               .string(),
                           save_obj(shape));

  ojson summary;
  summary["examples"] = examples.size();
  summary["classes"] = ojson::array();
  for (const auto& [c, shape] : mean_shapes) summary["classes"].push_back(c);
  summary["stage1_steps"] = opt.steps1;
  summary["stage2_steps"] = opt.steps2;
  summary["seed"] = opt.seed;
  summary["first_loss"] = result.log.empty() ? 0.0 : result.log.front().total;
  summary["final_loss"] = result.log.empty() ? 0.0 : result.log.back().total;
  write_text_file_atomic((fs::path(opt.out) / "train_summary.json").string(),
                         summary.dump(2) + "\n");

  std::printf("%-10s %8s %8s %12s %12s\n", "examples", "stage1", "stage2",
              "first_loss", "final_loss");
  std::printf("%-10zu %8d %8d %12.6f %12.6f\n", examples.size(), opt.steps1,
              opt.steps2, result.log.empty() ? 0.0 : result.log.front().total,
              result.log.empty() ? 0.0 : result.log.back().total);
  return 0;
}

// ---- infer -------------------------------------------------------------

struct InferOpts {
  std::string data;
  std::vector<std::string> clips;
  std::string checkpoint;
  std::string shapes_dir;  // defaults to the checkpoint's directory
  std::string out;
  std::string mode = "temporal";
  double iou_gate = 0.5;
  int threads = 1;
};

std::map<int, Mesh> load_mean_shapes(const std::string& dir) {
  std::map<int, Mesh> shapes;
  if (!fs::is_directory(dir))
    throw ArgumentError("mean-shape directory not found: " + dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    const std::string prefix = "meanshape_class";
    if (name.rfind(prefix, 0) != 0 || e.path().extension() != ".obj") continue;
    const std::string digits =
        name.substr(prefix.size(), name.size() - prefix.size() - 4);
    shapes[std::stoi(digits)] = load_obj_file(e.path().string());
  }
  if (shapes.empty())
    throw ArgumentError("no meanshape_class<k>.obj files in " + dir);
  return shapes;
}

int run_infer(const InferOpts& opt) {
  if (opt.mode != "temporal" && opt.mode != "meanshape")
    throw ArgumentError("--mode must be 'temporal' or 'meanshape'");
  const ReferenceMode mode = opt.mode == "temporal" ? ReferenceMode::kTemporal
                                                    : ReferenceMode::kMeanShape;
  const PipelineParams params = load_checkpoint(opt.checkpoint);
  const std::string shapes_dir =
      opt.shapes_dir.empty() ? fs::path(opt.checkpoint).parent_path().string()
                             : opt.shapes_dir;
  const std::map<int, Mesh> mean_shapes = load_mean_shapes(shapes_dir);

  std::string preds_jsonl;
  std::printf("%-16s %8s %10s %10s\n", "clip", "frames", "objects", "mode");
  for (const std::string& id : clips_or_all(opt.clips, opt.data)) {
    const LoadedClip clip = load_clip(opt.data, id);
    const auto observations = to_observations(clip);
    const InferResult result =
        infer_clip(observations, shot_transition_frames(clip.manifest),
                   mean_shapes, params, mode, opt.iou_gate);

    // Modal-mask references per (frame position, instance id) so predictions
    // stay evaluable for mask AP.
    std::map<std::pair<int, int>, std::string> mask_paths;
    for (std::size_t f = 0; f < clip.manifest.frames.size(); ++f)
      for (const InstanceRecord& r : clip.manifest.frames[f].instances)
        mask_paths[{int(f), r.instance_id}] = r.mask;

    std::size_t objects = 0;
    for (std::size_t f = 0; f < result.detections.size(); ++f) {
      for (std::size_t k = 0; k < result.detections[f].size(); ++k) {
        const Detection& det = result.detections[f][k];
        char tag[64];
        std::snprintf(tag, sizeof(tag), "%s_f%03d_o%02zu.obj", id.c_str(),
                      det.frame_id, k);
        const std::string mesh_rel = std::string("meshes/") + tag;
        write_text_file_atomic((fs::path(opt.out) / mesh_rel).string(),
                               save_obj(result.meshes[f][k]));
        ojson rec;
        rec["clip_id"] = det.clip_id;
        rec["frame_id"] = det.frame_id;
        rec["class_id"] = det.class_id;
        rec["score"] = det.score;
        rec["box"] =
            ojson::array({det.box.x0, det.box.y0, det.box.x1, det.box.y1});
        rec["instance_id"] = det.instance_id;
        rec["track_id"] = det.track_id;
        rec["mesh"] = mesh_rel;
        const auto it = mask_paths.find({int(f), det.instance_id});
        rec["mask"] = it == mask_paths.end() ? "" : it->second;
        preds_jsonl += rec.dump();
        preds_jsonl += '\n';
        ++objects;
      }
    }
    std::printf("%-16s %8zu %10zu %10s\n", id.c_str(),
                result.detections.size(), objects, opt.mode.c_str());
  }
  write_text_file_atomic((fs::path(opt.out) / "preds.jsonl").string(),
                         preds_jsonl);
  return 0;
}

// ---- eval --------------------------------------------------------------

struct EvalOpts {
  std::string preds;
  std::string data;
  std::vector<std::string> clips;
  std::string out;
  double tau = 0.3;
  double rescale_target = 5.0;
  double iou_thresh = 0.5;
  double f1_thresh = 0.5;
  int samples = 10000;
  std::uint64_t seed = 1234;
  std::vector<std::string> splits;
  int threads = 1;
};

std::vector<Detection> load_predictions(const std::string& path,
                                        const std::string& data_root) {
  const std::string base = fs::path(path).parent_path().string();
  std::vector<Detection> preds;
  std::istringstream in(read_text_file(path));
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ojson o;
    try {
      o = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path + ": invalid JSON (" + std::string(e.what()) + ")",
                       line_no);
    }
    Detection d;
    d.clip_id = o.value("clip_id", std::string());
    d.frame_id = o.at("frame_id").get<int>();
    d.class_id = o.at("class_id").get<int>();
    d.score = o.at("score").get<double>();
    const auto& b = o.at("box");
    d.box = Box{b.at(0).get<double>(), b.at(1).get<double>(),
                b.at(2).get<double>(), b.at(3).get<double>()};
    d.instance_id = o.value("instance_id", -1);
    d.track_id = o.value("track_id", -1);
    if (o.contains("mesh") && !o["mesh"].get<std::string>().empty())
      d.mesh = load_obj_file(resolve(base, o["mesh"].get<std::string>()));
    if (o.contains("mask") && !o["mask"].get<std::string>().empty())
      d.mask = load_pbm_file(resolve(data_root, o["mask"].get<std::string>()));
    validate_detection(d);
    preds.push_back(std::move(d));
  }
  return preds;
}

int run_eval(const EvalOpts& opt) {
  std::vector<GroundTruthObject> gts;
  EvalConfig config;
  for (const std::string& id : clips_or_all(opt.clips, opt.data)) {
    const LoadedClip clip = load_clip(opt.data, id);
    auto clip_gts = to_ground_truth(clip);
    gts.insert(gts.end(), std::make_move_iterator(clip_gts.begin()),
               std::make_move_iterator(clip_gts.end()));
    config.clip_lengths[id] = int(clip.manifest.frames.size());
  }
  const std::vector<Detection> preds = load_predictions(opt.preds, opt.data);

  config.match.iou_thresh = opt.iou_thresh;
  config.match.f1_thresh = opt.f1_thresh;
  config.match.tau = opt.tau;
  config.match.rescale_target = opt.rescale_target;
  config.match.f1_samples = opt.samples;
  config.match.seed = opt.seed;
  config.splits = opt.splits;

  const EvalReport report = evaluate(preds, gts, config);
  if (!opt.out.empty()) write_text_file_atomic(opt.out, report_to_json(report));
  std::fputs(report_table(report).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meshtrace: temporal mesh tracking and refinement toolkit"};
  app.require_subcommand(1);

  GenOpts gen;
  CLI::App* cmd_gen = app.add_subcommand(
      "gen", "Generate a procedural fixture dataset from a spec file");
  cmd_gen->add_option("--spec", gen.spec, "Fixture spec JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_gen->add_option("--out", gen.out, "Dataset output directory")
      ->required();
  cmd_gen->add_option("--seed", gen.seed,
                      "XORed into every clip seed (0 keeps spec seeds)");
  cmd_gen->add_option("--threads", gen.threads,
                      "Worker threads across clips (identical output)")
      ->check(CLI::PositiveNumber);

  TrackOpts track;
  CLI::App* cmd_track = app.add_subcommand(
      "track", "Assign track ids to a detections JSONL stream");
  cmd_track->add_option("--dets", track.dets, "Detections JSONL file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_track->add_option("--out", track.out, "Tracked detections JSONL file")
      ->required();
  cmd_track->add_option("--iou-gate", track.iou_gate,
                        "Minimum IoU keeping a match (exclusive)");
  cmd_track->add_option("--transitions", track.transitions,
                        "Shot-transition frame ids (tracks reset there)")
      ->delimiter(',');
  cmd_track->add_option("--threads", track.threads,
                        "Accepted for symmetry; tracking is single-threaded");

  MeanShapeOpts meanshape;
  CLI::App* cmd_meanshape = app.add_subcommand(
      "meanshape", "Build the per-class mean shape from a dataset");
  cmd_meanshape->add_option("--data", meanshape.data, "Dataset root")
      ->required()
      ->check(CLI::ExistingDirectory);
  cmd_meanshape->add_option("--clips", meanshape.clips,
                            "Clip ids (default: all)")
      ->delimiter(',');
  cmd_meanshape->add_option("--class", meanshape.class_id, "Class id")
      ->required();
  cmd_meanshape->add_option("--out", meanshape.out, "Output OBJ path")
      ->required();
  cmd_meanshape->add_option("--resolution", meanshape.resolution,
                            "Occupancy grid resolution");
  cmd_meanshape->add_option("--iso", meanshape.iso, "Binarization threshold");
  cmd_meanshape->add_option("--max-faces", meanshape.max_faces,
                            "Simplification face budget");
  cmd_meanshape->add_option(
      "--threads", meanshape.threads,
      "Accepted for symmetry; mean shapes are single-threaded");

  TrainOpts train;
  CLI::App* cmd_train =
      app.add_subcommand("train", "Train the refinement pipeline");
  cmd_train->add_option("--data", train.data, "Dataset root")
      ->required()
      ->check(CLI::ExistingDirectory);
  cmd_train->add_option("--clips", train.clips, "Clip ids (default: all)")
      ->delimiter(',');
  cmd_train->add_option("--out", train.out, "Output directory")->required();
  cmd_train->add_option("--seed", train.seed, "Training seed");
  cmd_train->add_option("--steps1", train.steps1, "Stage-1 steps");
  cmd_train->add_option("--steps2", train.steps2, "Stage-2 steps");
  cmd_train->add_option("--lr", train.lr, "SGD learning rate");
  cmd_train->add_option("--momentum", train.momentum, "SGD momentum");
  cmd_train->add_option("--samples", train.samples,
                        "Loss surface samples per mesh");
  cmd_train->add_option("--stages", train.stages, "Refinement stage count");
  cmd_train->add_option("--e-dim", train.e_dim, "Vertex feature width");
  cmd_train->add_option("--hidden", train.hidden, "Graph conv width");
  cmd_train->add_option("--align-weight", train.align_weight,
                        "Stage-1 rotation alignment weight");
  cmd_train->add_option("--meanshape-resolution", train.ms_resolution,
                        "Mean-shape grid resolution");
  cmd_train->add_option("--meanshape-faces", train.ms_faces,
                        "Mean-shape face budget");
  cmd_train->add_option("--threads", train.threads,
                        "Accepted for symmetry; training is single-threaded");

  InferOpts infer;
  CLI::App* cmd_infer = app.add_subcommand(
      "infer", "Predict per-frame meshes for dataset clips");
  cmd_infer->add_option("--data", infer.data, "Dataset root")
      ->required()
      ->check(CLI::ExistingDirectory);
  cmd_infer->add_option("--clips", infer.clips, "Clip ids (default: all)")
      ->delimiter(',');
  cmd_infer->add_option("--checkpoint", infer.checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_infer->add_option("--shapes", infer.shapes_dir,
                        "Mean-shape directory (default: checkpoint dir)");
  cmd_infer->add_option("--out", infer.out, "Output directory")->required();
  cmd_infer->add_option("--mode", infer.mode,
                        "Reference mode: temporal | meanshape");
  cmd_infer->add_option("--iou-gate", infer.iou_gate,
                        "Tracking IoU gate (exclusive)");
  cmd_infer->add_option("--threads", infer.threads,
                        "Accepted for symmetry; inference is single-threaded");

  EvalOpts eval;
  CLI::App* cmd_eval = app.add_subcommand(
      "eval", "Score predictions against dataset ground truth");
  cmd_eval->add_option("--preds", eval.preds, "Predictions JSONL file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_eval->add_option("--data", eval.data, "Dataset root")
      ->required()
      ->check(CLI::ExistingDirectory);
  cmd_eval->add_option("--clips", eval.clips, "Clip ids (default: all)")
      ->delimiter(',');
  cmd_eval->add_option("--out", eval.out, "Report JSON path");
  cmd_eval->add_option("--tau", eval.tau, "F1 distance threshold");
  cmd_eval->add_option("--rescale-target", eval.rescale_target,
                       "Longest gt box edge after rescaling");
  cmd_eval->add_option("--iou-thresh", eval.iou_thresh,
                       "Box/mask true-positive IoU");
  cmd_eval->add_option("--f1-thresh", eval.f1_thresh,
                       "Mesh true-positive F1@tau");
  cmd_eval->add_option("--samples", eval.samples, "F1 samples per mesh");
  cmd_eval->add_option("--seed", eval.seed, "Evaluation sampling seed");
  cmd_eval->add_option("--splits", eval.splits,
                       "Splits to report (default: all known splits)")
      ->delimiter(',');
  cmd_eval->add_option("--threads", eval.threads,
                       "Accepted for symmetry; evaluation is single-threaded");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "meshtrace: usage error: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*cmd_gen) return run_gen(gen);
    if (*cmd_track) return run_track(track);
    if (*cmd_meanshape) return run_meanshape(meanshape);
    if (*cmd_train) return run_train(train);
    if (*cmd_infer) return run_infer(infer);
    if (*cmd_eval) return run_eval(eval);
    std::cerr << "meshtrace: usage error: no subcommand\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "meshtrace: usage error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const StructuralError& e) {
    std::cerr << "meshtrace: usage error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "meshtrace: usage error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "meshtrace: usage error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "meshtrace: runtime error: " << one_line(e.what()) << "\n";
    return 1;
  }
}
