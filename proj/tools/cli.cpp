#include "cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "jm/alignment.hpp"
#include "jm/bundle_adjust.hpp"
#include "jm/io.hpp"
#include "jm/synth.hpp"

namespace jm::cli {
namespace {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

// Verbosity only; nothing numerical reads it.
LogLevel log_level() {
  const char* env = std::getenv("JM_LOG");
  if (env == nullptr) return LogLevel::kQuiet;
  const std::string v(env);
  if (v == "debug" || v == "2") return LogLevel::kDebug;
  if (v == "info" || v == "1") return LogLevel::kInfo;
  return LogLevel::kQuiet;
}

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err), level_(log_level()) {}
  void info(const std::string& msg) const {
    if (level_ >= LogLevel::kInfo) err_ << "[jm] " << msg << '\n';
  }
  void debug(const std::string& msg) const {
    if (level_ >= LogLevel::kDebug) err_ << "[jm:debug] " << msg << '\n';
  }

 private:
  std::ostream& err_;
  LogLevel level_;
};

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::kParse, "bad boolean for " + key + ": '" + v + "'");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::kIo, "cannot create output directory " + dir.string());
}

void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "missing input directory: " + dir.string());
}

std::string frame_file(const char* stem, std::size_t t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.bin", stem, t);
  return buf;
}

void apply_ba_key(BAOptions& ba, const std::string& key, const std::string& value, bool& known) {
  known = true;
  if (key == "ba_max_iterations") ba.max_iterations = parse_int(value, key);
  else if (key == "ba_initial_damping") ba.initial_damping = parse_double(value, key);
  else if (key == "ba_damping_up") ba.damping_up = parse_double(value, key);
  else if (key == "ba_damping_down") ba.damping_down = parse_double(value, key);
  else if (key == "ba_convergence_tol") ba.convergence_tol = parse_double(value, key);
  else if (key == "ba_huber_delta") ba.huber_delta = parse_double(value, key);
  else if (key == "ba_optimize_focal") ba.optimize_focal = parse_bool(value, key);
  else known = false;
}

BAOptions ba_options_from(const KeyValues& kv) {
  BAOptions ba;
  for (const auto& [k, v] : kv) {
    bool known = false;
    apply_ba_key(ba, k, v, known);
    if (!known) throw Error(ErrorCode::kParse, "unknown BA option '" + k + "'");
  }
  return ba;
}

// ---------------------------------------------------------------- generate

int cmd_generate(const std::string& config, std::optional<std::uint64_t> seed, const std::string& output,
                 std::ostream& out, const Log& log) {
  SceneSpec spec = spec_from_config(read_config(config));
  if (seed) spec.seed = *seed;
  log.info("generating scene seed=" + std::to_string(spec.seed));
  const SceneGroundTruth gt = generate(spec);
  ensure_dir(output);
  save_scene(output, gt);
  out << "kind=generate frames=" << gt.frames() << " tracks=" << gt.tracks() << " output=" << output << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- track

struct LoadedScene {
  Manifest manifest;
  PipelineInputs inputs;
  TrackFile tracks;
  double scene_scale{1.0};
  std::optional<std::uint64_t> seed;
};

LoadedScene load_inputs(const fs::path& dir) {
  require_dir(dir);
  LoadedScene s;
  s.manifest = read_manifest(dir);
  const Manifest& m = s.manifest;
  if (m.poses.empty()) throw Error(ErrorCode::kParse, "manifest lists no poses file");
  if (m.tracks.empty()) throw Error(ErrorCode::kParse, "manifest lists no tracks file");
  // Every referenced file must exist before any computation starts.
  for (const fs::path& p : m.depths)
    if (!fs::is_regular_file(p)) throw Error(ErrorCode::kIo, "missing input file: " + p.string());
  for (const fs::path& p : m.images)
    if (!fs::is_regular_file(p)) throw Error(ErrorCode::kIo, "missing input file: " + p.string());

  s.inputs.poses = read_poses(m.poses);
  s.tracks = read_tracks(m.tracks);
  const std::size_t frames = s.inputs.poses.size();
  if (m.depths.size() != frames) throw Error(ErrorCode::kShapeMismatch, "need one depth file per pose");
  if (!m.images.empty() && m.images.size() != frames) throw Error(ErrorCode::kShapeMismatch, "need one image per pose");
  if (s.tracks.tracks2d.frames() != static_cast<int>(frames))
    throw Error(ErrorCode::kShapeMismatch, "tracks file and poses disagree on the frame count");

  std::optional<ScaleShift> ss;
  if (m.scale_shift) ss = ScaleShift{m.scale_shift->get_double("a"), m.scale_shift->get_double("b")};
  double depth_sum = 0.0;
  std::size_t depth_count = 0;
  for (const fs::path& p : m.depths) {
    DepthFile d = read_depth(p);
    if (!ss) ss = d.scale_shift;
    for (double v : d.normalized.values()) {
      if (v > 0.0) {
        depth_sum += ss->a * v + ss->b;
        ++depth_count;
      }
    }
    s.inputs.depths.push_back(std::move(d.normalized));
  }
  for (const fs::path& p : m.images) s.inputs.images.push_back(read_image(p));
  s.inputs.scale_shift = *ss;
  s.scene_scale = m.scale_shift && m.scale_shift->has("scene_scale")
                      ? m.scale_shift->get_double("scene_scale")
                      : (depth_count > 0 ? depth_sum / static_cast<double>(depth_count) : 1.0);
  if (m.spec && m.spec->has("seed")) s.seed = m.spec->get_u64("seed");

  s.inputs.queries = s.tracks.queries;
  if (s.tracks.query_frame.empty()) throw Error(ErrorCode::kParse, "tracks file has no tracks");
  s.inputs.query_frame = s.tracks.query_frame.front();
  for (int q : s.tracks.query_frame)
    if (q != s.inputs.query_frame) throw Error(ErrorCode::kInvalidArgument, "all tracks must share one query frame");
  return s;
}

Record iteration_record(const IterationLog& l) {
  Record r("iteration");
  r.set("iteration", l.iteration);
  r.set("rmse", l.rmse_defined ? format_double(l.rmse) : std::string("nan"));
  r.set("mean_p_dyn", l.mean_p_dyn).set("mean_p_vis", l.mean_p_vis);
  r.set("ba_iterations", l.ba_iterations).set("static_points", l.static_points);
  r.set("ba_failed", l.ba_failed ? 1 : 0).set("procrustes_frozen", static_cast<int>(l.procrustes_frozen.size()));
  return r;
}

int cmd_track(const std::string& input, const std::string& output, const std::optional<std::string>& config_path,
              std::optional<std::uint64_t> seed, std::optional<int> iterations, bool plot, const KeyValues& overrides,
              std::ostream& out, const Log& log) {
  TrackConfig cfg;
  if (config_path) apply_track_config(cfg, read_config(*config_path));
  apply_track_config(cfg, overrides);
  if (iterations) cfg.loop.num_iterations = *iterations;
  cfg.loop.validate();

  LoadedScene scene = load_inputs(input);
  PipelineInputs inputs = scene.inputs;

  if (cfg.pose_rot_deg > 0.0 || cfg.pose_trans_frac > 0.0 || cfg.depth_sigma > 0.0 || cfg.track_sigma > 0.0) {
    SceneGroundTruth base;
    base.poses = inputs.poses;
    base.depths_normalized = inputs.depths;
    base.scale_shift = inputs.scale_shift;
    base.scene_scale = scene.scene_scale;
    base.tracks2d = scene.tracks.tracks2d;
    base.query_frame = scene.tracks.query_frame;
    PerturbSpec ps{cfg.pose_rot_deg, cfg.pose_trans_frac, cfg.depth_sigma, cfg.track_sigma,
                   seed.value_or(scene.seed.value_or(0))};
    PerturbedInputs p = perturb(base, ps);
    inputs.poses = std::move(p.poses);
    inputs.depths = std::move(p.depths_normalized);
    log.info("perturbed inputs rot=" + format_double(cfg.pose_rot_deg) + "deg trans=" + format_double(cfg.pose_trans_frac));
  }

  std::unique_ptr<TrackUpdater> updater;
  if (cfg.zero_updater) updater = std::make_unique<ZeroUpdater>();
  else updater = std::make_unique<CorrelationMatchingUpdater>(cfg.updater);

  log.info("running " + std::to_string(cfg.loop.num_iterations) + " iterations on " +
           std::to_string(inputs.queries.size()) + " tracks");
  const PipelineResult result = run_pipeline(inputs, cfg.loop, *updater);

  ensure_dir(output);
  const fs::path dir(output);
  const TrackState& st = result.state;
  std::vector<Record> manifest;
  Record header("manifest");
  header.set("format", std::string("jm-tracks")).set("version", 1).set("frames", st.frames());
  header.set("tracks", st.tracks()).set("best_iteration", result.best_iteration);
  manifest.push_back(header);
  Record ss("scale_shift");
  ss.set("a", inputs.scale_shift.a).set("b", inputs.scale_shift.b);
  manifest.push_back(ss);
  manifest.push_back(Record("file").set("role", std::string("poses")).set("path", std::string("poses.txt")));
  manifest.push_back(Record("file").set("role", std::string("tracks")).set("path", std::string("tracks.txt")));
  manifest.push_back(Record("file").set("role", std::string("log")).set("path", std::string("run_log.txt")));
  for (std::size_t t = 0; t < inputs.depths.size(); ++t) {
    const std::string name = frame_file("depth", t);
    write_depth(dir / name, inputs.depths[t], inputs.scale_shift);
    manifest.push_back(Record("file").set("role", std::string("depth")).set("frame", static_cast<int>(t)).set("path", name));
  }

  write_poses(dir / "poses.txt", st.poses);
  TrackFile tf;
  tf.queries = st.queries;
  tf.query_frame.assign(st.queries.size(), st.query_frame);
  for (std::uint8_t s : st.static_mask) tf.dynamic.push_back(s ? 0 : 1);
  tf.object_id.assign(st.queries.size(), -1);
  tf.tracks2d = st.tracks2d;
  tf.camera = st.tracks3d;
  tf.world = result.world_tracks;
  tf.vis = st.p_vis;
  tf.dyn = st.p_dyn;
  write_tracks(dir / "tracks.txt", tf);

  std::vector<Record> run_log;
  std::string curve = "iteration\trmse\n";
  for (const IterationLog& l : result.log) {
    run_log.push_back(iteration_record(l));
    log.debug(run_log.back().format());
    curve += std::to_string(l.iteration) + "\t" + (l.rmse_defined ? format_double(l.rmse) : std::string("nan")) + "\n";
  }
  Record summary("summary");
  summary.set("iterations", static_cast<int>(result.log.size())).set("best_iteration", result.best_iteration);
  run_log.push_back(summary);
  write_records(dir / "run_log.txt", run_log);
  if (plot) write_file_atomic(dir / "reprojection_curve.tsv", curve);
  write_records(dir / "manifest.txt", manifest);

  for (const Record& r : run_log) out << r.format() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- ba

int cmd_ba(const std::string& problem_path, const std::string& output, const std::optional<std::string>& config_path,
           std::ostream& out, const Log& log) {
  const std::vector<Record> records = read_records(problem_path);
  BAProblem problem;
  KeyValues options;
  if (config_path) options = read_config(*config_path);
  std::vector<std::pair<int, CameraPose>> poses;
  std::vector<std::pair<int, Vec3>> points;
  for (const Record& r : records) {
    const std::string kind = r.kind();
    if (kind == "options") {
      for (const auto& [k, v] : r.fields())
        if (k != "kind") options.emplace_back(k, v);
    } else if (kind == "pose") {
      r.require_known({"kind", "frame", "qw", "qx", "qy", "qz", "tx", "ty", "tz", "focal", "cx", "cy"});
      poses.emplace_back(r.get_int("frame"),
                         CameraPose(Quat(r.get_double("qw"), r.get_double("qx"), r.get_double("qy"), r.get_double("qz")),
                                    {r.get_double("tx"), r.get_double("ty"), r.get_double("tz")}, r.get_double("focal"),
                                    {r.has("cx") ? r.get_double("cx") : 0.5, r.has("cy") ? r.get_double("cy") : 0.5}));
    } else if (kind == "point") {
      r.require_known({"kind", "id", "x", "y", "z"});
      points.emplace_back(r.get_int("id"), Vec3(r.get_double("x"), r.get_double("y"), r.get_double("z")));
    } else if (kind == "obs") {
      r.require_known({"kind", "frame", "point", "u", "v", "weight"});
      problem.observations.push_back({r.get_int("frame"), r.get_int("point"), {r.get_double("u"), r.get_double("v")},
                                      r.has("weight") ? r.get_double("weight") : 1.0});
    } else {
      throw Error(ErrorCode::kParse, problem_path + ": unexpected record '" + kind + "'");
    }
  }
  problem.options = ba_options_from(options);
  std::sort(poses.begin(), poses.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t k = 0; k < poses.size(); ++k) {
    if (poses[k].first != static_cast<int>(k)) throw Error(ErrorCode::kParse, "pose frames must be 0..T-1");
    problem.initial_poses.push_back(poses[k].second);
  }
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (points[k].first != static_cast<int>(k)) throw Error(ErrorCode::kParse, "point ids must be 0..N-1");
    problem.world_points.push_back(points[k].second);
  }
  log.info("bundle adjustment: " + std::to_string(problem.initial_poses.size()) + " poses, " +
           std::to_string(problem.observations.size()) + " observations");

  const BAResult result = solve_ba(problem);
  ensure_dir(output);
  write_poses(fs::path(output) / "poses.txt", result.poses);
  std::vector<Record> report;
  Record r("ba_report");
  r.set("initial_rmse", result.report.initial_rmse).set("final_rmse", result.report.final_rmse);
  r.set("iterations_used", result.report.iterations_used).set("accepted_steps", result.report.accepted_steps);
  std::string frozen;
  for (int f : result.report.frozen_frames) frozen += (frozen.empty() ? "" : ",") + std::to_string(f);
  r.set("frozen_frames", frozen.empty() ? std::string("none") : frozen);
  report.push_back(r);
  for (std::size_t k = 0; k < result.report.cost_history.size(); ++k)
    report.push_back(Record("cost").set("step", static_cast<int>(k)).set("value", result.report.cost_history[k]));
  write_records(fs::path(output) / "ba_report.txt", report);
  out << r.format() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- align

int cmd_align(const std::string& pairs_path, const std::optional<std::string>& output, bool sim3_flag,
              std::ostream& out, const Log& log) {
  const std::vector<Record> records = read_records(pairs_path);
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  std::vector<double> weights;
  bool sim3 = sim3_flag;
  for (const Record& r : records) {
    if (r.kind() == "options") {
      r.require_known({"kind", "mode"});
      const std::string mode = r.get("mode");
      if (mode == "sim3") sim3 = true;
      else if (mode != "rigid") throw Error(ErrorCode::kParse, "mode must be rigid or sim3");
    } else if (r.kind() == "pair") {
      r.require_known({"kind", "sx", "sy", "sz", "dx", "dy", "dz", "w"});
      src.emplace_back(r.get_double("sx"), r.get_double("sy"), r.get_double("sz"));
      dst.emplace_back(r.get_double("dx"), r.get_double("dy"), r.get_double("dz"));
      weights.push_back(r.has("w") ? r.get_double("w") : 1.0);
    } else {
      throw Error(ErrorCode::kParse, pairs_path + ": unexpected record '" + r.kind() + "'");
    }
  }
  log.info("aligning " + std::to_string(src.size()) + " pairs");
  Record t("transform");
  if (sim3) {
    const SimilarityTransform s = umeyama_sim3(src, dst);
    t.set("mode", std::string("sim3")).set("scale", s.scale);
    t.set("qw", s.rotation.w()).set("qx", s.rotation.x()).set("qy", s.rotation.y()).set("qz", s.rotation.z());
    t.set("tx", s.translation.x()).set("ty", s.translation.y()).set("tz", s.translation.z());
  } else {
    const RigidTransform s = weighted_procrustes(src, dst, weights);
    t.set("mode", std::string("rigid")).set("scale", 1.0);
    t.set("qw", s.rotation.w()).set("qx", s.rotation.x()).set("qy", s.rotation.y()).set("qz", s.rotation.z());
    t.set("tx", s.translation.x()).set("ty", s.translation.y()).set("tz", s.translation.z());
  }
  if (output) {
    ensure_dir(*output);
    write_records(fs::path(*output) / "transform.txt", {t});
  }
  out << t.format() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvalSide {
  std::vector<CameraPose> poses;
  TrackFile tracks;
  std::vector<DepthMap> depths;  // metric (meta scale/shift applied)
};

EvalSide load_eval_side(const fs::path& dir) {
  require_dir(dir);
  const Manifest m = read_manifest(dir);
  EvalSide s;
  for (const fs::path& p : m.depths)
    if (!fs::is_regular_file(p)) throw Error(ErrorCode::kIo, "missing input file: " + p.string());
  s.poses = read_poses(m.poses);
  s.tracks = read_tracks(m.tracks);
  for (const fs::path& p : m.depths) {
    const DepthFile d = read_depth(p);
    s.depths.push_back(apply_scale_shift(d.normalized, d.scale_shift).depth);
  }
  return s;
}

nlohmann::json threshold_json(const ThresholdScore& s) {
  return {{"value", s.value}, {"per_threshold", s.per_threshold}};
}

void emit_subset(const char* name, const std::optional<TrackSubsetReport>& r, const std::vector<double>& thresholds,
                 std::vector<Record>& text, nlohmann::json& json) {
  Record rec("tracks");
  rec.set("subset", std::string(name));
  if (!r) {
    rec.set("status", std::string("unavailable"));
    text.push_back(rec);
    json["tracks"][name] = nullptr;
    return;
  }
  rec.set("tracks", r->tracks).set("aj", r->aj.value).set("apd3d", r->apd3d.value).set("oa", r->oa);
  text.push_back(rec);
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    Record th("threshold");
    th.set("subset", std::string(name)).set("delta", thresholds[k]);
    th.set("aj", r->aj.per_threshold[k]).set("apd3d", r->apd3d.per_threshold[k]);
    text.push_back(th);
  }
  json["tracks"][name] = {{"tracks", r->tracks},
                          {"aj", threshold_json(r->aj)},
                          {"apd3d", threshold_json(r->apd3d)},
                          {"oa", r->oa}};
}

int cmd_evaluate(const std::string& pred_dir, const std::string& gt_dir, const std::optional<std::string>& config_path,
                 const std::optional<std::string>& thresholds, const std::optional<std::string>& output,
                 std::ostream& out, const Log& log) {
  EvalConfig cfg;
  if (config_path) apply_eval_config(cfg, read_config(*config_path));
  if (thresholds) cfg.thresholds = parse_list(*thresholds);

  const EvalSide pred = load_eval_side(pred_dir);
  const EvalSide gt = load_eval_side(gt_dir);
  const int frames = gt.tracks.tracks2d.frames();
  const int n = gt.tracks.tracks2d.tracks();
  if (pred.tracks.tracks2d.frames() != frames || pred.tracks.tracks2d.tracks() != n || pred.poses.size() != gt.poses.size())
    throw Error(ErrorCode::kShapeMismatch, "prediction and ground truth differ in frames or tracks");
  if (pred.depths.size() != gt.depths.size()) throw Error(ErrorCode::kShapeMismatch, "depth file counts differ");

  TrackEvalInput in;
  in.pred = pred.tracks.world;
  in.gt = gt.tracks.world;
  in.pred_vis = binarize(pred.tracks.vis, cfg.vis_threshold);
  in.gt_vis = binarize(gt.tracks.vis, kVisibilityThreshold);
  in.gt_depth = TrackArray<double>(frames, n, 0.0);
  for (std::size_t k = 0; k < in.gt_depth.data().size(); ++k) in.gt_depth.data()[k] = gt.tracks.camera.data()[k].z();
  in.query_frame = gt.tracks.query_frame;

  std::vector<int> all(static_cast<std::size_t>(n));
  std::vector<int> stat;
  std::vector<int> dyn;
  for (int i = 0; i < n; ++i) {
    all[static_cast<std::size_t>(i)] = i;
    (gt.tracks.dynamic[static_cast<std::size_t>(i)] ? dyn : stat).push_back(i);
  }

  MetricReport report;
  report.thresholds = cfg.thresholds;
  report.all = evaluate_tracks(in, cfg.thresholds);
  report.static_tracks = stat.empty() ? std::nullopt : evaluate_tracks(select_tracks(in, stat), cfg.thresholds);
  report.dynamic_tracks = dyn.empty() ? std::nullopt : evaluate_tracks(select_tracks(in, dyn), cfg.thresholds);
  if (!gt.depths.empty()) report.depth = depth_metrics(pred.depths, gt.depths);
  try {
    report.trajectory = trajectory_metrics(pred.poses, gt.poses, cfg.rpe_gap);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerateInput) throw;
    log.info(std::string("trajectory metrics unavailable: ") + e.what());
  }

  std::vector<Record> text;
  nlohmann::json json;
  json["thresholds"] = cfg.thresholds;
  emit_subset("all", report.all, cfg.thresholds, text, json);
  emit_subset("static", report.static_tracks, cfg.thresholds, text, json);
  emit_subset("dynamic", report.dynamic_tracks, cfg.thresholds, text, json);
  if (report.depth) {
    const DepthScores& d = *report.depth;
    text.push_back(Record("depth").set("absrel", d.absrel).set("delta125", d.delta125)
                       .set("scale", d.alignment.a).set("shift", d.alignment.b).set("pixels", static_cast<std::uint64_t>(d.pixels)));
    json["depth"] = {{"absrel", d.absrel}, {"delta125", d.delta125}, {"scale", d.alignment.a},
                     {"shift", d.alignment.b}, {"pixels", d.pixels}};
  } else {
    text.push_back(Record("depth").set("status", std::string("unavailable")));
    json["depth"] = nullptr;
  }
  if (report.trajectory) {
    const TrajectoryScores& tr = *report.trajectory;
    text.push_back(Record("trajectory").set("ate", tr.ate).set("rpe_t", tr.rpe_t).set("rpe_r", tr.rpe_r)
                       .set("rpe_gap", tr.rpe_gap));
    json["trajectory"] = {{"ate", tr.ate}, {"rpe_t", tr.rpe_t}, {"rpe_r", tr.rpe_r}, {"rpe_gap", tr.rpe_gap}};
  } else {
    text.push_back(Record("trajectory").set("status", std::string("unavailable")));
    json["trajectory"] = nullptr;
  }

  if (output) {
    ensure_dir(*output);
    write_records(fs::path(*output) / "metrics.txt", text);
    write_file_atomic(fs::path(*output) / "metrics.json", json.dump(2) + "\n");
  }
  for (const Record& r : text) out << r.format() << '\n';
  return kExitOk;
}

}  // namespace

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kIo:
      return kExitMissingInput;
    case ErrorCode::kParse:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidQuery:
    case ErrorCode::kInfeasibleSpec:
    case ErrorCode::kImageTooSmall:
    case ErrorCode::kQueryOutsideImage:
      return kExitParse;
    case ErrorCode::kBehindCamera:
    case ErrorCode::kDegenerateInput:
    case ErrorCode::kInsufficientObservations:
    case ErrorCode::kNumericalFailure:
    case ErrorCode::kEmptyInput:
    case ErrorCode::kNoVisiblePoints:
      return kExitNumerical;
  }
  return kExitNumerical;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    out.push_back(parse_double(first == std::string::npos ? "" : item.substr(first, last - first + 1), "threshold list"));
  }
  if (out.empty()) throw Error(ErrorCode::kParse, "empty threshold list");
  for (double v : out)
    if (!(v > 0.0)) throw Error(ErrorCode::kParse, "thresholds must be positive");
  return out;
}

void apply_track_config(TrackConfig& c, const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    bool known = false;
    apply_ba_key(c.loop.ba, k, v, known);
    if (known) continue;
    if (k == "num_iterations") c.loop.num_iterations = parse_int(v, k);
    else if (k == "procrustes_every") c.loop.procrustes_every = parse_int(v, k);
    else if (k == "ba_every") c.loop.ba_every = parse_int(v, k);
    else if (k == "dyn_threshold") c.loop.dyn_threshold = parse_double(v, k);
    else if (k == "dynamic_filtering") c.loop.dynamic_filtering = parse_bool(v, k);
    else if (k == "updater_step_scale") c.loop.updater_step_scale = parse_double(v, k);
    else if (k == "updater_relaxation") c.updater.relaxation = parse_double(v, k);
    else if (k == "updater_levels") c.updater.match_levels = parse_int(v, k);
    else if (k == "anchor_pull") c.updater.anchor_pull = parse_double(v, k);
    else if (k == "anchor_scale") c.updater.anchor_scale = parse_double(v, k);
    else if (k == "vis_gap_gain") c.updater.vis_gap_gain = parse_double(v, k);
    else if (k == "vis_gap_scale") c.updater.vis_gap_scale = parse_double(v, k);
    else if (k == "updater") {
      if (v == "zero") c.zero_updater = true;
      else if (v == "correlation") c.zero_updater = false;
      else throw Error(ErrorCode::kParse, "updater must be correlation or zero");
    } else if (k == "updater_temperature") c.updater.temperature = parse_double(v, k);
    else if (k == "updater_radius") c.updater.radius = parse_int(v, k);
    else if (k == "vis_gain") c.updater.vis_gain = parse_double(v, k);
    else if (k == "vis_reference") c.updater.vis_reference = parse_double(v, k);
    else if (k == "dyn_gain") c.updater.dyn_gain = parse_double(v, k);
    else if (k == "dyn_reference") c.updater.dyn_reference = parse_double(v, k);
    else if (k == "pose_rot_deg") c.pose_rot_deg = parse_double(v, k);
    else if (k == "pose_trans_frac") c.pose_trans_frac = parse_double(v, k);
    else if (k == "depth_sigma") c.depth_sigma = parse_double(v, k);
    else if (k == "track_sigma") c.track_sigma = parse_double(v, k);
    else throw Error(ErrorCode::kParse, "unknown track config key '" + k + "'");
  }
  c.updater.validate();
}

void apply_eval_config(EvalConfig& c, const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "thresholds") c.thresholds = parse_list(v);
    else if (k == "vis_threshold") c.vis_threshold = parse_double(v, k);
    else if (k == "rpe_gap") c.rpe_gap = parse_int(v, k);
    else throw Error(ErrorCode::kParse, "unknown evaluate config key '" + k + "'");
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint track and camera-motion refinement"};
  app.name("jm");
  app.require_subcommand(1);

  std::string config;
  std::string output;
  std::string input;
  std::string second;
  std::string thresholds;
  std::uint64_t seed = 0;
  int iterations = 0;
  bool plot = false;
  bool sim3 = false;
  double rot_deg = 0.0;
  double trans_frac = 0.0;
  double depth_sigma = 0.0;
  double track_sigma = 0.0;

  auto* gen = app.add_subcommand("generate", "write a synthetic scene with ground truth");
  gen->add_option("--config", config, "scene spec (key=value lines)")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "override the spec seed");
  gen->add_option("--output", output, "output directory")->required();

  auto* track = app.add_subcommand("track", "run the joint refinement on a scene directory");
  track->add_option("input", input, "scene directory")->required();
  auto* track_config = track->add_option("--config", config, "loop/BA/updater settings");
  auto* track_seed = track->add_option("--seed", seed, "perturbation seed");
  auto* track_iters = track->add_option("--iterations", iterations, "number of refinement iterations");
  track->add_flag("--plot", plot, "also write reprojection_curve.tsv");
  track->add_option("--output", output, "output directory")->required();
  auto* track_rot = track->add_option("--rot-deg", rot_deg, "perturb poses by this rotation");
  auto* track_trans = track->add_option("--trans-frac", trans_frac, "perturb centres by this fraction of scene scale");
  auto* track_depth = track->add_option("--depth-sigma", depth_sigma, "additive noise on normalized depth");
  auto* track_noise = track->add_option("--track-sigma", track_sigma, "noise on the stored 2D tracks");

  auto* ba = app.add_subcommand("ba", "poses-only bundle adjustment of a problem file");
  ba->add_option("problem", input, "problem file")->required();
  auto* ba_config = ba->add_option("--config", config, "BA options");
  ba->add_option("--output", output, "output directory")->required();

  auto* align = app.add_subcommand("align", "rigid or similarity registration of point pairs");
  align->add_option("pairs", input, "pairs file")->required();
  align->add_flag("--sim3", sim3, "estimate a similarity instead of a rigid motion");
  auto* align_out = align->add_option("--output", output, "output directory");

  auto* eval = app.add_subcommand("evaluate", "score predictions against ground truth");
  eval->add_option("pred", input, "prediction directory")->required();
  eval->add_option("gt", second, "ground-truth directory")->required();
  auto* eval_config = eval->add_option("--config", config, "evaluation settings");
  auto* eval_thr = eval->add_option("--thresholds", thresholds, "comma-separated depth-relative thresholds");
  auto* eval_out = eval->add_option("--output", output, "output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "jm: " << e.what() << '\n';
    return kExitUsage;
  }

  const Log log(err);
  const auto opt = [](CLI::Option* o, const std::string& v) { return *o ? std::optional<std::string>(v) : std::nullopt; };
  try {
    if (*gen) return cmd_generate(config, *gen_seed ? std::optional<std::uint64_t>(seed) : std::nullopt, output, out, log);
    if (*track) {
      KeyValues overrides;
      if (*track_rot) overrides.emplace_back("pose_rot_deg", format_double(rot_deg));
      if (*track_trans) overrides.emplace_back("pose_trans_frac", format_double(trans_frac));
      if (*track_depth) overrides.emplace_back("depth_sigma", format_double(depth_sigma));
      if (*track_noise) overrides.emplace_back("track_sigma", format_double(track_sigma));
      return cmd_track(input, output, opt(track_config, config),
                       *track_seed ? std::optional<std::uint64_t>(seed) : std::nullopt,
                       *track_iters ? std::optional<int>(iterations) : std::nullopt, plot, overrides, out, log);
    }
    if (*ba) return cmd_ba(input, output, opt(ba_config, config), out, log);
    if (*align) return cmd_align(input, opt(align_out, output), sim3, out, log);
    if (*eval)
      return cmd_evaluate(input, second, opt(eval_config, config), opt(eval_thr, thresholds), opt(eval_out, output),
                          out, log);
  } catch (const Error& e) {
    err << "jm: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "jm: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}

}  // namespace jm::cli
