#include "jm/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace jm {
namespace {

constexpr char kMagic[8] = {'J', 'M', 'D', 'E', 'P', 'T', 'H', '\0'};
constexpr std::size_t kHeaderSize = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(k)])) << (8 * k);
  return v;
}

void put_f32(std::string& out, double value) {
  const auto f = static_cast<float>(value);
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

double get_f32(const std::string& in, std::size_t at) { return std::bit_cast<float>(get_u32(in, at)); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void require_file(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error(ErrorCode::kIo, "missing input file: " + path.string());
}

std::string frame_name(const char* stem, int t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d.bin", stem, t);
  return buf;
}

std::string meta_path(const fs::path& path) { return path.string() + ".meta"; }

struct SpecField {
  const char* key;
  std::string (*get)(const SceneSpec&);
  void (*set)(SceneSpec&, const std::string&);
};

#define JM_INT_FIELD(name)                                                                  \
  SpecField {                                                                               \
    #name, [](const SceneSpec& s) { return std::to_string(s.name); },                       \
        [](SceneSpec& s, const std::string& v) { s.name = parse_int(v, #name); }            \
  }
#define JM_DOUBLE_FIELD(name)                                                               \
  SpecField {                                                                               \
    #name, [](const SceneSpec& s) { return format_double(s.name); },                        \
        [](SceneSpec& s, const std::string& v) { s.name = parse_double(v, #name); }         \
  }

const std::vector<SpecField>& spec_fields() {
  static const std::vector<SpecField> fields = {
      {"seed", [](const SceneSpec& s) { return std::to_string(s.seed); },
       [](SceneSpec& s, const std::string& v) {
         std::uint64_t out = 0;
         const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
         if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw Error(ErrorCode::kParse, "bad seed '" + v + "'");
         s.seed = out;
       }},
      JM_INT_FIELD(num_frames),
      JM_INT_FIELD(width),
      JM_INT_FIELD(height),
      JM_DOUBLE_FIELD(focal),
      JM_INT_FIELD(num_static_points),
      JM_INT_FIELD(num_objects),
      JM_INT_FIELD(points_per_object),
      {"trajectory", [](const SceneSpec& s) { return to_string(s.trajectory); },
       [](SceneSpec& s, const std::string& v) { s.trajectory = parse_trajectory(v); }},
      JM_DOUBLE_FIELD(camera_motion),
      JM_DOUBLE_FIELD(object_displacement),
      JM_DOUBLE_FIELD(object_rotation_deg),
      JM_DOUBLE_FIELD(texture_frequency),
      JM_INT_FIELD(texture_components),
      JM_INT_FIELD(supersampling),
      JM_INT_FIELD(query_margin),
      JM_INT_FIELD(edge_margin),
      JM_DOUBLE_FIELD(depth_sigma),
      JM_DOUBLE_FIELD(pose_rot_deg),
      JM_DOUBLE_FIELD(pose_trans_frac),
      JM_DOUBLE_FIELD(track_sigma),
  };
  return fields;
}

#undef JM_INT_FIELD
#undef JM_DOUBLE_FIELD

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& text, const std::string& what) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size())
    throw Error(ErrorCode::kParse, "bad number for " + what + ": '" + text + "'");
  return v;
}

int parse_int(const std::string& text, const std::string& what) {
  int v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size())
    throw Error(ErrorCode::kParse, "bad integer for " + what + ": '" + text + "'");
  return v;
}

Record& Record::set(const std::string& key, std::string value) {
  for (auto& [k, v] : fields_) {
    if (k == key) {
      v = std::move(value);
      return *this;
    }
  }
  fields_.emplace_back(key, std::move(value));
  return *this;
}

Record& Record::set(const std::string& key, double value) { return set(key, format_double(value)); }
Record& Record::set(const std::string& key, int value) { return set(key, std::to_string(value)); }
Record& Record::set(const std::string& key, std::uint64_t value) { return set(key, std::to_string(value)); }

bool Record::has(const std::string& key) const {
  return std::any_of(fields_.begin(), fields_.end(), [&](const auto& f) { return f.first == key; });
}

const std::string& Record::get(const std::string& key) const {
  for (const auto& [k, v] : fields_)
    if (k == key) return v;
  throw Error(ErrorCode::kParse, "record '" + kind() + "' lacks field '" + key + "'");
}

double Record::get_double(const std::string& key) const { return parse_double(get(key), key); }
int Record::get_int(const std::string& key) const { return parse_int(get(key), key); }

std::uint64_t Record::get_u64(const std::string& key) const {
  const std::string& text = get(key);
  std::uint64_t v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size())
    throw Error(ErrorCode::kParse, "bad integer for " + key + ": '" + text + "'");
  return v;
}

void Record::require_known(const std::vector<std::string>& allowed) const {
  for (const auto& [k, v] : fields_)
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw Error(ErrorCode::kParse, "unknown key '" + k + "' in record '" + kind() + "'");
}

std::string Record::format() const {
  std::string out;
  for (const auto& [k, v] : fields_) {
    if (!out.empty()) out.push_back(' ');
    out += k;
    out.push_back('=');
    out += v;
  }
  return out;
}

Record Record::parse(const std::string& line, const std::string& origin) {
  Record r;
  std::istringstream in(line);
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(ErrorCode::kParse, origin + ": expected key=value, got '" + token + "'");
    const std::string key = token.substr(0, eq);
    if (r.has(key)) throw Error(ErrorCode::kParse, origin + ": duplicate key '" + key + "'");
    r.fields_.emplace_back(key, token.substr(eq + 1));
  }
  return r;
}

std::string read_text(const fs::path& path) {
  require_file(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Record> read_records(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<Record> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    out.push_back(Record::parse(t, path.string() + ":" + std::to_string(line_no)));
  }
  return out;
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::kIo, "cannot rename into " + path.string());
  }
}

void write_records(const fs::path& path, const std::vector<Record>& records) {
  std::string out;
  for (const Record& r : records) {
    out += r.format();
    out.push_back('\n');
  }
  write_file_atomic(path, out);
}

std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": empty key");
    for (const auto& kv : out)
      if (kv.first == key) throw Error(ErrorCode::kParse, path.string() + ": duplicate key '" + key + "'");
    out.emplace_back(key, value);
  }
  return out;
}

void write_raster(const fs::path& path, RasterKind kind, const RasterMeta& meta, std::span<const double> values) {
  const std::size_t expected = static_cast<std::size_t>(meta.width) * static_cast<std::size_t>(meta.height) *
                               static_cast<std::size_t>(meta.channels);
  if (values.size() != expected) throw Error(ErrorCode::kShapeMismatch, "raster value count does not match meta");
  std::string bytes(kMagic, kMagic + 8);
  put_u32(bytes, kRasterVersion);
  put_u32(bytes, static_cast<std::uint32_t>(kind));
  bytes.reserve(kHeaderSize + 4 * values.size());
  for (double v : values) put_f32(bytes, v);

  std::string m;
  m += "width=" + std::to_string(meta.width) + "\n";
  m += "height=" + std::to_string(meta.height) + "\n";
  m += "channels=" + std::to_string(meta.channels) + "\n";
  m += "units=" + meta.units + "\n";
  m += "scale=" + format_double(meta.scale_shift.a) + "\n";
  m += "shift=" + format_double(meta.scale_shift.b) + "\n";
  write_file_atomic(path, bytes);
  write_file_atomic(meta_path(path), m);
}

RasterFile read_raster(const fs::path& path) {
  const std::string bytes = read_text(path);
  RasterFile f;
  const auto kv = read_config(meta_path(path));
  Record meta;
  for (const auto& [k, v] : kv) meta.set(k, v);
  meta.require_known({"width", "height", "channels", "units", "scale", "shift"});
  f.meta.width = meta.get_int("width");
  f.meta.height = meta.get_int("height");
  f.meta.channels = meta.get_int("channels");
  f.meta.units = meta.get("units");
  f.meta.scale_shift = {meta.get_double("scale"), meta.get_double("shift")};
  if (f.meta.width <= 0 || f.meta.height <= 0 || f.meta.channels <= 0)
    throw Error(ErrorCode::kParse, path.string() + ": bad raster dimensions");

  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw Error(ErrorCode::kParse, path.string() + ": not a raster file");
  if (get_u32(bytes, 8) != kRasterVersion) throw Error(ErrorCode::kParse, path.string() + ": unsupported version");
  const std::uint32_t kind = get_u32(bytes, 12);
  if (kind < 1 || kind > 3) throw Error(ErrorCode::kParse, path.string() + ": unknown raster kind");
  f.kind = static_cast<RasterKind>(kind);
  const std::size_t count = static_cast<std::size_t>(f.meta.width) * static_cast<std::size_t>(f.meta.height) *
                            static_cast<std::size_t>(f.meta.channels);
  if (bytes.size() != kHeaderSize + 4 * count) throw Error(ErrorCode::kParse, path.string() + ": size disagrees with meta");
  f.values.resize(count);
  for (std::size_t k = 0; k < count; ++k) f.values[k] = get_f32(bytes, kHeaderSize + 4 * k);
  return f;
}

void write_depth(const fs::path& path, const DepthMap& normalized, const ScaleShift& ss) {
  write_raster(path, RasterKind::kDepth, {normalized.width(), normalized.height(), 1, "normalized", ss},
               normalized.values());
}

DepthFile read_depth(const fs::path& path) {
  RasterFile f = read_raster(path);
  if (f.kind != RasterKind::kDepth || f.meta.channels != 1) throw Error(ErrorCode::kParse, path.string() + ": not a depth map");
  for (double v : f.values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::kParse, path.string() + ": negative or non-finite depth");
  return {DepthMap(f.meta.width, f.meta.height, std::move(f.values)), f.meta.scale_shift};
}

void write_image(const fs::path& path, const Image& image) {
  write_raster(path, RasterKind::kImage, {image.width(), image.height(), 1, "intensity", {}}, image.values());
}

Image read_image(const fs::path& path) {
  RasterFile f = read_raster(path);
  if (f.kind != RasterKind::kImage || f.meta.channels != 1) throw Error(ErrorCode::kParse, path.string() + ": not an image");
  return Image(f.meta.width, f.meta.height, std::move(f.values));
}

void write_point_map(const fs::path& path, const PointMap& points) {
  std::vector<double> values;
  values.reserve(points.points.size() * 3);
  for (std::size_t k = 0; k < points.points.size(); ++k) {
    const Vec3 p = points.valid[k] ? points.points[k] : Vec3::Zero();
    values.insert(values.end(), {p.x(), p.y(), p.z()});
  }
  write_raster(path, RasterKind::kPoints, {points.width, points.height, 3, "camera", {}}, values);
}

void write_poses(const fs::path& path, std::span<const CameraPose> poses) {
  std::vector<Record> out;
  for (std::size_t t = 0; t < poses.size(); ++t) {
    const CameraPose& p = poses[t];
    Record r("pose");
    r.set("frame", static_cast<int>(t));
    r.set("qw", p.rotation().w()).set("qx", p.rotation().x()).set("qy", p.rotation().y()).set("qz", p.rotation().z());
    r.set("tx", p.translation().x()).set("ty", p.translation().y()).set("tz", p.translation().z());
    r.set("focal", p.focal()).set("cx", p.principal_point().x()).set("cy", p.principal_point().y());
    out.push_back(std::move(r));
  }
  write_records(path, out);
}

std::vector<CameraPose> read_poses(const fs::path& path) {
  const std::vector<Record> records = read_records(path);
  std::vector<CameraPose> poses(records.size());
  std::vector<bool> seen(records.size(), false);
  for (const Record& r : records) {
    if (r.kind() != "pose") throw Error(ErrorCode::kParse, path.string() + ": unexpected record '" + r.kind() + "'");
    r.require_known({"kind", "frame", "qw", "qx", "qy", "qz", "tx", "ty", "tz", "focal", "cx", "cy"});
    const int t = r.get_int("frame");
    if (t < 0 || t >= static_cast<int>(records.size()) || seen[static_cast<std::size_t>(t)])
      throw Error(ErrorCode::kParse, path.string() + ": frame indices must be 0..T-1 without repeats");
    seen[static_cast<std::size_t>(t)] = true;
    const Quat q(r.get_double("qw"), r.get_double("qx"), r.get_double("qy"), r.get_double("qz"));
    try {
      CameraPose pose(q, {r.get_double("tx"), r.get_double("ty"), r.get_double("tz")}, r.get_double("focal"),
                      {r.get_double("cx"), r.get_double("cy")});
      poses[static_cast<std::size_t>(t)] = pose;
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    }
  }
  if (poses.empty()) throw Error(ErrorCode::kParse, path.string() + ": no poses");
  return poses;
}

void write_tracks(const fs::path& path, const TrackFile& tf) {
  std::vector<Record> out;
  const int n = static_cast<int>(tf.queries.size());
  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    Record r("track");
    r.set("id", i).set("query_frame", tf.query_frame[idx]);
    r.set("qu", tf.queries[idx].x()).set("qv", tf.queries[idx].y());
    r.set("dynamic", static_cast<int>(tf.dynamic[idx])).set("object", tf.object_id[idx]);
    out.push_back(std::move(r));
  }
  for (int t = 0; t < tf.tracks2d.frames(); ++t) {
    for (int i = 0; i < n; ++i) {
      Record r("obs");
      r.set("frame", t).set("id", i);
      r.set("u", tf.tracks2d(t, i).x()).set("v", tf.tracks2d(t, i).y());
      r.set("cx", tf.camera(t, i).x()).set("cy", tf.camera(t, i).y()).set("cz", tf.camera(t, i).z());
      r.set("wx", tf.world(t, i).x()).set("wy", tf.world(t, i).y()).set("wz", tf.world(t, i).z());
      r.set("vis", tf.vis(t, i)).set("dyn", tf.dyn(t, i));
      out.push_back(std::move(r));
    }
  }
  write_records(path, out);
}

TrackFile read_tracks(const fs::path& path) {
  const std::vector<Record> records = read_records(path);
  TrackFile tf;
  std::vector<const Record*> obs;
  for (const Record& r : records) {
    if (r.kind() == "track") {
      r.require_known({"kind", "id", "query_frame", "qu", "qv", "dynamic", "object"});
      if (r.get_int("id") != static_cast<int>(tf.queries.size()))
        throw Error(ErrorCode::kParse, path.string() + ": track ids must be 0..N-1 in order");
      tf.queries.emplace_back(r.get_double("qu"), r.get_double("qv"));
      tf.query_frame.push_back(r.get_int("query_frame"));
      tf.dynamic.push_back(r.get_int("dynamic") != 0 ? 1 : 0);
      tf.object_id.push_back(r.has("object") ? r.get_int("object") : -1);
    } else if (r.kind() == "obs") {
      r.require_known({"kind", "frame", "id", "u", "v", "cx", "cy", "cz", "wx", "wy", "wz", "vis", "dyn"});
      obs.push_back(&r);
    } else {
      throw Error(ErrorCode::kParse, path.string() + ": unexpected record '" + r.kind() + "'");
    }
  }
  const int n = static_cast<int>(tf.queries.size());
  if (n == 0 || obs.size() % static_cast<std::size_t>(n) != 0)
    throw Error(ErrorCode::kParse, path.string() + ": observation count is not frames x tracks");
  const int frames = static_cast<int>(obs.size() / static_cast<std::size_t>(n));
  tf.tracks2d = TrackArray<Vec2>(frames, n, Vec2::Zero());
  tf.camera = TrackArray<Vec3>(frames, n, Vec3::Zero());
  tf.world = TrackArray<Vec3>(frames, n, Vec3::Zero());
  tf.vis = TrackArray<double>(frames, n, 0.0);
  tf.dyn = TrackArray<double>(frames, n, 0.0);
  TrackArray<std::uint8_t> seen(frames, n, 0);
  for (const Record* r : obs) {
    const int t = r->get_int("frame");
    const int i = r->get_int("id");
    if (t < 0 || t >= frames || i < 0 || i >= n || seen(t, i))
      throw Error(ErrorCode::kParse, path.string() + ": observation index out of range or repeated");
    seen(t, i) = 1;
    tf.tracks2d(t, i) = {r->get_double("u"), r->get_double("v")};
    tf.camera(t, i) = {r->get_double("cx"), r->get_double("cy"), r->get_double("cz")};
    tf.world(t, i) = {r->get_double("wx"), r->get_double("wy"), r->get_double("wz")};
    tf.vis(t, i) = r->get_double("vis");
    tf.dyn(t, i) = r->get_double("dyn");
  }
  for (int q : tf.query_frame)
    if (q < 0 || q >= frames) throw Error(ErrorCode::kParse, path.string() + ": query frame out of range");
  return tf;
}

std::vector<std::pair<std::string, std::string>> spec_to_config(const SceneSpec& spec) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const SpecField& f : spec_fields()) out.emplace_back(f.key, f.get(spec));
  return out;
}

SceneSpec spec_from_config(const std::vector<std::pair<std::string, std::string>>& config) {
  SceneSpec spec;
  for (const auto& [key, value] : config) {
    const auto& fields = spec_fields();
    const auto it = std::find_if(fields.begin(), fields.end(), [&](const SpecField& f) { return key == f.key; });
    if (it == fields.end()) throw Error(ErrorCode::kParse, "unknown scene spec key '" + key + "'");
    it->set(spec, value);
  }
  return spec;
}

void save_scene(const fs::path& dir, const SceneGroundTruth& gt) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string());

  std::vector<Record> manifest;
  Record header("manifest");
  header.set("format", std::string("jm-scene")).set("version", 1).set("frames", gt.frames());
  header.set("width", gt.spec.width).set("height", gt.spec.height).set("tracks", gt.tracks());
  manifest.push_back(header);
  Record spec("spec");
  for (const auto& [k, v] : spec_to_config(gt.spec)) spec.set(k, v);
  manifest.push_back(spec);
  Record ss("scale_shift");
  ss.set("a", gt.scale_shift.a).set("b", gt.scale_shift.b).set("scene_scale", gt.scene_scale);
  manifest.push_back(ss);
  manifest.push_back(Record("file").set("role", std::string("poses")).set("path", std::string("poses.txt")));
  manifest.push_back(Record("file").set("role", std::string("tracks")).set("path", std::string("tracks.txt")));

  for (int t = 0; t < gt.frames(); ++t) {
    const std::string depth = frame_name("depth", t);
    const std::string image = frame_name("image", t);
    write_depth(dir / depth, gt.depths_normalized[static_cast<std::size_t>(t)], gt.scale_shift);
    write_image(dir / image, gt.images[static_cast<std::size_t>(t)]);
    manifest.push_back(Record("file").set("role", std::string("depth")).set("frame", t).set("path", depth));
    manifest.push_back(Record("file").set("role", std::string("image")).set("frame", t).set("path", image));
  }
  write_poses(dir / "poses.txt", gt.poses);

  TrackFile tf;
  tf.queries = gt.queries;
  tf.query_frame = gt.query_frame;
  tf.dynamic = gt.gt_dynamic;
  tf.object_id = gt.object_id;
  tf.tracks2d = gt.tracks2d;
  tf.camera = gt.tracks3d_camera;
  tf.world = gt.tracks3d_world;
  tf.vis = TrackArray<double>(gt.frames(), gt.tracks(), 0.0);
  tf.dyn = TrackArray<double>(gt.frames(), gt.tracks(), 0.0);
  for (int t = 0; t < gt.frames(); ++t) {
    for (int i = 0; i < gt.tracks(); ++i) {
      tf.vis(t, i) = gt.gt_vis(t, i);
      tf.dyn(t, i) = gt.gt_dynamic[static_cast<std::size_t>(i)];
    }
  }
  write_tracks(dir / "tracks.txt", tf);
  write_records(dir / "manifest.txt", manifest);
}

Manifest read_manifest(const fs::path& dir) {
  const std::vector<Record> records = read_records(dir / "manifest.txt");
  Manifest m;
  std::vector<std::pair<int, fs::path>> depths;
  std::vector<std::pair<int, fs::path>> images;
  bool have_header = false;
  for (const Record& r : records) {
    const std::string kind = r.kind();
    if (kind == "manifest") {
      m.header = r;
      have_header = true;
    } else if (kind == "spec") {
      m.spec = r;
    } else if (kind == "scale_shift") {
      m.scale_shift = r;
    } else if (kind == "file") {
      r.require_known({"kind", "role", "path", "frame"});
      const std::string role = r.get("role");
      const fs::path p = dir / r.get("path");
      if (role == "poses") m.poses = p;
      else if (role == "tracks") m.tracks = p;
      else if (role == "depth") depths.emplace_back(r.get_int("frame"), p);
      else if (role == "image") images.emplace_back(r.get_int("frame"), p);
      else m.extra.push_back(r);
    } else {
      m.extra.push_back(r);
    }
  }
  if (!have_header) throw Error(ErrorCode::kParse, (dir / "manifest.txt").string() + ": missing manifest record");
  const auto ordered = [&](std::vector<std::pair<int, fs::path>>& list, const char* what) {
    std::sort(list.begin(), list.end());
    std::vector<fs::path> out;
    for (std::size_t k = 0; k < list.size(); ++k) {
      if (list[k].first != static_cast<int>(k))
        throw Error(ErrorCode::kParse, std::string("manifest ") + what + " frames must be 0..T-1");
      out.push_back(list[k].second);
    }
    return out;
  };
  m.depths = ordered(depths, "depth");
  m.images = ordered(images, "image");
  return m;
}

SceneGroundTruth load_scene(const fs::path& dir) {
  const Manifest m = read_manifest(dir);
  if (!m.spec || !m.scale_shift) throw Error(ErrorCode::kParse, "scene manifest lacks spec or scale_shift");
  SceneGroundTruth gt;
  std::vector<std::pair<std::string, std::string>> spec_kv;
  for (const auto& [k, v] : m.spec->fields())
    if (k != "kind") spec_kv.emplace_back(k, v);
  gt.spec = spec_from_config(spec_kv);
  gt.scale_shift = {m.scale_shift->get_double("a"), m.scale_shift->get_double("b")};
  gt.scene_scale = m.scale_shift->get_double("scene_scale");

  gt.poses = read_poses(m.poses);
  const auto frames = gt.poses.size();
  if (m.depths.size() != frames || m.images.size() != frames)
    throw Error(ErrorCode::kShapeMismatch, "manifest lists a different number of depth/image files than poses");
  for (std::size_t t = 0; t < frames; ++t) {
    DepthFile d = read_depth(m.depths[t]);
    DepthMap metric(d.normalized.width(), d.normalized.height(), 0.0);
    for (std::size_t k = 0; k < metric.size(); ++k) {
      const double n = d.normalized.values()[k];
      if (n > 0.0) metric.values()[k] = gt.scale_shift.a * n + gt.scale_shift.b;
    }
    gt.depths_normalized.push_back(std::move(d.normalized));
    gt.depths.push_back(std::move(metric));
    gt.images.push_back(read_image(m.images[t]));
  }

  TrackFile tf = read_tracks(m.tracks);
  if (tf.tracks2d.frames() != static_cast<int>(frames)) throw Error(ErrorCode::kShapeMismatch, "tracks and poses disagree on frames");
  gt.queries = std::move(tf.queries);
  gt.query_frame = std::move(tf.query_frame);
  gt.gt_dynamic = std::move(tf.dynamic);
  gt.object_id = std::move(tf.object_id);
  gt.tracks2d = std::move(tf.tracks2d);
  gt.tracks3d_camera = std::move(tf.camera);
  gt.tracks3d_world = std::move(tf.world);
  gt.gt_vis = binarize(tf.vis);
  return gt;
}

}  // namespace jm
