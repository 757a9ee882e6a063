#pragma once

// On-disk formats.
//
// Rasters: 16-byte header ("JMDEPTH\0", u32 version, u32 kind), then
// little-endian float32 values row-major (channels interleaved), plus a
// sidecar "<file>.meta" text file of key=value lines.
//
// Everything else is line-oriented text: one record per line, fields written
// as key=value separated by spaces, doubles printed with 17 significant
// digits so they round-trip exactly. Blank lines and '#' comments are skipped.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "jm/geometry.hpp"
#include "jm/synth.hpp"

namespace jm {

namespace fs = std::filesystem;

inline constexpr std::uint32_t kRasterVersion = 1;

enum class RasterKind : std::uint32_t { kDepth = 1, kImage = 2, kPoints = 3 };

struct RasterMeta {
  int width{0};
  int height{0};
  int channels{1};
  std::string units{"normalized"};
  ScaleShift scale_shift;
};

/// One line of key=value fields, in insertion order.
class Record {
 public:
  Record() = default;
  explicit Record(std::string kind) { set("kind", std::move(kind)); }

  Record& set(const std::string& key, std::string value);
  Record& set(const std::string& key, double value);
  Record& set(const std::string& key, int value);
  Record& set(const std::string& key, std::uint64_t value);

  [[nodiscard]] bool has(const std::string& key) const;
  [[nodiscard]] const std::string& get(const std::string& key) const;
  [[nodiscard]] double get_double(const std::string& key) const;
  [[nodiscard]] int get_int(const std::string& key) const;
  [[nodiscard]] std::uint64_t get_u64(const std::string& key) const;
  [[nodiscard]] std::string kind() const { return has("kind") ? get("kind") : std::string(); }
  [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& fields() const noexcept { return fields_; }

  /// Throws kParse naming the first key not in `allowed`.
  void require_known(const std::vector<std::string>& allowed) const;

  [[nodiscard]] std::string format() const;
  /// `origin` only decorates error messages.
  [[nodiscard]] static Record parse(const std::string& line, const std::string& origin = "");

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

[[nodiscard]] std::string format_double(double v);
[[nodiscard]] double parse_double(const std::string& text, const std::string& what);
[[nodiscard]] int parse_int(const std::string& text, const std::string& what);

/// Throws kIo ("missing input") when the file does not exist.
[[nodiscard]] std::vector<Record> read_records(const fs::path& path);
[[nodiscard]] std::string read_text(const fs::path& path);
void write_records(const fs::path& path, const std::vector<Record>& records);
/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const fs::path& path, const std::string& bytes);

/// Flat key=value configuration (one pair per line, '#' comments).
[[nodiscard]] std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path);

void write_raster(const fs::path& path, RasterKind kind, const RasterMeta& meta, std::span<const double> values);
struct RasterFile {
  RasterKind kind{RasterKind::kDepth};
  RasterMeta meta;
  std::vector<double> values;
};
[[nodiscard]] RasterFile read_raster(const fs::path& path);

void write_depth(const fs::path& path, const DepthMap& normalized, const ScaleShift& ss);
struct DepthFile {
  DepthMap normalized;
  ScaleShift scale_shift;
};
[[nodiscard]] DepthFile read_depth(const fs::path& path);
void write_image(const fs::path& path, const Image& image);
[[nodiscard]] Image read_image(const fs::path& path);
void write_point_map(const fs::path& path, const PointMap& points);

void write_poses(const fs::path& path, std::span<const CameraPose> poses);
[[nodiscard]] std::vector<CameraPose> read_poses(const fs::path& path);

/// Per-track metadata plus per-(frame, track) observations.
struct TrackFile {
  std::vector<Vec2> queries;
  std::vector<int> query_frame;
  Mask dynamic;
  std::vector<int> object_id;
  TrackArray<Vec2> tracks2d;
  TrackArray<Vec3> camera;
  TrackArray<Vec3> world;
  TrackArray<double> vis;
  TrackArray<double> dyn;
};
void write_tracks(const fs::path& path, const TrackFile& tracks);
[[nodiscard]] TrackFile read_tracks(const fs::path& path);

[[nodiscard]] std::vector<std::pair<std::string, std::string>> spec_to_config(const SceneSpec& spec);
/// Unknown keys raise kParse.
[[nodiscard]] SceneSpec spec_from_config(const std::vector<std::pair<std::string, std::string>>& config);

/// Directory layout: manifest.txt, poses.txt, tracks.txt, depth_NNNN.bin and
/// image_NNNN.bin (+ .meta). Depth files hold normalized depth; the sidecar
/// carries the scale/shift.
void save_scene(const fs::path& dir, const SceneGroundTruth& gt);
[[nodiscard]] SceneGroundTruth load_scene(const fs::path& dir);

/// Files of a manifest by role; depth/image lists are ordered by frame.
struct Manifest {
  Record header;
  std::optional<Record> spec;
  std::optional<Record> scale_shift;
  fs::path poses;
  fs::path tracks;
  std::vector<fs::path> depths;
  std::vector<fs::path> images;
  std::vector<Record> extra;
};
[[nodiscard]] Manifest read_manifest(const fs::path& dir);

}  // namespace jm
