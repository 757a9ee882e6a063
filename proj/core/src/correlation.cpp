#include "jm/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace jm {
namespace {

// Constant channel of the image descriptor.
constexpr double kFlatChannel = 1e-3;

int ceil_div(int a, int b) { return (a + b - 1) / b; }

struct Pooled {
  int width{0};
  int height{0};
  int dim{0};
  std::vector<double> sum;
  std::vector<double> count;
};

// Average-pools `dim`-channel pixels in s x s blocks, skipping invalid pixels.
template <typename PixelFn>
Pooled pool(int width, int height, int dim, int scale, PixelFn&& pixel) {
  Pooled p;
  p.width = ceil_div(width, scale);
  p.height = ceil_div(height, scale);
  p.dim = dim;
  p.sum.assign(static_cast<std::size_t>(p.width * p.height * dim), 0.0);
  p.count.assign(static_cast<std::size_t>(p.width * p.height), 0.0);
  std::vector<double> buf(static_cast<std::size_t>(dim));
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      if (!pixel(col, row, buf)) continue;
      const std::size_t cell = static_cast<std::size_t>((row / scale) * p.width + col / scale);
      for (int k = 0; k < dim; ++k) p.sum[cell * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)] += buf[static_cast<std::size_t>(k)];
      p.count[cell] += 1.0;
    }
  }
  return p;
}

void check_size(int width, int height) {
  if (width < kMinPyramidSize || height < kMinPyramidSize)
    throw Error(ErrorCode::kImageTooSmall,
                "pyramid input must be at least " + std::to_string(kMinPyramidSize) + " pixels per side");
}

void check_levels(int levels) {
  if (levels < 1) throw Error(ErrorCode::kInvalidArgument, "pyramid needs at least one level");
}

// Descriptor of one cell of a pooled intensity grid.
void image_descriptor(const std::vector<double>& grid, int w, int h, int x, int y, double* out) {
  const auto at = [&](int cx, int cy) {
    cx = std::clamp(cx, 0, w - 1);
    cy = std::clamp(cy, 0, h - 1);
    return grid[static_cast<std::size_t>(cy * w + cx)];
  };
  double mean = 0.0;
  int k = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) mean += at(x + dx, y + dy);
  mean /= 9.0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) out[k++] = at(x + dx, y + dy) - mean;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) out[k++] = 0.5 * (at(x + dx + 1, y + dy) - at(x + dx - 1, y + dy));
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) out[k++] = 0.5 * (at(x + dx, y + dy + 1) - at(x + dx, y + dy - 1));
  out[k++] = kFlatChannel;
  double norm = 0.0;
  for (int j = 0; j < kImageDescriptorDim; ++j) norm += out[j] * out[j];
  norm = std::sqrt(norm);
  for (int j = 0; j < kImageDescriptorDim; ++j) out[j] /= norm;
}

}  // namespace

bool PyramidLevel::sample(double gx, double gy, Eigen::Ref<Eigen::VectorXd> out) const {
  gx = std::clamp(gx, 0.0, static_cast<double>(width - 1));
  gy = std::clamp(gy, 0.0, static_cast<double>(height - 1));
  const int x0 = static_cast<int>(std::floor(gx));
  const int y0 = static_cast<int>(std::floor(gy));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = gx - x0;
  const double fy = gy - y0;

  out.setZero();
  double total = 0.0;
  const auto accumulate = [&](int x, int y, double w) {
    if (w == 0.0 || !is_valid(x, y)) return;
    const auto c = cell(x, y);
    for (int k = 0; k < dim; ++k) out(k) += w * c[static_cast<std::size_t>(k)];
    total += w;
  };
  accumulate(x0, y0, (1.0 - fx) * (1.0 - fy));
  accumulate(x1, y0, fx * (1.0 - fy));
  accumulate(x0, y1, (1.0 - fx) * fy);
  accumulate(x1, y1, fx * fy);
  if (!(total > 0.0)) return false;
  if (total != 1.0) out /= total;
  return true;
}

Vec2 FeaturePyramid::to_grid(const Vec2& uv, int level) const {
  const double s = levels[static_cast<std::size_t>(level)].scale;
  return {uv.x() * base_width / s - 0.5, uv.y() * base_height / s - 0.5};
}

FeaturePyramid build_image_pyramid(const Image& image, int levels) {
  check_size(image.width(), image.height());
  check_levels(levels);
  FeaturePyramid pyr;
  pyr.kind = PyramidKind::kImage;
  pyr.base_width = image.width();
  pyr.base_height = image.height();
  for (int s = 1; s <= levels; ++s) {
    const Pooled p = pool(image.width(), image.height(), 1, s, [&](int col, int row, std::vector<double>& v) {
      v[0] = image.at(col, row);
      return true;
    });
    std::vector<double> grid(p.sum.size());
    for (std::size_t c = 0; c < grid.size(); ++c) grid[c] = p.sum[c] / p.count[c];

    PyramidLevel level;
    level.scale = s;
    level.width = p.width;
    level.height = p.height;
    level.dim = kImageDescriptorDim;
    level.data.assign(static_cast<std::size_t>(p.width * p.height * kImageDescriptorDim), 0.0);
    level.valid.assign(static_cast<std::size_t>(p.width * p.height), 1);
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x)
        image_descriptor(grid, p.width, p.height, x, y,
                         level.data.data() + static_cast<std::size_t>((y * p.width + x) * kImageDescriptorDim));
    pyr.levels.push_back(std::move(level));
  }
  return pyr;
}

FeaturePyramid build_point_pyramid(const PointMap& points, int levels) {
  check_size(points.width, points.height);
  check_levels(levels);
  FeaturePyramid pyr;
  pyr.kind = PyramidKind::kPoints;
  pyr.base_width = points.width;
  pyr.base_height = points.height;

  double depth_sum = 0.0;
  std::size_t depth_count = 0;
  for (std::size_t k = 0; k < points.points.size(); ++k) {
    if (!points.valid[k]) continue;
    depth_sum += points.points[k].z();
    ++depth_count;
  }
  pyr.normalization = (depth_count > 0 && depth_sum > 0.0) ? depth_sum / static_cast<double>(depth_count) : 1.0;

  for (int s = 1; s <= levels; ++s) {
    const Pooled p = pool(points.width, points.height, 3, s, [&](int col, int row, std::vector<double>& v) {
      if (!points.is_valid(col, row)) return false;
      const Vec3& q = points.at(col, row);
      v[0] = q.x();
      v[1] = q.y();
      v[2] = q.z();
      return true;
    });
    PyramidLevel level;
    level.scale = s;
    level.width = p.width;
    level.height = p.height;
    level.dim = 3;
    level.data.assign(p.sum.size(), 0.0);
    level.valid.assign(p.count.size(), 0);
    for (std::size_t c = 0; c < p.count.size(); ++c) {
      if (p.count[c] == 0.0) continue;
      level.valid[c] = 1;
      for (std::size_t k = 0; k < 3; ++k) level.data[c * 3 + k] = p.sum[c * 3 + k] / p.count[c] / pyr.normalization;
    }
    pyr.levels.push_back(std::move(level));
  }
  return pyr;
}

std::vector<double> harmonic_encode(std::span<const double> v, int num_freqs) {
  if (num_freqs < 1) throw Error(ErrorCode::kInvalidArgument, "num_freqs must be at least 1");
  std::vector<double> out;
  out.reserve(v.size() * static_cast<std::size_t>(2 * num_freqs));
  for (double x : v) {
    double freq = std::numbers::pi;
    for (int k = 0; k < num_freqs; ++k) {
      out.push_back(std::sin(freq * x));
      out.push_back(std::cos(freq * x));
      freq *= 2.0;
    }
  }
  return out;
}

std::vector<double> harmonic_encode(const Vec3& v, int num_freqs) {
  const double c[3] = {v.x(), v.y(), v.z()};
  return harmonic_encode(std::span<const double>(c, 3), num_freqs);
}

std::vector<double> global_position_embedding(const Vec3& current, const Vec3& anchor, int num_freqs) {
  return harmonic_encode(Vec3(current - anchor), num_freqs);
}

std::vector<double> time_embedding(int t, int frames, int num_freqs) {
  if (frames < 1) throw Error(ErrorCode::kInvalidArgument, "frames must be positive");
  const double x = static_cast<double>(t) / frames;
  return harmonic_encode(std::span<const double>(&x, 1), num_freqs);
}

std::vector<double> local_correlation(const PyramidLevel& level, const Eigen::VectorXd& query,
                                      const Vec2& grid_center, int radius) {
  const auto side = static_cast<std::size_t>(2 * radius + 1);
  std::vector<double> out;
  out.reserve(side * side);
  const double qn = query.norm();
  Eigen::VectorXd d(level.dim);
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (!level.sample(grid_center.x() + dx, grid_center.y() + dy, d) || qn == 0.0) {
        out.push_back(-1.0);
        continue;
      }
      const double dn = d.norm();
      out.push_back(dn > 0.0 ? d.dot(query) / (dn * qn) : -1.0);
    }
  }
  return out;
}

std::vector<Eigen::VectorXd> sample_descriptors(const FeaturePyramid& image, const Vec2& uv) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(image.levels.size());
  for (std::size_t l = 0; l < image.levels.size(); ++l) {
    const PyramidLevel& level = image.levels[l];
    Eigen::VectorXd d(level.dim);
    const Vec2 g = image.to_grid(uv, static_cast<int>(l));
    if (level.sample(g.x(), g.y(), d) && d.norm() > 0.0) d.normalize();
    else d.setZero();
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<double> corr3d_at(const Vec3& query_normalized, const Vec2& uv, const FeaturePyramid& points,
                              int radius, int num_freqs, const FeaturePyramid* image,
                              std::span<const Eigen::VectorXd> query_descriptors) {
  if (radius < 1) throw Error(ErrorCode::kInvalidArgument, "correlation radius must be at least 1");
  if (points.kind != PyramidKind::kPoints) throw Error(ErrorCode::kInvalidArgument, "corr3d needs a point pyramid");
  const bool with_appearance = image != nullptr;
  if (with_appearance && query_descriptors.size() < image->levels.size())
    throw Error(ErrorCode::kInvalidArgument, "one query descriptor per image level required");

  const auto levels = static_cast<int>(points.levels.size());
  const int channels = 6 * num_freqs;
  std::vector<double> out;
  out.reserve(corr3d_length(radius, levels, num_freqs, with_appearance));
  Eigen::VectorXd sample(3);
  for (int l = 0; l < levels; ++l) {
    const PyramidLevel& level = points.levels[static_cast<std::size_t>(l)];
    const Vec2 center = points.to_grid(uv, l);
    std::vector<double> appearance;
    if (with_appearance) {
      const auto li = std::min<std::size_t>(static_cast<std::size_t>(l), image->levels.size() - 1);
      appearance = local_correlation(image->levels[li], query_descriptors[li], image->to_grid(uv, static_cast<int>(li)),
                                     radius);
    }
    std::size_t k = 0;
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx, ++k) {
        if (level.sample(center.x() + dx, center.y() + dy, sample)) {
          const Vec3 rel = Vec3(sample(0), sample(1), sample(2)) - query_normalized;
          const auto enc = harmonic_encode(rel, num_freqs);
          out.insert(out.end(), enc.begin(), enc.end());
        } else {
          out.insert(out.end(), static_cast<std::size_t>(channels), 0.0);
        }
        if (with_appearance) out.push_back(appearance[k]);
      }
    }
  }
  return out;
}

Corr3d corr3d(const Vec3& query_camera, const FeaturePyramid& points, const Intrinsics& intrinsics, int radius,
              int num_freqs, OutsidePolicy policy) {
  Corr3d result;
  const auto proj = try_project_camera(query_camera, intrinsics);
  Vec2 uv = proj ? proj->uv : intrinsics.principal_point;
  if (!proj || !inside_image(uv)) {
    if (policy == OutsidePolicy::kThrow) throw Error(ErrorCode::kQueryOutsideImage, "query projects outside the image");
    uv = uv.cwiseMax(0.0).cwiseMin(1.0);
    result.clamped = true;
  }
  result.values = corr3d_at(query_camera / points.normalization, uv, points, radius, num_freqs);
  return result;
}

TrackArray<Vec3> anchor_points(std::span<const Vec2> queries, int query_frame, std::span<const DepthMap> depths,
                               std::span<const CameraPose> poses) {
  const int frames = static_cast<int>(poses.size());
  if (frames == 0 || depths.size() != poses.size()) throw Error(ErrorCode::kShapeMismatch, "need one depth map per pose");
  if (query_frame < 0 || query_frame >= frames) throw Error(ErrorCode::kInvalidArgument, "query frame out of range");

  const auto homogeneous = [](const CameraPose& p) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = p.rotation().toRotationMatrix();
    m.topRightCorner<3, 1>() = p.translation();
    return m;
  };
  const Eigen::Matrix4d ref_to_world = homogeneous(poses[static_cast<std::size_t>(query_frame)]);
  std::vector<Eigen::Matrix4d> ref_to_frame;
  ref_to_frame.reserve(poses.size());
  for (const CameraPose& p : poses) {
    const Eigen::Matrix4d m = homogeneous(p);
    Eigen::Matrix4d world_to_cam = Eigen::Matrix4d::Identity();
    world_to_cam.topLeftCorner<3, 3>() = m.topLeftCorner<3, 3>().transpose();
    world_to_cam.topRightCorner<3, 1>() = -m.topLeftCorner<3, 3>().transpose() * m.topRightCorner<3, 1>();
    ref_to_frame.push_back(world_to_cam * ref_to_world);
  }

  const DepthMap& ref = depths[static_cast<std::size_t>(query_frame)];
  const Intrinsics k = poses[static_cast<std::size_t>(query_frame)].intrinsics();
  const int n = static_cast<int>(queries.size());
  TrackArray<Vec3> anchors(frames, n, Vec3::Zero());
  for (int i = 0; i < n; ++i) {
    const Vec2& q = queries[static_cast<std::size_t>(i)];
    const auto [col, row] = containing_pixel(q, ref.width(), ref.height());
    const double d = ref.at(col, row);
    if (!(d > 0.0) || !inside_image(q)) throw Error(ErrorCode::kInvalidQuery, "query has invalid depth");
    const Eigen::Vector4d p(d * (q.x() - k.principal_point.x()) / k.focal,
                            d * (q.y() - k.principal_point.y()) / k.focal, d, 1.0);
    for (int t = 0; t < frames; ++t) anchors(t, i) = (ref_to_frame[static_cast<std::size_t>(t)] * p).head<3>();
  }
  return anchors;
}

CorrelationFeature make_correlation_feature(const Vec3& current_camera, const Vec3& anchor_camera,
                                            const FeaturePyramid& points, const Intrinsics& intrinsics, int t,
                                            int frames, double p_dyn, double p_vis, const FeaturePyramid* image,
                                            std::span<const Eigen::VectorXd> query_descriptors) {
  CorrelationFeature f;
  const auto proj = try_project_camera(current_camera, intrinsics);
  Vec2 uv = proj ? proj->uv : intrinsics.principal_point;
  if (!proj || !inside_image(uv)) {
    uv = uv.cwiseMax(0.0).cwiseMin(1.0);
    f.clamped = true;
  }
  const double norm = points.normalization;
  f.corr3d = corr3d_at(current_camera / norm, uv, points, kCorrelationRadius, kHarmonicFrequencies, image,
                       query_descriptors);
  f.e_time = time_embedding(t, frames);
  f.e_gpos = global_position_embedding(current_camera / norm, anchor_camera / norm);
  f.p_dyn = p_dyn;
  f.p_vis = p_vis;
  return f;
}

}  // namespace jm
