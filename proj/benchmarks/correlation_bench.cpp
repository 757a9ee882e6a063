#include <cmath>

#include <benchmark/benchmark.h>

#include "jm/correlation.hpp"

namespace {

jm::Image texture(int size) {
  jm::Image im(size, size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) im.at(c, r) = std::sin(0.31 * c + 0.17 * r) + 0.5 * std::cos(0.23 * r - 0.41 * c);
  return im;
}

void BM_BuildImagePyramid(benchmark::State& state) {
  const jm::Image im = texture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(jm::build_image_pyramid(im));
}
BENCHMARK(BM_BuildImagePyramid)->Arg(96)->Arg(256);

void BM_LocalCorrelation(benchmark::State& state) {
  const jm::FeaturePyramid p = jm::build_image_pyramid(texture(96));
  const auto desc = jm::sample_descriptors(p, jm::Vec2(0.4, 0.6));
  for (auto _ : state)
    for (int l = 0; l < static_cast<int>(p.levels.size()); ++l)
      benchmark::DoNotOptimize(jm::local_correlation(p.levels[static_cast<std::size_t>(l)], desc[static_cast<std::size_t>(l)],
                                                     p.to_grid(jm::Vec2(0.42, 0.58), l)));
}
BENCHMARK(BM_LocalCorrelation);

void BM_Corr3d(benchmark::State& state) {
  jm::PointMap pm;
  pm.width = pm.height = 96;
  for (int r = 0; r < 96; ++r)
    for (int c = 0; c < 96; ++c) {
      const double z = 3.0 + 0.3 * std::sin(0.1 * c) * std::cos(0.07 * r);
      pm.points.push_back(jm::unproject_point(jm::pixel_center(c, r, 96, 96), z, jm::Intrinsics{}));
      pm.valid.push_back(1);
    }
  const jm::FeaturePyramid p = jm::build_point_pyramid(pm);
  const jm::Vec3 q = jm::unproject_point(jm::Vec2(0.45, 0.55), 3.0, jm::Intrinsics{});
  for (auto _ : state) benchmark::DoNotOptimize(jm::corr3d(q, p, jm::Intrinsics{}));
}
BENCHMARK(BM_Corr3d);

}  // namespace
