#include <benchmark/benchmark.h>

#include <random>

#include <Eigen/Geometry>

#include "streetside/acquisition.hpp"
#include "streetside/evaluation.hpp"
#include "streetside/mvg.hpp"
#include "streetside/projection.hpp"

using namespace streetside;

namespace {

Image noise(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image img(w, h);
  for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng());
  return img;
}

// Points in front of camera 0, seen by a second camera one unit to the side.
// A share of the correspondences is replaced by random pairs.
std::vector<mvg::NormalizedMatch> two_view(int count, double outliers, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> xy(-4, 4), z(4, 20), img(-0.8, 0.8), unit(0, 1);
  const Eigen::Matrix3d R = Eigen::AngleAxisd(0.1, Eigen::Vector3d(0.2, 1, 0.1).normalized()).toRotationMatrix();
  const Eigen::Vector3d t(-1, 0, 0.1);
  std::vector<mvg::NormalizedMatch> ms;
  for (int i = 0; i < count; ++i) {
    if (unit(rng) < outliers) {
      ms.push_back({{img(rng), img(rng), 1}, {img(rng), img(rng), 1}});
      continue;
    }
    const Eigen::Vector3d X(xy(rng), xy(rng), z(rng));
    const Eigen::Vector3d Xc = R * X + t;
    ms.push_back({X / X.z(), Xc / Xc.z()});
  }
  return ms;
}

void BM_RenderRectilinear(benchmark::State& state) {
  const Image pano = noise(8192, 4096, 1);
  const int side = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(projection::render_rectilinear(pano, 90.0, 90.0, side, 1));
  }
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_RenderRectilinear)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_FivePointMinimal(benchmark::State& state) {
  const auto ms = two_view(5, 0.0, 2);
  const std::array<mvg::NormalizedMatch, 5> five = {ms[0], ms[1], ms[2], ms[3], ms[4]};
  for (auto _ : state) benchmark::DoNotOptimize(mvg::solve_essential_minimal(five));
}
BENCHMARK(BM_FivePointMinimal)->Unit(benchmark::kMicrosecond);

void BM_RansacEssential(benchmark::State& state) {
  const auto ms = two_view(200, state.range(0) / 100.0, 3);
  mvg::RansacParams params;
  params.seed = 7;
  for (auto _ : state) benchmark::DoNotOptimize(mvg::ransac_essential(ms, params, 1024.0));
}
BENCHMARK(BM_RansacEssential)->Arg(0)->Arg(40)->Unit(benchmark::kMillisecond);

void BM_Triangulate(benchmark::State& state) {
  const auto ms = two_view(100, 0.0, 4);
  mvg::Mat34 P0 = mvg::Mat34::Zero(), Pc;
  P0.leftCols<3>().setIdentity();
  Pc << Eigen::AngleAxisd(0.1, Eigen::Vector3d(0.2, 1, 0.1).normalized()).toRotationMatrix(),
      Eigen::Vector3d(-1, 0, 0.1);
  for (auto _ : state) {
    for (const auto& m : ms) benchmark::DoNotOptimize(mvg::triangulate_linear(P0, Pc, m));
  }
  state.SetItemsProcessed(state.iterations() * ms.size());
}
BENCHMARK(BM_Triangulate);

void BM_StitchTiles(benchmark::State& state) {
  const acquisition::TileGrid grid{26, 13, 512};
  std::vector<std::optional<Image>> tiles;
  const Image tile = noise(512, 512, 5);
  for (int i = 0; i < grid.cols * grid.rows; ++i) tiles.emplace_back(tile);
  for (auto _ : state) benchmark::DoNotOptimize(acquisition::stitch_tiles(tiles, grid));
}
BENCHMARK(BM_StitchTiles)->Unit(benchmark::kMillisecond);

void BM_AveragePrecision(benchmark::State& state) {
  std::mt19937_64 rng(6);
  std::vector<bool> labels(static_cast<std::size_t>(state.range(0)));
  for (auto&& l : labels) l = rng() % 3 != 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluation::average_precision(evaluation::pr_curve(labels, labels.size())));
  }
}
BENCHMARK(BM_AveragePrecision)->Arg(1000)->Arg(100000);

}  // namespace
BENCHMARK_MAIN();
