#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "scatterbench/auxnet.hpp"
#include "scatterbench/dataset.hpp"
#include "scatterbench/fdk.hpp"
#include "scatterbench/nn/net.hpp"
#include "scatterbench/resample.hpp"
#include "scatterbench/sim.hpp"

namespace sb = scatterbench;

namespace {

sb::Image2D smooth_image(std::size_t h, std::size_t w) {
  sb::Image2D img(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      img(r, c) = static_cast<float>(1.0 + 0.3 * std::sin(0.07 * r) * std::cos(0.05 * c));
    }
  }
  return img;
}

void Resize(benchmark::State& state) {
  const auto kind = static_cast<sb::resample::Kind>(state.range(0));
  const sb::Image2D img = smooth_image(320, 256);
  const sb::resample::Method method{kind, false};
  for (auto _ : state) {
    auto out = sb::resample::resize(img, 40, 32, method);
    benchmark::DoNotOptimize(out);
  }
  state.SetLabel(sb::resample::to_string(method));
}
BENCHMARK(Resize)
    ->Arg(static_cast<int>(sb::resample::Kind::Nearest))
    ->Arg(static_cast<int>(sb::resample::Kind::Area))
    ->Arg(static_cast<int>(sb::resample::Kind::Bilinear))
    ->Arg(static_cast<int>(sb::resample::Kind::Bicubic))
    ->Unit(benchmark::kMicrosecond);

void NetForward(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const auto w = static_cast<std::size_t>(state.range(1));
  const auto batch = static_cast<std::size_t>(state.range(2));
  sb::nn::Net net = sb::auxnet::build({h, w, sb::auxnet::default_blocks(h, w), 16, 0.01f});
  sb::nn::Tensor4 input({batch, 3, h, w}, 0.5f);
  for (auto _ : state) {
    auto out = net.forward(input, sb::nn::Mode::Eval);
    benchmark::DoNotOptimize(out);
  }
  const auto cost = sb::nn::count_cost(net, {batch, 3, h, w});
  state.counters["GFLOPS"] = benchmark::Counter(static_cast<double>(cost.flops) * batch,
                                                benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}
BENCHMARK(NetForward)->Args({40, 32, 16})->Args({80, 64, 4})->Args({160, 128, 1})->Unit(benchmark::kMillisecond);

void ForwardProject(benchmark::State& state) {
  const sb::sim::VoxelPhantom ph = sb::sim::build_phantom(sb::sim::water_cylinder(50.0), {});
  const sb::ScanGeometry geom = [] {
    auto g = sb::ScanGeometry::desk_scale();
    g.n_views = 4;
    return g;
  }();
  for (auto _ : state) {
    auto set = sb::sim::forward_project(ph, geom, {150.0, 100.0}, 1e4);
    benchmark::DoNotOptimize(set);
  }
}
BENCHMARK(ForwardProject)->Unit(benchmark::kMillisecond);

void FdkReconstruct(benchmark::State& state) {
  const sb::sim::VoxelPhantom ph = sb::sim::build_phantom(sb::sim::water_cylinder(50.0), {});
  auto geom = sb::ScanGeometry::desk_scale();
  geom.n_views = static_cast<int>(state.range(0));
  const sb::FomSize fom{150.0, 100.0};
  const auto set = sb::sim::simulate_projections(ph, geom, fom, {});
  std::vector<sb::Image2D> lin;
  for (const auto& p : set.primary) {
    sb::Image2D l(p.height(), p.width());
    for (std::size_t i = 0; i < l.size(); ++i) l.pixels()[i] = -std::log(p.pixels()[i] / set.flat.pixels()[i]);
    lin.push_back(std::move(l));
  }
  for (auto _ : state) {
    auto vol = sb::fdk::reconstruct(std::span<const sb::Image2D>(lin), geom, ph.grid);
    benchmark::DoNotOptimize(vol);
  }
}
BENCHMARK(FdkReconstruct)->Arg(20)->Arg(60)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
