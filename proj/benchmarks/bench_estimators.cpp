#include "gen.hpp"

#include "lemmse/diagnostics.hpp"
#include "lemmse/estimators.hpp"
#include "lemmse/fft.hpp"
#include "lemmse/io.hpp"

#include <benchmark/benchmark.h>

using namespace lemmse;

namespace {

struct Fixture {
  Dataset d;
  LinearOperator A;
  PreInverse B;
  ImageGrid y;
};

Fixture make(Index side, std::size_t count, int task, double sigma) {
  testing::Gen g(11);
  Dataset d = g.toy_dataset(count + 1, {1, side, side});
  const ImageGrid clean = d.items().back();
  Dataset train(std::vector<ImageGrid>(d.items().begin(), d.items().end() - 1));
  LinearOperator A = task == 0   ? make_denoising(side, side)
                     : task == 1 ? make_center_mask(side, side, side / 3)
                                 : make_gaussian_blur(side, side, 1.0);
  PreInverse B = make_pre_inverse(task == 0 ? PreInverseKind::Identity : PreInverseKind::PseudoInverse, A);
  ImageGrid y = synthesize_measurement(clean, A, sigma, 5);
  return {std::move(train), std::move(A), std::move(B), std::move(y)};
}

EstimatorOptions single_thread() {
  EstimatorOptions o;
  o.threads = 1;
  return o;
}

// args: side, |D|, task (0 denoise, 1 inpaint+pinv, 2 blur+pinv)
void BM_LeMmse(benchmark::State &state) {
  const Fixture f = make(state.range(0), static_cast<std::size_t>(state.range(1)), static_cast<int>(state.range(2)), 0.1);
  const LeMmseEngine engine(f.A, f.B, f.d, PatchGeometry(5), single_thread());
  for (auto _ : state) {
    benchmark::DoNotOptimize(engine.estimate(f.y, {0.1}));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0) * state.range(1));
}
BENCHMARK(BM_LeMmse)
    ->Args({32, 32, 0})
    ->Args({32, 128, 0})
    ->Args({64, 32, 0})
    ->Args({32, 32, 1})
    ->Args({32, 32, 2})
    ->Unit(benchmark::kMillisecond);

void BM_LeMmseEngineSetup(benchmark::State &state) {
  const Fixture f = make(state.range(0), 32, static_cast<int>(state.range(1)), 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(LeMmseEngine(f.A, f.B, f.d, PatchGeometry(5), single_thread()));
  }
}
BENCHMARK(BM_LeMmseEngineSetup)->Args({32, 0})->Args({32, 1})->Args({32, 2})->Unit(benchmark::kMillisecond);

void BM_EMmse(benchmark::State &state) {
  const Fixture f = make(state.range(0), 32, static_cast<int>(state.range(1)), 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(e_mmse(f.y, f.A, f.B, f.d, {0.1}, single_thread()));
  }
}
BENCHMARK(BM_EMmse)->Args({32, 0})->Args({64, 0})->Args({32, 2})->Unit(benchmark::kMillisecond);

void BM_Mmse(benchmark::State &state) {
  const Fixture f = make(state.range(0), static_cast<std::size_t>(state.range(1)), 0, 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mmse(f.y, f.A, f.B, f.d, {0.1}, single_thread()));
  }
}
BENCHMARK(BM_Mmse)->Args({32, 128})->Args({64, 128})->Unit(benchmark::kMicrosecond);

void BM_PatchDensityMap(benchmark::State &state) {
  const Fixture f = make(32, 32, 1, 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(patch_density_map(f.y, f.A, f.B, f.d, PatchGeometry(3), {0.1}, single_thread()));
  }
}
BENCHMARK(BM_PatchDensityMap)->Unit(benchmark::kMillisecond);

void BM_FftRoundTrip(benchmark::State &state) {
  const Index n = state.range(0);
  const Fft2d fft(n, n);
  testing::Gen g(3);
  const Vector x = g.vector(n * n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fft.inverse_real(fft.forward(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())))));
  }
}
BENCHMARK(BM_FftRoundTrip)->Arg(32)->Arg(64)->Arg(256);

} // namespace

BENCHMARK_MAIN();
