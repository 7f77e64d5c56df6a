#include <benchmark/benchmark.h>

#include <vector>

#include "featdp/dataset.hpp"
#include "featdp/impute.hpp"
#include "featdp/metrics.hpp"
#include "featdp/model.hpp"
#include "featdp/privacy.hpp"

using namespace featdp;

namespace {

MlpModel make_model(std::size_t input, std::vector<std::size_t> hidden) {
  MlpModel model(MlpConfig{input, std::move(hidden), 0.15, 1e-5});
  model.init_params(1);
  return model;
}

void BM_PerSampleGradFusion(benchmark::State& state) {
  const std::size_t input = 19;
  MlpModel model = make_model(input, {64, 32, 16});
  RngStream s(2, StreamPurpose::kGeneric);
  std::vector<double> x(input), xt(input);
  for (double& v : x) v = s.next_gaussian();
  for (double& v : xt) v = s.next_gaussian();
  DropoutMasks masks = DropoutMasks::eval(model.config());
  std::vector<double> grad(model.param_count());
  for (auto _ : state) {
    per_sample_grad_private(model, PrivateLossVariant::kFusionDp, 0.2, x, xt, 1,
                            masks, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_PerSampleGradFusion);

void BM_ClipAndNoise(benchmark::State& state) {
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  RngStream s(3, StreamPurpose::kGeneric);
  std::vector<std::vector<double>> grads(64, std::vector<double>(dim));
  for (auto& g : grads)
    for (double& v : g) v = s.next_gaussian();
  std::uint64_t step = 0;
  for (auto _ : state) {
    std::vector<std::vector<double>> clipped = grads;
    for (auto& g : clipped) clip_in_place(g, 1.0);
    RngStream noise(4, StreamPurpose::kGaussianNoise, step++);
    auto mean = noisy_private_mean(clipped, dim, 1.0, 1.1, clipped.size(), noise);
    benchmark::DoNotOptimize(mean.data());
  }
}
BENCHMARK(BM_ClipAndNoise)->Arg(1 << 10)->Arg(1 << 12);

void BM_AccountantEpsilon(benchmark::State& state) {
  for (auto _ : state) {
    RdpAccountant accountant(1.3, 0.018);
    benchmark::DoNotOptimize(accountant.epsilon(1e-5, 715));
  }
}
BENCHMARK(BM_AccountantEpsilon);

void BM_SigmaCalibration(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(calibrate_sigma_accountant(1.0, 1e-5, 0.018, 715));
}
BENCHMARK(BM_SigmaCalibration);

void BM_Auprc(benchmark::State& state) {
  RngStream s(5, StreamPurpose::kGeneric);
  ScoredPredictions p;
  for (int i = 0; i < 20000; ++i) {
    p.scores.push_back(s.next_gaussian());
    p.labels.push_back(s.next_bernoulli(0.15) ? 1 : 0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(auprc(p));
}
BENCHMARK(BM_Auprc);

void BM_KnnImpute(benchmark::State& state) {
  Dataset full = generate_synthetic(3000, default_synthetic_schema(), 0.8, 9);
  SplitResult parts = split(full, SplitSpec{0.3, 0.5, 0.1, 0.1}, 9);
  std::vector<ColumnStats> stats = standardize_fit(parts.train);
  standardize_apply(parts.support, stats);
  standardize_apply(parts.train, stats);
  Imputer knn = Imputer::knn(5);
  knn.fit(parts.support);
  for (auto _ : state) {
    HybridDataset hybrid = knn.impute(parts.train);
    benchmark::DoNotOptimize(hybrid.data().storage().data());
  }
}
BENCHMARK(BM_KnnImpute);

}  // namespace

BENCHMARK_MAIN();
