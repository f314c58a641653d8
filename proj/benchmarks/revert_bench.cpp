#include "revert/introspect.hpp"
#include "revert/motion.hpp"
#include "revert/shdp.hpp"
#include "revert/sim.hpp"
#include "synthetic.hpp"

#include <benchmark/benchmark.h>

using namespace revert;

namespace {

constexpr int kDim = 13;  // pose (7) + wrench (6)

// Forward recursion over a whole sequence; reported per sample.
void BM_ForwardCurve(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  Rng rng(1);
  const auto model = testing::random_model(k, kDim, hmm::EmissionKind::var, rng);
  const auto seq = testing::sample_sequence(model, 500, rng).y;
  for (auto _ : state) benchmark::DoNotOptimize(hmm::forward_curve(model, seq));
  state.SetItemsProcessed(state.iterations() * seq.cols());
}
BENCHMARK(BM_ForwardCurve)->Arg(1)->Arg(5)->Arg(10);

// One monitor step across four skill models: the per-sample online cost.
void BM_MonitorStep(benchmark::State& state) {
  Rng rng(2);
  std::vector<hmm::SkillModel> models;
  std::vector<introspect::ThresholdModel> th(4);
  for (int i = 0; i < 4; ++i) {
    models.push_back(testing::random_model(3, kDim, hmm::EmissionKind::var, rng));
    th[i].skill_id = models.back().skill_id();
    th[i].mu = Vec::Zero(1);
    th[i].sigma = Vec::Ones(1);
    th[i].f2_threshold = 1e12;
  }
  std::vector<const hmm::SkillModel*> mp;
  std::vector<const introspect::ThresholdModel*> tp;
  for (int i = 0; i < 4; ++i) {
    mp.push_back(&models[i]);
    tp.push_back(&th[i]);
  }
  introspect::Monitor monitor(mp, tp);
  const auto seq = testing::sample_sequence(models[0], 2000, rng).y;
  monitor.reset(0);
  Eigen::Index t = 0;
  for (auto _ : state) {
    if (t == seq.cols()) {
      state.PauseTiming();
      monitor.reset(0);
      t = 0;
      state.ResumeTiming();
    }
    monitor.score_step(seq.col(t++));
    benchmark::DoNotOptimize(monitor.detect());
  }
}
BENCHMARK(BM_MonitorStep);

// A full sHDP fit on ten 2-D switching trials; reported per Gibbs sweep.
void BM_ShdpFit(benchmark::State& state) {
  const auto data = testing::switching_var_data(10, 300, 3);
  bnp::ShdpConfig cfg;
  cfg.iterations = 20;
  cfg.burn_in = 10;
  cfg.chains = 1;
  for (auto _ : state) benchmark::DoNotOptimize(bnp::fit_shdp_ar_hmm(data.trials, cfg));
  state.SetItemsProcessed(state.iterations() * cfg.iterations);
}
BENCHMARK(BM_ShdpFit)->Unit(benchmark::kMillisecond);

void BM_PlantStep(benchmark::State& state) {
  sim::Scene scene;
  scene.name = "empty";
  scene.home.position = {0.4, 0.0, 0.3};
  sim::SimPlant plant(sim::SimConfig{}, scene);
  for (auto _ : state) benchmark::DoNotOptimize(plant.step(scene.home));
}
BENCHMARK(BM_PlantStep);

void BM_DmpRollout(benchmark::State& state) {
  const auto p = motion::load_dmp(std::filesystem::path(REVERT_DATA_DIR) / "motions/handle_approach.dmp");
  for (auto _ : state) benchmark::DoNotOptimize(motion::dmp_rollout(p, 200.0));
}
BENCHMARK(BM_DmpRollout);

}  // namespace

BENCHMARK_MAIN();
