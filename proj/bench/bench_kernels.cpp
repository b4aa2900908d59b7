// Serial reference kernels against their OpenMP counterparts.
#include "nmf/controller.hpp"
#include "nmf/cost_model.hpp"
#include "nmf/dataset.hpp"
#include "nmf/evaluation.hpp"
#include "nmf/network.hpp"
#include "nmf/parallel.hpp"
#include "nmf/planner.hpp"
#include "nmf/training.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace nmf;

Execution exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::serial : Execution::parallel;
}

struct Fixture {
  ObjectShape shape = ObjectShape::box("bench_box", Vec3(0.05, 0.08, 0.12));
  GripperModel gm = GripperModel::parallel_jaw();
  AnchorGraspSet anchors = generate_anchor_grasps(shape, gm, 1);
  PointCloud cloud = sample_surface_points(shape, 256, 2);
  ValueModel model = [] {
    NetworkShape s;
    s.head_hidden = {128, 128, 128, 128};
    return init_value_model<float>(s, 3);
  }();

  static const Fixture& get() {
    static const Fixture f;
    return f;
  }
};

void BM_BuildDataset(benchmark::State& state) {
  const auto& f = Fixture::get();
  DatasetConfig cfg;
  cfg.n_trajectories = 32;
  for (auto _ : state) benchmark::DoNotOptimize(build_dataset(f.shape, f.gm, f.anchors, cfg, 11, exec_of(state)));
}
BENCHMARK(BM_BuildDataset)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Gradients(benchmark::State& state) {
  const auto& f = Fixture::get();
  DatasetConfig cfg;
  cfg.n_trajectories = 8;
  const Dataset ds = build_dataset(f.shape, f.gm, f.anchors, cfg, 5, Execution::serial);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.records.size() && idx.size() < 32; ++i)
    if (ds.records[i].has_path_label()) idx.push_back(i);
  const auto batch = make_batch<float>(ds.records, idx, BranchKind::path);
  const std::vector<MatrixX<float>> clouds{cloud_matrix<float>(f.cloud)};
  for (auto _ : state)
    benchmark::DoNotOptimize(compute_gradients(f.model.path, std::span<const MatrixX<float>>(clouds), batch,
                                               exec_of(state)));
}
BENCHMARK(BM_Gradients)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_LearnedCost(benchmark::State& state) {
  const auto& f = Fixture::get();
  const LearnedCost cost(f.model, f.cloud, exec_of(state));
  Rng rng = make_stream(4);
  std::vector<Pose> poses;
  for (int i = 0; i < 1280; ++i) poses.push_back(random_pose_in(WorkspaceBounds{}, rng));
  std::vector<double> pl(poses.size()), pc(poses.size());
  for (auto _ : state) {
    cost.evaluate(poses, pl, pc);
    benchmark::DoNotOptimize(pl.data());
  }
}
BENCHMARK(BM_LearnedCost)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_MppiOracle(benchmark::State& state) {
  const auto& f = Fixture::get();
  const OracleCost cost(f.shape, f.gm, f.anchors);
  MpcConfig cfg;
  GripperState s;
  s.pose.translation = Vec3(0.3, 0.0, 0.0);
  const ControlSequence nominal(static_cast<std::size_t>(cfg.horizon), Vec6::Zero());
  for (auto _ : state)
    benchmark::DoNotOptimize(mppi_update(s, nominal, cost, Pose::identity(), cfg, 9, exec_of(state)));
}
BENCHMARK(BM_MppiOracle)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// Episodes fan out across workers; each one steps serially.
void BM_RolloutSuite(benchmark::State& state) {
  const auto& f = Fixture::get();
  const OracleCost cost(f.shape, f.gm, f.anchors);
  EpisodeConfig ep;
  ep.episodes = 4;
  ep.steps = 20;
  for (auto _ : state)
    benchmark::DoNotOptimize(run_rollout_suite(ep, cost, f.shape, f.anchors, f.gm, MpcConfig{}, exec_of(state)));
}
BENCHMARK(BM_RolloutSuite)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CostMap(benchmark::State& state) {
  const auto& f = Fixture::get();
  for (auto _ : state)
    benchmark::DoNotOptimize(export_cost_map(f.model, f.cloud, f.anchors.grasps[0], 0.1, 0.1, 0.01, exec_of(state)));
}
BENCHMARK(BM_CostMap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  nmf::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
