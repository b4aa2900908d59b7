#include "nmf/evaluation.hpp"
#include "nmf/training.hpp"

#include <doctest.h>

#include <functional>

using namespace nmf;

// Every parallel kernel must give the same bits for any worker count.

namespace {

struct World {
  ObjectShape shape = ObjectShape::box("box_a", Vec3(0.05, 0.08, 0.12));
  GripperModel gm = GripperModel::parallel_jaw();
  AnchorGraspSet anchors = generate_anchor_grasps(shape, gm, 1);
  PointCloud cloud = sample_surface_points(shape, 256, 2);
};

const World& world() {
  static const World w;
  return w;
}

NetworkShape net() {
  NetworkShape s;
  s.encoder_widths = {3, 32, 64};
  s.head_hidden = {48, 48};
  return s;
}

template <typename T>
void same_for_thread_counts(const std::function<T()>& run) {
  set_thread_count(1);
  const T one = run();
  for (int n : {2, 3, 7}) {
    CAPTURE(n);
    set_thread_count(n);
    CHECK(run() == one);
  }
  set_thread_count(0);
}

std::vector<Pose> query_poses(std::size_t n) {
  Rng rng = make_stream(3);
  std::vector<Pose> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_pose_in(WorkspaceBounds::cube(Vec3::Zero(), 0.4), rng));
  return out;
}

}  // namespace

TEST_CASE("thread count") {
  set_thread_count(3);
  CHECK(thread_count() == 3);
  set_thread_count(0);
  CHECK(thread_count() >= 1);
}

TEST_CASE("dataset generation") {
  const World& w = world();
  DatasetConfig cfg;
  cfg.n_trajectories = 12;
  same_for_thread_counts<std::vector<TrajectoryRecord>>(
      [&] { return build_dataset(w.shape, w.gm, w.anchors, cfg, 4, Execution::parallel).records; });
}

TEST_CASE("gradients") {
  const World& w = world();
  const auto model = init_value_model<float>(net(), 5);
  Rng rng = make_stream(5);
  DatasetConfig cfg;
  cfg.n_trajectories = 4;
  const Dataset ds = build_dataset(w.shape, w.gm, w.anchors, cfg, 5);
  std::vector<std::size_t> idx(std::min<std::size_t>(ds.records.size(), 200));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto batch = make_batch<float>(ds.records, idx, BranchKind::collision);
  const std::vector<MatrixX<float>> clouds{cloud_matrix<float>(w.cloud)};
  same_for_thread_counts<Branch<float>>([&] {
    return compute_gradients(model.collision, std::span<const MatrixX<float>>(clouds), batch, Execution::parallel).grads;
  });
}

TEST_CASE("training") {
  const World& w = world();
  DatasetConfig cfg;
  cfg.n_trajectories = 6;
  const Dataset ds = build_dataset(w.shape, w.gm, w.anchors, cfg, 6);
  TrainConfig tc;
  tc.epochs = 2;
  const PointCloud clouds[] = {w.cloud};
  same_for_thread_counts<ValueModel>([&] {
    ValueModel m = init_value_model<float>(net(), 6);
    train(m, ds, clouds, tc, Execution::parallel);
    return m;
  });
}

TEST_CASE("learned cost queries") {
  const World& w = world();
  const ValueModel model = init_value_model<float>(net(), 7);
  const std::vector<Pose> poses = query_poses(1000);
  auto query = [&](Execution exec) {
    const LearnedCost cost(model, w.cloud, exec);
    std::vector<double> pl(poses.size());
    std::vector<double> pc(poses.size());
    cost.evaluate(poses, pl, pc);
    pl.insert(pl.end(), pc.begin(), pc.end());
    return pl;
  };
  same_for_thread_counts<std::vector<double>>([&] { return query(Execution::parallel); });
  CHECK(query(Execution::serial) == query(Execution::parallel));
}

TEST_CASE("oracle cost queries") {
  const World& w = world();
  const OracleCost oracle(w.shape, w.gm, w.anchors);
  const std::vector<Pose> poses = query_poses(300);
  std::vector<double> pl(poses.size());
  std::vector<double> pc(poses.size());
  oracle.evaluate(poses, pl, pc);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    CHECK(pc[i] == (gripper_in_collision(w.shape, poses[i], w.gm) ? 1.0 : 0.0));
    CHECK(pl[i] >= 0.0);
  }
  for (const auto& a : w.anchors.grasps) {
    double p = 1.0;
    double c = 1.0;
    oracle.evaluate(std::span(&a, 1), std::span(&p, 1), std::span(&c, 1));
    CHECK(p < 1e-12);
    CHECK(c == 0.0);
  }
}

TEST_CASE("mppi and rollouts") {
  const World& w = world();
  const OracleCost oracle(w.shape, w.gm, w.anchors);
  GripperState s;
  s.pose = {Rotation::about_axis(Vec3::UnitX(), 3.0), Vec3(0.02, 0.05, 0.3)};
  same_for_thread_counts<ControlSequence>(
      [&] { return mppi_update(s, {}, oracle, Pose::identity(), MpcConfig{}, 8, Execution::parallel).optimized; });

  EpisodeConfig ep;
  ep.episodes = 3;
  ep.steps = 20;
  same_for_thread_counts<std::vector<double>>([&] {
    return run_rollout_suite(ep, oracle, w.shape, w.anchors, w.gm, MpcConfig{}, Execution::parallel).translation_mean;
  });
}

TEST_CASE("cost map") {
  const World& w = world();
  const ValueModel model = init_value_model<float>(net(), 9);
  same_for_thread_counts<std::vector<double>>([&] {
    return export_cost_map(model, w.cloud, w.anchors.grasps[0], 0.1, 0.1, 0.01, Execution::parallel).values;
  });
}

TEST_CASE("denormal guard flushes inside its scope only") {
  volatile float tiny = 1e-38f;
  volatile float scale = 1e-3f;
  {
    const DenormalsAreZero ftz;
    CHECK(tiny * scale == 0.0f);
  }
  CHECK(tiny * scale != 0.0f);
}
