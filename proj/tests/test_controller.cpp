#include "nmf/controller.hpp"
#include "nmf/evaluation.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

using namespace nmf;

namespace {

class ConstantCost final : public GraspCostModel {
 public:
  ConstantCost(double pl, double pc) : pl_(pl), pc_(pc) {}
  void evaluate(std::span<const Pose> poses, std::span<double> pl, std::span<double> pc) const override {
    for (std::size_t i = 0; i < poses.size(); ++i) {
      pl[i] = pl_;
      pc[i] = pc_;
    }
  }

 private:
  double pl_;
  double pc_;
};

MpcConfig cost_free() {
  MpcConfig cfg;
  cfg.smooth_weight = 0.0;
  cfg.accel_weight = 0.0;
  cfg.bounds_weight = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("grasp_cost") {
  CHECK(grasp_cost(0.0, 0.1, 0.25) == 0.0);
  CHECK(grasp_cost(0.4, 0.3, 0.25) == doctest::Approx(1.4).epsilon(1e-15));
  CHECK(grasp_cost(0.2, 0.25, 0.25) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(grasp_cost(0.2, 0.2499999, 0.25) == 0.2);
  CHECK(grasp_cost(ConstantCost(0.3, 0.9), Pose::identity(), 0.25) == doctest::Approx(1.3));
}

TEST_CASE("argmin of grasp_cost ignores monotone rescaling of p on either side of tau") {
  Rng rng = make_stream(1);
  const double tau = 0.25;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> pl(20);
    std::vector<double> pc(20);
    for (std::size_t i = 0; i < 20; ++i) {
      pl[i] = uniform(rng, 0.0, 1.0);
      pc[i] = uniform(rng, 0.0, 1.0);
    }
    auto argmin = [&](auto remap) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < 20; ++i)
        if (grasp_cost(pl[i], remap(pc[i]), tau) < grasp_cost(pl[best], remap(pc[best]), tau)) best = i;
      return best;
    };
    const std::size_t base = argmin([](double p) { return p; });
    // Squashes each side of tau monotonically without crossing it.
    CHECK(argmin([&](double p) { return p < tau ? tau * std::pow(p / tau, 3.0) : tau + (1 - tau) * std::sqrt((p - tau) / (1 - tau)); }) == base);
  }
}

TEST_CASE("auxiliary_cost") {
  MpcConfig cfg = cost_free();
  cfg.bounds_weight = 1.0;
  cfg.bounds = WorkspaceBounds::cube(Vec3::Zero(), 1.0);
  GripperState s;
  s.pose.translation = Vec3(0.6, 0.0, 0.0);
  CHECK(auxiliary_cost(s, Vec6::Zero(), cfg) == doctest::Approx(0.01).epsilon(1e-12));
  s.pose.translation = Vec3(0.5, 0.5, -0.5);
  CHECK(auxiliary_cost(s, Vec6::Zero(), cfg) == 0.0);

  MpcConfig acc = cost_free();
  acc.accel_weight = 1.0;
  Vec6 u;
  u << 0.1, -0.2, 0.3, 1.0, 0.5, -0.25;
  CHECK(auxiliary_cost(s, 2.0 * u, acc) == doctest::Approx(4.0 * auxiliary_cost(s, u, acc)).epsilon(1e-14));

  MpcConfig smooth = cost_free();
  smooth.smooth_weight = 0.5;
  s.twist << 1, 0, 0, 0, 2, 0;
  CHECK(auxiliary_cost(s, Vec6::Zero(), smooth) == doctest::Approx(2.5));
}

TEST_CASE("clamps") {
  const MpcConfig cfg;
  Vec6 a;
  a << 10, -10, 1, 100, 0, -100;
  const Vec6 c = clamp_control(a, cfg);
  CHECK(c[0] == cfg.max_linear_accel);
  CHECK(c[1] == -cfg.max_linear_accel);
  CHECK(c[2] == 1.0);
  CHECK(c[3] == cfg.max_angular_accel);
  CHECK(c[5] == -cfg.max_angular_accel);

  Vec6 t;
  t << 3, 4, 0, 0, 0, 10;
  const Vec6 ct = clamp_twist(t, cfg);
  CHECK(ct.head<3>().norm() == doctest::Approx(cfg.max_linear_speed));
  CHECK(ct[0] / ct[1] == doctest::Approx(0.75));
  CHECK(ct[5] == doctest::Approx(cfg.max_angular_speed));
}

TEST_CASE("step_dynamics") {
  const MpcConfig cfg;
  GripperState s;
  s.twist << 0, 0, 0, 0, 0, std::numbers::pi;
  const GripperState n = step_dynamics(s, Vec6::Zero(), 0.5, cfg);
  CHECK((n.pose.rotation.matrix() - Rotation::rz(std::numbers::pi / 2).matrix()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(n.pose.translation.isZero());

  GripperState lin;
  Vec6 u = Vec6::Zero();
  u[0] = 1.0;
  const GripperState l1 = step_dynamics(lin, u, 0.1, cfg);
  CHECK(l1.twist[0] == doctest::Approx(0.1));
  CHECK(l1.pose.translation.x() == doctest::Approx(0.01));

  GripperState spin;
  spin.twist << 0, 0, 0, 0.7, -1.3, 2.1;
  for (int i = 0; i < 100000; ++i) spin = step_dynamics(spin, Vec6::Zero(), 0.02, cfg);
  const Mat3 r = spin.pose.rotation.matrix();
  CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(std::abs(r.determinant() - 1.0) < 1e-6);
}

TEST_CASE("mppi_weights") {
  const double equal[] = {3.0, 3.0};
  const auto w = mppi_weights(equal, 0.5);
  CHECK(w[0] == 0.5);
  CHECK(w[1] == 0.5);

  Rng rng = make_stream(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> c(64);
    for (double& x : c) x = uniform(rng, 0.0, 30.0);
    const double lambda = uniform(rng, 0.05, 2.0);
    const auto a = mppi_weights(c, lambda);
    CHECK(std::accumulate(a.begin(), a.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> shifted = c;
    const double shift = uniform(rng, -100.0, 100.0);
    for (double& x : shifted) x += shift;
    const auto b = mppi_weights(shifted, lambda);
    for (std::size_t k = 0; k < a.size(); ++k) REQUIRE(std::abs(a[k] - b[k]) < 1e-12);
    // Lower cost, higher weight.
    const auto lo = std::min_element(c.begin(), c.end()) - c.begin();
    CHECK(a[static_cast<std::size_t>(lo)] == *std::max_element(a.begin(), a.end()));
  }
  const double huge[] = {0.0, 1e6};
  CHECK(mppi_weights(huge, 0.1)[1] == 0.0);
}

TEST_CASE("mppi_update with equal costs averages the samples") {
  MpcConfig cfg = cost_free();
  cfg.samples = 2;
  cfg.horizon = 5;
  const ConstantCost model(0.2, 0.0);
  const MppiResult r = mppi_update(GripperState{}, {}, model, Pose::identity(), cfg, 9, Execution::serial);
  CHECK(r.telemetry.weights[0] == 0.5);
  CHECK(r.telemetry.weights[1] == 0.5);
  CHECK(r.telemetry.effective_samples == doctest::Approx(2.0));
  CHECK(r.telemetry.rollout_costs[0] == doctest::Approx(5 * 0.2));

  // Reproduce the two sampled sequences from the documented noise order.
  Rng rng = make_stream(9, {0x3991});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec6> samples(10);
  for (auto& s : samples) {
    for (int d = 0; d < 6; ++d) s[d] = normal(rng) * cfg.noise_sigma[d];
    s = clamp_control(s, cfg);
  }
  for (std::size_t h = 0; h < 5; ++h) CHECK((r.optimized[h] - 0.5 * (samples[h] + samples[5 + h])).norm() < 1e-12);
  CHECK(r.control == r.optimized.front());
  REQUIRE(r.nominal.size() == 5);
  CHECK(r.nominal[0] == r.optimized[1]);
  CHECK(r.nominal.back().isZero());
}

TEST_CASE("mppi_update without noise keeps the nominal sequence") {
  MpcConfig cfg;
  cfg.noise_sigma.setZero();
  cfg.horizon = 4;
  ControlSequence nominal(4);
  for (std::size_t h = 0; h < 4; ++h) nominal[h] = Vec6::Constant(0.1 * static_cast<double>(h));
  const MppiResult r = mppi_update(GripperState{}, nominal, ConstantCost(0.1, 0.9), Pose::identity(), cfg, 3);
  for (std::size_t h = 0; h < 4; ++h) CHECK((r.optimized[h] - nominal[h]).norm() < 1e-12);
}

TEST_CASE("mppi_update is deterministic and schedule independent") {
  const ObjectShape shape = ObjectShape::box("box_a", Vec3(0.05, 0.08, 0.12));
  const GripperModel gm = GripperModel::parallel_jaw();
  const AnchorGraspSet anchors = generate_anchor_grasps(shape, gm, 1);
  const OracleCost oracle(shape, gm, anchors);
  GripperState s;
  s.pose = {Rotation::about_axis(Vec3::UnitX(), std::numbers::pi), Vec3(0.05, 0.0, 0.3)};
  const MpcConfig cfg;
  const MppiResult a = mppi_update(s, {}, oracle, Pose::identity(), cfg, 5, Execution::parallel);
  const MppiResult b = mppi_update(s, {}, oracle, Pose::identity(), cfg, 5, Execution::parallel);
  const MppiResult c = mppi_update(s, {}, oracle, Pose::identity(), cfg, 5, Execution::serial);
  CHECK(a.optimized == b.optimized);
  CHECK(a.optimized == c.optimized);
  CHECK(a.telemetry.rollout_costs == c.telemetry.rollout_costs);
  const MppiResult d = mppi_update(s, {}, oracle, Pose::identity(), cfg, 6, Execution::parallel);
  CHECK_FALSE(a.optimized == d.optimized);
}

TEST_CASE("run_episode") {
  const ObjectShape shape = ObjectShape::box("box_a", Vec3(0.05, 0.08, 0.12));
  const GripperModel gm = GripperModel::parallel_jaw();
  const AnchorGraspSet anchors = generate_anchor_grasps(shape, gm, 1);
  const OracleCost oracle(shape, gm, anchors);
  const MpcConfig cfg;
  GripperState init;
  init.pose = {Rotation::about_axis(Vec3::UnitX(), std::numbers::pi), Vec3(0.0, 0.0, 0.3)};

  const RolloutLog one = run_episode(init, {}, shape, oracle, anchors, gm, cfg, 1, 1);
  REQUIRE(one.entries.size() == 1);
  CHECK(one.entries[0].step == 0);
  CHECK_FALSE(one.aborted);
  CHECK_THROWS(run_episode(init, {}, shape, oracle, anchors, gm, cfg, 0, 1));

  ScenePose moving;
  moving.velocity << 0.01, 0, 0, 0, 0, 0;
  const RolloutLog a = run_episode(init, moving, shape, oracle, anchors, gm, cfg, 5, 1);
  const RolloutLog b = run_episode(init, moving, shape, oracle, anchors, gm, cfg, 5, 1);
  for (std::size_t i = 0; i < 5; ++i) CHECK(a.entries[i].pose == b.entries[i].pose);

  testing::TempDir dir("rollout_log");
  write_rollout_log(dir / "log.csv", a);
  const std::string text = testing::file_bytes(dir / "log.csv");
  CHECK(text.rfind("step,pose0", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
}

TEST_CASE("oracle-guided control closes a 0.3 m gap within 200 steps") {
  const ObjectShape shape = ObjectShape::box("box_a", Vec3(0.05, 0.08, 0.12));
  const GripperModel gm = GripperModel::parallel_jaw();
  const AnchorGraspSet anchors = generate_anchor_grasps(shape, gm, 1);
  const OracleCost oracle(shape, gm, anchors);
  const MpcConfig cfg;
  Rng rng = make_stream(11);
  int runs = 0;
  while (runs < 5) {
    // Anchor orientation, displaced 0.3 m in a random collision-free direction.
    const Pose& anchor = anchors.grasps[static_cast<std::size_t>(rng() % anchors.size())];
    const Vec3 dir = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)).normalized();
    GripperState init;
    init.pose = {anchor.rotation, anchor.translation + 0.3 * dir};
    if (gripper_in_collision(shape, init.pose, gm)) continue;
    CAPTURE(runs);
    const RolloutLog log = run_episode(init, {}, shape, oracle, anchors, gm, cfg, 200, 40 + static_cast<std::uint64_t>(runs));
    CHECK(log.entries.back().translation_error < 0.02);
    ++runs;
  }
}
