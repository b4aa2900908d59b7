#pragma once

#include "nmf/cost_model.hpp"
#include "nmf/parallel.hpp"
#include "nmf/planner.hpp"
#include "nmf/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nmf {

struct MpcConfig {
  int horizon = 20;
  int samples = 64;
  double dt = 0.02;  // seconds
  Vec6 noise_sigma = (Vec6() << 0.3, 0.3, 0.3, 2.0, 2.0, 2.0).finished();
  double temperature = 0.03;
  double tau = 0.25;
  double smooth_weight = 0.01;
  double accel_weight = 0.001;
  double bounds_weight = 10.0;
  WorkspaceBounds bounds = WorkspaceBounds::cube(Vec3::Zero(), 4.0);
  double max_linear_speed = 1.0;   // m/s
  double max_angular_speed = 4.0;  // rad/s
  double max_linear_accel = 4.0;   // m/s², per dimension
  double max_angular_accel = 8.0;  // rad/s², per dimension

  void validate() const;
};

/// Free-floating gripper with a double-integrator model. twist is linear
/// velocity (world frame) followed by angular velocity (gripper frame).
struct GripperState {
  Pose pose;
  Vec6 twist = Vec6::Zero();
};

/// H accelerations (linear m/s², angular rad/s²).
using ControlSequence = std::vector<Vec6>;

/// C = V_pl + [p >= tau].
double grasp_cost(double path_length, double collision_prob, double tau);
double grasp_cost(const GraspCostModel& model, const Pose& object_frame_pose, double tau);

double auxiliary_cost(const GripperState& state, const Vec6& control, const MpcConfig& cfg);

Vec6 clamp_control(const Vec6& accel, const MpcConfig& cfg);
Vec6 clamp_twist(const Vec6& twist, const MpcConfig& cfg);

/// twist' = clamp(twist + accel dt); translation' = translation + v' dt;
/// rotation' = rotation * exp(w' dt).
GripperState step_dynamics(const GripperState& state, const Vec6& accel, double dt, const MpcConfig& cfg);

/// w_k ∝ exp(-(c_k - min c) / temperature), normalized to sum 1.
std::vector<double> mppi_weights(std::span<const double> costs, double temperature);

struct MppiTelemetry {
  double min_cost = 0.0;
  double mean_cost = 0.0;
  double effective_samples = 0.0;
  std::vector<double> rollout_costs;
  std::vector<double> weights;
};

struct MppiResult {
  ControlSequence optimized;  // weighted average of the sampled sequences
  ControlSequence nominal;    // optimized shifted by one step, for the next call
  Vec6 control = Vec6::Zero();
  MppiTelemetry telemetry;
};

/// One MPPI iteration. Gripper poses are re-expressed in the object frame
/// before every cost query. Noise is drawn from the seeded stream before any
/// fan-out; the parallel kernel splits rollouts across workers.
MppiResult mppi_update(const GripperState& state, const ControlSequence& nominal, const GraspCostModel& model,
                       const Pose& object_pose, const MpcConfig& cfg, std::uint64_t seed,
                       Execution exec = Execution::parallel);

struct RolloutEntry {
  int step = 0;
  Vec9 pose = Vec9::Zero();  // object frame
  double grasp_cost = 0.0;
  bool collision = false;
  double rotation_error = 0.0;     // rad, to the closest anchor grasp
  double translation_error = 0.0;  // m
};

struct RolloutLog {
  std::vector<RolloutEntry> entries;
  bool aborted = false;
  std::string diagnostic;
};

RolloutLog run_episode(const GripperState& initial, const ScenePose& scene, const ObjectShape& shape,
                       const GraspCostModel& model, const AnchorGraspSet& anchors, const GripperModel& gm,
                       const MpcConfig& cfg, int steps, std::uint64_t seed, Execution exec = Execution::parallel);

/// Line-delimited text: one header line, then one record per step.
void write_rollout_log(const std::filesystem::path& path, const RolloutLog& log);

}  // namespace nmf
